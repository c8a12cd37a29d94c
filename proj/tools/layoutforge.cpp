// layoutforge: prepare / generate / evaluate / sweep / synth.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "layoutforge/layoutforge.hpp"

namespace fs = std::filesystem;
using namespace layoutforge;

namespace {

struct Flags {
  std::string dataset;
  std::string out;
  std::string store;
  std::string generated;
  std::string reference;
  std::size_t grid = 64;
  int k = 5;
  std::string density = "gmm";
  int steps = 200;
  std::optional<double> beta_start;
  std::optional<double> beta_end;
  std::string variance = "beta-tilde";
  std::uint64_t seed = 0;
  std::size_t per_category = 200;
  int levels = 4;
  std::optional<double> bandwidth;
  std::optional<std::size_t> components;
  bool rescale_layout = false;
  bool dump_tensors = false;
  std::string axis;
  std::vector<double> values;
  std::size_t patches = 80;
  std::string mode = "clustered";
};

void add_schedule_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--steps", f.steps, "Diffusion steps T")->capture_default_str();
  cmd->add_option("--beta-start", f.beta_start, "First beta of the linear schedule");
  cmd->add_option("--beta-end", f.beta_end, "Last beta of the linear schedule");
  cmd->add_option("--variance", f.variance, "Reverse-step variance rule")
      ->check(CLI::IsMember({"beta", "beta-tilde"}))
      ->capture_default_str();
  cmd->add_flag("--rescale-layout", f.rescale_layout, "Diffuse layout channels in [-1, 1] instead of [0, 1]");
}

void add_model_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--grid", f.grid, "Grid height and width")->capture_default_str();
  cmd->add_option("--k", f.k, "Number of counting categories")->capture_default_str();
  cmd->add_option("--density", f.density, "Density model")
      ->check(CLI::IsMember({"none", "kde", "gmm", "gmcm"}))
      ->capture_default_str();
  cmd->add_option("--bandwidth", f.bandwidth, "Fixed KDE bandwidth (Scott's rule when omitted)");
  cmd->add_option("--components", f.components, "Fixed GMM component count (BIC when omitted)");
}

PipelineConfig make_config(const Flags& f) {
  PipelineConfig c;
  c.grid = {f.grid, f.grid};
  c.k = f.k;
  c.density = parse_density_kind(f.density);
  c.schedule.steps = f.steps;
  c.schedule.beta_start = f.beta_start;
  c.schedule.beta_end = f.beta_end;
  c.schedule.variance = parse_variance_rule(f.variance);
  c.seed = f.seed;
  c.per_category = f.per_category;
  c.levels = f.levels;
  c.bandwidth = f.bandwidth;
  c.gmm_components = f.components;
  c.rescale_layout = f.rescale_layout;
  c.validate();
  return c;
}

std::string pad(std::size_t i) {
  std::string n = std::to_string(i);
  return std::string(n.size() < 5 ? 5 - n.size() : 0, '0') + n;
}

Dataset require_dataset(const std::string& path) {
  if (path.empty()) throw ArgumentError("--dataset is required");
  if (!fs::exists(path)) throw ArgumentError("dataset '" + path + "' does not exist");
  return load_dataset(path);
}

void run_synth(const Flags& f) {
  if (f.out.empty()) throw ArgumentError("--out is required");
  if (f.mode != "clustered" && f.mode != "uniform") throw ArgumentError("--mode must be clustered or uniform");
  SynthOptions o;
  o.patches = f.patches;
  o.seed = f.seed;
  o.clustered = f.mode == "clustered";
  const Dataset ds = synth_dataset(o);
  save_dataset(ds, f.out);
  std::cout << "wrote " << ds.patches.size() << " patches to " << f.out << "\n";
}

void run_prepare(const Flags& f) {
  if (f.out.empty()) throw ArgumentError("--out is required");
  const PipelineConfig cfg = make_config(f);
  const Dataset ds = require_dataset(f.dataset);
  const PreparedStore store = prepare(ds, cfg);
  write_prepared(store, cfg, f.out);
  std::vector<std::size_t> sizes(store.categorizer.k(), 0);
  for (const auto& e : store.entries) ++sizes[e.category];
  std::cout << "prepared " << store.entries.size() << " tensors of shape " << store.shape().str() << "; category sizes";
  for (auto s : sizes) std::cout << " " << s;
  std::cout << "\n";
}

void run_generate(Flags f) {
  if (f.out.empty()) throw ArgumentError("--out is required");
  if (f.store.empty()) throw ArgumentError("--store is required (a directory written by prepare)");
  const PreparedStore store = read_prepared(f.store);
  f.grid = store.grid.height;
  f.k = static_cast<int>(store.categorizer.k());
  f.density = to_string(store.density);
  PipelineConfig cfg = make_config(f);
  cfg.grid = store.grid;
  cfg.validate();

  const GeneratedBatch batch = generate(store, cfg);
  const fs::path out = f.out;
  nlohmann::json manifest = batch_to_json(batch);
  manifest["config"] = config_to_json(cfg);
  write_text_file(out / "batch.json", manifest.dump(1) + "\n");
  const auto maps = batch.layout_maps();
  for (std::size_t i = 0; i < batch.layouts.size(); ++i) {
    write_text_file(out / "renders" / (pad(i) + ".ppm"), encode_ppm(maps[i]));
    if (f.dump_tensors) write_text_file(out / "tensors" / (pad(i) + ".lft"), encode_lft(batch.layouts[i].raw));
  }
  std::cout << "generated " << batch.layouts.size() << " layouts into " << f.out << "\n";
}

GeneratedBatch read_batch(const std::string& path) {
  if (path.empty()) throw ArgumentError("--generated is required");
  fs::path p = path;
  if (fs::is_directory(p)) p /= "batch.json";
  if (!fs::exists(p)) throw ArgumentError("generated batch '" + p.string() + "' does not exist");
  return batch_from_json(parse_json(read_text_file(p), p.string()));
}

void run_evaluate(const Flags& f) {
  if (f.levels < 1) throw ArgumentError("--levels must be >= 1");
  const GeneratedBatch batch = read_batch(f.generated);
  std::vector<Tensor> reference;
  if (!f.reference.empty()) {
    const Dataset ds = require_dataset(f.reference);
    reference = rasterize_dataset(ds, {batch.shape.height, batch.shape.width});
  } else if (!f.store.empty()) {
    reference = read_prepared(f.store).layout_maps();
  } else {
    throw ArgumentError("evaluate needs --store or --reference");
  }
  const MetricReport report = evaluate(reference, batch.layout_maps(), f.levels);
  const std::string text = report_to_json(report).dump(1) + "\n";
  if (!f.out.empty()) write_text_file(f.out, text);
  std::cout << text;
}

void run_sweep(const Flags& f) {
  if (f.out.empty()) throw ArgumentError("--out is required");
  if (f.axis.empty()) throw ArgumentError("--axis is required");
  const SweepAxis axis = parse_sweep_axis(f.axis);
  const PipelineConfig cfg = make_config(f);
  const Dataset train = require_dataset(f.dataset);
  std::vector<Tensor> reference;
  if (!f.reference.empty()) reference = rasterize_dataset(require_dataset(f.reference), cfg.grid);
  const auto rows = sweep(train, reference, cfg, axis, f.values);
  const std::string csv = sweep_csv(rows);
  write_text_file(f.out, csv);
  std::cout << csv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layoutforge: density-guided cell layout generation"};
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "Write a synthetic three-type dataset");
  synth->add_option("--out", f.out, "Dataset JSON to write");
  synth->add_option("--patches", f.patches, "Number of patches")->capture_default_str();
  synth->add_option("--seed", f.seed, "Seed")->capture_default_str();
  synth->add_option("--mode", f.mode, "clustered or uniform")->capture_default_str();

  auto* prep = app.add_subcommand("prepare", "Rasterize, fit densities and categorize a dataset");
  prep->add_option("--dataset", f.dataset, "Dataset JSON");
  prep->add_option("--out", f.out, "Output directory for the tensor store");
  prep->add_option("--seed", f.seed, "Seed")->capture_default_str();
  prep->add_option("--levels", f.levels, "Pyramid levels (checked against the grid)")->capture_default_str();
  add_model_flags(prep, f);
  add_schedule_flags(prep, f);

  auto* gen = app.add_subcommand("generate", "Sample layouts from a prepared store");
  gen->add_option("--store", f.store, "Directory written by prepare");
  gen->add_option("--out", f.out, "Output directory");
  gen->add_option("--seed", f.seed, "Seed")->capture_default_str();
  gen->add_option("--per-category", f.per_category, "Layouts per counting category")->capture_default_str();
  gen->add_option("--levels", f.levels, "Pyramid levels (checked against the grid)")->capture_default_str();
  gen->add_flag("--dump-tensors", f.dump_tensors, "Also write raw sampled tensors");
  add_schedule_flags(gen, f);

  auto* eval = app.add_subcommand("evaluate", "Spatial-FID of generated layouts against a reference set");
  eval->add_option("--generated", f.generated, "batch.json or the generate output directory");
  eval->add_option("--store", f.store, "Prepared store whose layouts form the reference");
  eval->add_option("--reference", f.reference, "Dataset JSON used as the reference instead");
  eval->add_option("--levels", f.levels, "Pyramid levels")->capture_default_str();
  eval->add_option("--out", f.out, "Report JSON to write");

  auto* sw = app.add_subcommand("sweep", "Re-run the pipeline over one parameter");
  sw->add_option("--dataset", f.dataset, "Training dataset JSON");
  sw->add_option("--reference", f.reference, "Held-out dataset JSON (training layouts when omitted)");
  sw->add_option("--axis", f.axis, "bandwidth, gmm_components or k_categories");
  sw->add_option("--values", f.values, "Values to try")->delimiter(',');
  sw->add_option("--out", f.out, "CSV to write");
  sw->add_option("--seed", f.seed, "Seed")->capture_default_str();
  sw->add_option("--per-category", f.per_category, "Layouts per counting category")->capture_default_str();
  sw->add_option("--levels", f.levels, "Pyramid levels")->capture_default_str();
  add_model_flags(sw, f);
  add_schedule_flags(sw, f);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) run_synth(f);
    else if (prep->parsed()) run_prepare(f);
    else if (gen->parsed()) run_generate(f);
    else if (eval->parsed()) run_evaluate(f);
    else if (sw->parsed()) run_sweep(f);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
