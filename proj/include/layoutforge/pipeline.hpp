#pragma once

// prepare -> generate -> evaluate, plus parameter sweeps. Each stage has an
// in-memory form and an on-disk form (a JSON manifest next to its data files).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layoutforge/density_model.hpp"
#include "layoutforge/diffusion.hpp"
#include "layoutforge/errors.hpp"
#include "layoutforge/io.hpp"
#include "layoutforge/layout.hpp"
#include "layoutforge/parallel.hpp"
#include "layoutforge/random.hpp"
#include "layoutforge/spatial_fid.hpp"
#include "layoutforge/tensor.hpp"

namespace layoutforge {

struct ScheduleConfig {
  int steps = 200;
  /// Unset: the default linear range rescaled for `steps`.
  std::optional<double> beta_start;
  std::optional<double> beta_end;
  VarianceRule variance = VarianceRule::beta_tilde;

  NoiseSchedule make() const {
    if (!beta_start && !beta_end) return NoiseSchedule::default_for(steps, variance);
    const NoiseSchedule d = NoiseSchedule::default_for(steps, variance);
    return NoiseSchedule::linear(steps, beta_start.value_or(d.beta(1)), beta_end.value_or(d.beta(steps)), variance);
  }
};

struct PipelineConfig {
  GridSize grid{64, 64};
  int k = 5;
  DensityKind density = DensityKind::gmm;
  ScheduleConfig schedule;
  std::uint64_t seed = 0;
  std::size_t per_category = 200;
  int levels = 4;
  std::optional<double> bandwidth;
  std::optional<std::size_t> gmm_components;
  /// Map layout channels from {0, 1} to {-1, 1} for diffusion.
  bool rescale_layout = false;

  void validate() const {
    if (grid.height == 0 || grid.width == 0) throw ArgumentError("grid size must be positive");
    if (k < 1) throw ArgumentError("K must be >= 1");
    if (levels < 1) throw ArgumentError("levels must be >= 1");
    const std::size_t finest = std::size_t{1} << (levels - 1);
    if (grid.height % finest != 0 || grid.width % finest != 0)
      throw ArgumentError("grid " + std::to_string(grid.height) + "x" + std::to_string(grid.width) +
                          " is not divisible by 2^(levels-1) = " + std::to_string(finest));
    if (bandwidth && !(*bandwidth > 0.0)) throw ArgumentError("bandwidth must be positive");
    if (gmm_components && *gmm_components == 0) throw ArgumentError("GMM component count must be >= 1");
    schedule.make();
  }
};

// --- prepare ---------------------------------------------------------------

struct PreparedEntry {
  std::string patch_id;
  std::size_t cell_count = 0;
  std::size_t category = 0;
  /// Layout channels followed by density channels.
  Tensor tensor;
  std::vector<DensityModel> models;
};

struct PreparedStore {
  std::vector<std::string> cell_types;
  GridSize grid;
  DensityKind density = DensityKind::none;
  CountingCategorizer categorizer;
  std::vector<PreparedEntry> entries;

  std::size_t num_types() const noexcept { return cell_types.size(); }
  TensorShape shape() const noexcept { return {2 * num_types(), grid.height, grid.width}; }

  std::vector<Tensor> layout_maps() const {
    std::vector<Tensor> out;
    for (const auto& e : entries) out.push_back(e.tensor.slice_channels(0, num_types()));
    return out;
  }
};

/// Layout channels, per-type density channels and counting category for every patch.
inline PreparedStore prepare(const Dataset& ds, const PipelineConfig& cfg) {
  cfg.validate();
  if (ds.num_types() == 0) throw ArgumentError("prepare: dataset declares no cell types");
  for (const auto& p : ds.patches) p.validate(ds.num_types());
  if (ds.patches.empty()) throw ArgumentError("prepare: dataset has no patches");

  PreparedStore store{ds.cell_types, cfg.grid, cfg.density, {}, {}};
  std::vector<std::size_t> counts;
  for (const auto& p : ds.patches) counts.push_back(p.cells.size());
  store.categorizer = CountingCategorizer::fit(counts, cfg.k);

  DensityFitOptions fit;
  fit.kind = cfg.density;
  fit.bandwidth = cfg.bandwidth;
  fit.gmm_components = cfg.gmm_components;

  const std::size_t types = ds.num_types();
  store.entries.resize(ds.patches.size());
  parallel_for(ds.patches.size(), [&](std::size_t i) {
    const PointPattern& p = ds.patches[i];
    PreparedEntry& e = store.entries[i];
    e.patch_id = p.patch_id;
    e.cell_count = p.cells.size();
    e.category = store.categorizer.categorize(e.cell_count);
    Tensor density({types, cfg.grid.height, cfg.grid.width});
    for (std::size_t c = 0; c < types; ++c) {
      const auto pts = normalized_points(p, CellTypeId{c});
      e.models.push_back(fit_density(pts, CellTypeId{c}, fit,
                                     derive_seed(cfg.seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(c)})));
      const Tensor channel = rasterize_density(e.models.back(), cfg.grid);
      std::copy(channel.values().begin(), channel.values().end(), density.channel(c).begin());
    }
    e.tensor = concat_channels(rasterize_layout(p, cfg.grid, types), density);
  });
  return store;
}

// --- generate --------------------------------------------------------------

struct ChannelSummary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct GeneratedLayout {
  std::size_t category = 0;
  std::uint64_t seed = 0;
  Tensor raw;
  PointPattern points;
  std::vector<ChannelSummary> density_summary;
};

struct GeneratedBatch {
  std::vector<std::string> cell_types;
  TensorShape shape;
  std::size_t per_category = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> category_counts;
  std::vector<GeneratedLayout> layouts;

  std::size_t num_types() const noexcept { return cell_types.size(); }

  /// Layout maps re-rasterized from the derasterized points.
  std::vector<Tensor> layout_maps() const {
    std::vector<Tensor> out;
    for (const auto& l : layouts) out.push_back(rasterize_layout(l.points, {shape.height, shape.width}, num_types()));
    return out;
  }
};

inline Tensor to_diffusion_space(Tensor t, std::size_t num_types, bool rescale) {
  if (!rescale) return t;
  for (std::size_t c = 0; c < num_types; ++c)
    for (double& v : t.channel(c)) v = 2.0 * v - 1.0;
  return t;
}

inline Tensor from_diffusion_space(Tensor t, std::size_t num_types, bool rescale) {
  if (!rescale) return t;
  for (std::size_t c = 0; c < num_types; ++c)
    for (double& v : t.channel(c)) v = 0.5 * (v + 1.0);
  return t;
}

/// Samples `per_category` layouts from every non-empty counting category using
/// the empirical-Bayes denoiser over that category's prepared tensors.
inline GeneratedBatch generate(const PreparedStore& store, const PipelineConfig& cfg) {
  cfg.validate();
  const std::size_t types = store.num_types();
  GeneratedBatch batch{store.cell_types, store.shape(), cfg.per_category, cfg.seed, {}, {}};
  batch.category_counts.assign(store.categorizer.k(), 0);
  if (cfg.per_category == 0) return batch;

  std::map<std::size_t, std::vector<Tensor>> sets;
  for (const auto& e : store.entries) sets[e.category].push_back(to_diffusion_space(e.tensor, types, cfg.rescale_layout));
  const NoiseSchedule schedule = cfg.schedule.make();
  const EmpiricalBayesDenoiser denoiser(schedule, sets);

  for (std::size_t c = 0; c < store.categorizer.k(); ++c) {
    if (!denoiser.has_category(c)) continue;
    auto samples = sample_layouts(schedule, denoiser, c, cfg.per_category, store.shape(), cfg.seed);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      GeneratedLayout g;
      g.category = c;
      g.seed = chain_seed(cfg.seed, c, i);
      g.raw = from_diffusion_space(std::move(samples[i]), types, cfg.rescale_layout);
      g.points = derasterize_layout(g.raw.slice_channels(0, types), 0.5,
                                    "gen-c" + std::to_string(c) + "-" + std::to_string(i));
      for (std::size_t t = 0; t < types; ++t) {
        const auto ch = g.raw.channel(types + t);
        ChannelSummary s{0.0, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        for (double v : ch) s.mean += v, s.min = std::min(s.min, v), s.max = std::max(s.max, v);
        s.mean /= static_cast<double>(ch.size());
        g.density_summary.push_back(s);
      }
      batch.layouts.push_back(std::move(g));
    }
    batch.category_counts[c] = cfg.per_category;
  }
  return batch;
}

// --- evaluate --------------------------------------------------------------

struct MetricReport {
  std::size_t reference_count = 0;
  std::size_t generated_count = 0;
  std::size_t feature_dim = 0;
  double spatial_fid = 0.0;
  /// Spatial-FID between the even- and odd-indexed halves of the reference set.
  std::optional<double> split_half_baseline;
  /// Per pyramid level: L2 norm of the mean reference and mean generated features.
  std::vector<std::pair<double, double>> level_norms;
};

/// Layout map as it reads back: markers merged by overlap collapse to one marker
/// at the component center. Both sides of a comparison go through this so that
/// generated layouts (stored as points) and raster references are comparable.
inline Tensor canonical_layout(const Tensor& layout) {
  const PointPattern p = derasterize_layout(layout, 0.5);
  return rasterize_layout(p, {layout.shape().height, layout.shape().width}, layout.shape().channels);
}

inline std::vector<Tensor> canonical_layouts(std::span<const Tensor> layouts) {
  std::vector<Tensor> out(layouts.size());
  parallel_for(layouts.size(), [&](std::size_t i) { out[i] = canonical_layout(layouts[i]); });
  return out;
}

/// Spatial-FID of canonicalized layout sets, plus the split-half baseline and per-level norms.
inline MetricReport evaluate(std::span<const Tensor> reference_in, std::span<const Tensor> generated_in, int levels) {
  const PyramidExtractor extractor(levels);
  if (reference_in.size() < 2 || generated_in.size() < 2) throw ArgumentError("evaluate: each set needs at least 2 layouts");
  if (reference_in.front().shape() != generated_in.front().shape())
    throw ArgumentError("evaluate: reference layouts have shape " + reference_in.front().shape().str() +
                        " but generated layouts have shape " + generated_in.front().shape().str());
  const std::vector<Tensor> reference = canonical_layouts(reference_in);
  const std::vector<Tensor> generated = canonical_layouts(generated_in);
  MetricReport r;
  r.reference_count = reference.size();
  r.generated_count = generated.size();
  r.feature_dim = extractor.dimension(reference.front().shape().channels);
  r.spatial_fid = spatial_fid(std::span<const Tensor>(reference), std::span<const Tensor>(generated), extractor);
  if (reference.size() >= 4) {
    std::vector<Tensor> even, odd;
    for (std::size_t i = 0; i < reference.size(); ++i) (i % 2 == 0 ? even : odd).push_back(reference[i]);
    r.split_half_baseline = spatial_fid(std::span<const Tensor>(even), std::span<const Tensor>(odd), extractor);
  }
  const auto fr = fit_stats(extract_features(std::span<const Tensor>(reference), extractor));
  const auto fg = fit_stats(extract_features(std::span<const Tensor>(generated), extractor));
  for (int l = 1; l <= levels; ++l) {
    const auto [b, e] = extractor.level_range(l, reference.front().shape().channels);
    const auto len = static_cast<Eigen::Index>(e - b);
    r.level_norms.emplace_back(fr.mu.segment(static_cast<Eigen::Index>(b), len).norm(),
                               fg.mu.segment(static_cast<Eigen::Index>(b), len).norm());
  }
  return r;
}

inline std::vector<Tensor> rasterize_dataset(const Dataset& ds, GridSize grid) {
  std::vector<Tensor> out;
  for (const auto& p : ds.patches) out.push_back(rasterize_layout(p, grid, ds.num_types()));
  return out;
}

// --- sweep -----------------------------------------------------------------

enum class SweepAxis { bandwidth, gmm_components, k_categories };

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "bandwidth") return SweepAxis::bandwidth;
  if (s == "gmm_components" || s == "gmm-components") return SweepAxis::gmm_components;
  if (s == "k_categories" || s == "k-categories") return SweepAxis::k_categories;
  throw ArgumentError("unknown sweep axis '" + s + "' (expected bandwidth, gmm_components or k_categories)");
}

struct SweepRow {
  std::string value;
  double spatial_fid = 0.0;
};

/// Runs prepare -> generate -> evaluate once for the adaptive setting (Scott
/// bandwidth, BIC component count, or cfg.k) and once per value. Layouts are
/// scored against `reference`, or against the training layouts when it is empty.
/// A K of 0 on the k_categories axis means unconditioned, i.e. K = 1.
inline std::vector<SweepRow> sweep(const Dataset& train, std::span<const Tensor> reference, const PipelineConfig& cfg,
                                   SweepAxis axis, const std::vector<double>& values) {
  cfg.validate();
  std::vector<std::pair<std::string, PipelineConfig>> runs;
  PipelineConfig adaptive = cfg;
  switch (axis) {
    case SweepAxis::bandwidth:
      adaptive.density = DensityKind::kde;
      adaptive.bandwidth.reset();
      runs.emplace_back("scott", adaptive);
      for (double v : values) {
        PipelineConfig c = adaptive;
        c.bandwidth = v;
        runs.emplace_back(nlohmann::json(v).dump(), c);
      }
      break;
    case SweepAxis::gmm_components:
      adaptive.density = DensityKind::gmm;
      adaptive.gmm_components.reset();
      runs.emplace_back("bic", adaptive);
      for (double v : values) {
        if (!(v >= 1.0) || v != std::floor(v)) throw ArgumentError("sweep: component counts must be positive integers");
        PipelineConfig c = adaptive;
        c.gmm_components = static_cast<std::size_t>(v);
        runs.emplace_back(std::to_string(static_cast<std::size_t>(v)), c);
      }
      break;
    case SweepAxis::k_categories:
      runs.emplace_back("default-" + std::to_string(cfg.k), cfg);
      for (double v : values) {
        if (!(v >= 0.0) || v != std::floor(v)) throw ArgumentError("sweep: K values must be non-negative integers");
        PipelineConfig c = cfg;
        c.k = std::max(1, static_cast<int>(v));
        runs.emplace_back(std::to_string(static_cast<int>(v)), c);
      }
      break;
  }
  for (const auto& [label, c] : runs) c.validate();

  std::vector<SweepRow> rows;
  for (const auto& [label, c] : runs) {
    const PreparedStore store = prepare(train, c);
    const GeneratedBatch batch = generate(store, c);
    const auto ref = reference.empty() ? store.layout_maps() : std::vector<Tensor>(reference.begin(), reference.end());
    const auto gen = batch.layout_maps();
    rows.push_back({label, evaluate(ref, gen, c.levels).spatial_fid});
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "value,spatial_fid\n";
  for (const auto& r : rows) out << r.value << "," << nlohmann::json(r.spatial_fid).dump() << "\n";
  return out.str();
}

// --- on-disk forms ---------------------------------------------------------

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  const NoiseSchedule s = c.schedule.make();
  return {{"grid", {c.grid.height, c.grid.width}},
          {"k", c.k},
          {"density", to_string(c.density)},
          {"steps", c.schedule.steps},
          {"beta_start", s.beta(1)},
          {"beta_end", s.beta(s.steps())},
          {"variance", to_string(c.schedule.variance)},
          {"seed", c.seed},
          {"per_category", c.per_category},
          {"levels", c.levels},
          {"bandwidth", c.bandwidth ? nlohmann::json(*c.bandwidth) : nlohmann::json(nullptr)},
          {"gmm_components", c.gmm_components ? nlohmann::json(*c.gmm_components) : nlohmann::json(nullptr)},
          {"rescale_layout", c.rescale_layout}};
}

inline std::string tensor_file_name(std::size_t i) {
  std::string n = std::to_string(i);
  return "tensors/" + std::string(n.size() < 5 ? 5 - n.size() : 0, '0') + n + ".lft";
}

/// Writes prepare.json, categorizer.json, models.json and tensors/NNNNN.lft under `dir`.
inline void write_prepared(const PreparedStore& store, const PipelineConfig& cfg, const std::filesystem::path& dir) {
  nlohmann::json patches = nlohmann::json::array();
  nlohmann::json models = nlohmann::json::array();
  for (std::size_t i = 0; i < store.entries.size(); ++i) {
    const auto& e = store.entries[i];
    patches.push_back({{"id", e.patch_id}, {"cell_count", e.cell_count}, {"category", e.category}, {"tensor", tensor_file_name(i)}});
    nlohmann::json m = nlohmann::json::array();
    for (const auto& d : e.models) m.push_back(density_to_json(d));
    models.push_back({{"id", e.patch_id}, {"models", std::move(m)}});
    write_text_file(dir / tensor_file_name(i), encode_lft(e.tensor));
  }
  const nlohmann::json categorizer{{"k", store.categorizer.k()}, {"boundaries", store.categorizer.boundaries()}};
  write_text_file(dir / "categorizer.json", categorizer.dump(1) + "\n");
  write_text_file(dir / "models.json", models.dump(1) + "\n");
  const nlohmann::json manifest{{"config", config_to_json(cfg)},
                                {"cell_types", store.cell_types},
                                {"grid", {store.grid.height, store.grid.width}},
                                {"density", to_string(store.density)},
                                {"categorizer", categorizer},
                                {"patches", std::move(patches)}};
  write_text_file(dir / "prepare.json", manifest.dump(1) + "\n");
}

/// Reads a store written by write_prepared. Density models are not reloaded.
inline PreparedStore read_prepared(const std::filesystem::path& dir) {
  const auto path = dir / "prepare.json";
  if (!std::filesystem::exists(path)) throw ArgumentError("no prepared store at '" + dir.string() + "' (run prepare first)");
  const nlohmann::json m = parse_json(read_text_file(path), path.string());
  try {
    PreparedStore store;
    store.cell_types = m.at("cell_types").get<std::vector<std::string>>();
    store.grid = {m.at("grid").at(0).get<std::size_t>(), m.at("grid").at(1).get<std::size_t>()};
    store.density = parse_density_kind(m.at("density").get<std::string>());
    store.categorizer = CountingCategorizer(m.at("categorizer").at("k").get<std::size_t>(),
                                            m.at("categorizer").at("boundaries").get<std::vector<double>>());
    for (const auto& p : m.at("patches")) {
      PreparedEntry e;
      e.patch_id = p.at("id").get<std::string>();
      e.cell_count = p.at("cell_count").get<std::size_t>();
      e.category = p.at("category").get<std::size_t>();
      e.tensor = decode_lft(read_text_file(dir / p.at("tensor").get<std::string>()));
      if (e.tensor.shape() != store.shape())
        throw ParseError("tensor for patch '" + e.patch_id + "' has shape " + e.tensor.shape().str());
      store.entries.push_back(std::move(e));
    }
    return store;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline nlohmann::json batch_to_json(const GeneratedBatch& b) {
  nlohmann::json layouts = nlohmann::json::array();
  for (const auto& l : b.layouts) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& c : l.points.cells) pts.push_back({{"x", c.x}, {"y", c.y}, {"type", c.type.index}});
    nlohmann::json summary = nlohmann::json::array();
    for (std::size_t t = 0; t < l.density_summary.size(); ++t) {
      const auto& s = l.density_summary[t];
      summary.push_back({{"type", t}, {"mean", s.mean}, {"min", s.min}, {"max", s.max}});
    }
    layouts.push_back({{"category", l.category},
                       {"seed", l.seed},
                       {"shape", {l.raw.shape().channels, l.raw.shape().height, l.raw.shape().width}},
                       {"points", std::move(pts)},
                       {"density_summary", std::move(summary)}});
  }
  return {{"cell_types", b.cell_types},
          {"shape", {b.shape.channels, b.shape.height, b.shape.width}},
          {"per_category", b.per_category},
          {"seed", b.seed},
          {"category_counts", b.category_counts},
          {"layouts", std::move(layouts)}};
}

/// Reads a generated-batch file back; raw tensors are not part of it.
inline GeneratedBatch batch_from_json(const nlohmann::json& j) {
  try {
    GeneratedBatch b;
    b.cell_types = j.at("cell_types").get<std::vector<std::string>>();
    const auto& s = j.at("shape");
    b.shape = {s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(), s.at(2).get<std::size_t>()};
    b.per_category = j.at("per_category").get<std::size_t>();
    b.seed = j.at("seed").get<std::uint64_t>();
    b.category_counts = j.at("category_counts").get<std::vector<std::size_t>>();
    for (const auto& l : j.at("layouts")) {
      GeneratedLayout g;
      g.category = l.at("category").get<std::size_t>();
      g.seed = l.at("seed").get<std::uint64_t>();
      g.points.width = static_cast<int>(b.shape.width);
      g.points.height = static_cast<int>(b.shape.height);
      for (const auto& c : l.at("points"))
        g.points.cells.push_back({c.at("x").get<double>(), c.at("y").get<double>(), CellTypeId{c.at("type").get<std::size_t>()}});
      g.points.validate(b.num_types());
      for (const auto& s2 : l.at("density_summary"))
        g.density_summary.push_back({s2.at("mean").get<double>(), s2.at("min").get<double>(), s2.at("max").get<double>()});
      b.layouts.push_back(std::move(g));
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("generated batch does not match schema: ") + e.what());
  }
}

inline nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t l = 0; l < r.level_norms.size(); ++l)
    levels.push_back({{"level", l + 1}, {"reference", r.level_norms[l].first}, {"generated", r.level_norms[l].second}});
  return {{"reference_count", r.reference_count},
          {"generated_count", r.generated_count},
          {"feature_dim", r.feature_dim},
          {"spatial_fid", r.spatial_fid},
          {"split_half_baseline", r.split_half_baseline ? nlohmann::json(*r.split_half_baseline) : nlohmann::json(nullptr)},
          {"per_level_feature_norms", std::move(levels)}};
}

}  // namespace layoutforge
