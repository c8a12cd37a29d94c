#include <cstdlib>
#include <filesystem>

#include <gtest/gtest.h>

#include "layoutforge/pipeline.hpp"
#include "layoutforge/synth.hpp"

using namespace layoutforge;
namespace fs = std::filesystem;

namespace {

PipelineConfig small_config() {
  PipelineConfig c;
  c.grid = {32, 32};
  c.levels = 3;
  c.k = 2;
  c.per_category = 3;
  c.schedule.steps = 50;
  return c;
}

Dataset small_dataset(std::size_t patches = 12, std::uint64_t seed = 0, bool clustered = true) {
  SynthOptions o;
  o.patches = patches;
  o.seed = seed;
  o.clustered = clustered;
  return synth_dataset(o);
}

// Patch i carries 10 + i cells so counts are all distinct.
Dataset distinct_count_dataset(std::size_t patches) {
  Dataset ds{{"a", "b", "c"}, {}};
  for (std::size_t i = 0; i < patches; ++i) {
    PointPattern p{"d" + std::to_string(i), 100, 100, {}};
    for (std::size_t k = 0; k < 10 + i; ++k)
      p.cells.push_back({static_cast<double>((k * 37) % 100), static_cast<double>((k * 61 + i) % 100), CellTypeId{k % 3}});
    ds.patches.push_back(p);
  }
  return ds;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "layoutforge_test_pipeline" / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Config, Validation) {
  PipelineConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.k = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = small_config();
  c.grid = {30, 30};
  EXPECT_THROW(c.validate(), ArgumentError);
  c = small_config();
  c.schedule.beta_start = 0.5;
  c.schedule.beta_end = 0.1;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = small_config();
  c.bandwidth = -1.0;
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(Prepare, SixChannelsForThreeTypes) {
  const auto store = prepare(small_dataset(), small_config());
  ASSERT_EQ(store.entries.size(), 12u);
  for (const auto& e : store.entries) {
    EXPECT_EQ(e.tensor.shape(), (TensorShape{6, 32, 32}));
    EXPECT_EQ(e.models.size(), 3u);
    for (std::size_t c = 3; c < 6; ++c) {
      const auto ch = e.tensor.channel(c);
      EXPECT_EQ(*std::max_element(ch.begin(), ch.end()), 1.0);
    }
  }
}

TEST(Prepare, NoDensityGivesZeroChannels) {
  auto cfg = small_config();
  cfg.density = DensityKind::none;
  for (const auto& e : prepare(small_dataset(), cfg).entries)
    for (std::size_t c = 3; c < 6; ++c)
      for (double v : e.tensor.channel(c)) ASSERT_EQ(v, 0.0);
}

TEST(Prepare, FiveCategoriesOfSixteen) {
  auto cfg = small_config();
  cfg.k = 5;
  cfg.density = DensityKind::none;
  const auto store = prepare(distinct_count_dataset(80), cfg);
  std::vector<std::size_t> sizes(5, 0);
  for (const auto& e : store.entries) ++sizes[e.category];
  EXPECT_EQ(sizes, std::vector<std::size_t>(5, 16));
}

TEST(Prepare, RejectsInvalidPatchWithId) {
  Dataset ds = small_dataset(3);
  ds.patches[1].cells.push_back({1e6, 0.0, CellTypeId{0}});
  try {
    prepare(ds, small_config());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.patch_id(), ds.patches[1].patch_id);
  }
}

TEST(Prepare, IndependentOfThreadCount) {
  const auto ds = small_dataset(10, 3);
  auto cfg = small_config();
  cfg.density = DensityKind::gmcm;
  setenv("LAYOUTFORGE_THREADS", "1", 1);
  const auto a = prepare(ds, cfg);
  setenv("LAYOUTFORGE_THREADS", "3", 1);
  const auto b = prepare(ds, cfg);
  unsetenv("LAYOUTFORGE_THREADS");
  for (std::size_t i = 0; i < a.entries.size(); ++i) EXPECT_EQ(a.entries[i].tensor, b.entries[i].tensor);
}

TEST(Generate, CountsAndEmptyRequest) {
  auto cfg = small_config();
  const auto store = prepare(small_dataset(), cfg);
  const auto batch = generate(store, cfg);
  EXPECT_EQ(batch.layouts.size(), 6u);
  EXPECT_EQ(batch.category_counts, (std::vector<std::size_t>{3, 3}));
  cfg.per_category = 0;
  const auto none = generate(store, cfg);
  EXPECT_TRUE(none.layouts.empty());
  EXPECT_EQ(none.category_counts, (std::vector<std::size_t>{0, 0}));
}

TEST(Generate, SamplesReproduceTrainingTensorsOfTheirCategory) {
  const auto cfg = small_config();
  const auto store = prepare(small_dataset(), cfg);
  for (const auto& g : generate(store, cfg).layouts) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t cat = 99;
    for (const auto& e : store.entries) {
      const double d = max_abs_difference(e.tensor, g.raw);
      if (d < best) best = d, cat = e.category;
    }
    EXPECT_LT(best, 0.1);
    EXPECT_EQ(cat, g.category);
  }
}

TEST(Generate, RescaledLayoutsMapBack) {
  auto cfg = small_config();
  cfg.rescale_layout = true;
  const auto store = prepare(small_dataset(), cfg);
  for (const auto& g : generate(store, cfg).layouts) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : store.entries) best = std::min(best, max_abs_difference(e.tensor, g.raw));
    EXPECT_LT(best, 0.1);
  }
}

// Cells land where the density channels are high.
TEST(Generate, JointChannelCoherence) {
  auto cfg = small_config();
  cfg.per_category = 4;
  const auto store = prepare(small_dataset(16, 2), cfg);
  double at_cells = 0.0, overall = 0.0;
  std::size_t n_cells = 0, n_all = 0;
  for (const auto& g : generate(store, cfg).layouts) {
    for (const auto& c : g.points.cells) {
      at_cells += g.raw.at(3 + c.type.index, static_cast<std::size_t>(c.y), static_cast<std::size_t>(c.x));
      ++n_cells;
    }
    for (std::size_t c = 3; c < 6; ++c)
      for (double v : g.raw.channel(c)) overall += v, ++n_all;
  }
  ASSERT_GT(n_cells, 0u);
  EXPECT_GE(at_cells / n_cells, 1.5 * overall / n_all);
}

TEST(Generate, DeterministicBatchFile) {
  const auto cfg = small_config();
  const auto store = prepare(small_dataset(), cfg);
  EXPECT_EQ(batch_to_json(generate(store, cfg)).dump(), batch_to_json(generate(store, cfg)).dump());
}

TEST(StoreFiles, RoundTrip) {
  const auto cfg = small_config();
  const auto store = prepare(small_dataset(), cfg);
  const auto dir = scratch("store");
  write_prepared(store, cfg, dir);
  const auto back = read_prepared(dir);
  EXPECT_EQ(back.cell_types, store.cell_types);
  EXPECT_EQ(back.grid, store.grid);
  EXPECT_EQ(back.categorizer.boundaries(), store.categorizer.boundaries());
  ASSERT_EQ(back.entries.size(), store.entries.size());
  for (std::size_t i = 0; i < store.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].category, store.entries[i].category);
    EXPECT_LT(max_abs_difference(back.entries[i].tensor, store.entries[i].tensor), 1e-7);
  }
  EXPECT_TRUE(fs::exists(dir / "models.json"));
  EXPECT_THROW(read_prepared(scratch("missing")), ArgumentError);
}

TEST(BatchFile, RoundTripKeepsPoints) {
  const auto cfg = small_config();
  const auto batch = generate(prepare(small_dataset(), cfg), cfg);
  const auto back = batch_from_json(nlohmann::json::parse(batch_to_json(batch).dump()));
  ASSERT_EQ(back.layouts.size(), batch.layouts.size());
  const auto a = batch.layout_maps(), b = back.layout_maps();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Evaluate, TrainAgainstItselfIsZero) {
  const auto store = prepare(small_dataset(20), small_config());
  const auto maps = store.layout_maps();
  const auto r = evaluate(maps, maps, 3);
  EXPECT_NEAR(r.spatial_fid, 0.0, 1e-8);
  EXPECT_EQ(r.reference_count, 20u);
  EXPECT_EQ(r.feature_dim, 3u * 21u);
  ASSERT_TRUE(r.split_half_baseline.has_value());
  EXPECT_EQ(r.level_norms.size(), 3u);
  const auto j = report_to_json(r);
  for (const char* key : {"reference_count", "generated_count", "feature_dim", "spatial_fid", "per_level_feature_norms"})
    EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Evaluate, ShapeMismatch) {
  const std::vector<Tensor> a{Tensor({3, 32, 32}), Tensor({3, 32, 32})}, b{Tensor({3, 16, 16}), Tensor({3, 16, 16})};
  EXPECT_THROW(evaluate(a, b, 2), ArgumentError);
}

TEST(Evaluate, UniformScoresWorseThanGeneratedWithDensity) {
  auto cfg = small_config();
  cfg.per_category = 10;
  const auto train = small_dataset(40, 7);
  const auto store = prepare(train, cfg);
  const auto ref = store.layout_maps();
  const auto generated = generate(store, cfg).layout_maps();
  const auto uniform = rasterize_dataset(small_dataset(20, 99, false), cfg.grid);
  EXPECT_GT(evaluate(ref, uniform, cfg.levels).spatial_fid, evaluate(ref, generated, cfg.levels).spatial_fid);
}

TEST(Evaluate, CanonicalLayoutIsIdempotent) {
  const auto maps = prepare(small_dataset(5), small_config()).layout_maps();
  for (const auto& m : maps) {
    const auto once = canonical_layout(m);
    EXPECT_EQ(canonical_layout(once), once);
  }
}

TEST(Sweep, RowsAndUnconditionedBaseline) {
  auto cfg = small_config();
  const auto train = small_dataset(12, 1);
  const auto rows = sweep(train, {}, cfg, SweepAxis::k_categories, {1});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].value, "default-2");
  auto k1 = cfg;
  k1.k = 1;
  const auto store = prepare(train, k1);
  const double direct = evaluate(store.layout_maps(), generate(store, k1).layout_maps(), k1.levels).spatial_fid;
  EXPECT_EQ(rows[1].spatial_fid, direct);

  const auto bw = sweep(train, {}, cfg, SweepAxis::bandwidth, {0.05});
  EXPECT_EQ(bw.size(), 2u);
  EXPECT_EQ(bw[0].value, "scott");
  const std::string csv = sweep_csv(bw);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.rfind("value,spatial_fid\n", 0), 0u);

  EXPECT_EQ(sweep(train, {}, cfg, SweepAxis::gmm_components, {2, 3}).size(), 3u);
  EXPECT_THROW(sweep(train, {}, cfg, SweepAxis::gmm_components, {0}), ArgumentError);
  EXPECT_THROW(parse_sweep_axis("depth"), ArgumentError);
}
