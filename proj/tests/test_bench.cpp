#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "support.hpp"

using namespace seeco;
using namespace seeco::test_support;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("seeco_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

LabelMap random_labels(RandomStream& rng, std::size_t h, std::size_t w, std::size_t classes) {
  LabelMap m{h, w, std::vector<std::uint8_t>(h * w)};
  for (auto& l : m.labels) l = static_cast<std::uint8_t>(rng.below(classes));
  return m;
}

// Per-class pixel sets, intersected and united explicitly.
double naive_miou(const LabelMap& pred, const LabelMap& gt, std::size_t classes) {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t j = 0; j < classes; ++j) {
    std::set<std::size_t> p, g;
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
      if (pred.labels[i] == j) p.insert(i);
      if (gt.labels[i] == j) g.insert(i);
    }
    std::set<std::size_t> uni = p;
    uni.insert(g.begin(), g.end());
    if (uni.empty()) continue;
    std::size_t inter = 0;
    for (std::size_t i : p) inter += g.count(i);
    sum += static_cast<double>(inter) / static_cast<double>(uni.size());
    ++present;
  }
  return present ? sum / static_cast<double>(present) : 0.0;
}

bench::RunConfig tiny_run(std::size_t scenes) {
  bench::RunConfig c;
  c.model.patch_size = 32;
  c.model.embed_dim = 16;
  c.model.num_blocks = 2;
  c.model.num_heads = 2;
  c.model.vocab_size = 512;
  c.oci.lora_rank = 2;
  c.suite.scenes = scenes;
  c.suite.classes = 3;
  c.suite.scene_height = 224;
  c.suite.scene_width = 256;
  return c;
}

}  // namespace

TEST(GenScene, SingleDiscNoNoise) {
  bench::Region disc;
  disc.kind = bench::ShapeKind::kDisc;
  disc.label = 1;
  disc.center_row = 112.0;
  disc.center_col = 100.0;
  disc.half_w = 30.0;
  RandomStream rng(70);
  const auto scene = bench::render_scene(224, 224, 2, {disc}, 0.0, rng, 0);
  std::set<std::array<double, 3>> colours;
  for (std::size_t r = 0; r < 224; ++r)
    for (std::size_t c = 0; c < 224; ++c) {
      const double dr = r + 0.5 - 112.0, dc = c + 0.5 - 100.0;
      const std::uint8_t expected = dr * dr + dc * dc <= 900.0 ? 1 : 0;
      ASSERT_EQ(scene.gt.at(r, c), expected);
      const std::size_t p = r * 224 + c;
      colours.insert({scene.image[p * 3], scene.image[p * 3 + 1], scene.image[p * 3 + 2]});
    }
  EXPECT_EQ(colours.size(), 2u);
}

TEST(GenScene, DeterministicAndValid) {
  const auto a = bench::gen_scene(123, 240, 260, 6, 0.08);
  const auto b = bench::gen_scene(123, 240, 260, 6, 0.08);
  EXPECT_TRUE(bit_equal(a.image, b.image));
  EXPECT_EQ(a.gt, b.gt);
  EXPECT_EQ(a.regions.size(), 5u);
  EXPECT_EQ(a.image.shape(), (Shape{240, 260, 3}));
  for (auto l : a.gt.labels) EXPECT_LT(l, 6);
  for (double v : a.image.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(std::round(v * 255.0) / 255.0, v);
  }
  const auto c = bench::gen_scene(124, 240, 260, 6, 0.08);
  EXPECT_FALSE(bit_equal(a.image, c.image));
}

TEST(GenScene, RegionAreasMatchPixelCounts) {
  RandomStream rng(71);
  for (int trial = 0; trial < 60; ++trial) {
    bench::Region reg;
    reg.kind = static_cast<bench::ShapeKind>(trial % 3);
    reg.center_row = rng.uniform(90.0, 150.0);
    reg.center_col = rng.uniform(90.0, 150.0);
    reg.half_h = rng.uniform(10.0, 60.0);
    reg.half_w = rng.uniform(10.0, 60.0);
    if (reg.kind == bench::ShapeKind::kRotatedRect) reg.angle = rng.uniform(0.0, 1.5);
    RandomStream paint(0);
    const auto scene = bench::render_scene(240, 240, 2, {reg}, 0.0, paint, 0);
    std::size_t count = 0;
    for (auto l : scene.gt.labels) count += l;
    EXPECT_LE(std::abs(static_cast<double>(count) - reg.area()), reg.perimeter()) << trial;
  }
}

TEST(GenScene, Errors) {
  EXPECT_EQ(error_code_of([] { bench::gen_scene(1, 224, 224, 1, 0.0); }), ErrorCode::kConfigError);
  EXPECT_EQ(error_code_of([] { bench::gen_scene(1, 223, 224, 3, 0.0); }), ErrorCode::kConfigError);
  EXPECT_EQ(error_code_of([] { bench::gen_scene(1, 224, 224, 3, -0.1); }), ErrorCode::kConfigError);
}

TEST(Miou, Examples) {
  const LabelMap pred{2, 2, {0, 0, 1, 1}}, gt{2, 2, {0, 1, 1, 1}};
  const auto r = bench::miou(pred, gt, 2);
  EXPECT_EQ(*r.per_class_iou[0], 0.5);
  EXPECT_EQ(*r.per_class_iou[1], 2.0 / 3.0);
  EXPECT_NEAR(r.miou, 7.0 / 12.0, 1e-15);

  EXPECT_EQ(bench::miou(gt, gt, 4).miou, 1.0);
  EXPECT_EQ(bench::miou(gt, gt, 4).present_classes, 2u);
  EXPECT_FALSE(bench::miou(gt, gt, 4).per_class_iou[3].has_value());

  const LabelMap a{1, 2, {2, 0}}, b{1, 2, {0, 2}};
  EXPECT_EQ(*bench::miou(a, b, 3).per_class_iou[2], 0.0);
}

TEST(Miou, MatchesNaiveOracle) {
  RandomStream rng(72);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t j = 2 + rng.below(5);
    const auto pred = random_labels(rng, 8, 8, j), gt = random_labels(rng, 8, 8, j);
    const auto r = bench::miou(pred, gt, j);
    EXPECT_EQ(r.miou, naive_miou(pred, gt, j));
    for (const auto& iou : r.per_class_iou)
      if (iou) {
        EXPECT_GE(*iou, 0.0);
        EXPECT_LE(*iou, 1.0);
      }
  }
}

TEST(Miou, Errors) {
  EXPECT_EQ(error_code_of([] { bench::miou(LabelMap{1, 2, {0, 0}}, LabelMap{2, 1, {0, 0}}, 2); }),
            ErrorCode::kShapeMismatch);
  EXPECT_EQ(error_code_of([] { bench::miou(LabelMap{1, 1, {3}}, LabelMap{1, 1, {0}}, 2); }), ErrorCode::kFormatError);
}

TEST(Pnm, RoundTrips) {
  const fs::path dir = scratch_dir("pnm");
  const auto scene = bench::gen_scene(5, 224, 230, 4, 0.1);
  bench::write_ppm((dir / "a.ppm").string(), scene.image);
  EXPECT_TRUE(bit_equal(bench::read_ppm((dir / "a.ppm").string()), scene.image));
  bench::write_pgm((dir / "a.pgm").string(), scene.gt);
  EXPECT_EQ(bench::read_pgm((dir / "a.pgm").string()), scene.gt);
}

TEST(Pnm, HeaderCommentsAndErrors) {
  const fs::path dir = scratch_dir("pnm_err");
  {
    std::ofstream f(dir / "c.pgm", std::ios::binary);
    f << "P5\n# made by hand\n2 1\n255\n";
    f.put(3).put(7);
  }
  const LabelMap m = bench::read_pgm((dir / "c.pgm").string());
  EXPECT_EQ(m.width, 2u);
  EXPECT_EQ(m.labels, (std::vector<std::uint8_t>{3, 7}));
  {
    std::ofstream f(dir / "bad.ppm", std::ios::binary);
    f << "P6\n2 2\n255\nabc";
  }
  EXPECT_EQ(error_code_of([&] { bench::read_ppm((dir / "bad.ppm").string()); }), ErrorCode::kFormatError);
  EXPECT_EQ(error_code_of([&] { bench::read_ppm((dir / "c.pgm").string()); }), ErrorCode::kFormatError);
  EXPECT_EQ(error_code_of([&] { bench::read_ppm((dir / "missing.ppm").string()); }), ErrorCode::kIoError);
}

TEST(Config, DefaultsParseAndRoundTrip) {
  const auto d = bench::parse_config("");
  EXPECT_EQ(d.oci.views, 4u);
  EXPECT_EQ(d.oci.tau, 0.01);
  EXPECT_EQ(d.oci.lora_blocks, 2u);
  EXPECT_EQ(d.oci.lora_rank, 8u);
  EXPECT_EQ(d.oci.lora_scale, 16.0);
  EXPECT_EQ(d.oci.optimizer.learning_rate, 3e-4);
  EXPECT_EQ(d.oci.delta, 0.5);
  EXPECT_EQ(d.oci.iterations, 1u);
  EXPECT_EQ(d.pipeline.window, 224u);
  EXPECT_EQ(d.pipeline.stride, 112u);
  EXPECT_EQ(d.synonyms_per_class, 5u);

  const auto c = bench::parse_config(
      "# comment\nviews = 2\nDelta = 0.25  # trailing\naggregation = MAX\ncontext_mode = per_synonym\n"
      "scene_size = 240,300\nsweep_views = 4, 1\nrecord_timing = yes\nsession_scope = per_image\n");
  EXPECT_EQ(c.oci.views, 2u);
  EXPECT_EQ(c.oci.delta, 0.25);
  EXPECT_EQ(c.oci.aggregation, gcl::Aggregation::kMax);
  EXPECT_EQ(c.oci.context_mode, scl::ContextMode::kPerSynonym);
  EXPECT_EQ(c.suite.scene_height, 240u);
  EXPECT_EQ(c.suite.scene_width, 300u);
  EXPECT_EQ(c.suite.sweep_views, (std::vector<std::size_t>{4, 1}));
  EXPECT_TRUE(c.suite.record_timing);
  EXPECT_EQ(c.pipeline.scope, pipeline::SessionScope::kPerImage);

  const std::string text = bench::config_text(c);
  EXPECT_EQ(bench::config_text(bench::parse_config(text)), text);
}

TEST(Config, Errors) {
  auto code_and_message = [](const std::string& text) {
    try {
      bench::parse_config(text);
    } catch (const Error& e) {
      return std::make_pair(std::optional(e.code()), std::string(e.what()));
    }
    return std::make_pair(std::optional<ErrorCode>(), std::string());
  };
  auto [c1, m1] = code_and_message("views = 4\nveiws = 2\n");
  EXPECT_EQ(c1, ErrorCode::kConfigError);
  EXPECT_NE(m1.find("line 2"), std::string::npos);
  EXPECT_NE(m1.find("veiws"), std::string::npos);

  auto [c2, m2] = code_and_message("tau = 0.1\n\ntau = 0.2\n");
  EXPECT_EQ(c2, ErrorCode::kConfigError);
  EXPECT_NE(m2.find("line 1"), std::string::npos);

  for (const char* bad : {"views 4\n", "views = four\n", "delta = 2\n", "lr = -1\n", "views = 3\n",
                          "aggregation = median\n", "window = 200\n", "classes = 1\n", "scene_size = 100\n",
                          "positional_embeddings = maybe\n", "sweep_views = 4,3\n", "lora_blocks = 9\n"})
    EXPECT_TRUE(code_and_message(bad).first.has_value()) << bad;
  EXPECT_EQ(code_and_message("tau = 0\n").first, ErrorCode::kInvalidTemperature);
}

TEST(Config, LoadResolvesRelativeSynonyms) {
  const fs::path dir = scratch_dir("config");
  bench::write_text(dir / "run.cfg", "synonyms = lib/syn.txt\n");
  const auto c = bench::load_config((dir / "run.cfg").string());
  EXPECT_EQ(fs::path(c.suite.synonyms), dir / "lib/syn.txt");
  EXPECT_EQ(error_code_of([&] { bench::load_config((dir / "nope.cfg").string()); }), ErrorCode::kIoError);
}

TEST(Report, ResultsRoundTrip) {
  std::vector<bench::ResultRow> rows = {
      {0, "static", 0.1, 0.5, 0.5, std::nullopt},
      {0, "seeco", 1.0 / 3.0, 0.123456789012345678, 0.1, 12.5},
      {1, "seeco", 0.0, std::nan(""), std::nan(""), std::nullopt},
  };
  const std::string csv = bench::results_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "scene_id,mode,miou,loss_pre,loss_post,seconds");
  EXPECT_EQ(bench::parse_results_csv(csv), rows);
  EXPECT_EQ(bench::results_csv(bench::parse_results_csv(csv)), csv);
  EXPECT_EQ(error_code_of([] { bench::parse_results_csv("a,b\n"); }), ErrorCode::kFormatError);
}

TEST(Report, SummaryRoundTrip) {
  const bench::Summary s = {{"scenes", "3"}, {"seeco.mean_miou", bench::format_double(0.1 + 0.2)}};
  const auto parsed = bench::parse_summary(bench::summary_text(s));
  EXPECT_EQ(parsed, s);
  EXPECT_EQ(bench::read_double(bench::summary_value(parsed, "seeco.mean_miou")), 0.1 + 0.2);
  EXPECT_EQ(error_code_of([&] { bench::summary_value(parsed, "missing"); }), ErrorCode::kFormatError);
}

TEST(Suite, CategoriesAndSynonyms) {
  EXPECT_EQ(bench::default_categories().size(), 10u);
  EXPECT_EQ(bench::suite_categories(3).size(), 3u);
  EXPECT_EQ(error_code_of([] { bench::suite_categories(11); }), ErrorCode::kConfigError);
  // Built-in library equals the shipped data file.
  const auto cats = bench::default_categories();
  const auto builtin = scl::SynonymLibrary::parse(bench::kDefaultSynonyms, cats, 5);
  const auto shipped = scl::load_synonyms(SEECO_DATA_DIR "/synonyms.txt", cats, 5);
  for (const auto& c : cats) EXPECT_EQ(builtin.synonyms(c), shipped.synonyms(c));
}

TEST(Suite, EmptySuite) {
  const fs::path dir = scratch_dir("suite_empty");
  const auto report = bench::run_suite(tiny_run(0), dir);
  EXPECT_TRUE(report.rows.empty());
  EXPECT_EQ(report.aggregate("seeco").windows, 0u);
  EXPECT_EQ(report.aggregate("static").mean_miou, 0.0);
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));
  EXPECT_EQ(bench::parse_results_csv(bench::read_text(dir / "results.csv")).size(), 0u);
}

TEST(Suite, TinyRunIsDeterministicAndSweeps) {
  auto cfg = tiny_run(2);
  cfg.suite.sweep_views = {4, 1};
  const fs::path a = scratch_dir("suite_a"), b = scratch_dir("suite_b");
  const auto ra = bench::run_suite(cfg, a);
  bench::run_suite(cfg, b);
  for (const char* f : {"results.csv", "summary.txt", "sweep.csv", "scenes/scene_0000.txt", "scenes/scene_0001.txt"})
    EXPECT_EQ(bench::read_text(a / f), bench::read_text(b / f)) << f;

  EXPECT_EQ(ra.static_trainables_created, 0u);
  ASSERT_EQ(ra.aggregates.size(), 3u);
  EXPECT_EQ(ra.aggregates[2].mode, "seeco_k1");
  EXPECT_EQ(ra.aggregates[2].views, 1u);
  EXPECT_EQ(ra.rows.size(), 2u * 3u);
  EXPECT_EQ(ra.seeco_windows.size(), 2u * 2u);

  const std::string sweep = bench::read_text(a / "sweep.csv");
  EXPECT_NE(sweep.find("\n4,seeco,"), std::string::npos);
  EXPECT_NE(sweep.find("\n1,seeco_k1,"), std::string::npos);

  const auto rows = bench::parse_results_csv(bench::read_text(a / "results.csv"));
  EXPECT_EQ(rows, ra.rows);
  for (const auto& r : rows) EXPECT_FALSE(r.seconds.has_value());

  const auto summary = bench::parse_summary(bench::read_text(a / "summary.txt"));
  EXPECT_EQ(bench::summary_value(summary, "static_trainables_created"), "0");
  EXPECT_EQ(bench::summary_value(summary, "config.views"), "4");
  const double gain = bench::read_double(bench::summary_value(summary, "miou_gain"));
  EXPECT_EQ(gain, ra.aggregate("seeco").mean_miou - ra.aggregate("static").mean_miou);
}

TEST(Suite, ObserverSeesEveryScene) {
  std::size_t calls = 0;
  std::set<std::string> modes;
  bench::run_suite(tiny_run(2), {}, [&](const bench::SceneObservation& o) {
    ++calls;
    modes.insert(o.mode);
    EXPECT_EQ(o.result.labels.height, o.scene.gt.height);
    EXPECT_EQ(o.iou.miou, bench::miou(o.result.labels, o.scene.gt, 3).miou);
  });
  EXPECT_EQ(calls, 4u);
  EXPECT_EQ(modes, (std::set<std::string>{"static", "seeco"}));
}
