#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "seeco/bench/config.hpp"
#include "seeco/bench/metrics.hpp"
#include "seeco/bench/report.hpp"
#include "seeco/bench/scene.hpp"

namespace seeco::bench {

inline const std::vector<std::string>& default_categories() {
  static const std::vector<std::string> names = {
      "background", "building",  "road",   "water",         "forest",
      "agriculture", "rangeland", "barren", "large vehicle", "small vehicle",
  };
  return names;
}

inline constexpr const char* kDefaultSynonyms =
    "background: clutter, unlabeled ground, miscellaneous area, other surface, void region\n"
    "building: house, rooftop, structure, residence, edifice\n"
    "road: street, highway, pavement, lane, roadway\n"
    "water: river, lake, pond, reservoir, waterbody\n"
    "forest: woodland, trees, tree canopy, grove, timberland\n"
    "agriculture: farmland, cropland, field, plantation, arable land\n"
    "rangeland: grassland, meadow, pasture, prairie, shrubland\n"
    "barren: bare soil, desert, sand, bare land, wasteland\n"
    "large vehicle: truck, lorry, bus, heavy vehicle, transport vehicle\n"
    "small vehicle: car, sedan, van, automobile, compact car\n";

inline std::vector<std::string> suite_categories(std::size_t classes) {
  require(classes >= 2 && classes <= default_categories().size(), ErrorCode::kConfigError,
          "classes must lie in 2.." + std::to_string(default_categories().size()));
  return {default_categories().begin(), default_categories().begin() + static_cast<std::ptrdiff_t>(classes)};
}

inline scl::SynonymLibrary suite_synonyms(const RunConfig& cfg, const std::vector<std::string>& categories) {
  return cfg.suite.synonyms.empty()
             ? scl::SynonymLibrary::parse(kDefaultSynonyms, categories, cfg.synonyms_per_class)
             : scl::load_synonyms(cfg.suite.synonyms, categories, cfg.synonyms_per_class);
}

inline std::uint64_t scene_seed(std::uint64_t seed, std::size_t scene_id) {
  return derive_seed(seed, 0x5ce7e000ULL + scene_id);
}

/// Aggregates of one mode over every scene, reduced in scene order.
struct ModeAggregate {
  std::string mode;
  std::size_t views = 0;
  double mean_miou = 0.0;
  double mean_loss_pre = 0.0;
  double mean_loss_post = 0.0;
  std::size_t windows = 0;
  std::size_t windows_decreased = 0;
  std::size_t windows_diverged = 0;
  double mean_relative_decrease = 0.0;
  double median_relative_decrease = 0.0;
};

struct WindowLoss {
  std::size_t scene_id = 0;
  pipeline::WindowReport report;
};

struct SuiteReport {
  std::vector<ResultRow> rows;            // scene-major, modes in run order
  std::vector<ModeAggregate> aggregates;  // one per mode
  std::vector<WindowLoss> seeco_windows;  // main SeeCo mode
  std::size_t static_trainables_created = 0;

  const ModeAggregate& aggregate(const std::string& mode) const {
    for (const auto& a : aggregates)
      if (a.mode == mode) return a;
    fail(ErrorCode::kInvariantViolation, "no mode '" + mode + "'");
  }
};

/// What an observer sees for every (scene, mode) pair.
struct SceneObservation {
  const SyntheticScene& scene;
  const std::string& mode;
  const pipeline::SegmentResult& result;
  const IouReport& iou;
};

using SceneObserver = std::function<void(const SceneObservation&)>;

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct ModeRun {
  ModeRun(std::string n, RunConfig c, bool a) : name(std::move(n)), cfg(std::move(c)), adapt(a) {}
  std::string name;
  RunConfig cfg;
  bool adapt = true;
  std::vector<double> miou, pre, post, rel;
  std::size_t windows = 0, decreased = 0, diverged = 0;
};

}  // namespace detail

/// Generates the scenes and segments each in static mode, SeeCo mode, and
/// one extra SeeCo mode per swept view count. Writes results.csv,
/// summary.txt, scenes/scene_NNNN.txt and, with a sweep, sweep.csv. An empty
/// `out_dir` skips writing.
inline SuiteReport run_suite(const RunConfig& cfg, const std::filesystem::path& out_dir,
                             const SceneObserver& observer = {}) {
  cfg.validate();
  const auto categories = suite_categories(cfg.suite.classes);
  const auto library = suite_synonyms(cfg, categories);
  const vlm::FrozenModel model = vlm::build_model(cfg.model);
  const scl::SemanticBank bank = scl::build_bank(model, categories, library);

  std::vector<detail::ModeRun> modes;
  modes.emplace_back("static", cfg, false);
  modes.emplace_back("seeco", cfg, true);
  for (std::size_t k : cfg.suite.sweep_views) {
    if (k == cfg.oci.views) continue;
    detail::ModeRun m("seeco_k" + std::to_string(k), cfg, true);
    m.cfg.oci.views = k;
    modes.push_back(std::move(m));
  }

  const bool writing = !out_dir.empty();
  if (writing) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "scenes", ec);
    require(!ec, ErrorCode::kIoError, "cannot create " + (out_dir / "scenes").string() + ": " + ec.message());
  }

  SuiteReport report;
  for (std::size_t s = 0; s < cfg.suite.scenes; ++s) {
    const SyntheticScene scene = gen_scene(scene_seed(cfg.model.seed, s), cfg.suite.scene_height,
                                           cfg.suite.scene_width, cfg.suite.classes, cfg.suite.texture_noise);
    std::string scene_text;
    for (auto& m : modes) {
      pipeline::PipelineConfig pcfg = m.cfg.pipeline;
      pcfg.adapt = m.adapt;
      const std::size_t params_before = TrainableParam::instances_created();
      const auto t0 = std::chrono::steady_clock::now();
      const pipeline::SegmentResult result = pipeline::segment_image(model, scene.image, bank, m.cfg.oci, pcfg);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!m.adapt) report.static_trainables_created += TrainableParam::instances_created() - params_before;

      const IouReport iou = miou(result.labels, scene.gt, cfg.suite.classes);
      if (observer) observer(SceneObservation{scene, m.name, result, iou});

      std::vector<double> pre, post;
      for (const auto& w : result.windows) {
        ++m.windows;
        if (w.diverged) {
          ++m.diverged;
          continue;
        }
        pre.push_back(w.loss_pre);
        post.push_back(w.loss_post);
        if (w.loss_post < w.loss_pre) ++m.decreased;
        m.rel.push_back(w.loss_pre > 0.0 ? (w.loss_pre - w.loss_post) / w.loss_pre : 0.0);
        if (m.name == "seeco") report.seeco_windows.push_back({s, w});
      }
      ResultRow row{s, m.name, iou.miou, detail::mean(pre), detail::mean(post), std::nullopt};
      if (cfg.suite.record_timing) row.seconds = seconds;
      m.miou.push_back(row.miou);
      m.pre.push_back(row.loss_pre);
      m.post.push_back(row.loss_post);
      report.rows.push_back(row);
      scene_text += scene_report_text(s, m.name, iou, result.windows);
    }
    if (writing) {
      char name[32];
      std::snprintf(name, sizeof name, "scene_%04zu.txt", s);
      write_text(out_dir / "scenes" / name, scene_text);
    }
  }

  for (const auto& m : modes) {
    ModeAggregate a;
    a.mode = m.name;
    a.views = m.cfg.oci.views;
    a.mean_miou = detail::mean(m.miou);
    a.mean_loss_pre = detail::mean(m.pre);
    a.mean_loss_post = detail::mean(m.post);
    a.windows = m.windows;
    a.windows_decreased = m.adapt ? m.decreased : 0;
    a.windows_diverged = m.diverged;
    a.mean_relative_decrease = m.adapt ? detail::mean(m.rel) : 0.0;
    a.median_relative_decrease = m.adapt ? detail::median(m.rel) : 0.0;
    report.aggregates.push_back(a);
  }

  if (writing) {
    write_text(out_dir / "results.csv", results_csv(report.rows));
    Summary summary;
    summary.emplace_back("scenes", std::to_string(cfg.suite.scenes));
    summary.emplace_back("classes", std::to_string(cfg.suite.classes));
    summary.emplace_back("model_fingerprint", std::to_string(model.fingerprint()));
    summary.emplace_back("static_trainables_created", std::to_string(report.static_trainables_created));
    for (const auto& a : report.aggregates) {
      const std::string p = a.mode + ".";
      summary.emplace_back(p + "views", std::to_string(a.views));
      summary.emplace_back(p + "mean_miou", format_double(a.mean_miou));
      summary.emplace_back(p + "mean_loss_pre", format_double(a.mean_loss_pre));
      summary.emplace_back(p + "mean_loss_post", format_double(a.mean_loss_post));
      summary.emplace_back(p + "windows", std::to_string(a.windows));
      summary.emplace_back(p + "windows_decreased", std::to_string(a.windows_decreased));
      summary.emplace_back(p + "windows_diverged", std::to_string(a.windows_diverged));
      summary.emplace_back(p + "mean_relative_loss_decrease", format_double(a.mean_relative_decrease));
      summary.emplace_back(p + "median_relative_loss_decrease", format_double(a.median_relative_decrease));
    }
    const ModeAggregate& st = report.aggregate("static");
    const ModeAggregate& sc = report.aggregate("seeco");
    summary.emplace_back("miou_gain", format_double(sc.mean_miou - st.mean_miou));
    std::istringstream echo(config_text(cfg));
    for (std::string line; std::getline(echo, line);) {
      const auto eq = line.find(" = ");
      summary.emplace_back("config." + line.substr(0, eq), line.substr(eq + 3));
    }
    write_text(out_dir / "summary.txt", summary_text(summary));

    if (!cfg.suite.sweep_views.empty()) {
      std::string sweep = "views,mode,mean_miou,mean_loss_pre,mean_loss_post,fraction_windows_decreased\n";
      for (std::size_t k : cfg.suite.sweep_views) {
        const ModeAggregate& a = report.aggregate(k == cfg.oci.views ? "seeco" : "seeco_k" + std::to_string(k));
        const double frac =
            a.windows ? static_cast<double>(a.windows_decreased) / static_cast<double>(a.windows) : 0.0;
        sweep += std::to_string(k) + "," + a.mode + "," + format_double(a.mean_miou) + "," +
                 format_double(a.mean_loss_pre) + "," + format_double(a.mean_loss_post) + "," + format_double(frac) +
                 "\n";
      }
      write_text(out_dir / "sweep.csv", sweep);
    }
  }
  return report;
}

}  // namespace seeco::bench
