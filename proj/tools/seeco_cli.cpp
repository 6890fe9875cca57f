// seeco: scene generation, segmentation, evaluation and suite runs.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
// invariant violation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "seeco/seeco.hpp"

namespace {

using namespace seeco;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError:
    case ErrorCode::kInvalidTemperature:
    case ErrorCode::kUnsupportedViewCount:
    case ErrorCode::kWindowTooLarge:
      return 1;
    case ErrorCode::kInvariantViolation:
    case ErrorCode::kStaleGraph:
    case ErrorCode::kStateUninitialized:
    case ErrorCode::kAdaptationDiverged:
      return 3;
    default:
      return 2;
  }
}

std::vector<std::string> read_categories(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream in(bench::read_text(path));
  for (std::string line; std::getline(in, line);) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string name = scl::trim(line);
    if (!name.empty()) out.push_back(std::move(name));
  }
  require(out.size() >= 2, ErrorCode::kFormatError, path + ": need at least two categories");
  return out;
}

std::pair<std::size_t, std::size_t> parse_hw(const std::string& s) {
  const auto comma = s.find(',');
  require(comma != std::string::npos, ErrorCode::kConfigError, "--size expects H,W");
  return {bench::detail::parse_size(scl::trim(s.substr(0, comma))),
          bench::detail::parse_size(scl::trim(s.substr(comma + 1)))};
}

int cmd_gen(std::uint64_t seed, std::size_t count, std::size_t classes, const std::string& size, double noise,
            const std::string& out) {
  const auto [h, w] = parse_hw(size);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  require(!ec, ErrorCode::kIoError, "cannot create " + out + ": " + ec.message());
  std::string manifest = "# file,gt,seed,classes,height,width,texture_noise\n";
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = bench::scene_seed(seed, i);
    const auto scene = bench::gen_scene(s, h, w, classes, noise);
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%04zu", i);
    const std::filesystem::path dir(out);
    bench::write_ppm((dir / (std::string(stem) + ".ppm")).string(), scene.image);
    bench::write_pgm((dir / (std::string(stem) + "_gt.pgm")).string(), scene.gt);
    manifest += std::string(stem) + ".ppm," + stem + "_gt.pgm," + std::to_string(s) + "," + std::to_string(classes) +
                "," + std::to_string(h) + "," + std::to_string(w) + "," + bench::format_double(noise) + "\n";
  }
  bench::write_text(std::filesystem::path(out) / "manifest.csv", manifest);
  std::cout << "wrote " << count << " scenes to " << out << "\n";
  return 0;
}

int cmd_segment(const std::string& model_path, const std::string& image_path, const std::string& categories_path,
                const std::string& synonyms_path, const std::string& config_path, const std::string& out,
                bool static_mode) {
  const bench::RunConfig cfg = bench::load_config(config_path);
  const vlm::FrozenModel model = vlm::load_model(model_path);
  require(model.config().image_size == cfg.pipeline.window, ErrorCode::kConfigError,
          "model input size differs from the configured window");
  const auto categories = read_categories(categories_path);
  const auto library = scl::load_synonyms(synonyms_path, categories, cfg.synonyms_per_class);
  const auto bank = scl::build_bank(model, categories, library);
  const Tensor image = bench::read_ppm(image_path);
  pipeline::PipelineConfig pcfg = cfg.pipeline;
  pcfg.adapt = !static_mode;
  const auto result = pipeline::segment_image(model, image, bank, cfg.oci, pcfg);
  bench::write_pgm(out, result.labels);
  for (const auto& w : result.windows)
    std::cout << "window " << w.at.row << "," << w.at.col << " loss_pre=" << bench::format_double(w.loss_pre)
              << " loss_post=" << bench::format_double(w.loss_post) << (w.diverged ? " diverged" : "") << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, std::size_t classes) {
  const auto report = bench::miou(bench::read_pgm(pred_path), bench::read_pgm(gt_path), classes);
  std::cout << "miou = " << bench::format_double(report.miou) << "\n";
  for (std::size_t j = 0; j < classes; ++j)
    std::cout << "iou." << j << " = "
              << (report.per_class_iou[j] ? bench::format_double(*report.per_class_iou[j]) : "absent") << "\n";
  return 0;
}

int cmd_suite(const std::string& config_path, const std::string& out) {
  const auto cfg = bench::load_config(config_path);
  const auto report = bench::run_suite(cfg, out);
  for (const auto& a : report.aggregates)
    std::cout << a.mode << ": mean_miou=" << bench::format_double(a.mean_miou)
              << " mean_loss_pre=" << bench::format_double(a.mean_loss_pre)
              << " mean_loss_post=" << bench::format_double(a.mean_loss_post) << "\n";
  return 0;
}

int cmd_export(const std::string& config_path, const std::string& out) {
  const auto cfg = bench::load_config(config_path);
  const auto model = vlm::build_model(cfg.model);
  vlm::save_model(model, out);
  std::cout << "fingerprint " << model.fingerprint() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seeco: test-time consensus adaptation on synthetic scenes"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "emit synthetic scenes");
  std::uint64_t seed = 0;
  std::size_t count = 1, classes = 5;
  std::string size = "336,336", out;
  double noise = 0.08;
  gen->add_option("--seed", seed)->required();
  gen->add_option("--count", count)->required();
  gen->add_option("--classes", classes)->required();
  gen->add_option("--size", size, "H,W")->required();
  gen->add_option("--noise", noise, "texture noise amplitude");
  gen->add_option("--out", out)->required();

  auto* seg = app.add_subcommand("segment", "segment one image");
  std::string model_path, image_path, categories_path, synonyms_path, config_path, seg_out;
  bool static_mode = false;
  seg->add_option("--model", model_path)->required();
  seg->add_option("--image", image_path)->required();
  seg->add_option("--categories", categories_path)->required();
  seg->add_option("--synonyms", synonyms_path)->required();
  seg->add_option("--config", config_path)->required();
  seg->add_option("--out", seg_out)->required();
  seg->add_flag("--static", static_mode, "skip adaptation");

  auto* ev = app.add_subcommand("eval", "mIoU of a predicted label map");
  std::string pred_path, gt_path;
  std::size_t eval_classes = 0;
  ev->add_option("--pred", pred_path)->required();
  ev->add_option("--gt", gt_path)->required();
  ev->add_option("--classes", eval_classes)->required();

  auto* suite = app.add_subcommand("suite", "static vs adapted comparison run");
  std::string suite_config, suite_out;
  suite->add_option("--config", suite_config)->required();
  suite->add_option("--out", suite_out)->required();

  auto* exp = app.add_subcommand("export-model", "build and serialize the frozen backbone");
  std::string export_config, export_out;
  exp->add_option("--config", export_config)->required();
  exp->add_option("--out", export_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen(seed, count, classes, size, noise, out);
    if (*seg) return cmd_segment(model_path, image_path, categories_path, synonyms_path, config_path, seg_out, static_mode);
    if (*ev) return cmd_eval(pred_path, gt_path, eval_classes);
    if (*suite) return cmd_suite(suite_config, suite_out);
    if (*exp) return cmd_export(export_config, export_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
