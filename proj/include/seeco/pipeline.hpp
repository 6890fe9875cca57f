#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "seeco/oci.hpp"

namespace seeco::pipeline {

struct Placement {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Placement&, const Placement&) = default;
};

struct WindowPlan {
  std::size_t window = 224;
  std::size_t stride = 112;
  std::vector<Placement> placements;  // row-major
};

/// Offsets at multiples of the stride along one axis, the last one clamped
/// to extent - window.
inline std::vector<std::size_t> axis_offsets(std::size_t extent, std::size_t window, std::size_t stride) {
  std::vector<std::size_t> out;
  const std::size_t last = extent - window;
  for (std::size_t o = 0;; o += stride) {
    const std::size_t clamped = std::min(o, last);
    if (out.empty() || out.back() != clamped) out.push_back(clamped);
    if (clamped == last) break;
  }
  return out;
}

inline WindowPlan plan_windows(std::size_t height, std::size_t width, std::size_t window, std::size_t stride) {
  require(window >= 1 && window <= height && window <= width, ErrorCode::kWindowTooLarge,
          "window " + std::to_string(window) + " does not fit a " + std::to_string(height) + "x" +
              std::to_string(width) + " image");
  require(stride >= 1 && stride <= window, ErrorCode::kConfigError,
          "stride must lie in 1..window, otherwise pixels go uncovered");
  WindowPlan plan{window, stride, {}};
  for (std::size_t r : axis_offsets(height, window, stride))
    for (std::size_t c : axis_offsets(width, window, stride)) plan.placements.push_back({r, c});
  return plan;
}

/// Running sum of window score maps at image resolution.
struct AssembledPrediction {
  ProbMap scores;
  std::vector<std::size_t> coverage;

  AssembledPrediction(std::size_t height, std::size_t width, std::size_t classes)
      : scores{Tensor({height, width, classes})}, coverage(height * width, 0) {}

  void accumulate(const ProbMap& window_scores, Placement at) {
    const std::size_t wh = window_scores.rows(), ww = window_scores.cols(), j = window_scores.classes();
    const std::size_t width = scores.cols();
    require(j == scores.classes() && at.row + wh <= scores.rows() && at.col + ww <= width,
            ErrorCode::kShapeMismatch, "window does not fit the assembly");
    for (std::size_t r = 0; r < wh; ++r)
      for (std::size_t c = 0; c < ww; ++c) {
        const std::size_t p = (at.row + r) * width + at.col + c;
        ++coverage[p];
        for (std::size_t k = 0; k < j; ++k) scores.scores[p * j + k] += window_scores.scores[(r * ww + c) * j + k];
      }
  }

  /// Divides every pixel by its coverage count.
  ProbMap averaged() const {
    ProbMap out = scores;
    const std::size_t j = scores.classes();
    for (std::size_t p = 0; p < coverage.size(); ++p) {
      require(coverage[p] >= 1, ErrorCode::kInvariantViolation, "pixel not covered by any window");
      const double n = static_cast<double>(coverage[p]);
      for (std::size_t k = 0; k < j; ++k) out.scores[p * j + k] /= n;
    }
    return out;
  }
};

enum class SessionScope { kPerWindow, kPerImage };

struct PipelineConfig {
  std::size_t window = 224;
  std::size_t stride = 112;
  SessionScope scope = SessionScope::kPerWindow;
  bool adapt = true;  // false: static consensus fusion, no trainables
};

struct WindowReport {
  Placement at;
  double loss_pre = 0.0;
  double loss_post = 0.0;
  bool diverged = false;
};

struct SegmentResult {
  LabelMap labels;
  ProbMap blended;    // averaged delta-blend that the labels are the argmax of
  ProbMap geometric;  // averaged Y_GCL
  ProbMap semantic;   // averaged Y_SCL
  std::vector<WindowReport> windows;
};

inline Tensor crop(const Tensor& img, Placement at, std::size_t window) {
  const std::size_t width = img.dim(1), ch = img.dim(2);
  Tensor out({window, window, ch});
  for (std::size_t r = 0; r < window; ++r)
    std::copy_n(img.data().begin() + ((at.row + r) * width + at.col) * ch, window * ch,
                out.data().begin() + r * window * ch);
  return out;
}

/// Sliding-window segmentation. Each window is adapted (unless static),
/// its final consensus maps are blended, and the blends are averaged where
/// windows overlap. Windows run in row-major placement order.
inline SegmentResult segment_image(const vlm::FrozenModel& model, const Tensor& img, const scl::SemanticBank& bank,
                                   const oci::OciConfig& cfg, const PipelineConfig& pcfg) {
  require(img.rank() == 3 && img.dim(2) == 3, ErrorCode::kShapeMismatch, "expected an HxWx3 image");
  require(pcfg.window == model.config().image_size, ErrorCode::kConfigError,
          "window must equal the model input size " + std::to_string(model.config().image_size));
  cfg.validate(model.config());
  const std::size_t height = img.dim(0), width = img.dim(1), j = bank.classes();
  const WindowPlan plan = plan_windows(height, width, pcfg.window, pcfg.stride);
  const std::size_t patch = model.config().patch_size;

  AssembledPrediction blended(height, width, j), geometric(height, width, j), semantic(height, width, j);
  SegmentResult result;
  std::optional<oci::AdaptationSession> session;
  if (pcfg.adapt) session.emplace(model, cfg);

  for (const Placement& at : plan.placements) {
    const Tensor window = crop(img, at, pcfg.window);
    WindowReport report{at, 0.0, 0.0, false};
    oci::WindowMaps maps;
    if (session) {
      try {
        oci::AdaptResult r = session->adapt(window, bank);
        report.loss_pre = r.loss_pre;
        report.loss_post = r.loss_post;
        maps = std::move(r.final_maps);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kAdaptationDiverged) throw;
        session->reset();
        maps = oci::static_maps(model, window, bank, cfg);
        report.diverged = true;
        report.loss_pre = report.loss_post = std::numeric_limits<double>::quiet_NaN();
      }
      if (pcfg.scope == SessionScope::kPerWindow) session->reset();
    } else {
      maps = oci::static_maps(model, window, bank, cfg);
      report.loss_pre = report.loss_post = maps.loss;
    }
    blended.accumulate(upsample_nearest(oci::blend(maps.geometric.target, maps.semantic, cfg.delta), patch), at);
    geometric.accumulate(upsample_nearest(maps.geometric.target, patch), at);
    semantic.accumulate(upsample_nearest(maps.semantic, patch), at);
    result.windows.push_back(report);
  }
  if (session) session->reset();

  result.blended = blended.averaged();
  result.geometric = geometric.averaged();
  result.semantic = semantic.averaged();
  result.labels = argmax_labels(result.blended);
  return result;
}

}  // namespace seeco::pipeline
