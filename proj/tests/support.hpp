#pragma once

// Helpers shared by the unit and acceptance tests: tiny models, synthetic
// banks, and central finite differences.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "seeco/seeco.hpp"

namespace seeco::test_support {

inline Tensor random_tensor(RandomStream& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_image(RandomStream& rng, std::size_t size) {
  return random_tensor(rng, {size, size, 3}, 0.0, 1.0);
}

/// Image whose patches are each a single random colour.
inline Tensor patch_constant_image(RandomStream& rng, std::size_t size, std::size_t patch) {
  Tensor img({size, size, 3});
  const std::size_t g = size / patch;
  for (std::size_t pr = 0; pr < g; ++pr)
    for (std::size_t pc = 0; pc < g; ++pc) {
      const double rgb[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
      for (std::size_t u = 0; u < patch; ++u)
        for (std::size_t v = 0; v < patch; ++v)
          for (std::size_t c = 0; c < 3; ++c) img[((pr * patch + u) * size + pc * patch + v) * 3 + c] = rgb[c];
    }
  return img;
}

inline vlm::ModelConfig tiny_config(std::size_t grid = 3, std::size_t patch = 4, std::size_t dim = 8,
                                    std::size_t blocks = 2, std::uint64_t seed = 7) {
  vlm::ModelConfig c;
  c.patch_size = patch;
  c.image_size = grid * patch;
  c.embed_dim = dim;
  c.num_blocks = blocks;
  c.num_heads = 2;
  c.vocab_size = 97;
  c.seed = seed;
  return c;
}

inline std::vector<std::string> numbered_categories(std::size_t j) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j; ++i) out.push_back("category " + std::to_string(i));
  return out;
}

/// Library text giving category i the synonyms "alias i z".
inline std::string numbered_library(std::size_t j, std::size_t z) {
  std::string text;
  for (std::size_t i = 0; i < j; ++i) {
    text += "category " + std::to_string(i) + ":";
    for (std::size_t k = 0; k < z; ++k) text += (k ? ", alias " : " alias ") + std::to_string(i) + " " + std::to_string(k);
    text += "\n";
  }
  return text;
}

inline scl::SemanticBank tiny_bank(const vlm::FrozenModel& model, std::size_t j, std::size_t z) {
  const auto cats = numbered_categories(j);
  return scl::build_bank(model, cats, scl::SynonymLibrary::parse(numbered_library(j, z), cats, z));
}

/// Code of the seeco::Error thrown by f, or nullopt if it returned.
template <class F>
std::optional<ErrorCode> error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Central difference of f over every coordinate of `x`, restoring it.
inline Tensor finite_difference(Tensor& x, const std::function<double()>& f, double h = 1e-5) {
  Tensor grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// |a - f| / max(|a|, |f|, floor); the floor keeps coordinates whose true
/// derivative is ~0 from amplifying round-off.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
  return worst;
}

/// Consensus loss of explicit adapters and context logits on one window,
/// with targets recomputed from the current values.
inline double window_loss(const vlm::FrozenModel& model, const Tensor& img, const scl::SemanticBank& bank,
                          const oci::OciConfig& cfg, std::vector<oci::LoRAAdapter>& adapters,
                          const TrainableParam& logits) {
  const vlm::Injection inj = oci::make_injection(model.config().num_blocks, adapters, nullptr);
  const auto fw = oci::detail::forward(model, img, bank, cfg, &inj, Var::borrow(logits.value()));
  return oci::detail::targets_and_loss(fw, model.config().grid(), cfg).first.loss;
}

/// Analytic gradients of the same loss: fills every param's grad.
inline double window_loss_backward(const vlm::FrozenModel& model, const Tensor& img, const scl::SemanticBank& bank,
                                   const oci::OciConfig& cfg, std::vector<oci::LoRAAdapter>& adapters,
                                   TrainableParam& logits) {
  Graph graph;
  const vlm::Injection inj = oci::make_injection(model.config().num_blocks, adapters, &graph);
  const Var w = graph.parameter(logits);
  const auto fw = oci::detail::forward(model, img, bank, cfg, &inj, w);
  auto [maps, loss] = oci::detail::targets_and_loss(fw, model.config().grid(), cfg);
  graph.backward(loss);
  return maps.loss;
}

}  // namespace seeco::test_support
