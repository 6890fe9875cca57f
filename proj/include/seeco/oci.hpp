#pragma once

// Online consensus injection: low-rank adapters on the last P vision blocks
// plus scene contexts on the text side, trained per window on the
// consensus loss and then fused into the final prediction.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seeco/gcl.hpp"
#include "seeco/numerics/optim.hpp"
#include "seeco/numerics/rng.hpp"
#include "seeco/scl.hpp"
#include "seeco/vlm/encoder.hpp"

namespace seeco::oci {

enum class ScoreNormalization { kRaw, kSoftmax };

struct OciConfig {
  std::size_t views = 4;
  gcl::Aggregation aggregation = gcl::Aggregation::kMean;
  ScoreNormalization normalization = ScoreNormalization::kRaw;
  double tau = 0.01;
  scl::ContextMode context_mode = scl::ContextMode::kPerDimension;
  std::size_t lora_blocks = 2;
  std::size_t lora_rank = 8;
  double lora_scale = 16.0;
  std::size_t iterations = 1;
  double delta = 0.5;
  AdamWConfig optimizer{};
  std::uint64_t adapter_seed = 0x5eec0;

  void validate(const vlm::ModelConfig& model) const {
    gcl::ViewSet{views}.validate();
    require(tau > 0.0, ErrorCode::kInvalidTemperature, "tau must be positive");
    require(lora_blocks >= 1 && lora_blocks <= model.num_blocks, ErrorCode::kConfigError,
            "lora_blocks must lie in 1.." + std::to_string(model.num_blocks));
    require(lora_rank >= 1, ErrorCode::kConfigError, "lora_rank must be at least 1");
    require(lora_scale > 0.0, ErrorCode::kConfigError, "lora_scale must be positive");
    require(iterations >= 1, ErrorCode::kConfigError, "iterations must be at least 1");
    require(delta >= 0.0 && delta <= 1.0, ErrorCode::kConfigError, "delta must lie in [0, 1]");
    require(optimizer.learning_rate >= 0.0, ErrorCode::kConfigError, "learning rate must be non-negative");
  }
};

/// Trainable y += scale * (x A^T) B^T on one frozen dense sublayer.
struct LoRAAdapter {
  std::size_t block = 0;
  vlm::Sublayer layer = vlm::Sublayer::kExpand;
  std::size_t rank = 0;
  double scale = 1.0;
  TrainableParam a;  // [rank x in]
  TrainableParam b;  // [out x rank], zero at attach time

  std::size_t trainable_count() const { return a.value().size() + b.value().size(); }

  /// scale * B * A, shaped like the frozen weight.
  Tensor effective_delta() const { return seeco::scale(matmul(b.value(), a.value()), scale); }
};

inline std::vector<LoRAAdapter> attach_lora(const vlm::FrozenModel& model, std::size_t last_blocks, std::size_t rank,
                                            double scale, std::uint64_t seed) {
  const std::size_t nb = model.config().num_blocks;
  require(last_blocks >= 1 && last_blocks <= nb, ErrorCode::kConfigError,
          "adapter block count " + std::to_string(last_blocks) + " outside 1.." + std::to_string(nb));
  require(rank >= 1, ErrorCode::kConfigError, "adapter rank must be at least 1");
  RandomStream rng = seeded_rng(seed);
  const double a_std = 1.0 / std::sqrt(static_cast<double>(rank));
  std::vector<LoRAAdapter> out;
  for (std::size_t b = nb - last_blocks; b < nb; ++b) {
    for (vlm::Sublayer s : {vlm::Sublayer::kExpand, vlm::Sublayer::kContract}) {
      const vlm::DenseLayer& target = model.blocks()[b].dense(s);
      const std::string id =
          "lora.block" + std::to_string(b) + (s == vlm::Sublayer::kExpand ? ".expand" : ".contract");
      out.push_back(LoRAAdapter{b, s, rank, scale,
                                TrainableParam(id + ".A", rng.normal_tensor({rank, target.in_features()}, a_std)),
                                TrainableParam(id + ".B", Tensor({target.out_features(), rank}))});
    }
  }
  return out;
}

/// Adapters as injected deltas. With a graph the matrices become tape
/// leaves; without one they are borrowed constants.
inline vlm::Injection make_injection(std::size_t num_blocks, std::vector<LoRAAdapter>& adapters, Graph* graph) {
  vlm::Injection inj;
  inj.blocks.resize(num_blocks);
  for (LoRAAdapter& ad : adapters) {
    Var a = graph ? graph->parameter(ad.a) : Var::borrow(ad.a.value());
    Var b = graph ? graph->parameter(ad.b) : Var::borrow(ad.b.value());
    inj.blocks[ad.block][static_cast<std::size_t>(ad.layer)] = vlm::LowRankDelta{std::move(a), std::move(b), ad.scale};
  }
  return inj;
}

/// Grid-resolution maps of one window.
struct WindowMaps {
  gcl::GeoConsensus geometric;  // per-view maps and Y_GCL
  ProbMap original;             // Y^
  ProbMap recalibrated;         // Y-
  ProbMap semantic;             // Y_SCL
  double loss = 0.0;
};

/// (1/K) sum_k mse(Y_GCL, Y^k) + mse(Y_SCL, Y^) + mse(Y_SCL, Y-).
inline double seeco_loss(const gcl::GeoConsensus& geo, const ProbMap& semantic, const ProbMap& original,
                         const ProbMap& recalibrated) {
  require(!geo.per_view.empty(), ErrorCode::kEmptyInput, "no views");
  double geo_term = 0.0;
  for (const ProbMap& v : geo.per_view) geo_term += mse(geo.target.scores, v.scores);
  geo_term *= 1.0 / static_cast<double>(geo.per_view.size());
  return geo_term + mse(semantic.scores, original.scores) + mse(semantic.scores, recalibrated.scores);
}

namespace detail {

struct Forward {
  std::vector<Var> per_view;  // inverse-rotated, [cells x J]
  Var original;
  Var recalibrated;
};

inline Var normalize_scores(const Var& s, ScoreNormalization mode) {
  return mode == ScoreNormalization::kSoftmax ? ad::softmax_rows(s, 1.0) : s;
}

inline Forward forward(const vlm::FrozenModel& model, const Tensor& img, const scl::SemanticBank& bank,
                       const OciConfig& cfg, const vlm::Injection* injection, const Var& logits) {
  const std::size_t g = model.config().grid();
  Forward out;
  Var identity_tokens;
  for (std::size_t k = 1; k <= cfg.views; ++k) {
    const std::size_t turns = gcl::quarter_turns(k, cfg.views);
    Var tokens = vlm::encode_tokens(model, gcl::rotate(img, k, cfg.views), injection);
    Var scores = normalize_scores(vlm::similarity_scores(tokens, Var::borrow(bank.text.matrix)), cfg.normalization);
    out.per_view.push_back(ad::permute_rows(scores, gcl::rotation_rows(g, (4 - turns) % 4)));
    if (k == cfg.views) identity_tokens = std::move(tokens);
  }
  out.original = out.per_view.back();
  const Var text = scl::recalibrated_text(logits, cfg.tau, bank);
  out.recalibrated = normalize_scores(vlm::similarity_scores(identity_tokens, text), cfg.normalization);
  return out;
}

inline ProbMap as_map(const Tensor& cells, std::size_t g) {
  return ProbMap{cells.reshaped({g, g, cells.dim(1)})};
}

/// Consensus targets from the forward values, plus the loss as a tape node
/// with those targets held constant.
inline std::pair<WindowMaps, Var> targets_and_loss(const Forward& fw, std::size_t g, const OciConfig& cfg) {
  WindowMaps maps;
  for (const Var& v : fw.per_view) maps.geometric.per_view.push_back(as_map(v.value(), g));
  maps.geometric.target = gcl::aggregate(maps.geometric.per_view, cfg.aggregation);
  maps.original = as_map(fw.original.value(), g);
  maps.recalibrated = as_map(fw.recalibrated.value(), g);
  maps.semantic = ProbMap{scl::semantic_consensus(maps.original.scores, maps.recalibrated.scores)};

  const std::size_t cells = g * g, j = maps.original.classes();
  const Var geo_target(maps.geometric.target.scores.reshaped({cells, j}));
  const Var sem_target(maps.semantic.scores.reshaped({cells, j}));
  Var geo_sum = ad::mse(fw.per_view.front(), geo_target);
  for (std::size_t k = 1; k < fw.per_view.size(); ++k) geo_sum = ad::add(geo_sum, ad::mse(fw.per_view[k], geo_target));
  const Var geo_term = ad::scale(geo_sum, 1.0 / static_cast<double>(fw.per_view.size()));
  const Var sem_term = ad::add(ad::mse(fw.original, sem_target), ad::mse(fw.recalibrated, sem_target));
  Var loss = ad::add(geo_term, sem_term);
  maps.loss = loss.value().item();
  return {std::move(maps), std::move(loss)};
}

}  // namespace detail

/// Window maps of the unadapted model with zero contexts. Never constructs a
/// trainable.
inline WindowMaps static_maps(const vlm::FrozenModel& model, const Tensor& img, const scl::SemanticBank& bank,
                              const OciConfig& cfg) {
  const Tensor zeros(scl::context_shape(cfg.context_mode, bank.embed_dim(), bank.synonyms_per_category()));
  const auto fw = detail::forward(model, img, bank, cfg, nullptr, Var::borrow(zeros));
  return detail::targets_and_loss(fw, model.config().grid(), cfg).first;
}

/// delta * Y_GCL + (1 - delta) * Y_SCL.
inline ProbMap blend(const ProbMap& geometric, const ProbMap& semantic, double delta) {
  require(delta >= 0.0 && delta <= 1.0, ErrorCode::kConfigError, "delta must lie in [0, 1]");
  require_same_shape(geometric.scores, semantic.scores, "blend");
  ProbMap out{Tensor(geometric.scores.shape())};
  for (std::size_t i = 0; i < out.scores.size(); ++i)
    out.scores[i] = delta * geometric.scores[i] + (1.0 - delta) * semantic.scores[i];
  return out;
}

/// Per-cell argmax of the blend; lowest class index wins ties.
inline LabelMap fuse(const ProbMap& geometric, const ProbMap& semantic, double delta) {
  return argmax_labels(blend(geometric, semantic, delta));
}

struct AdaptResult {
  double loss_pre = 0.0;   // loss before the first update
  double loss_post = 0.0;  // loss recomputed with the adapted parameters
  WindowMaps final_maps;   // consensus maps under the adapted parameters
};

/// Per-image (or per-window) trainable state: adapters, contexts and their
/// optimizer. Owns nothing of the backbone, which is never modified.
class AdaptationSession {
 public:
  AdaptationSession(const vlm::FrozenModel& model, OciConfig cfg) : model_(&model), cfg_(std::move(cfg)) {
    cfg_.validate(model.config());
  }

  bool active() const noexcept { return contexts_.has_value(); }
  const OciConfig& config() const noexcept { return cfg_; }
  const std::vector<LoRAAdapter>& adapters() const noexcept { return adapters_; }
  const scl::SceneContexts* contexts() const { return contexts_ ? &*contexts_ : nullptr; }
  const AdamW* optimizer() const { return optimizer_ ? &*optimizer_ : nullptr; }

  std::size_t trainable_count() const {
    std::size_t n = contexts_ ? contexts_->logits.value().size() : 0;
    for (const auto& a : adapters_) n += a.trainable_count();
    return n;
  }

  /// Attaches fresh adapters and zero contexts if the session is idle.
  void activate(const scl::SemanticBank& bank) {
    if (active()) return;
    adapters_ = attach_lora(*model_, cfg_.lora_blocks, cfg_.lora_rank, cfg_.lora_scale, cfg_.adapter_seed);
    contexts_.emplace(scl::SceneContexts::zeros(bank.embed_dim(), bank.synonyms_per_category(), cfg_.tau,
                                                cfg_.context_mode));
    optimizer_.emplace(cfg_.optimizer);
  }

  /// Loss of the current parameters against targets computed from them.
  /// When `graph` is given the loss is recorded on it.
  std::pair<WindowMaps, Var> evaluate(const Tensor& img, const scl::SemanticBank& bank, Graph* graph) {
    require(active(), ErrorCode::kStateUninitialized, "session is not active");
    const vlm::Injection inj = make_injection(model_->config().num_blocks, adapters_, graph);
    const Var logits = graph ? graph->parameter(contexts_->logits) : Var::borrow(contexts_->logits.value());
    const auto fw = detail::forward(*model_, img, bank, cfg_, &inj, logits);
    return detail::targets_and_loss(fw, model_->config().grid(), cfg_);
  }

  WindowMaps consensus(const Tensor& img, const scl::SemanticBank& bank) {
    return evaluate(img, bank, nullptr).first;
  }

  /// Runs `iterations` rounds of: recompute targets, freeze them, backprop
  /// the loss, AdamW-step every trainable. Throws AdaptationDiverged on a
  /// non-finite loss.
  AdaptResult adapt(const Tensor& img, const scl::SemanticBank& bank) {
    activate(bank);
    AdaptResult result;
    for (std::size_t it = 0; it < cfg_.iterations; ++it) {
      Graph graph;
      auto [maps, loss] = evaluate(img, bank, &graph);
      require(std::isfinite(maps.loss), ErrorCode::kAdaptationDiverged, "non-finite consensus loss");
      if (it == 0) result.loss_pre = maps.loss;
      graph.backward(loss);
      for (auto& a : adapters_) {
        optimizer_->step(a.a);
        optimizer_->step(a.b);
      }
      optimizer_->step(contexts_->logits);
    }
    result.final_maps = consensus(img, bank);
    result.loss_post = result.final_maps.loss;
    require(std::isfinite(result.loss_post), ErrorCode::kAdaptationDiverged, "non-finite loss after update");
    return result;
  }

  /// Drops adapters, contexts and optimizer state.
  void reset() {
    adapters_.clear();
    contexts_.reset();
    optimizer_.reset();
  }

 private:
  const vlm::FrozenModel* model_;
  OciConfig cfg_;
  std::vector<LoRAAdapter> adapters_;
  std::optional<scl::SceneContexts> contexts_;
  std::optional<AdamW> optimizer_;
};

}  // namespace seeco::oci
