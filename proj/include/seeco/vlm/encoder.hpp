#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "seeco/numerics/autodiff.hpp"
#include "seeco/types.hpp"
#include "seeco/vlm/model.hpp"

namespace seeco::vlm {

/// Low-rank delta injected into one dense sublayer:
/// y = frozen(x) + scale * (x A^T) B^T.
struct LowRankDelta {
  Var a;  // [rank x in]
  Var b;  // [out x rank]
  double scale = 1.0;
};

/// Optional deltas for every dense sublayer of every block.
struct Injection {
  std::vector<std::array<std::optional<LowRankDelta>, kDenseSublayersPerBlock>> blocks;

  const LowRankDelta* find(std::size_t block, Sublayer s) const {
    if (block >= blocks.size()) return nullptr;
    const auto& slot = blocks[block][static_cast<std::size_t>(s)];
    return slot ? &*slot : nullptr;
  }
};

namespace detail {

inline Var dense(const Var& x, const DenseLayer& layer) {
  return ad::add_row_bias(ad::linear(x, Var::borrow(layer.weight)), Var::borrow(layer.bias));
}

inline Var dense(const Var& x, const DenseLayer& layer, const LowRankDelta* delta) {
  Var out = dense(x, layer);
  if (!delta) return out;
  Var low = ad::linear(ad::linear(x, delta->a), delta->b);
  return ad::add(out, ad::scale(low, delta->scale));
}

/// [H x W x 3] image -> [tokens x patch_dim] rows, patches in row-major grid
/// order, pixels row-major inside each patch, mapped from [0,1] to [-1,1].
inline Tensor patchify(const ModelConfig& cfg, const Tensor& img) {
  const std::size_t p = cfg.patch_size, g = cfg.grid(), size = cfg.image_size;
  Tensor out({g * g, cfg.patch_dim()});
  for (std::size_t pr = 0; pr < g; ++pr)
    for (std::size_t pc = 0; pc < g; ++pc) {
      double* row = out.data().data() + (pr * g + pc) * cfg.patch_dim();
      std::size_t k = 0;
      for (std::size_t u = 0; u < p; ++u)
        for (std::size_t v = 0; v < p; ++v)
          for (std::size_t c = 0; c < 3; ++c) row[k++] = 2.0 * img[((pr * p + u) * size + pc * p + v) * 3 + c] - 1.0;
    }
  return out;
}

inline Var attention(const Var& h, const Block& block, std::size_t heads) {
  const Var q = dense(h, block.query);
  const Var k = dense(h, block.key);
  const Var v = dense(h, block.value);
  const std::size_t hd = q.value().dim(1) / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    const Var qh = ad::slice_cols(q, i * hd, hd);
    const Var kh = ad::slice_cols(k, i * hd, hd);
    const Var vh = ad::slice_cols(v, i * hd, hd);
    const Var weights = ad::softmax_rows(ad::scale(ad::linear(qh, kh), inv_sqrt), 1.0);
    outs.push_back(ad::matmul(weights, vh));
  }
  return dense(ad::concat_cols(outs), block.attn_out);
}

}  // namespace detail

inline void require_image(const ModelConfig& cfg, const Tensor& img) {
  require(img.rank() == 3 && img.dim(0) == cfg.image_size && img.dim(1) == cfg.image_size && img.dim(2) == 3,
          ErrorCode::kShapeMismatch,
          "image " + shape_string(img.shape()) + " does not match model input " + std::to_string(cfg.image_size) +
              "x" + std::to_string(cfg.image_size) + "x3");
}

/// Pre-norm transformer over patch tokens, then the dense feature head and
/// L2 normalization. Returns [tokens x D] rows of unit norm. Blocks without
/// injected deltas, and everything before the first delta, evaluate as
/// constants and never reach a tape.
inline Var encode_tokens(const FrozenModel& model, const Tensor& img, const Injection* injection = nullptr) {
  const ModelConfig& cfg = model.config();
  require_image(cfg, img);
  Var x = detail::dense(Var(detail::patchify(cfg, img)), model.patch_embed());
  if (cfg.positional_embeddings) x = ad::add(x, Var::borrow(model.positional()));
  for (std::size_t b = 0; b < model.blocks().size(); ++b) {
    const Block& block = model.blocks()[b];
    x = ad::add(x, detail::attention(ad::layer_norm_rows(x, block.ln1_gamma, block.ln1_beta), block, cfg.num_heads));
    const Var h = ad::layer_norm_rows(x, block.ln2_gamma, block.ln2_beta);
    const LowRankDelta* expand = injection ? injection->find(b, Sublayer::kExpand) : nullptr;
    const LowRankDelta* contract = injection ? injection->find(b, Sublayer::kContract) : nullptr;
    const Var f = ad::gelu(detail::dense(h, block.fc_expand, expand));
    x = ad::add(x, detail::dense(f, block.fc_contract, contract));
  }
  x = ad::layer_norm_rows(x, model.final_gamma(), model.final_beta());
  return ad::l2_normalize_rows(detail::dense(x, model.dense_head()));
}

inline DenseFeatureMap encode_image(const FrozenModel& model, const Tensor& img) {
  const std::size_t g = model.config().grid();
  return DenseFeatureMap{encode_tokens(model, img).value().reshaped({g, g, model.config().embed_dim})};
}

// ---------------------------------------------------------------------------
// Text side.

inline constexpr std::string_view kPromptPrefix = "an aerial photo of a ";
inline constexpr std::string_view kPromptSuffix = ".";

inline std::string prompt_for(std::string_view category) {
  return std::string(kPromptPrefix) + std::string(category) + std::string(kPromptSuffix);
}

/// FNV-1a 64 of the token bytes.
inline std::uint64_t hash_token(std::string_view token) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Lowercased whitespace-separated words of the prompt, each hashed into a
/// vocabulary bucket.
inline std::vector<std::size_t> tokenize(std::string_view text, std::size_t vocab_size) {
  std::vector<std::size_t> ids;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    ids.push_back(static_cast<std::size_t>(hash_token(word) % vocab_size));
  }
  return ids;
}

/// Template the category, mean-pool hashed token embeddings, project, and
/// normalize. Returns a unit vector [D].
inline Tensor encode_text(const FrozenModel& model, std::string_view category) {
  bool blank = true;
  for (unsigned char c : category) blank = blank && std::isspace(c);
  require(!blank, ErrorCode::kEmptyCategory, "category name is empty");
  const ModelConfig& cfg = model.config();
  const std::size_t d = cfg.embed_dim;
  const auto ids = tokenize(prompt_for(category), cfg.vocab_size);
  Tensor pooled({1, d});
  for (std::size_t id : ids)
    for (std::size_t k = 0; k < d; ++k) pooled[k] += model.token_embedding().at(id, k);
  pooled = scale(pooled, 1.0 / static_cast<double>(ids.size()));
  Tensor projected = matmul_nt(pooled, model.text_projection().weight);
  for (std::size_t k = 0; k < d; ++k) projected[k] += model.text_projection().bias[k];
  return l2_normalize_rows(projected).reshaped({d});
}

/// Category embeddings as the columns of a [D x J] matrix.
struct TextEmbeddings {
  Tensor matrix;
  std::vector<std::string> category_names;

  std::size_t classes() const { return matrix.dim(1); }
};

/// Stacks unit vectors [D] as columns.
inline Tensor columns_to_matrix(const std::vector<Tensor>& columns) {
  require(!columns.empty(), ErrorCode::kEmptyInput, "no columns");
  const std::size_t d = columns.front().size();
  Tensor m({d, columns.size()});
  for (std::size_t j = 0; j < columns.size(); ++j) {
    require(columns[j].size() == d, ErrorCode::kShapeMismatch, "columns differ in length");
    for (std::size_t k = 0; k < d; ++k) m.at(k, j) = columns[j][k];
  }
  return m;
}

inline TextEmbeddings encode_categories(const FrozenModel& model, const std::vector<std::string>& names) {
  require(!names.empty(), ErrorCode::kEmptyInput, "at least one category is required");
  std::vector<Tensor> cols;
  cols.reserve(names.size());
  for (const auto& n : names) cols.push_back(encode_text(model, n));
  return TextEmbeddings{columns_to_matrix(cols), names};
}

// ---------------------------------------------------------------------------
// Cross-modal matching.

/// Cosine score of every token row against every category column.
/// tokens [n x D], text [D x J] -> [n x J].
inline Var similarity_scores(const Var& tokens, const Var& text) {
  require(tokens.value().dim(1) == text.value().dim(0), ErrorCode::kShapeMismatch,
          "feature dim " + std::to_string(tokens.value().dim(1)) + " vs text dim " +
              std::to_string(text.value().dim(0)));
  return ad::matmul(tokens, text);
}

inline ProbMap similarity(const DenseFeatureMap& features, const TextEmbeddings& text) {
  const Tensor& grid = features.grid;
  require_rank(grid, 3, "similarity");
  const std::size_t h = grid.dim(0), w = grid.dim(1), d = grid.dim(2);
  const Var scores = similarity_scores(Var(grid.reshaped({h * w, d})), Var(text.matrix));
  return ProbMap{scores.value().reshaped({h, w, text.classes()})};
}

/// Grid-resolution scores [g x g x J].
inline ProbMap predict_grid(const FrozenModel& model, const Tensor& img, const TextEmbeddings& text,
                            const Injection* injection = nullptr) {
  const std::size_t g = model.config().grid();
  const Var scores = similarity_scores(encode_tokens(model, img, injection), Var::borrow(text.matrix));
  return ProbMap{scores.value().reshaped({g, g, text.classes()})};
}

/// Pixel-resolution scores [H x W x J], nearest-neighbour upsampled.
inline ProbMap predict(const FrozenModel& model, const Tensor& img, const TextEmbeddings& text) {
  return upsample_nearest(predict_grid(model, img, text), model.config().patch_size);
}

}  // namespace seeco::vlm
