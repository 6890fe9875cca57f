#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "seeco/error.hpp"
#include "seeco/numerics/rng.hpp"
#include "seeco/numerics/tensor.hpp"

namespace seeco::vlm {

struct ModelConfig {
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  std::size_t embed_dim = 64;
  std::size_t num_blocks = 4;
  std::size_t num_heads = 4;
  std::size_t vocab_size = 4096;
  bool positional_embeddings = true;
  std::uint64_t seed = 0;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }
  std::size_t hidden_dim() const { return 4 * embed_dim; }
  std::size_t head_dim() const { return embed_dim / num_heads; }

  void validate() const {
    require(patch_size > 0 && image_size > 0 && image_size % patch_size == 0, ErrorCode::kConfigError,
            "image_size must be a positive multiple of patch_size");
    require(embed_dim > 0 && num_heads > 0 && embed_dim % num_heads == 0, ErrorCode::kConfigError,
            "embed_dim must be divisible by num_heads");
    require(num_blocks > 0, ErrorCode::kConfigError, "num_blocks must be positive");
    require(vocab_size > 0, ErrorCode::kConfigError, "vocab_size must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Weight [out x in] and bias [out].
struct DenseLayer {
  Tensor weight;
  Tensor bias;

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
};

enum class Sublayer : int { kExpand = 0, kContract = 1 };
inline constexpr std::size_t kDenseSublayersPerBlock = 2;

struct Block {
  Tensor ln1_gamma, ln1_beta;
  DenseLayer query, key, value, attn_out;
  Tensor ln2_gamma, ln2_beta;
  DenseLayer fc_expand;    // D -> 4D
  DenseLayer fc_contract;  // 4D -> D

  const DenseLayer& dense(Sublayer s) const { return s == Sublayer::kExpand ? fc_expand : fc_contract; }
};

/// Seeded random transformer backbone. Immutable once built; share it freely
/// between readers.
class FrozenModel {
 public:
  const ModelConfig& config() const noexcept { return cfg_; }
  const DenseLayer& patch_embed() const noexcept { return patch_embed_; }
  const Tensor& positional() const noexcept { return positional_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const Tensor& final_gamma() const noexcept { return final_gamma_; }
  const Tensor& final_beta() const noexcept { return final_beta_; }
  const DenseLayer& dense_head() const noexcept { return dense_head_; }
  const Tensor& token_embedding() const noexcept { return token_embedding_; }
  const DenseLayer& text_projection() const noexcept { return text_projection_; }

  /// Visits every tensor in declaration order (the serialization order).
  void for_each_tensor(const std::function<void(const Tensor&)>& fn) const {
    visit(*this, [&](const Tensor& t, double) { fn(t); });
  }

  /// FNV-1a over all weight bits; changes iff any weight bit changes.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for_each_tensor([&](const Tensor& t) {
      for (double v : t.data()) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
          h ^= (bits >> (8 * b)) & 0xff;
          h *= 0x100000001b3ULL;
        }
      }
    });
    return h;
  }

  friend FrozenModel build_model(const ModelConfig& cfg);
  friend FrozenModel deserialize_model(const std::vector<unsigned char>& bytes);

 private:
  explicit FrozenModel(const ModelConfig& cfg) : cfg_(cfg) { allocate(); }

  void allocate() {
    const std::size_t d = cfg_.embed_dim, hd = cfg_.hidden_dim();
    auto dense = [](std::size_t out, std::size_t in) { return DenseLayer{Tensor({out, in}), Tensor({out})}; };
    patch_embed_ = dense(d, cfg_.patch_dim());
    if (cfg_.positional_embeddings) positional_ = Tensor({cfg_.tokens(), d});
    blocks_.assign(cfg_.num_blocks, Block{});
    for (Block& b : blocks_) {
      b.ln1_gamma = Tensor({d});
      b.ln1_beta = Tensor({d});
      b.query = dense(d, d);
      b.key = dense(d, d);
      b.value = dense(d, d);
      b.attn_out = dense(d, d);
      b.ln2_gamma = Tensor({d});
      b.ln2_beta = Tensor({d});
      b.fc_expand = dense(hd, d);
      b.fc_contract = dense(d, hd);
    }
    final_gamma_ = Tensor({d});
    final_beta_ = Tensor({d});
    dense_head_ = dense(d, d);
    token_embedding_ = Tensor({cfg_.vocab_size, d});
    text_projection_ = dense(d, d);
  }

  // fn(tensor, init_stddev); a negative stddev marks a layer-norm gain,
  // initialized around one.
  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    const ModelConfig& cfg_ = self.cfg_;
    auto& patch_embed_ = self.patch_embed_;
    auto& positional_ = self.positional_;
    auto& blocks_ = self.blocks_;
    auto& final_gamma_ = self.final_gamma_;
    auto& final_beta_ = self.final_beta_;
    auto& dense_head_ = self.dense_head_;
    auto& token_embedding_ = self.token_embedding_;
    auto& text_projection_ = self.text_projection_;
    const double d = static_cast<double>(cfg_.embed_dim);
    const double hd = static_cast<double>(cfg_.hidden_dim());
    constexpr double kBiasStd = 0.02;
    constexpr double kGain = -1.0;
    constexpr double kShift = 0.05;
    fn(patch_embed_.weight, 1.0 / std::sqrt(static_cast<double>(cfg_.patch_dim())));
    fn(patch_embed_.bias, kBiasStd);
    if (cfg_.positional_embeddings) fn(positional_, 0.5);
    for (auto& b : blocks_) {
      fn(b.ln1_gamma, kGain);
      fn(b.ln1_beta, kShift);
      for (auto* l : {&b.query, &b.key, &b.value, &b.attn_out}) {
        fn(l->weight, 1.0 / std::sqrt(d));
        fn(l->bias, kBiasStd);
      }
      fn(b.ln2_gamma, kGain);
      fn(b.ln2_beta, kShift);
      fn(b.fc_expand.weight, 1.0 / std::sqrt(d));
      fn(b.fc_expand.bias, kBiasStd);
      fn(b.fc_contract.weight, 1.0 / std::sqrt(hd));
      fn(b.fc_contract.bias, kBiasStd);
    }
    fn(final_gamma_, kGain);
    fn(final_beta_, kShift);
    fn(dense_head_.weight, 1.0 / std::sqrt(d));
    fn(dense_head_.bias, kBiasStd);
    fn(token_embedding_, 1.0);
    fn(text_projection_.weight, 1.0 / std::sqrt(d));
    fn(text_projection_.bias, kBiasStd);
  }

  ModelConfig cfg_;
  DenseLayer patch_embed_;
  Tensor positional_;
  std::vector<Block> blocks_;
  Tensor final_gamma_, final_beta_;
  DenseLayer dense_head_;
  Tensor token_embedding_;
  DenseLayer text_projection_;
};

inline FrozenModel build_model(const ModelConfig& cfg) {
  cfg.validate();
  FrozenModel model(cfg);
  RandomStream rng = seeded_rng(cfg.seed);
  FrozenModel::visit(model, [&](Tensor& t, double stddev) {
    if (stddev < 0.0) {
      for (double& v : t.data()) v = 1.0 + 0.1 * rng.normal();
    } else {
      for (double& v : t.data()) v = stddev * rng.normal();
    }
  });
  return model;
}

// ---------------------------------------------------------------------------
// Binary weight file: "SEECOVLM", u32 version, config block, then every
// tensor in declaration order as little-endian float64.

inline constexpr std::array<char, 8> kModelMagic = {'S', 'E', 'E', 'C', 'O', 'V', 'L', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::vector<unsigned char>& in, std::size_t& pos) {
  require(pos + sizeof(T) <= in.size(), ErrorCode::kFormatError, "model file truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_model(const FrozenModel& model) {
  std::vector<unsigned char> out(kModelMagic.begin(), kModelMagic.end());
  const ModelConfig& c = model.config();
  detail::put_le<std::uint32_t>(out, kModelVersion);
  for (std::size_t v : {c.image_size, c.patch_size, c.embed_dim, c.num_blocks, c.num_heads, c.vocab_size})
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  detail::put_le<std::uint32_t>(out, c.positional_embeddings ? 1u : 0u);
  detail::put_le<std::uint64_t>(out, c.seed);
  model.for_each_tensor([&](const Tensor& t) {
    for (double v : t.data()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  });
  return out;
}

inline FrozenModel deserialize_model(const std::vector<unsigned char>& bytes) {
  require(bytes.size() >= kModelMagic.size() &&
              std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin()),
          ErrorCode::kFormatError, "bad model magic");
  std::size_t pos = kModelMagic.size();
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  require(version == kModelVersion, ErrorCode::kFormatError, "unsupported model version " + std::to_string(version));
  ModelConfig c;
  for (std::size_t* field : {&c.image_size, &c.patch_size, &c.embed_dim, &c.num_blocks, &c.num_heads, &c.vocab_size})
    *field = detail::get_le<std::uint32_t>(bytes, pos);
  const auto positional = detail::get_le<std::uint32_t>(bytes, pos);
  require(positional <= 1, ErrorCode::kFormatError, "bad positional flag");
  c.positional_embeddings = positional == 1;
  c.seed = detail::get_le<std::uint64_t>(bytes, pos);
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kFormatError, std::string("model config: ") + e.what());
  }
  FrozenModel model(c);
  FrozenModel::visit(model, [&](Tensor& t, double) {
    for (double& v : t.data()) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes, pos));
  });
  require(pos == bytes.size(), ErrorCode::kFormatError, "trailing bytes after model tensors");
  return model;
}

inline void save_model(const FrozenModel& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::kIoError, "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(f), ErrorCode::kIoError, "write failed: " + path);
}

inline FrozenModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::kIoError, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace seeco::vlm
