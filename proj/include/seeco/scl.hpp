#pragma once

// Semantic consensus: synonym-enriched category embeddings mixed by learned
// scene contexts, and the two-branch similarity target built from them.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "seeco/error.hpp"
#include "seeco/numerics/autodiff.hpp"
#include "seeco/types.hpp"
#include "seeco/vlm/encoder.hpp"

namespace seeco::scl {

inline std::string trim(std::string_view s) {
  auto b = s.begin(), e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  return std::string(b, e);
}

inline std::string category_key(std::string_view name) {
  std::string k = trim(name);
  for (char& c : k) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return k;
}

/// Category name -> exactly Z synonyms. Lookups are case-insensitive.
class SynonymLibrary {
 public:
  SynonymLibrary() = default;

  std::size_t synonyms_per_category() const noexcept { return z_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(std::string_view category) const { return entries_.contains(category_key(category)); }

  const std::vector<std::string>& synonyms(std::string_view category) const {
    auto it = entries_.find(category_key(category));
    require(it != entries_.end(), ErrorCode::kMissingCategory, std::string(category));
    return it->second;
  }

  /// `expected_z` of zero accepts whatever uniform count the text uses.
  static SynonymLibrary parse(std::string_view text, const std::vector<std::string>& categories,
                              std::size_t expected_z = 0) {
    SynonymLibrary lib;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (trim(line).empty()) continue;
      const auto colon = line.find(':');
      const std::string where = "line " + std::to_string(line_no);
      require(colon != std::string::npos, ErrorCode::kFormatError, where + ": expected 'category: syn1, syn2, ...'");
      const std::string key = category_key(std::string_view(line).substr(0, colon));
      require(!key.empty(), ErrorCode::kFormatError, where + ": empty category name");
      require(!lib.entries_.contains(key), ErrorCode::kFormatError, where + ": duplicate category '" + key + "'");
      std::vector<std::string> syns;
      std::istringstream rest(line.substr(colon + 1));
      std::string item;
      while (std::getline(rest, item, ',')) {
        std::string s = trim(item);
        require(!s.empty(), ErrorCode::kFormatError, where + ": empty synonym");
        syns.push_back(std::move(s));
      }
      require(!syns.empty(), ErrorCode::kFormatError, where + ": no synonyms");
      if (lib.z_ == 0) lib.z_ = syns.size();
      require(syns.size() == lib.z_, ErrorCode::kInconsistentSynonymCount,
              where + ": '" + key + "' has " + std::to_string(syns.size()) + " synonyms, expected " +
                  std::to_string(lib.z_));
      lib.entries_.emplace(key, std::move(syns));
    }
    if (expected_z != 0 && lib.z_ != 0)
      require(lib.z_ == expected_z, ErrorCode::kInconsistentSynonymCount,
              "library has " + std::to_string(lib.z_) + " synonyms per category, configured " +
                  std::to_string(expected_z));
    for (const auto& c : categories)
      require(lib.entries_.contains(category_key(c)), ErrorCode::kMissingCategory,
              "no synonyms for category '" + c + "'");
    return lib;
  }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
  std::size_t z_ = 0;
};

inline SynonymLibrary load_synonyms(const std::string& path, const std::vector<std::string>& categories,
                                    std::size_t expected_z = 0) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorCode::kIoError, "cannot open synonym library " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return SynonymLibrary::parse(buf.str(), categories, expected_z);
}

/// Original embedding T_j [D] and synonym embeddings T^_j [D x Z].
struct EnrichedEmbeddings {
  Tensor original;
  Tensor synonyms;
};

/// Frozen text-side inputs for one category set.
struct SemanticBank {
  vlm::TextEmbeddings text;
  std::vector<EnrichedEmbeddings> enriched;

  std::size_t classes() const { return enriched.size(); }
  std::size_t synonyms_per_category() const { return enriched.front().synonyms.dim(1); }
  std::size_t embed_dim() const { return text.matrix.dim(0); }
};

inline SemanticBank build_bank(const vlm::FrozenModel& model, const std::vector<std::string>& categories,
                               const SynonymLibrary& library) {
  SemanticBank bank{vlm::encode_categories(model, categories), {}};
  for (std::size_t j = 0; j < categories.size(); ++j) {
    std::vector<Tensor> cols;
    for (const auto& s : library.synonyms(categories[j])) cols.push_back(vlm::encode_text(model, s));
    Tensor original(Shape{bank.embed_dim()});
    for (std::size_t k = 0; k < original.size(); ++k) original[k] = bank.text.matrix.at(k, j);
    bank.enriched.push_back({std::move(original), vlm::columns_to_matrix(cols)});
  }
  return bank;
}

/// How the context logits gate synonyms: one softmax per embedding
/// dimension ([D x Z] logits) or one shared softmax ([1 x Z] logits).
enum class ContextMode { kPerDimension, kPerSynonym };

inline Shape context_shape(ContextMode mode, std::size_t dim, std::size_t z) {
  return mode == ContextMode::kPerDimension ? Shape{dim, z} : Shape{1, z};
}

/// Trainable synonym-mixing logits; zero at the start of every image.
struct SceneContexts {
  TrainableParam logits;
  double tau = 0.01;
  ContextMode mode = ContextMode::kPerDimension;

  static SceneContexts zeros(std::size_t dim, std::size_t z, double tau, ContextMode mode) {
    require(tau > 0.0, ErrorCode::kInvalidTemperature, "temperature must be positive");
    return SceneContexts{TrainableParam("contexts", Tensor(context_shape(mode, dim, z))), tau, mode};
  }
};

/// Softmax weights over synonyms, broadcast to [D x Z].
inline Var mixing_weights(const Var& logits, double tau, std::size_t dim) {
  require(tau > 0.0, ErrorCode::kInvalidTemperature, "temperature must be positive");
  Var w = ad::softmax_rows(logits, tau);
  if (w.value().dim(0) == 1 && dim != 1) w = ad::repeat_rows(w, dim);
  return w;
}

/// Convex per-dimension mixture of the synonym columns, then L2-normalized.
/// weights [D x Z], synonyms [D x Z] -> [D].
inline Var mix_synonyms(const Var& weights, const Tensor& synonyms) {
  require_same_shape(weights.value(), synonyms, "recalibrate");
  const std::size_t d = synonyms.dim(0);
  const Var mixed = ad::row_sums(ad::mul(weights, Var::borrow(synonyms)));
  return ad::reshape(ad::l2_normalize_rows(ad::reshape(mixed, {1, d})), {d});
}

inline Var recalibrate(const Var& logits, double tau, const EnrichedEmbeddings& e) {
  return mix_synonyms(mixing_weights(logits, tau, e.synonyms.dim(0)), e.synonyms);
}

inline Tensor recalibrate(const SceneContexts& w, const EnrichedEmbeddings& e) {
  return recalibrate(Var::borrow(w.logits.value()), w.tau, e).value();
}

/// Recalibrated embeddings of all categories as a [D x J] matrix.
inline Var recalibrated_text(const Var& logits, double tau, const SemanticBank& bank) {
  const std::size_t d = bank.embed_dim();
  const Var weights = mixing_weights(logits, tau, d);
  std::vector<Var> cols;
  cols.reserve(bank.classes());
  for (const auto& e : bank.enriched) cols.push_back(ad::reshape(mix_synonyms(weights, e.synonyms), {d, 1}));
  return ad::concat_cols(cols);
}

/// Zero-logit recalibration of every category (the closed form used before
/// any adaptation step).
inline vlm::TextEmbeddings static_recalibrated(const SemanticBank& bank, double tau, ContextMode mode) {
  const Tensor zeros(context_shape(mode, bank.embed_dim(), bank.synonyms_per_category()));
  return vlm::TextEmbeddings{recalibrated_text(Var::borrow(zeros), tau, bank).value(), bank.text.category_names};
}

/// Y_SCL = (Y^ + Y-) / 2.
inline Tensor semantic_consensus(const Tensor& original_scores, const Tensor& recalibrated_scores) {
  return scale(add(original_scores, recalibrated_scores), 0.5);
}

struct SemanticTargets {
  ProbMap consensus;     // Y_SCL
  ProbMap original;      // Y^ = S(V, T)
  ProbMap recalibrated;  // Y- = S(V, T~)
};

inline SemanticTargets scl_target(const DenseFeatureMap& features, const vlm::TextEmbeddings& text,
                                  const vlm::TextEmbeddings& recalibrated) {
  ProbMap original = vlm::similarity(features, text);
  ProbMap mixed = vlm::similarity(features, recalibrated);
  ProbMap consensus{semantic_consensus(original.scores, mixed.scores)};
  return SemanticTargets{std::move(consensus), std::move(original), std::move(mixed)};
}

}  // namespace seeco::scl
