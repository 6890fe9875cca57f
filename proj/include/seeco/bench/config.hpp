#pragma once

// `key = value` run configuration. Unknown keys, repeated keys and
// unparsable values are ConfigErrors carrying the line number.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "seeco/pipeline.hpp"

namespace seeco::bench {

struct SuiteConfig {
  std::size_t scenes = 32;
  std::size_t classes = 5;
  std::size_t scene_height = 336;
  std::size_t scene_width = 336;
  double texture_noise = 0.08;
  std::vector<std::size_t> sweep_views;  // extra SeeCo runs, one aggregate row per entry
  std::string synonyms;                  // empty: built-in library
  bool record_timing = false;            // wall-clock seconds make reports non-reproducible
};

struct RunConfig {
  vlm::ModelConfig model;
  oci::OciConfig oci;
  pipeline::PipelineConfig pipeline;
  std::size_t synonyms_per_class = 5;
  SuiteConfig suite;

  void validate() const {
    model.validate();
    oci.validate(model);
    require(pipeline.window == model.image_size, ErrorCode::kConfigError, "window must equal image_size");
    require(pipeline.stride >= 1 && pipeline.stride <= pipeline.window, ErrorCode::kConfigError,
            "stride must lie in 1..window");
    require(synonyms_per_class >= 1, ErrorCode::kConfigError, "synonyms_per_class must be at least 1");
    require(suite.classes >= 2, ErrorCode::kConfigError, "classes must be at least 2");
    require(suite.scene_height >= pipeline.window && suite.scene_width >= pipeline.window,
            ErrorCode::kConfigError, "scene_size must be at least the window size");
    require(suite.texture_noise >= 0.0, ErrorCode::kConfigError, "texture_noise must be non-negative");
    for (std::size_t k : suite.sweep_views) gcl::ViewSet{k}.validate();
  }
};

namespace detail {

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::size_t parse_size(const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && p == v.data() + v.size(), ErrorCode::kConfigError, "not a non-negative integer: '" + v + "'");
  return out;
}

inline double parse_double(const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && p == v.data() + v.size() && std::isfinite(out), ErrorCode::kConfigError,
          "not a finite number: '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v) {
  const std::string s = lower(v);
  if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "off" || s == "no" || s == "0") return false;
  fail(ErrorCode::kConfigError, "not a boolean: '" + v + "'");
}

inline std::vector<std::size_t> parse_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_size(scl::trim(item)));
  return out;
}

template <class E>
E parse_enum(const std::string& v, std::initializer_list<std::pair<const char*, E>> names) {
  const std::string s = lower(v);
  std::string allowed;
  for (const auto& [name, e] : names) {
    if (s == name) return e;
    allowed += allowed.empty() ? name : std::string("|") + name;
  }
  fail(ErrorCode::kConfigError, "'" + v + "' is not one of " + allowed);
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace detail

/// Setters by key name.
inline std::map<std::string, std::function<void(RunConfig&, const std::string&)>> config_setters() {
  using namespace detail;
  using gcl::Aggregation;
  using oci::ScoreNormalization;
  using scl::ContextMode;
  using pipeline::SessionScope;
  return {
      {"views", [](RunConfig& c, const std::string& v) { c.oci.views = parse_size(v); }},
      {"delta", [](RunConfig& c, const std::string& v) { c.oci.delta = parse_double(v); }},
      {"tau", [](RunConfig& c, const std::string& v) { c.oci.tau = parse_double(v); }},
      {"lora_blocks", [](RunConfig& c, const std::string& v) { c.oci.lora_blocks = parse_size(v); }},
      {"lora_rank", [](RunConfig& c, const std::string& v) { c.oci.lora_rank = parse_size(v); }},
      {"lora_scale", [](RunConfig& c, const std::string& v) { c.oci.lora_scale = parse_double(v); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.oci.optimizer.learning_rate = parse_double(v); }},
      {"weight_decay", [](RunConfig& c, const std::string& v) { c.oci.optimizer.weight_decay = parse_double(v); }},
      {"beta1", [](RunConfig& c, const std::string& v) { c.oci.optimizer.beta1 = parse_double(v); }},
      {"beta2", [](RunConfig& c, const std::string& v) { c.oci.optimizer.beta2 = parse_double(v); }},
      {"eps", [](RunConfig& c, const std::string& v) { c.oci.optimizer.eps = parse_double(v); }},
      {"iterations", [](RunConfig& c, const std::string& v) { c.oci.iterations = parse_size(v); }},
      {"adapter_seed", [](RunConfig& c, const std::string& v) { c.oci.adapter_seed = parse_size(v); }},
      {"aggregation",
       [](RunConfig& c, const std::string& v) {
         c.oci.aggregation = parse_enum<Aggregation>(v, {{"mean", Aggregation::kMean}, {"max", Aggregation::kMax}});
       }},
      {"score_normalization",
       [](RunConfig& c, const std::string& v) {
         c.oci.normalization = parse_enum<ScoreNormalization>(
             v, {{"raw", ScoreNormalization::kRaw}, {"softmax", ScoreNormalization::kSoftmax}});
       }},
      {"context_mode",
       [](RunConfig& c, const std::string& v) {
         c.oci.context_mode = parse_enum<ContextMode>(
             v, {{"per_dimension", ContextMode::kPerDimension}, {"per_synonym", ContextMode::kPerSynonym}});
       }},
      {"synonyms_per_class", [](RunConfig& c, const std::string& v) { c.synonyms_per_class = parse_size(v); }},
      {"session_scope",
       [](RunConfig& c, const std::string& v) {
         c.pipeline.scope = parse_enum<SessionScope>(
             v, {{"per_window", SessionScope::kPerWindow}, {"per_image", SessionScope::kPerImage}});
       }},
      {"window", [](RunConfig& c, const std::string& v) { c.pipeline.window = parse_size(v); }},
      {"stride", [](RunConfig& c, const std::string& v) { c.pipeline.stride = parse_size(v); }},
      {"image_size", [](RunConfig& c, const std::string& v) { c.model.image_size = parse_size(v); }},
      {"patch_size", [](RunConfig& c, const std::string& v) { c.model.patch_size = parse_size(v); }},
      {"embed_dim", [](RunConfig& c, const std::string& v) { c.model.embed_dim = parse_size(v); }},
      {"num_blocks", [](RunConfig& c, const std::string& v) { c.model.num_blocks = parse_size(v); }},
      {"num_heads", [](RunConfig& c, const std::string& v) { c.model.num_heads = parse_size(v); }},
      {"vocab_size", [](RunConfig& c, const std::string& v) { c.model.vocab_size = parse_size(v); }},
      {"positional_embeddings",
       [](RunConfig& c, const std::string& v) { c.model.positional_embeddings = parse_bool(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.model.seed = parse_size(v); }},
      {"scenes", [](RunConfig& c, const std::string& v) { c.suite.scenes = parse_size(v); }},
      {"classes", [](RunConfig& c, const std::string& v) { c.suite.classes = parse_size(v); }},
      {"scene_size",
       [](RunConfig& c, const std::string& v) {
         const auto dims = parse_size_list(v);
         require(dims.size() == 1 || dims.size() == 2, ErrorCode::kConfigError, "scene_size is N or H,W");
         c.suite.scene_height = dims.front();
         c.suite.scene_width = dims.back();
       }},
      {"texture_noise", [](RunConfig& c, const std::string& v) { c.suite.texture_noise = parse_double(v); }},
      {"sweep_views", [](RunConfig& c, const std::string& v) { c.suite.sweep_views = parse_size_list(v); }},
      {"synonyms", [](RunConfig& c, const std::string& v) { c.suite.synonyms = v; }},
      {"record_timing", [](RunConfig& c, const std::string& v) { c.suite.record_timing = parse_bool(v); }},
  };
}

/// Parses over the defaults and validates the result.
inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  const auto setters = config_setters();
  std::map<std::string, std::size_t> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (scl::trim(line).empty()) continue;
    const std::string where = "config line " + std::to_string(line_no);
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kConfigError, where + ": expected 'key = value'");
    const std::string key = detail::lower(scl::trim(std::string_view(line).substr(0, eq)));
    const std::string value = scl::trim(std::string_view(line).substr(eq + 1));
    auto it = setters.find(key);
    require(it != setters.end(), ErrorCode::kConfigError, where + ": unknown key '" + key + "'");
    if (auto prev = seen.find(key); prev != seen.end())
      fail(ErrorCode::kConfigError, where + ": '" + key + "' already set on line " + std::to_string(prev->second));
    seen[key] = line_no;
    try {
      it->second(cfg, value);
    } catch (const Error& e) {
      fail(ErrorCode::kConfigError, where + ": " + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

/// A relative `synonyms` path is resolved against the config file's folder.
inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorCode::kIoError, "cannot open config " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  RunConfig cfg = parse_config(buf.str());
  if (!cfg.suite.synonyms.empty() && std::filesystem::path(cfg.suite.synonyms).is_relative())
    cfg.suite.synonyms = (std::filesystem::path(path).parent_path() / cfg.suite.synonyms).string();
  return cfg;
}

/// Every key in canonical form; parse_config(config_text(c)) reproduces c.
inline std::string config_text(const RunConfig& c) {
  using detail::fmt_double;
  auto name = [](auto e, std::initializer_list<const char*> names) { return *(names.begin() + static_cast<int>(e)); };
  std::ostringstream o;
  o << "views = " << c.oci.views << "\n"
    << "delta = " << fmt_double(c.oci.delta) << "\n"
    << "tau = " << fmt_double(c.oci.tau) << "\n"
    << "lora_blocks = " << c.oci.lora_blocks << "\n"
    << "lora_rank = " << c.oci.lora_rank << "\n"
    << "lora_scale = " << fmt_double(c.oci.lora_scale) << "\n"
    << "lr = " << fmt_double(c.oci.optimizer.learning_rate) << "\n"
    << "weight_decay = " << fmt_double(c.oci.optimizer.weight_decay) << "\n"
    << "beta1 = " << fmt_double(c.oci.optimizer.beta1) << "\n"
    << "beta2 = " << fmt_double(c.oci.optimizer.beta2) << "\n"
    << "eps = " << fmt_double(c.oci.optimizer.eps) << "\n"
    << "iterations = " << c.oci.iterations << "\n"
    << "adapter_seed = " << c.oci.adapter_seed << "\n"
    << "aggregation = " << name(c.oci.aggregation, {"mean", "max"}) << "\n"
    << "score_normalization = " << name(c.oci.normalization, {"raw", "softmax"}) << "\n"
    << "context_mode = " << name(c.oci.context_mode, {"per_dimension", "per_synonym"}) << "\n"
    << "synonyms_per_class = " << c.synonyms_per_class << "\n"
    << "session_scope = " << name(c.pipeline.scope, {"per_window", "per_image"}) << "\n"
    << "window = " << c.pipeline.window << "\n"
    << "stride = " << c.pipeline.stride << "\n"
    << "image_size = " << c.model.image_size << "\n"
    << "patch_size = " << c.model.patch_size << "\n"
    << "embed_dim = " << c.model.embed_dim << "\n"
    << "num_blocks = " << c.model.num_blocks << "\n"
    << "num_heads = " << c.model.num_heads << "\n"
    << "vocab_size = " << c.model.vocab_size << "\n"
    << "positional_embeddings = " << (c.model.positional_embeddings ? "true" : "false") << "\n"
    << "seed = " << c.model.seed << "\n"
    << "scenes = " << c.suite.scenes << "\n"
    << "classes = " << c.suite.classes << "\n"
    << "scene_size = " << c.suite.scene_height << "," << c.suite.scene_width << "\n"
    << "texture_noise = " << fmt_double(c.suite.texture_noise) << "\n";
  if (!c.suite.sweep_views.empty()) o << "sweep_views = " << detail::join_sizes(c.suite.sweep_views) << "\n";
  if (!c.suite.synonyms.empty()) o << "synonyms = " << c.suite.synonyms << "\n";
  o << "record_timing = " << (c.suite.record_timing ? "true" : "false") << "\n";
  return o.str();
}

}  // namespace seeco::bench
