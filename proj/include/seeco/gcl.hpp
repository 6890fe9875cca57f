#pragma once

// Geometric consensus: predictions on rotated copies of a square input,
// rotated back and aggregated into one pseudo-target.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "seeco/error.hpp"
#include "seeco/types.hpp"
#include "seeco/vlm/encoder.hpp"

namespace seeco::gcl {

enum class Aggregation { kMean, kMax };

/// The K observation angles 2*k*pi/K, k = 1..K. Only quarter-turn multiples
/// are representable, hence K in {1, 2, 4}; k = K is the identity view.
struct ViewSet {
  std::size_t views = 4;

  void validate() const {
    require(views == 1 || views == 2 || views == 4, ErrorCode::kUnsupportedViewCount,
            "view count must be 1, 2 or 4, got " + std::to_string(views));
  }

  std::vector<double> angles() const {
    validate();
    std::vector<double> out;
    for (std::size_t k = 1; k <= views; ++k)
      out.push_back(2.0 * static_cast<double>(k) * std::numbers::pi / static_cast<double>(views));
    return out;
  }
};

/// Counter-clockwise quarter turns for view k of K.
inline std::size_t quarter_turns(std::size_t k, std::size_t views) {
  ViewSet{views}.validate();
  require(k >= 1 && k <= views, ErrorCode::kUnsupportedViewCount,
          "view index " + std::to_string(k) + " outside 1.." + std::to_string(views));
  return (4 * k / views) % 4;
}

/// Source cell of output cell (i, j) after `turns` CCW quarter turns of a
/// size x size array. One turn maps out[i][j] = in[j][size-1-i].
inline std::size_t rotation_source(std::size_t i, std::size_t j, std::size_t size, std::size_t turns) {
  const std::size_t last = size - 1;
  switch (turns % 4) {
    case 0: return i * size + j;
    case 1: return j * size + (last - i);
    case 2: return (last - i) * size + (last - j);
    default: return (last - j) * size + i;
  }
}

/// Row permutation for a [size*size x C] row-major grid.
inline std::shared_ptr<const std::vector<std::size_t>> rotation_rows(std::size_t size, std::size_t turns) {
  auto perm = std::make_shared<std::vector<std::size_t>>(size * size);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) (*perm)[i * size + j] = rotation_source(i, j, size, turns);
  return perm;
}

namespace detail {

inline Tensor rotate_turns(const Tensor& x, std::size_t turns) {
  require(x.rank() >= 2, ErrorCode::kShapeMismatch, "rotate needs at least two axes");
  require(x.dim(0) == x.dim(1), ErrorCode::kNonSquareInput, "cannot rotate non-square " + shape_string(x.shape()));
  const std::size_t size = x.dim(0);
  const std::size_t trailing = size == 0 ? 0 : x.size() / (size * size);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j)
      std::copy_n(x.data().begin() + rotation_source(i, j, size, turns) * trailing, trailing,
                  out.data().begin() + (i * size + j) * trailing);
  return out;
}

}  // namespace detail

/// Exact rotation by 2*k*pi/K counter-clockwise over the two leading axes.
inline Tensor rotate(const Tensor& x, std::size_t k, std::size_t views) {
  return detail::rotate_turns(x, quarter_turns(k, views));
}

inline Tensor inverse_rotate(const Tensor& x, std::size_t k, std::size_t views) {
  return detail::rotate_turns(x, (4 - quarter_turns(k, views)) % 4);
}

inline ProbMap inverse_rotate(const ProbMap& map, std::size_t k, std::size_t views) {
  return ProbMap{inverse_rotate(map.scores, k, views)};
}

struct GeoConsensus {
  ProbMap target;
  std::vector<ProbMap> per_view;  // original orientation, k = 1..K
};

/// Element-wise mean, accumulated in list order.
inline ProbMap mean_of(const std::vector<ProbMap>& maps) {
  require(!maps.empty(), ErrorCode::kEmptyInput, "no maps to aggregate");
  Tensor acc(maps.front().scores.shape());
  for (const ProbMap& m : maps) add_inplace(acc, m.scores);
  const double n = static_cast<double>(maps.size());
  for (double& v : acc.data()) v /= n;
  return ProbMap{std::move(acc)};
}

/// Pseudo-label variant: element-wise maximum over views.
inline ProbMap gcl_target_pl(const std::vector<ProbMap>& per_view) {
  require(!per_view.empty(), ErrorCode::kEmptyInput, "no views to aggregate");
  Tensor acc = per_view.front().scores;
  for (std::size_t v = 1; v < per_view.size(); ++v) {
    require_same_shape(acc, per_view[v].scores, "gcl_target_pl");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = std::max(acc[i], per_view[v].scores[i]);
  }
  return ProbMap{std::move(acc)};
}

inline ProbMap aggregate(const std::vector<ProbMap>& per_view, Aggregation mode) {
  return mode == Aggregation::kMean ? mean_of(per_view) : gcl_target_pl(per_view);
}

/// `predictor(image) -> ProbMap` is evaluated on every rotated view; the maps
/// come back in original orientation and are aggregated in ascending k.
template <class Predictor>
GeoConsensus gcl_target(const Tensor& img, std::size_t views, Predictor&& predictor,
                        Aggregation mode = Aggregation::kMean) {
  ViewSet{views}.validate();
  GeoConsensus out;
  out.per_view.reserve(views);
  for (std::size_t k = 1; k <= views; ++k) {
    const ProbMap pred = predictor(rotate(img, k, views));
    out.per_view.push_back(inverse_rotate(pred, k, views));
  }
  out.target = aggregate(out.per_view, mode);
  return out;
}

inline GeoConsensus gcl_target(const vlm::FrozenModel& model, const Tensor& img, const vlm::TextEmbeddings& text,
                               std::size_t views, Aggregation mode = Aggregation::kMean) {
  return gcl_target(
      img, views, [&](const Tensor& view) { return vlm::predict(model, view, text); }, mode);
}

}  // namespace seeco::gcl
