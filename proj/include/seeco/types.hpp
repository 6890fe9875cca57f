#pragma once

#include <cstdint>
#include <vector>

#include "seeco/numerics/tensor.hpp"

namespace seeco {

/// Per-cell class scores, shape [rows x cols x classes]. Depending on the
/// call site the cells are pixels or patch-grid positions.
struct ProbMap {
  Tensor scores;

  std::size_t rows() const { return scores.dim(0); }
  std::size_t cols() const { return scores.dim(1); }
  std::size_t classes() const { return scores.dim(2); }
  std::size_t cells() const { return rows() * cols(); }
};

/// Patch-grid visual features [h x w x D]; every D-vector has unit norm.
struct DenseFeatureMap {
  Tensor grid;
};

/// One class index per pixel, row-major.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(std::size_t r, std::size_t c) const { return labels[r * width + c]; }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Per-cell argmax over classes, lowest class index on ties.
inline LabelMap argmax_labels(const ProbMap& map) {
  LabelMap out{map.rows(), map.cols(), std::vector<std::uint8_t>(map.cells())};
  const std::size_t j = map.classes();
  for (std::size_t p = 0; p < map.cells(); ++p)
    out.labels[p] = static_cast<std::uint8_t>(argmax(map.scores.data().subspan(p * j, j)));
  return out;
}

/// Nearest-neighbour replication of each cell into a factor x factor block.
inline ProbMap upsample_nearest(const ProbMap& map, std::size_t factor) {
  const std::size_t h = map.rows(), w = map.cols(), j = map.classes();
  ProbMap out{Tensor({h * factor, w * factor, j})};
  const double* src = map.scores.data().data();
  double* dst = out.scores.data().data();
  for (std::size_t r = 0; r < h * factor; ++r)
    for (std::size_t c = 0; c < w * factor; ++c)
      std::copy_n(src + ((r / factor) * w + c / factor) * j, j, dst + (r * w * factor + c) * j);
  return out;
}

}  // namespace seeco
