#pragma once

// Tape-based reverse-mode differentiation restricted to registered
// trainables. A Var is either a constant (plain tensor, no tape entry) or a
// node on a Graph. Operations whose inputs are all constants compute their
// value with the plain kernels and stay constant, so frozen computation never
// reaches the tape.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "seeco/numerics/tensor.hpp"

namespace seeco {

class TrainableParam {
 public:
  TrainableParam(std::string id, Tensor value)
      : id_(std::move(id)), value_(std::move(value)), grad_(value_.shape()) {
    created_.fetch_add(1, std::memory_order_relaxed);
  }

  const std::string& id() const noexcept { return id_; }
  const Tensor& value() const noexcept { return value_; }
  Tensor& value() noexcept { return value_; }
  const Tensor& grad() const noexcept { return grad_; }
  Tensor& grad() noexcept { return grad_; }
  void zero_grad() { grad_.fill(0.0); }

  /// Instrumentation hook: number of trainables ever constructed in this
  /// process. Lets callers assert that a code path allocated none.
  static std::uint64_t instances_created() { return created_.load(std::memory_order_relaxed); }

 private:
  inline static std::atomic<std::uint64_t> created_{0};
  std::string id_;
  Tensor value_;
  Tensor grad_;
};

class Graph;

class Var {
 public:
  Var() = default;
  explicit Var(Tensor t) : value_(std::make_shared<const Tensor>(std::move(t))) {}
  explicit Var(std::shared_ptr<const Tensor> t) : value_(std::move(t)) {}

  /// Non-owning constant view; `t` must outlive the Var and anything
  /// recorded from it.
  static Var borrow(const Tensor& t) { return Var(std::shared_ptr<const Tensor>(std::shared_ptr<const Tensor>(), &t)); }

  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  bool tracked() const noexcept { return graph_ != nullptr; }
  Graph* graph() const noexcept { return graph_; }
  std::size_t node() const noexcept { return node_; }

 private:
  friend class Graph;
  std::shared_ptr<const Tensor> value_;
  Graph* graph_ = nullptr;
  std::size_t node_ = 0;
};

class Graph {
 public:
  using Backprop = std::function<void(const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Registers a trainable as a leaf; its value is read at this moment.
  Var parameter(TrainableParam& param) {
    check_fresh();
    Var v = make_node(param.value(), nullptr);
    nodes_[v.node_].param = &param;
    params_.push_back(&param);
    return v;
  }

  /// Overwrites every registered trainable's grad with d(loss)/d(param).
  /// Trainables the loss does not depend on end with a zero grad.
  void backward(const Var& loss) {
    check_fresh();
    consumed_ = true;
    for (TrainableParam* p : params_) p->zero_grad();
    require(loss.value().size() == 1, ErrorCode::kShapeMismatch, "backward needs a scalar loss");
    if (loss.graph_ != this) return;
    grads_.assign(nodes_.size(), Tensor());
    grads_[loss.node_] = Tensor(loss.shape(), 1.0);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (grads_[i].empty()) continue;
      const Tensor g = std::move(grads_[i]);
      if (nodes_[i].param) add_inplace(nodes_[i].param->grad(), g);
      if (nodes_[i].back) nodes_[i].back(g);
    }
    grads_.clear();
    nodes_.clear();
  }

  bool consumed() const noexcept { return consumed_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Adds to the pending gradient of an input node. Used by op closures.
  void accumulate(const Var& input, const Tensor& g) {
    if (input.graph_ != this) return;
    Tensor& slot = grads_[input.node_];
    if (slot.empty()) {
      slot = g;
    } else {
      add_inplace(slot, g);
    }
  }

  Var record(Tensor value, Backprop back) {
    check_fresh();
    return make_node(std::move(value), std::move(back));
  }

 private:
  struct Node {
    Backprop back;
    TrainableParam* param = nullptr;
  };

  void check_fresh() const {
    require(!consumed_, ErrorCode::kStaleGraph, "graph already consumed by backward; re-run the forward pass");
  }

  Var make_node(Tensor value, Backprop back) {
    Var v;
    nodes_.push_back(Node{std::move(back), nullptr});
    v.value_ = std::make_shared<const Tensor>(std::move(value));
    v.graph_ = this;
    v.node_ = nodes_.size() - 1;
    return v;
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<TrainableParam*> params_;
  bool consumed_ = false;
};

inline void backward(Graph& graph, const Var& loss) { graph.backward(loss); }

namespace ad {

namespace detail {

inline Graph* graph_of(std::initializer_list<const Var*> inputs) {
  Graph* g = nullptr;
  for (const Var* v : inputs) {
    if (!v->tracked()) continue;
    require(g == nullptr || g == v->graph(), ErrorCode::kInvariantViolation,
            "operation mixes variables from different graphs");
    g = v->graph();
  }
  return g;
}

}  // namespace detail

inline Var constant(Tensor t) { return Var(std::move(t)); }

inline Var add(const Var& a, const Var& b) {
  Tensor out = seeco::add(a.value(), b.value());
  Graph* g = detail::graph_of({&a, &b});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, a, b](const Tensor& go) {
    g->accumulate(a, go);
    g->accumulate(b, go);
  });
}

inline Var sub(const Var& a, const Var& b) {
  Tensor out = seeco::sub(a.value(), b.value());
  Graph* g = detail::graph_of({&a, &b});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, a, b](const Tensor& go) {
    g->accumulate(a, go);
    if (b.tracked()) g->accumulate(b, seeco::scale(go, -1.0));
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = seeco::scale(a.value(), s);
  Graph* g = detail::graph_of({&a});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, a, s](const Tensor& go) { g->accumulate(a, seeco::scale(go, s)); });
}

inline Var mul(const Var& a, const Var& b) {
  Tensor out = hadamard(a.value(), b.value());
  Graph* g = detail::graph_of({&a, &b});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, a, b](const Tensor& go) {
    if (a.tracked()) g->accumulate(a, hadamard(go, b.value()));
    if (b.tracked()) g->accumulate(b, hadamard(go, a.value()));
  });
}

/// x[n x m] + bias[m] broadcast over rows.
inline Var add_row_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "add_row_bias");
  const std::size_t n = xv.dim(0), m = xv.dim(1);
  require(bias.value().size() == m, ErrorCode::kShapeMismatch, "add_row_bias: bias length");
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = xv.at(i, j) + bias.value()[j];
  Graph* g = detail::graph_of({&x, &bias});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, x, bias, n, m](const Tensor& go) {
    g->accumulate(x, go);
    if (bias.tracked()) {
      Tensor gb(bias.shape());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[j] += go.at(i, j);
      g->accumulate(bias, gb);
    }
  });
}

/// x[n x in] * w[out x in]^T, the dense-layer product.
inline Var linear(const Var& x, const Var& w) {
  Tensor out = matmul_nt(x.value(), w.value());
  Graph* g = detail::graph_of({&x, &w});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, x, w](const Tensor& go) {
    if (x.tracked()) g->accumulate(x, seeco::matmul(go, w.value()));
    if (w.tracked()) g->accumulate(w, matmul_tn(go, x.value()));
  });
}

/// a[n x k] * b[k x m]
inline Var matmul(const Var& a, const Var& b) {
  Tensor out = seeco::matmul(a.value(), b.value());
  Graph* g = detail::graph_of({&a, &b});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, a, b](const Tensor& go) {
    if (a.tracked()) g->accumulate(a, matmul_nt(go, b.value()));
    if (b.tracked()) g->accumulate(b, matmul_tn(a.value(), go));
  });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer normalization with frozen affine parameters.
inline Var layer_norm_rows(const Var& x, const Tensor& gamma, const Tensor& beta) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "layer_norm_rows");
  const std::size_t n = xv.dim(0), m = xv.dim(1);
  require(gamma.size() == m && beta.size() == m, ErrorCode::kShapeMismatch, "layer_norm_rows: affine size");
  Tensor out(xv.shape());
  Tensor normed(xv.shape());
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean += xv.at(i, j);
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = xv.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < m; ++j) {
      normed.at(i, j) = (xv.at(i, j) - mean) * inv_std[i];
      out.at(i, j) = gamma[j] * normed.at(i, j) + beta[j];
    }
  }
  Graph* g = detail::graph_of({&x});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, x, gamma, normed = std::move(normed), inv_std = std::move(inv_std), n,
                                    m](const Tensor& go) {
    Tensor gx(x.shape());
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < n; ++i) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double gg = go.at(i, j) * gamma[j];
        sum_g += gg;
        sum_gx += gg * normed.at(i, j);
      }
      for (std::size_t j = 0; j < m; ++j) {
        const double gg = go.at(i, j) * gamma[j];
        gx.at(i, j) = inv_std[i] * (gg - sum_g * inv_m - normed.at(i, j) * sum_gx * inv_m);
      }
    }
    g->accumulate(x, gx);
  });
}

/// tanh-approximated GELU.
inline Var gelu(const Var& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v)));
  }
  Graph* g = detail::graph_of({&x});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, x](const Tensor& go) {
    const Tensor& xv = x.value();
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double t = std::tanh(c * (v + a * v * v * v));
      const double dt = (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v);
      gx[i] = go[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
    g->accumulate(x, gx);
  });
}

inline Var softmax_rows(const Var& x, double tau) {
  Tensor out = seeco::softmax_rows(x.value(), tau);
  Graph* g = detail::graph_of({&x});
  if (!g) return Var(std::move(out));
  auto y = std::make_shared<const Tensor>(out);
  return g->record(std::move(out), [g, x, y, tau](const Tensor& go) {
    const std::size_t n = y->dim(0), m = y->dim(1);
    Tensor gx(y->shape());
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += go.at(i, j) * y->at(i, j);
      for (std::size_t j = 0; j < m; ++j) gx.at(i, j) = y->at(i, j) * (go.at(i, j) - dot) / tau;
    }
    g->accumulate(x, gx);
  });
}

inline Var l2_normalize_rows(const Var& x) {
  Tensor out = seeco::l2_normalize_rows(x.value());
  Graph* g = detail::graph_of({&x});
  if (!g) return Var(std::move(out));
  auto y = std::make_shared<const Tensor>(out);
  return g->record(std::move(out), [g, x, y](const Tensor& go) {
    const Tensor& xv = x.value();
    const std::size_t n = xv.dim(0), m = xv.dim(1);
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const double norm = l2_norm(xv.data().subspan(i * m, m));
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += go.at(i, j) * y->at(i, j);
      for (std::size_t j = 0; j < m; ++j) gx.at(i, j) = (go.at(i, j) - y->at(i, j) * dot) / norm;
    }
    g->accumulate(x, gx);
  });
}

inline Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "slice_cols");
  require(begin + count <= xv.dim(1), ErrorCode::kShapeMismatch, "slice_cols out of range");
  const std::size_t n = xv.dim(0), m = xv.dim(1);
  Tensor out({n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = xv.at(i, begin + j);
  Graph* g = detail::graph_of({&x});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, x, begin, count, n, m](const Tensor& go) {
    Tensor gx({n, m});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) gx.at(i, begin + j) = go.at(i, j);
    g->accumulate(x, gx);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kEmptyInput, "concat_cols of nothing");
  const std::size_t n = parts.front().value().dim(0);
  std::size_t m = 0;
  Graph* g = nullptr;
  for (const Var& p : parts) {
    require_rank(p.value(), 2, "concat_cols");
    require(p.value().dim(0) == n, ErrorCode::kShapeMismatch, "concat_cols: row counts differ");
    m += p.value().dim(1);
    if (p.tracked()) g = p.graph();
  }
  Tensor out({n, m});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.value().dim(1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) out.at(i, off + j) = p.value().at(i, j);
    off += w;
  }
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, parts, n](const Tensor& go) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t w = p.value().dim(1);
      if (p.tracked()) {
        Tensor gp({n, w});
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j) gp.at(i, j) = go.at(i, off + j);
        g->accumulate(p, gp);
      }
      off += w;
    }
  });
}

/// out row i = x row perm[i].
inline Var permute_rows(const Var& x, std::shared_ptr<const std::vector<std::size_t>> perm) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "permute_rows");
  const std::size_t n = xv.dim(0), m = xv.dim(1);
  require(perm->size() == n, ErrorCode::kShapeMismatch, "permute_rows: permutation length");
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(xv.data().begin() + (*perm)[i] * m, m, out.data().begin() + i * m);
  Graph* g = detail::graph_of({&x});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, x, perm, n, m](const Tensor& go) {
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) gx[(*perm)[i] * m + j] += go[i * m + j];
    g->accumulate(x, gx);
  });
}

/// x[n x m] -> [n], summing each row.
inline Var row_sums(const Var& x) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "row_sums");
  const std::size_t n = xv.dim(0), m = xv.dim(1);
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i] += xv.at(i, j);
  Graph* g = detail::graph_of({&x});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, x, n, m](const Tensor& go) {
    Tensor gx({n, m});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) gx.at(i, j) = go[i];
    g->accumulate(x, gx);
  });
}

/// x[1 x m] -> [n x m].
inline Var repeat_rows(const Var& x, std::size_t n) {
  const Tensor& xv = x.value();
  require(xv.rank() == 2 && xv.dim(0) == 1, ErrorCode::kShapeMismatch, "repeat_rows expects one row");
  const std::size_t m = xv.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(xv.data().begin(), m, out.data().begin() + i * m);
  Graph* g = detail::graph_of({&x});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, x, n, m](const Tensor& go) {
    Tensor gx({1, m});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) gx[j] += go.at(i, j);
    g->accumulate(x, gx);
  });
}

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  Graph* g = detail::graph_of({&x});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, x](const Tensor& go) { g->accumulate(x, go.reshaped(x.shape())); });
}

/// Mean squared error as a scalar node.
inline Var mse(const Var& a, const Var& b) {
  Tensor out = Tensor::scalar(seeco::mse(a.value(), b.value()));
  Graph* g = detail::graph_of({&a, &b});
  if (!g) return Var(std::move(out));
  return g->record(std::move(out), [g, a, b](const Tensor& go) {
    const double k = 2.0 * go.item() / static_cast<double>(a.value().size());
    Tensor diff = seeco::sub(a.value(), b.value());
    if (a.tracked()) g->accumulate(a, seeco::scale(diff, k));
    if (b.tracked()) g->accumulate(b, seeco::scale(diff, -k));
  });
}

}  // namespace ad
}  // namespace seeco
