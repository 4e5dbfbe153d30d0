#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "planrl/special_math.hpp"
#include "planrl/tensor.hpp"

namespace planrl {

// ---------------------------------------------------------------------------
// Plain tensor compute. These functions are the single source of numeric
// truth: the taped variable ops below call them for their forward values, so
// inference and training produce bit-identical activations, and a batched
// forward is a loop of single-sample calls by construction.
// ---------------------------------------------------------------------------

namespace ops {

template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  int in = w.shape[1], out = w.shape[0];
  assert(x.numel() == in && b.numel() == out);
  TensorT<S> y({out});
  ConstMatMap<S> wm(w.ptr(), out, in);
  ConstVecMap<S> xv(x.ptr(), in);
  VecMap<S> yv(y.ptr(), out);
  yv.noalias() = wm * xv;
  yv += ConstVecMap<S>(b.ptr(), out);
  return y;
}

inline int conv_out_dim(int in, int kernel, int stride) { return (in - kernel) / stride + 1; }

/// im2col for valid-mode strided convolution on a [C, H, W] sample.
template <typename S>
TensorT<S> im2col(const TensorT<S>& x, int kernel, int stride) {
  int c = x.shape[0], h = x.shape[1], w = x.shape[2];
  int oh = conv_out_dim(h, kernel, stride), ow = conv_out_dim(w, kernel, stride);
  TensorT<S> col({c * kernel * kernel, oh * ow});
  S* dst = col.ptr();
  for (int ch = 0; ch < c; ++ch) {
    for (int kr = 0; kr < kernel; ++kr) {
      for (int kc = 0; kc < kernel; ++kc) {
        const S* src = x.ptr() + (static_cast<size_t>(ch) * h) * w;
        for (int r = 0; r < oh; ++r) {
          const S* row = src + (static_cast<size_t>(r) * stride + kr) * w + kc;
          for (int cc = 0; cc < ow; ++cc) *dst++ = row[static_cast<size_t>(cc) * stride];
        }
      }
    }
  }
  return col;
}

template <typename S>
void col2im_add(const TensorT<S>& col, TensorT<S>& x_grad, int kernel, int stride) {
  int c = x_grad.shape[0], h = x_grad.shape[1], w = x_grad.shape[2];
  int oh = conv_out_dim(h, kernel, stride), ow = conv_out_dim(w, kernel, stride);
  const S* src = col.ptr();
  for (int ch = 0; ch < c; ++ch) {
    for (int kr = 0; kr < kernel; ++kr) {
      for (int kc = 0; kc < kernel; ++kc) {
        S* dst = x_grad.ptr() + (static_cast<size_t>(ch) * h) * w;
        for (int r = 0; r < oh; ++r) {
          S* row = dst + (static_cast<size_t>(r) * stride + kr) * w + kc;
          for (int cc = 0; cc < ow; ++cc) row[static_cast<size_t>(cc) * stride] += *src++;
        }
      }
    }
  }
}

/// Valid-mode strided conv, x [C,H,W], w [F,C,k,k], b [F] -> [F,OH,OW].
/// Optionally hands the im2col buffer to the caller for reuse in backward.
template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b, int stride,
                  TensorT<S>* col_out = nullptr) {
  int f = w.shape[0], c = w.shape[1], k = w.shape[2];
  assert(x.shape[0] == c && w.shape[3] == k);
  int oh = conv_out_dim(x.shape[1], k, stride), ow = conv_out_dim(x.shape[2], k, stride);
  TensorT<S> col = im2col(x, k, stride);
  TensorT<S> y({f, oh, ow});
  ConstMatMap<S> wm(w.ptr(), f, c * k * k);
  ConstMatMap<S> cm(col.ptr(), c * k * k, oh * ow);
  MatMap<S> ym(y.ptr(), f, oh * ow);
  ym.noalias() = wm * cm;
  for (int i = 0; i < f; ++i) ym.row(i).array() += b.data[i];
  if (col_out) *col_out = std::move(col);
  return y;
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
  TensorT<S> y = x;
  for (S& v : y.data) v = v > S(0) ? v : S(0);
  return y;
}

/// 1 + softplus(x), numerically stable at both tails. Keeps Beta
/// concentration parameters >= 1 by construction.
template <typename S>
TensorT<S> softplus_plus_one(const TensorT<S>& x) {
  TensorT<S> y = x;
  for (S& v : y.data) {
    double z = static_cast<double>(v);
    double sp = z > 30.0 ? z : std::log1p(std::exp(std::min(z, 30.0)));
    v = static_cast<S>(1.0 + sp);
  }
  return y;
}

struct LayerNormStats {
  double mean = 0.0;
  double inv_std = 1.0;
};

/// Layer normalization over all elements of the sample, followed by an
/// affine with per-channel parameters for [C,H,W] inputs (gamma size C) or
/// per-feature parameters for vectors (gamma size D).
template <typename S>
TensorT<S> layernorm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                     LayerNormStats* stats_out = nullptr, TensorT<S>* xhat_out = nullptr) {
  int64_t n = x.numel();
  double sum = 0.0, sum2 = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double v = static_cast<double>(x.data[i]);
    sum += v;
    sum2 += v * v;
  }
  double mean = sum / n;
  double var = std::max(0.0, sum2 / n - mean * mean);
  double inv_std = 1.0 / std::sqrt(var + 1e-5);
  int groups = gamma.numel() > 0 ? static_cast<int>(gamma.numel()) : 1;
  int64_t per_group = n / groups;
  TensorT<S> y(x.shape);
  TensorT<S> xhat(x.shape);
  for (int g = 0; g < groups; ++g) {
    S gm = gamma.data[g], bt = beta.data[g];
    for (int64_t i = g * per_group; i < (g + 1) * per_group; ++i) {
      double h = (static_cast<double>(x.data[i]) - mean) * inv_std;
      xhat.data[i] = static_cast<S>(h);
      y.data[i] = static_cast<S>(h) * gm + bt;
    }
  }
  if (stats_out) *stats_out = {mean, inv_std};
  if (xhat_out) *xhat_out = std::move(xhat);
  return y;
}

template <typename S>
TensorT<S> concat(const TensorT<S>& a, const TensorT<S>& b) {
  TensorT<S> y({static_cast<int>(a.numel() + b.numel())});
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(), y.data.begin() + a.numel());
  return y;
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Reverse-mode tape. Nodes are created in topological order during the
// forward pass; backward walks the tape in reverse. One tape per sample;
// parameter leaves live outside the tape and accumulate gradients across
// samples.
// ---------------------------------------------------------------------------

template <typename S>
struct NodeT {
  TensorT<S> val;
  TensorT<S> grad;
  bool requires_grad = false;
  std::function<void(NodeT<S>&)> backward_fn;  // null for leaves

  void ensure_grad() {
    if (grad.shape != val.shape) {
      grad = TensorT<S>(val.shape);
    }
  }
  void add_grad(const TensorT<S>& g) {
    ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) grad.data[i] += g.data[i];
  }
};

template <typename S>
using VarT = std::shared_ptr<NodeT<S>>;

template <typename S>
VarT<S> make_leaf(TensorT<S> value, bool requires_grad) {
  auto node = std::make_shared<NodeT<S>>();
  node->val = std::move(value);
  node->requires_grad = requires_grad;
  if (requires_grad) {
    node->ensure_grad();
    node->grad.zero();
  }
  return node;
}

template <typename S>
class TapeT {
 public:
  VarT<S> record(TensorT<S> value, bool requires_grad,
                 std::function<void(NodeT<S>&)> backward_fn) {
    auto node = std::make_shared<NodeT<S>>();
    node->val = std::move(value);
    node->requires_grad = requires_grad;
    node->backward_fn = requires_grad ? std::move(backward_fn) : nullptr;
    nodes_.push_back(node);
    return node;
  }

  /// Backpropagate seed through the tape from `root`. Parameter-leaf grads
  /// accumulate; intermediate grads are scoped to this tape.
  void backward(const VarT<S>& root, S seed = S(1)) {
    root->ensure_grad();
    root->grad.zero();
    assert(root->grad.numel() == 1);
    root->grad.data[0] = seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      NodeT<S>& node = **it;
      if (node.backward_fn && node.grad.shape == node.val.shape) node.backward_fn(node);
    }
  }

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<VarT<S>> nodes_;
};

// Variable-level ops. Each wraps the tensor op for its value and records the
// exact gradient.

namespace ad {

template <typename S>
VarT<S> linear(TapeT<S>& tape, const VarT<S>& x, const VarT<S>& w, const VarT<S>& b) {
  TensorT<S> y = ops::linear(x->val, w->val, b->val);
  bool rg = x->requires_grad || w->requires_grad || b->requires_grad;
  return tape.record(std::move(y), rg, [x, w, b](NodeT<S>& node) {
    int out = w->val.shape[0], in = w->val.shape[1];
    ConstVecMap<S> dy(node.grad.ptr(), out);
    if (w->requires_grad) {
      w->ensure_grad();
      MatMap<S> dw(w->grad.ptr(), out, in);
      ConstVecMap<S> xv(x->val.ptr(), in);
      dw.noalias() += dy * xv.transpose();
    }
    if (b->requires_grad) {
      b->ensure_grad();
      VecMap<S> db(b->grad.ptr(), out);
      db += dy;
    }
    if (x->requires_grad) {
      x->ensure_grad();
      VecMap<S> dx(x->grad.ptr(), in);
      ConstMatMap<S> wm(w->val.ptr(), out, in);
      dx.noalias() += wm.transpose() * dy;
    }
  });
}

template <typename S>
VarT<S> conv2d(TapeT<S>& tape, const VarT<S>& x, const VarT<S>& w, const VarT<S>& b,
               int stride) {
  auto col = std::make_shared<TensorT<S>>();
  TensorT<S> y = ops::conv2d(x->val, w->val, b->val, stride, col.get());
  bool rg = x->requires_grad || w->requires_grad || b->requires_grad;
  return tape.record(std::move(y), rg, [x, w, b, col, stride](NodeT<S>& node) {
    int f = w->val.shape[0], c = w->val.shape[1], k = w->val.shape[2];
    int spatial = node.val.shape[1] * node.val.shape[2];
    ConstMatMap<S> dy(node.grad.ptr(), f, spatial);
    if (w->requires_grad) {
      w->ensure_grad();
      MatMap<S> dw(w->grad.ptr(), f, c * k * k);
      ConstMatMap<S> cm(col->ptr(), c * k * k, spatial);
      dw.noalias() += dy * cm.transpose();
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int i = 0; i < f; ++i) b->grad.data[i] += dy.row(i).sum();
    }
    if (x->requires_grad) {
      x->ensure_grad();
      TensorT<S> dcol({c * k * k, spatial});
      MatMap<S> dcm(dcol.ptr(), c * k * k, spatial);
      ConstMatMap<S> wm(w->val.ptr(), f, c * k * k);
      dcm.noalias() = wm.transpose() * dy;
      ops::col2im_add(dcol, x->grad, k, stride);
    }
  });
}

template <typename S>
VarT<S> relu(TapeT<S>& tape, const VarT<S>& x) {
  return tape.record(ops::relu(x->val), x->requires_grad, [x](NodeT<S>& node) {
    x->ensure_grad();
    for (int64_t i = 0; i < node.grad.numel(); ++i)
      if (x->val.data[i] > S(0)) x->grad.data[i] += node.grad.data[i];
  });
}

template <typename S>
VarT<S> softplus_plus_one(TapeT<S>& tape, const VarT<S>& x) {
  return tape.record(ops::softplus_plus_one(x->val), x->requires_grad, [x](NodeT<S>& node) {
    x->ensure_grad();
    for (int64_t i = 0; i < node.grad.numel(); ++i) {
      double z = static_cast<double>(x->val.data[i]);
      double sig = 1.0 / (1.0 + std::exp(-z));
      x->grad.data[i] += node.grad.data[i] * static_cast<S>(sig);
    }
  });
}

template <typename S>
VarT<S> layernorm(TapeT<S>& tape, const VarT<S>& x, const VarT<S>& gamma, const VarT<S>& beta) {
  auto stats = std::make_shared<ops::LayerNormStats>();
  auto xhat = std::make_shared<TensorT<S>>();
  TensorT<S> y = ops::layernorm(x->val, gamma->val, beta->val, stats.get(), xhat.get());
  bool rg = x->requires_grad || gamma->requires_grad || beta->requires_grad;
  return tape.record(std::move(y), rg, [x, gamma, beta, stats, xhat](NodeT<S>& node) {
    int64_t n = node.val.numel();
    int groups = static_cast<int>(gamma->val.numel());
    int64_t per_group = n / groups;
    if (gamma->requires_grad || beta->requires_grad) {
      gamma->ensure_grad();
      beta->ensure_grad();
      for (int g = 0; g < groups; ++g) {
        double dg = 0.0, db = 0.0;
        for (int64_t i = g * per_group; i < (g + 1) * per_group; ++i) {
          dg += static_cast<double>(node.grad.data[i]) * static_cast<double>(xhat->data[i]);
          db += static_cast<double>(node.grad.data[i]);
        }
        gamma->grad.data[g] += static_cast<S>(dg);
        beta->grad.data[g] += static_cast<S>(db);
      }
    }
    if (x->requires_grad) {
      x->ensure_grad();
      // dxhat = dy * gamma; dx = inv_std/N * (N dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      std::vector<double> dxhat(n);
      for (int g = 0; g < groups; ++g) {
        double gm = static_cast<double>(gamma->val.data[g]);
        for (int64_t i = g * per_group; i < (g + 1) * per_group; ++i) {
          dxhat[i] = static_cast<double>(node.grad.data[i]) * gm;
          sum_dxhat += dxhat[i];
          sum_dxhat_xhat += dxhat[i] * static_cast<double>(xhat->data[i]);
        }
      }
      double inv_n = 1.0 / static_cast<double>(n);
      for (int64_t i = 0; i < n; ++i) {
        double dx = stats->inv_std * (dxhat[i] - inv_n * sum_dxhat -
                                      static_cast<double>(xhat->data[i]) * inv_n * sum_dxhat_xhat);
        x->grad.data[i] += static_cast<S>(dx);
      }
    }
  });
}

template <typename S>
VarT<S> concat(TapeT<S>& tape, const VarT<S>& a, const VarT<S>& b) {
  TensorT<S> y = ops::concat(a->val, b->val);
  bool rg = a->requires_grad || b->requires_grad;
  return tape.record(std::move(y), rg, [a, b](NodeT<S>& node) {
    int64_t na = a->val.numel();
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < na; ++i) a->grad.data[i] += node.grad.data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < b->val.numel(); ++i) b->grad.data[i] += node.grad.data[na + i];
    }
  });
}

template <typename S>
VarT<S> slice(TapeT<S>& tape, const VarT<S>& x, int offset, int len) {
  TensorT<S> y({len});
  std::copy(x->val.data.begin() + offset, x->val.data.begin() + offset + len, y.data.begin());
  return tape.record(std::move(y), x->requires_grad, [x, offset, len](NodeT<S>& node) {
    x->ensure_grad();
    for (int i = 0; i < len; ++i) x->grad.data[offset + i] += node.grad.data[i];
  });
}

template <typename S>
VarT<S> flatten(TapeT<S>& tape, const VarT<S>& x) {
  TensorT<S> y({static_cast<int>(x->val.numel())}, x->val.data);
  return tape.record(std::move(y), x->requires_grad, [x](NodeT<S>& node) {
    x->ensure_grad();
    for (int64_t i = 0; i < node.grad.numel(); ++i) x->grad.data[i] += node.grad.data[i];
  });
}

// elementwise / scalar ops for loss graphs

template <typename S>
VarT<S> add(TapeT<S>& tape, const VarT<S>& a, const VarT<S>& b) {
  assert(a->val.numel() == b->val.numel());
  TensorT<S> y = a->val;
  for (int64_t i = 0; i < y.numel(); ++i) y.data[i] += b->val.data[i];
  return tape.record(std::move(y), a->requires_grad || b->requires_grad, [a, b](NodeT<S>& node) {
    if (a->requires_grad) a->add_grad(node.grad);
    if (b->requires_grad) b->add_grad(node.grad);
  });
}

template <typename S>
VarT<S> sub(TapeT<S>& tape, const VarT<S>& a, const VarT<S>& b) {
  assert(a->val.numel() == b->val.numel());
  TensorT<S> y = a->val;
  for (int64_t i = 0; i < y.numel(); ++i) y.data[i] -= b->val.data[i];
  return tape.record(std::move(y), a->requires_grad || b->requires_grad, [a, b](NodeT<S>& node) {
    if (a->requires_grad) a->add_grad(node.grad);
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < node.grad.numel(); ++i) b->grad.data[i] -= node.grad.data[i];
    }
  });
}

template <typename S>
VarT<S> mul(TapeT<S>& tape, const VarT<S>& a, const VarT<S>& b) {
  assert(a->val.numel() == b->val.numel());
  TensorT<S> y = a->val;
  for (int64_t i = 0; i < y.numel(); ++i) y.data[i] *= b->val.data[i];
  return tape.record(std::move(y), a->requires_grad || b->requires_grad, [a, b](NodeT<S>& node) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < node.grad.numel(); ++i)
        a->grad.data[i] += node.grad.data[i] * b->val.data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < node.grad.numel(); ++i)
        b->grad.data[i] += node.grad.data[i] * a->val.data[i];
    }
  });
}

template <typename S>
VarT<S> scale(TapeT<S>& tape, const VarT<S>& a, double s) {
  TensorT<S> y = a->val;
  for (S& v : y.data) v = static_cast<S>(v * s);
  return tape.record(std::move(y), a->requires_grad, [a, s](NodeT<S>& node) {
    a->ensure_grad();
    for (int64_t i = 0; i < node.grad.numel(); ++i)
      a->grad.data[i] += static_cast<S>(node.grad.data[i] * s);
  });
}

template <typename S>
VarT<S> add_const(TapeT<S>& tape, const VarT<S>& a, double s) {
  TensorT<S> y = a->val;
  for (S& v : y.data) v = static_cast<S>(v + s);
  return tape.record(std::move(y), a->requires_grad,
                     [a](NodeT<S>& node) { a->add_grad(node.grad); });
}

template <typename S>
VarT<S> vexp(TapeT<S>& tape, const VarT<S>& a) {
  TensorT<S> y = a->val;
  for (S& v : y.data) v = static_cast<S>(std::exp(static_cast<double>(v)));
  return tape.record(std::move(y), a->requires_grad, [a](NodeT<S>& node) {
    a->ensure_grad();
    for (int64_t i = 0; i < node.grad.numel(); ++i)
      a->grad.data[i] += node.grad.data[i] * node.val.data[i];
  });
}

template <typename S>
VarT<S> square(TapeT<S>& tape, const VarT<S>& a) {
  TensorT<S> y = a->val;
  for (S& v : y.data) v = v * v;
  return tape.record(std::move(y), a->requires_grad, [a](NodeT<S>& node) {
    a->ensure_grad();
    for (int64_t i = 0; i < node.grad.numel(); ++i)
      a->grad.data[i] += S(2) * node.grad.data[i] * a->val.data[i];
  });
}

/// clamp with zero gradient outside the interval
template <typename S>
VarT<S> clamp(TapeT<S>& tape, const VarT<S>& a, double lo, double hi) {
  TensorT<S> y = a->val;
  for (S& v : y.data) v = std::clamp(v, static_cast<S>(lo), static_cast<S>(hi));
  return tape.record(std::move(y), a->requires_grad, [a, lo, hi](NodeT<S>& node) {
    a->ensure_grad();
    for (int64_t i = 0; i < node.grad.numel(); ++i) {
      double v = static_cast<double>(a->val.data[i]);
      if (v > lo && v < hi) a->grad.data[i] += node.grad.data[i];
    }
  });
}

/// elementwise min; the gradient follows the selected branch (ties -> a)
template <typename S>
VarT<S> minimum(TapeT<S>& tape, const VarT<S>& a, const VarT<S>& b) {
  assert(a->val.numel() == b->val.numel());
  TensorT<S> y = a->val;
  for (int64_t i = 0; i < y.numel(); ++i) y.data[i] = std::min(a->val.data[i], b->val.data[i]);
  return tape.record(std::move(y), a->requires_grad || b->requires_grad, [a, b](NodeT<S>& node) {
    for (int64_t i = 0; i < node.grad.numel(); ++i) {
      bool pick_a = a->val.data[i] <= b->val.data[i];
      NodeT<S>* tgt = pick_a ? a.get() : b.get();
      if (tgt->requires_grad) {
        tgt->ensure_grad();
        tgt->grad.data[i] += node.grad.data[i];
      }
    }
  });
}

template <typename S>
VarT<S> maximum(TapeT<S>& tape, const VarT<S>& a, const VarT<S>& b) {
  assert(a->val.numel() == b->val.numel());
  TensorT<S> y = a->val;
  for (int64_t i = 0; i < y.numel(); ++i) y.data[i] = std::max(a->val.data[i], b->val.data[i]);
  return tape.record(std::move(y), a->requires_grad || b->requires_grad, [a, b](NodeT<S>& node) {
    for (int64_t i = 0; i < node.grad.numel(); ++i) {
      bool pick_a = a->val.data[i] >= b->val.data[i];
      NodeT<S>* tgt = pick_a ? a.get() : b.get();
      if (tgt->requires_grad) {
        tgt->ensure_grad();
        tgt->grad.data[i] += node.grad.data[i];
      }
    }
  });
}

template <typename S>
VarT<S> sum(TapeT<S>& tape, const VarT<S>& a) {
  double s = 0.0;
  for (const S& v : a->val.data) s += static_cast<double>(v);
  return tape.record(TensorT<S>::scalar(static_cast<S>(s)), a->requires_grad,
                     [a](NodeT<S>& node) {
                       a->ensure_grad();
                       for (int64_t i = 0; i < a->grad.numel(); ++i)
                         a->grad.data[i] += node.grad.data[0];
                     });
}

template <typename S>
VarT<S> neg(TapeT<S>& tape, const VarT<S>& a) {
  return scale(tape, a, -1.0);
}

/// Beta log-density of a fixed action x under variable (alpha, beta), summed
/// over action dimensions. Gradients use digamma in double precision.
template <typename S>
VarT<S> beta_log_prob(TapeT<S>& tape, const VarT<S>& alpha, const VarT<S>& beta,
                      const std::vector<double>& x) {
  int64_t d = alpha->val.numel();
  assert(beta->val.numel() == d && static_cast<int64_t>(x.size()) == d);
  double lp = 0.0;
  for (int64_t i = 0; i < d; ++i)
    lp += planrl::beta_log_prob(alpha->val.data[i], beta->val.data[i], x[i]);
  bool rg = alpha->requires_grad || beta->requires_grad;
  return tape.record(TensorT<S>::scalar(static_cast<S>(lp)), rg,
                     [alpha, beta, x, d](NodeT<S>& node) {
                       double g = static_cast<double>(node.grad.data[0]);
                       alpha->ensure_grad();
                       beta->ensure_grad();
                       for (int64_t i = 0; i < d; ++i) {
                         double a = alpha->val.data[i], b = beta->val.data[i];
                         double xc = std::min(1.0 - kBetaLogProbEps,
                                              std::max(kBetaLogProbEps, x[i]));
                         double psi_ab = digamma(a + b);
                         if (alpha->requires_grad)
                           alpha->grad.data[i] +=
                               static_cast<S>(g * (std::log(xc) - digamma(a) + psi_ab));
                         if (beta->requires_grad)
                           beta->grad.data[i] +=
                               static_cast<S>(g * (std::log1p(-xc) - digamma(b) + psi_ab));
                       }
                     });
}

/// Beta entropy summed over action dimensions, gradient via trigamma.
template <typename S>
VarT<S> beta_entropy(TapeT<S>& tape, const VarT<S>& alpha, const VarT<S>& beta) {
  int64_t d = alpha->val.numel();
  double h = 0.0;
  for (int64_t i = 0; i < d; ++i)
    h += planrl::beta_entropy(alpha->val.data[i], beta->val.data[i]);
  bool rg = alpha->requires_grad || beta->requires_grad;
  return tape.record(TensorT<S>::scalar(static_cast<S>(h)), rg,
                     [alpha, beta, d](NodeT<S>& node) {
                       double g = static_cast<double>(node.grad.data[0]);
                       alpha->ensure_grad();
                       beta->ensure_grad();
                       for (int64_t i = 0; i < d; ++i) {
                         double a = alpha->val.data[i], b = beta->val.data[i];
                         double tri_ab = trigamma(a + b);
                         if (alpha->requires_grad)
                           alpha->grad.data[i] += static_cast<S>(
                               g * (-(a - 1.0) * trigamma(a) + (a + b - 2.0) * tri_ab));
                         if (beta->requires_grad)
                           beta->grad.data[i] += static_cast<S>(
                               g * (-(b - 1.0) * trigamma(b) + (a + b - 2.0) * tri_ab));
                       }
                     });
}

}  // namespace ad

}  // namespace planrl
