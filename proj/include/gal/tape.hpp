#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gal/tensor.hpp"

namespace gal {

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kMatmul,
  kAddBias,
  kRelu,
  kConv2d,
  kBilinearUp,
  kConcatLast,
  kMeanRows,
  kReshape,
  kGatherRows,
  kGroupMeanRows,
  kReduceSum,
  kSoftmaxCE,
};

// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
  int id = -1;
};

// Reverse-mode tape. Append-only and topologically ordered by construction;
// backward() walks it in strict reverse order exactly once. One tape per
// forward pass; leaves carry inputs and parameters.
template <typename T>
class Tape {
 public:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    int in0 = -1;
    int in1 = -1;
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<int> idx;  // gather rows / class labels
    int iarg = 0;          // stride / upsample factor / group size
    Tensor<T> saved;       // softmax probabilities
  };

  Var leaf(Tensor<T> v) { return push(OpKind::kLeaf, -1, -1, std::move(v)); }

  const Tensor<T>& value(Var v) const { return node(v).value; }

  // Gradient of the last backward() target w.r.t. v. Zero-shaped until
  // backward has run.
  const Tensor<T>& grad(Var v) const { return node(v).grad; }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }
  const std::vector<Node>& nodes() const { return nodes_; }

  Var add(Var a, Var b) {
    const Tensor<T>&ta = value(a), &tb = value(b);
    require(ta.same_shape(tb), "add", ta, tb);
    Tensor<T> out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + tb[i];
    return push(OpKind::kAdd, a.id, b.id, std::move(out));
  }

  Var sub(Var a, Var b) {
    const Tensor<T>&ta = value(a), &tb = value(b);
    require(ta.same_shape(tb), "sub", ta, tb);
    Tensor<T> out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] - tb[i];
    return push(OpKind::kSub, a.id, b.id, std::move(out));
  }

  Var mul(Var a, Var b) {
    const Tensor<T>&ta = value(a), &tb = value(b);
    require(ta.same_shape(tb), "mul", ta, tb);
    Tensor<T> out(ta.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * tb[i];
    return push(OpKind::kMul, a.id, b.id, std::move(out));
  }

  Var matmul(Var a, Var b) {
    const Tensor<T>&ta = value(a), &tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
      fail("matmul", ta, tb);
    const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
    Tensor<T> out(Shape{m, n});
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const T aip = ta.at(i, p);
        if (aip == T(0)) continue;
        for (int j = 0; j < n; ++j) out.at(i, j) += aip * tb.at(p, j);
      }
    return push(OpKind::kMatmul, a.id, b.id, std::move(out));
  }

  // Adds a rank-1 bias over the last axis, broadcast over leading axes.
  Var add_bias(Var x, Var b) {
    const Tensor<T>&tx = value(x), &tb = value(b);
    if (tb.rank() != 1 || tb.dim(0) != tx.dim(tx.rank() - 1)) fail("add_bias", tx, tb);
    Tensor<T> out = tx;
    const int c = tb.dim(0);
    const std::size_t rows = tx.numel() / c;
    for (std::size_t r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) out[r * c + j] += tb[j];
    return push(OpKind::kAddBias, x.id, b.id, std::move(out));
  }

  Var relu(Var x) {
    const Tensor<T>& tx = value(x);
    Tensor<T> out(tx.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = tx[i] > T(0) ? tx[i] : T(0);
    return push(OpKind::kRelu, x.id, -1, std::move(out));
  }

  // 3x3 convolution, zero padding 1, stride 1 or 2. x: (H,W,Cin),
  // kernel: (3,3,Cin,Cout), output: (ceil(H/s), ceil(W/s), Cout).
  Var conv2d(Var x, Var kernel, int stride) {
    const Tensor<T>&tx = value(x), &tk = value(kernel);
    if (stride != 1 && stride != 2)
      throw std::invalid_argument("conv2d: stride must be 1 or 2, got " +
                                  std::to_string(stride));
    if (tx.rank() != 3 || tk.rank() != 4 || tk.dim(0) != 3 || tk.dim(1) != 3 ||
        tk.dim(2) != tx.dim(2))
      fail("conv2d", tx, tk);
    const int h = tx.dim(0), w = tx.dim(1), cin = tx.dim(2), cout = tk.dim(3);
    const int oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
    Tensor<T> out(Shape{oh, ow, cout});
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= w) continue;
            const T* xin = &tx.at(iy, ix, 0);
            const T* krn = &tk.vec()[((ky * 3 + kx) * cin) * static_cast<std::size_t>(cout)];
            T* o = &out.at(oy, ox, 0);
            for (int ic = 0; ic < cin; ++ic) {
              const T xv = xin[ic];
              const T* kr = krn + static_cast<std::size_t>(ic) * cout;
              for (int oc = 0; oc < cout; ++oc) o[oc] += xv * kr[oc];
            }
          }
        }
    Var v = push(OpKind::kConv2d, x.id, kernel.id, std::move(out));
    nodes_.back().iarg = stride;
    return v;
  }

  // Integer-factor bilinear upsample with half-pixel centers; preserves
  // constant maps. x: (H,W,C) -> (H*f, W*f, C).
  Var bilinear_upsample(Var x, int factor) {
    const Tensor<T>& tx = value(x);
    if (factor < 1)
      throw std::invalid_argument("bilinear_upsample: factor must be >= 1, got " +
                                  std::to_string(factor));
    if (tx.rank() != 3) fail("bilinear_upsample", tx, tx);
    const int h = tx.dim(0), w = tx.dim(1), c = tx.dim(2);
    Tensor<T> out(Shape{h * factor, w * factor, c});
    for (int oy = 0; oy < h * factor; ++oy) {
      int y0, y1;
      T wy;
      sample_coord(oy, factor, h, y0, y1, wy);
      for (int ox = 0; ox < w * factor; ++ox) {
        int x0, x1;
        T wx;
        sample_coord(ox, factor, w, x0, x1, wx);
        for (int ch = 0; ch < c; ++ch) {
          out.at(oy, ox, ch) =
              (T(1) - wy) * ((T(1) - wx) * tx.at(y0, x0, ch) + wx * tx.at(y0, x1, ch)) +
              wy * ((T(1) - wx) * tx.at(y1, x0, ch) + wx * tx.at(y1, x1, ch));
        }
      }
    }
    Var v = push(OpKind::kBilinearUp, x.id, -1, std::move(out));
    nodes_.back().iarg = factor;
    return v;
  }

  // Concatenate along the last axis; leading dims must match. Channels of
  // the first argument come first.
  Var concat_channels(Var a, Var b) {
    const Tensor<T>&ta = value(a), &tb = value(b);
    bool ok = ta.rank() == tb.rank() && (ta.rank() == 2 || ta.rank() == 3);
    if (ok)
      for (int i = 0; i + 1 < ta.rank(); ++i) ok = ok && ta.dim(i) == tb.dim(i);
    if (!ok) fail("concat_channels", ta, tb);
    const int ca = ta.dim(ta.rank() - 1), cb = tb.dim(tb.rank() - 1);
    Shape s = ta.shape();
    s.back() = ca + cb;
    Tensor<T> out(s);
    const std::size_t rows = ta.numel() / ca;
    for (std::size_t r = 0; r < rows; ++r) {
      for (int j = 0; j < ca; ++j) out[r * (ca + cb) + j] = ta[r * ca + j];
      for (int j = 0; j < cb; ++j) out[r * (ca + cb) + ca + j] = tb[r * cb + j];
    }
    return push(OpKind::kConcatLast, a.id, b.id, std::move(out));
  }

  // Per-column mean over rows: (N,C) -> (C).
  Var mean_rows(Var x) {
    const Tensor<T>& tx = value(x);
    if (tx.rank() != 2) fail("mean_rows", tx, tx);
    const int n = tx.dim(0), c = tx.dim(1);
    Tensor<T> out(Shape{c});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) out[j] += tx.at(i, j);
    for (int j = 0; j < c; ++j) out[j] /= T(n);
    return push(OpKind::kMeanRows, x.id, -1, std::move(out));
  }

  Var reshape(Var x, Shape s) {
    const Tensor<T>& tx = value(x);
    if (shape_numel(s) != tx.numel())
      throw std::invalid_argument("reshape: cannot reshape " + shape_str(tx.shape()) +
                                  " to " + shape_str(s));
    Tensor<T> out(std::move(s), tx.vec());
    return push(OpKind::kReshape, x.id, -1, std::move(out));
  }

  // Row gather: (N,C) indexed by rows -> (M,C). Backward scatter-adds.
  Var gather_rows(Var x, std::vector<int> rows) {
    const Tensor<T>& tx = value(x);
    if (tx.rank() != 2) fail("gather_rows", tx, tx);
    const int n = tx.dim(0), c = tx.dim(1);
    for (int r : rows)
      if (r < 0 || r >= n)
        throw std::invalid_argument("gather_rows: index " + std::to_string(r) +
                                    " out of range for " + shape_str(tx.shape()));
    Tensor<T> out(Shape{static_cast<int>(rows.size()), c});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < c; ++j) out.at(static_cast<int>(i), j) = tx.at(rows[i], j);
    Var v = push(OpKind::kGatherRows, x.id, -1, std::move(out));
    nodes_.back().idx = std::move(rows);
    return v;
  }

  // Mean of each consecutive block of `group` rows: (N,C) -> (N/group, C).
  Var group_mean_rows(Var x, int group) {
    const Tensor<T>& tx = value(x);
    if (tx.rank() != 2 || group < 1 || tx.dim(0) % group != 0)
      throw std::invalid_argument("group_mean_rows: shape " + shape_str(tx.shape()) +
                                  " not divisible into groups of " +
                                  std::to_string(group));
    const int n = tx.dim(0) / group, c = tx.dim(1);
    Tensor<T> out(Shape{n, c});
    for (int i = 0; i < n; ++i)
      for (int g = 0; g < group; ++g)
        for (int j = 0; j < c; ++j) out.at(i, j) += tx.at(i * group + g, j);
    for (auto& v : out.vec()) v /= T(group);
    Var v = push(OpKind::kGroupMeanRows, x.id, -1, std::move(out));
    nodes_.back().iarg = group;
    return v;
  }

  // Sum of all elements -> shape (1).
  Var reduce_sum(Var x) {
    const Tensor<T>& tx = value(x);
    T acc = T(0);
    for (std::size_t i = 0; i < tx.numel(); ++i) acc += tx[i];
    Tensor<T> out(Shape{1});
    out[0] = acc;
    return push(OpKind::kReduceSum, x.id, -1, std::move(out));
  }

  // Mean over pixels of -log softmax at the true class. logits: (H,W,K),
  // labels: H*W entries in [0,K) row-major.
  Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
    const Tensor<T>& tl = value(logits);
    if (tl.rank() != 3) fail("softmax_cross_entropy", tl, tl);
    const int h = tl.dim(0), w = tl.dim(1), k = tl.dim(2);
    if (labels.size() != static_cast<std::size_t>(h) * w)
      throw std::invalid_argument(
          "softmax_cross_entropy: " + std::to_string(labels.size()) +
          " labels for logits " + shape_str(tl.shape()));
    for (int lab : labels)
      if (lab < 0 || lab >= k)
        throw std::invalid_argument("softmax_cross_entropy: label " +
                                    std::to_string(lab) + " out of range [0," +
                                    std::to_string(k) + ")");
    Tensor<T> probs(tl.shape());
    T loss = T(0);
    const std::size_t px = static_cast<std::size_t>(h) * w;
    for (std::size_t p = 0; p < px; ++p) {
      const T* row = &tl.vec()[p * k];
      T m = row[0];
      for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
      T denom = T(0);
      for (int j = 0; j < k; ++j) denom += std::exp(row[j] - m);
      const T lse = m + std::log(denom);
      for (int j = 0; j < k; ++j) probs.vec()[p * k + j] = std::exp(row[j] - lse);
      loss += lse - row[labels[p]];
    }
    Tensor<T> out(Shape{1});
    out[0] = loss / T(px);
    Var v = push(OpKind::kSoftmaxCE, logits.id, -1, std::move(out));
    nodes_.back().idx = labels;
    nodes_.back().saved = std::move(probs);
    return v;
  }

  // Reverse sweep from a scalar output. Grad buffers of all nodes up to and
  // including `out` are reallocated and zeroed first.
  void backward(Var out) {
    Node& root = node(out);
    if (root.value.numel() != 1)
      throw std::invalid_argument("backward: output must be scalar, got " +
                                  shape_str(root.value.shape()));
    for (int i = 0; i <= out.id; ++i) nodes_[i].grad = Tensor<T>(nodes_[i].value.shape());
    root.grad[0] = T(1);
    for (int i = out.id; i >= 0; --i) backward_node(nodes_[i]);
  }

 private:
  Var push(OpKind kind, int in0, int in1, Tensor<T> value) {
    Node n;
    n.kind = kind;
    n.in0 = in0;
    n.in1 = in1;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var v) {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw std::out_of_range("tape: bad var id " + std::to_string(v.id));
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw std::out_of_range("tape: bad var id " + std::to_string(v.id));
    return nodes_[v.id];
  }

  static void require(bool ok, const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (!ok) fail(op, a, b);
  }
  [[noreturn]] static void fail(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                                shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }

  static void sample_coord(int o, int factor, int extent, int& c0, int& c1, T& frac) {
    T s = (T(o) + T(0.5)) / T(factor) - T(0.5);
    if (s < T(0)) s = T(0);
    if (s > T(extent - 1)) s = T(extent - 1);
    c0 = static_cast<int>(std::floor(s));
    c1 = std::min(c0 + 1, extent - 1);
    frac = s - T(c0);
  }

  void backward_node(Node& n) {
    switch (n.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kAdd: {
        accum(n.in0, n.grad);
        accum(n.in1, n.grad);
        break;
      }
      case OpKind::kSub: {
        accum(n.in0, n.grad);
        Tensor<T>& gb = nodes_[n.in1].grad;
        for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] -= n.grad[i];
        break;
      }
      case OpKind::kMul: {
        const Tensor<T>&a = nodes_[n.in0].value, &b = nodes_[n.in1].value;
        Tensor<T>&ga = nodes_[n.in0].grad, &gb = nodes_[n.in1].grad;
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
          ga[i] += n.grad[i] * b[i];
          gb[i] += n.grad[i] * a[i];
        }
        break;
      }
      case OpKind::kMatmul: {
        const Tensor<T>&a = nodes_[n.in0].value, &b = nodes_[n.in1].value;
        Tensor<T>&ga = nodes_[n.in0].grad, &gb = nodes_[n.in1].grad;
        const int m = a.dim(0), k = a.dim(1), c = b.dim(1);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < c; ++j) {
            const T g = n.grad.at(i, j);
            if (g == T(0)) continue;
            for (int p = 0; p < k; ++p) {
              ga.at(i, p) += g * b.at(p, j);
              gb.at(p, j) += g * a.at(i, p);
            }
          }
        break;
      }
      case OpKind::kAddBias: {
        accum(n.in0, n.grad);
        Tensor<T>& gb = nodes_[n.in1].grad;
        const int c = static_cast<int>(gb.numel());
        const std::size_t rows = n.grad.numel() / c;
        for (std::size_t r = 0; r < rows; ++r)
          for (int j = 0; j < c; ++j) gb[j] += n.grad[r * c + j];
        break;
      }
      case OpKind::kRelu: {
        const Tensor<T>& x = nodes_[n.in0].value;
        Tensor<T>& gx = nodes_[n.in0].grad;
        T slope = T(1);
#ifdef GAL_INJECT_GRAD_FAULT
        slope = T(1.5);  // test fixture: deliberately wrong backward
#endif
        for (std::size_t i = 0; i < gx.numel(); ++i)
          if (x[i] > T(0)) gx[i] += slope * n.grad[i];
        break;
      }
      case OpKind::kConv2d: {
        const Tensor<T>&x = nodes_[n.in0].value, &kn = nodes_[n.in1].value;
        Tensor<T>&gx = nodes_[n.in0].grad, &gk = nodes_[n.in1].grad;
        const int h = x.dim(0), w = x.dim(1), cin = x.dim(2), cout = kn.dim(3);
        const int stride = n.iarg;
        const int oh = n.value.dim(0), ow = n.value.dim(1);
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = oy * stride + ky - 1;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = ox * stride + kx - 1;
                if (ix < 0 || ix >= w) continue;
                const T* go = &n.grad.at(oy, ox, 0);
                const std::size_t kbase = ((ky * 3 + kx) * static_cast<std::size_t>(cin)) * cout;
                for (int ic = 0; ic < cin; ++ic) {
                  const T xv = x.at(iy, ix, ic);
                  T acc = T(0);
                  const T* kr = &kn.vec()[kbase + static_cast<std::size_t>(ic) * cout];
                  T* gkr = &gk.vec()[kbase + static_cast<std::size_t>(ic) * cout];
                  for (int oc = 0; oc < cout; ++oc) {
                    acc += go[oc] * kr[oc];
                    gkr[oc] += go[oc] * xv;
                  }
                  gx.at(iy, ix, ic) += acc;
                }
              }
            }
        break;
      }
      case OpKind::kBilinearUp: {
        const Tensor<T>& x = nodes_[n.in0].value;
        Tensor<T>& gx = nodes_[n.in0].grad;
        const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
        const int f = n.iarg;
        for (int oy = 0; oy < h * f; ++oy) {
          int y0, y1;
          T wy;
          sample_coord(oy, f, h, y0, y1, wy);
          for (int ox = 0; ox < w * f; ++ox) {
            int x0, x1;
            T wx;
            sample_coord(ox, f, w, x0, x1, wx);
            for (int ch = 0; ch < c; ++ch) {
              const T g = n.grad.at(oy, ox, ch);
              gx.at(y0, x0, ch) += g * (T(1) - wy) * (T(1) - wx);
              gx.at(y0, x1, ch) += g * (T(1) - wy) * wx;
              gx.at(y1, x0, ch) += g * wy * (T(1) - wx);
              gx.at(y1, x1, ch) += g * wy * wx;
            }
          }
        }
        break;
      }
      case OpKind::kConcatLast: {
        Tensor<T>&ga = nodes_[n.in0].grad, &gb = nodes_[n.in1].grad;
        const int ca = ga.shape().back(), cb = gb.shape().back();
        const std::size_t rows = ga.numel() / ca;
        for (std::size_t r = 0; r < rows; ++r) {
          for (int j = 0; j < ca; ++j) ga[r * ca + j] += n.grad[r * (ca + cb) + j];
          for (int j = 0; j < cb; ++j) gb[r * cb + j] += n.grad[r * (ca + cb) + ca + j];
        }
        break;
      }
      case OpKind::kMeanRows: {
        Tensor<T>& gx = nodes_[n.in0].grad;
        const int rows = gx.dim(0), c = gx.dim(1);
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < c; ++j) gx.at(i, j) += n.grad[j] / T(rows);
        break;
      }
      case OpKind::kReshape: {
        Tensor<T>& gx = nodes_[n.in0].grad;
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += n.grad[i];
        break;
      }
      case OpKind::kGatherRows: {
        Tensor<T>& gx = nodes_[n.in0].grad;
        const int c = gx.dim(1);
        for (std::size_t i = 0; i < n.idx.size(); ++i)
          for (int j = 0; j < c; ++j)
            gx.at(n.idx[i], j) += n.grad.at(static_cast<int>(i), j);
        break;
      }
      case OpKind::kGroupMeanRows: {
        Tensor<T>& gx = nodes_[n.in0].grad;
        const int g = n.iarg, c = gx.dim(1);
        const int out_rows = n.value.dim(0);
        for (int i = 0; i < out_rows; ++i)
          for (int s = 0; s < g; ++s)
            for (int j = 0; j < c; ++j)
              gx.at(i * g + s, j) += n.grad.at(i, j) / T(g);
        break;
      }
      case OpKind::kReduceSum: {
        Tensor<T>& gx = nodes_[n.in0].grad;
        const T g = n.grad[0];
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
        break;
      }
      case OpKind::kSoftmaxCE: {
        Tensor<T>& gl = nodes_[n.in0].grad;
        const int k = gl.shape().back();
        const std::size_t px = gl.numel() / k;
        const T g = n.grad[0] / T(px);
        for (std::size_t p = 0; p < px; ++p) {
          for (int j = 0; j < k; ++j)
            gl[p * k + j] += g * n.saved[p * k + j];
          gl[p * k + n.idx[p]] -= g;
        }
        break;
      }
    }
  }

  void accum(int id, const Tensor<T>& g) {
    Tensor<T>& dst = nodes_[id].grad;
    for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += g[i];
  }

  std::vector<Node> nodes_;
};

}  // namespace gal
