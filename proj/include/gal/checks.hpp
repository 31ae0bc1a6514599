#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gal/gal_layer.hpp"
#include "gal/gradcheck.hpp"
#include "gal/lattice.hpp"
#include "gal/rng.hpp"
#include "gal/tape.hpp"
#include "gal/tensor.hpp"

namespace gal {

struct CheckResult {
  std::string name;
  double err = 0.0;
  bool ok = false;
};

namespace detail {

// Uniform magnitudes bounded away from zero, random sign: keeps relu inputs
// off the kink when used directly.
inline Tensor<double> signed_uniform(const Shape& s, Rng& rng) {
  Tensor<double> t(s);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.05, 1.0);
    t[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

inline std::vector<Tensor<double>> gal_param_tensors(int c, Rng& rng) {
  GalParams<double> p = GalParams<double>::init(c, rng);
  std::vector<Tensor<double>> out;
  for (Param<double>* param : p.params()) {
    // draw biases randomly too; zeros leave their gradient paths untested
    if (param->value.rank() == 1)
      param->value = Tensor<double>::uniform(param->value.shape(), rng, -0.1, 0.1);
    out.push_back(param->value);
  }
  return out;
}

inline GalVars vars_to_gal(const std::vector<Var>& v, std::size_t off) {
  GalVars g;
  g.edge_w1 = v[off + 0];
  g.edge_b1 = v[off + 1];
  g.edge_w2 = v[off + 2];
  g.edge_b2 = v[off + 3];
  g.vertex_w1 = v[off + 4];
  g.vertex_b1 = v[off + 5];
  g.vertex_w2 = v[off + 6];
  g.vertex_b2 = v[off + 7];
  g.mod_w = v[off + 8];
  g.mod_b = v[off + 9];
  return g;
}

}  // namespace detail

// Gradient checks for every tape op and the composed layer, sized off an
// HxWxC instance. Deterministic for a given seed.
inline std::vector<CheckResult> run_gradcheck_suite(int h, int w, int c,
                                                    std::uint64_t seed,
                                                    double tol = 1e-4) {
  std::vector<CheckResult> results;
  const Rng root(seed);
  std::uint64_t tag = 0;
  const LatticeGraph graph = build_lattice(h, w);
  const int hw = h * w;

  // Scalarize as sum(out ⊙ R) with R one of the checked inputs, so the
  // upstream gradient is non-uniform.
  auto check = [&](const std::string& name, auto&& f,
                   std::vector<Tensor<double>> inputs) {
    CheckResult r;
    r.name = name;
    r.err = grad_check(f, inputs);
    r.ok = r.err <= tol;
    results.push_back(r);
  };
  auto rand_t = [&](Rng& rng, const Shape& s, double lo = -1.0, double hi = 1.0) {
    return Tensor<double>::uniform(s, rng, lo, hi);
  };

  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.add(v[0], v[1]), v[2]));
    };
    check("add", f,
          {rand_t(rng, {h, w}), rand_t(rng, {h, w}), rand_t(rng, {h, w})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.sub(v[0], v[1]), v[2]));
    };
    check("sub", f,
          {rand_t(rng, {h, w}), rand_t(rng, {h, w}), rand_t(rng, {h, w})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.mul(v[0], v[1]), v[2]));
    };
    check("mul", f,
          {rand_t(rng, {h, w}), rand_t(rng, {h, w}), rand_t(rng, {h, w})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.matmul(v[0], v[1]), v[2]));
    };
    check("matmul", f,
          {rand_t(rng, {h, w}), rand_t(rng, {w, c}), rand_t(rng, {h, c})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.add_bias(v[0], v[1]), v[2]));
    };
    check("add_bias", f,
          {rand_t(rng, {hw, c}), rand_t(rng, {c}), rand_t(rng, {hw, c})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.relu(v[0]), v[1]));
    };
    check("relu", f,
          {detail::signed_uniform({h, w, c}, rng), rand_t(rng, {h, w, c})});
  }
  for (int stride : {1, 2}) {
    Rng rng = root.child(tag++);
    const int oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
    auto f = [stride](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.conv2d(v[0], v[1], stride), v[2]));
    };
    check("conv2d_s" + std::to_string(stride), f,
          {rand_t(rng, {h, w, c}), rand_t(rng, {3, 3, c, 2}),
           rand_t(rng, {oh, ow, 2})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.bilinear_upsample(v[0], 2), v[1]));
    };
    check("bilinear_upsample", f,
          {rand_t(rng, {h, w, c}), rand_t(rng, {2 * h, 2 * w, c})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.concat_channels(v[0], v[1]), v[2]));
    };
    check("concat_channels", f,
          {rand_t(rng, {h, w, c}), rand_t(rng, {h, w, c + 1}),
           rand_t(rng, {h, w, 2 * c + 1})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.mean_rows(v[0]), v[1]));
    };
    check("mean_rows", f, {rand_t(rng, {hw, c}), rand_t(rng, {c})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [hw, c](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.reshape(v[0], {hw, c}), v[1]));
    };
    check("reshape", f, {rand_t(rng, {h, w, c}), rand_t(rng, {hw, c})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [&graph](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.gather_rows(v[0], graph.senders), v[1]));
    };
    check("gather_rows", f,
          {rand_t(rng, {hw, c}), rand_t(rng, {4 * hw, c})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(t.group_mean_rows(v[0], 4), v[1]));
    };
    check("group_mean_rows", f,
          {rand_t(rng, {4 * hw, c}), rand_t(rng, {hw, c})});
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(v[0], v[1]));
    };
    check("reduce_sum", f, {rand_t(rng, {h, w, c}), rand_t(rng, {h, w, c})});
  }
  {
    Rng rng = root.child(tag++);
    std::vector<int> labels(static_cast<std::size_t>(hw));
    for (int& l : labels) l = static_cast<int>(rng.uniform_int(2));
    auto f = [labels](Tape<double>& t, const std::vector<Var>& v) {
      return t.softmax_cross_entropy(v[0], labels);
    };
    check("softmax_cross_entropy", f, {rand_t(rng, {h, w, 2})});
  }

  // Composed pieces contain relus behind linear maps; instances are drawn
  // from child streams until every relu input clears the guard band.
  const double guard = 4e-3;
  {
    auto f = [&graph](Tape<double>& t, const std::vector<Var>& v) {
      Var e0 = make_edge_features(t, v[0], graph);
      Var re = edge_update(t, e0, v[0], graph, detail::vars_to_gal(v, 2));
      return t.reduce_sum(t.mul(re, v[1]));
    };
    auto make = [&](Rng& rng) {
      std::vector<Tensor<double>> in = {rand_t(rng, {hw, c}),
                                        rand_t(rng, {4 * hw, c / 2})};
      for (auto& t : detail::gal_param_tensors(c, rng)) in.push_back(t);
      return in;
    };
    check("edge_update", f, kink_free_inputs(root.child(tag++).next_u64(), guard, make, f));
  }
  {
    Rng rng = root.child(tag++);
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      return t.reduce_sum(t.mul(aggregate_edges(t, v[0]), v[1]));
    };
    check("aggregate_edges", f,
          {rand_t(rng, {4 * hw, c}), rand_t(rng, {hw, c})});
  }
  {
    auto f = [](Tape<double>& t, const std::vector<Var>& v) {
      Var rv = vertex_update(t, v[0], v[1], detail::vars_to_gal(v, 3));
      return t.reduce_sum(t.mul(rv, v[2]));
    };
    auto make = [&](Rng& rng) {
      std::vector<Tensor<double>> in = {rand_t(rng, {hw, c / 2}),
                                        rand_t(rng, {hw, c}),
                                        rand_t(rng, {hw, c / 2})};
      for (auto& t : detail::gal_param_tensors(c, rng)) in.push_back(t);
      return in;
    };
    check("vertex_update", f, kink_free_inputs(root.child(tag++).next_u64(), guard, make, f));
  }
  {
    Rng rng = root.child(tag++);
    auto fm = [h, w](Tape<double>& t, const std::vector<Var>& v) {
      GalVars g;
      g.mod_w = v[2];
      g.mod_b = v[3];
      Var out = modulate_and_reshape(t, v[0], v[1], h, w, g);
      return t.reduce_sum(t.mul(out, v[4]));
    };
    const int ch = c / 2;
    check("modulate_and_reshape", fm,
          {rand_t(rng, {hw, ch}), rand_t(rng, {4 * hw, ch}),
           rand_t(rng, {4 * ch, ch}), rand_t(rng, {ch}),
           rand_t(rng, {h, w, ch})});
  }
  {
    auto f = [&graph](Tape<double>& t, const std::vector<Var>& v) {
      Var out = gal_forward(t, v[0], graph, detail::vars_to_gal(v, 2));
      return t.reduce_sum(t.mul(out, v[1]));
    };
    auto make = [&](Rng& rng) {
      std::vector<Tensor<double>> in = {rand_t(rng, {h, w, c}),
                                        rand_t(rng, {h, w, c / 2})};
      for (auto& t : detail::gal_param_tensors(c, rng)) in.push_back(t);
      return in;
    };
    check("gal_forward", f, kink_free_inputs(root.child(tag++).next_u64(), guard, make, f));
  }
  return results;
}

}  // namespace gal
