#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gal/lattice.hpp"
#include "gal/optimizer.hpp"
#include "gal/rng.hpp"
#include "gal/tape.hpp"
#include "gal/tensor.hpp"

namespace gal {

// Weights of the graph attention layer for input channel count C (must be
// even; the layer emits C' = C/2 channels). Both perceptrons are two-layer
// (hidden width C, relu, linear head); the modulation projection is a bare
// 4C' -> C' linear map shared across positions.
template <typename T>
struct GalParams {
  int channels = 0;

  Param<T> edge_w1, edge_b1, edge_w2, edge_b2;          // in: [e_k ; v_r ; v_s]
  Param<T> vertex_w1, vertex_b1, vertex_w2, vertex_b2;  // in: [ebar_i ; v_i]
  Param<T> mod_w, mod_b;

  static GalParams init(int channels, Rng& rng) {
    if (channels < 2 || channels % 2 != 0)
      throw std::invalid_argument("gal: channel count must be even and >= 2, got " +
                                  std::to_string(channels));
    const int c = channels, ch = channels / 2;
    GalParams p;
    p.channels = c;
    p.edge_w1 = fan_in_uniform(3 * c, c, rng);
    p.edge_b1 = Param<T>(Tensor<T>(Shape{c}));
    p.edge_w2 = fan_in_uniform(c, ch, rng);
    p.edge_b2 = Param<T>(Tensor<T>(Shape{ch}));
    p.vertex_w1 = fan_in_uniform(ch + c, c, rng);
    p.vertex_b1 = Param<T>(Tensor<T>(Shape{c}));
    p.vertex_w2 = fan_in_uniform(c, ch, rng);
    p.vertex_b2 = Param<T>(Tensor<T>(Shape{ch}));
    p.mod_w = fan_in_uniform(4 * ch, ch, rng);
    p.mod_b = Param<T>(Tensor<T>(Shape{ch}));
    return p;
  }

  std::vector<Param<T>*> params() {
    return {&edge_w1, &edge_b1, &edge_w2, &edge_b2, &vertex_w1,
            &vertex_b1, &vertex_w2, &vertex_b2, &mod_w, &mod_b};
  }

  std::vector<std::pair<std::string, Param<T>*>> named(const std::string& prefix) {
    return {{prefix + "edge.w1", &edge_w1},     {prefix + "edge.b1", &edge_b1},
            {prefix + "edge.w2", &edge_w2},     {prefix + "edge.b2", &edge_b2},
            {prefix + "vertex.w1", &vertex_w1}, {prefix + "vertex.b1", &vertex_b1},
            {prefix + "vertex.w2", &vertex_w2}, {prefix + "vertex.b2", &vertex_b2},
            {prefix + "mod.w", &mod_w},         {prefix + "mod.b", &mod_b}};
  }

 private:
  static Param<T> fan_in_uniform(int rows, int cols, Rng& rng) {
    const double limit = std::sqrt(3.0 / rows);
    return Param<T>(Tensor<T>::uniform(Shape{rows, cols}, rng, -limit, limit));
  }
};

// Tape handles for one bound forward pass.
struct GalVars {
  Var edge_w1, edge_b1, edge_w2, edge_b2;
  Var vertex_w1, vertex_b1, vertex_w2, vertex_b2;
  Var mod_w, mod_b;
};

template <typename T>
GalVars bind_gal(Tape<T>& tape, ParamBinder<T>& binder, GalParams<T>& p) {
  GalVars v;
  v.edge_w1 = binder.bind(tape, p.edge_w1);
  v.edge_b1 = binder.bind(tape, p.edge_b1);
  v.edge_w2 = binder.bind(tape, p.edge_w2);
  v.edge_b2 = binder.bind(tape, p.edge_b2);
  v.vertex_w1 = binder.bind(tape, p.vertex_w1);
  v.vertex_b1 = binder.bind(tape, p.vertex_b1);
  v.vertex_w2 = binder.bind(tape, p.vertex_w2);
  v.vertex_b2 = binder.bind(tape, p.vertex_b2);
  v.mod_w = binder.bind(tape, p.mod_w);
  v.mod_b = binder.bind(tape, p.mod_b);
  return v;
}

// (H,W,C) -> (HW, C); row i holds the channel vector at (i / W, i % W).
template <typename T>
Var make_vertex_features(Tape<T>& tape, Var t) {
  const Tensor<T>& tt = tape.value(t);
  if (tt.rank() != 3)
    throw std::invalid_argument("make_vertex_features: expected rank-3 input, got " +
                                shape_str(tt.shape()));
  return tape.reshape(t, Shape{tt.dim(0) * tt.dim(1), tt.dim(2)});
}

// Initial edge features: E0[k] = V[s_k] - V[r_k]. Self-loop rows are zero.
template <typename T>
Var make_edge_features(Tape<T>& tape, Var v, const LatticeGraph& g) {
  const Tensor<T>& tv = tape.value(v);
  if (tv.rank() != 2 || tv.dim(0) != g.vertex_count())
    throw std::invalid_argument("make_edge_features: vertex matrix " +
                                shape_str(tv.shape()) + " does not match " +
                                std::to_string(g.height) + "x" +
                                std::to_string(g.width) + " lattice");
  Var vs = tape.gather_rows(v, g.senders);
  Var vr = tape.gather_rows(v, g.receivers);
  return tape.sub(vs, vr);
}

template <typename T>
Var two_layer_perceptron(Tape<T>& tape, Var x, Var w1, Var b1, Var w2, Var b2) {
  Var h = tape.relu(tape.add_bias(tape.matmul(x, w1), b1));
  return tape.add_bias(tape.matmul(h, w2), b2);
}

// Edge perceptron over [e_k ; v_{r_k} ; v_{s_k}], weights shared across
// all edges and slots: (4HW, C) -> (4HW, C').
template <typename T>
Var edge_update(Tape<T>& tape, Var e0, Var v, const LatticeGraph& g,
                const GalVars& p) {
  Var vr = tape.gather_rows(v, g.receivers);
  Var vs = tape.gather_rows(v, g.senders);
  Var x = tape.concat_channels(tape.concat_channels(e0, vr), vs);
  return two_layer_perceptron(tape, x, p.edge_w1, p.edge_b1, p.edge_w2, p.edge_b2);
}

// Mean of the four incoming edge rows per receiver: (4HW, C') -> (HW, C').
template <typename T>
Var aggregate_edges(Tape<T>& tape, Var re) {
  return tape.group_mean_rows(re, 4);
}

// Vertex perceptron over [ebar_i ; v_i]: (HW, C'+C) -> (HW, C').
template <typename T>
Var vertex_update(Tape<T>& tape, Var ebar, Var v, const GalVars& p) {
  Var x = tape.concat_channels(ebar, v);
  return two_layer_perceptron(tape, x, p.vertex_w1, p.vertex_b1, p.vertex_w2,
                              p.vertex_b2);
}

// FC + multiplication + reshape output path. The per-receiver slot-ordered
// blocks of R_e become one 4C' row per position, projected to a modulation
// vector that scales R_v elementwise.
template <typename T>
Var modulate_and_reshape(Tape<T>& tape, Var rv, Var re, int h, int w,
                         const GalVars& p) {
  const int ch = tape.value(rv).dim(1);
  Var grouped = tape.reshape(re, Shape{h * w, 4 * ch});
  Var dw = tape.add_bias(tape.matmul(grouped, p.mod_w), p.mod_b);
  Var out = tape.mul(rv, dw);
  return tape.reshape(out, Shape{h, w, ch});
}

// Full layer: (H,W,C) -> (H,W,C/2), fully tape-recorded.
template <typename T>
Var gal_forward(Tape<T>& tape, Var t, const LatticeGraph& g, const GalVars& p) {
  const Tensor<T>& tt = tape.value(t);
  if (tt.rank() != 3)
    throw std::invalid_argument("gal_forward: expected rank-3 input, got " +
                                shape_str(tt.shape()));
  const int h = tt.dim(0), w = tt.dim(1), c = tt.dim(2);
  if (c % 2 != 0)
    throw std::invalid_argument("gal_forward: channel count must be even, got " +
                                std::to_string(c));
  if (h != g.height || w != g.width)
    throw std::invalid_argument("gal_forward: input " + shape_str(tt.shape()) +
                                " does not match " + std::to_string(g.height) + "x" +
                                std::to_string(g.width) + " lattice");
  Var v = make_vertex_features(tape, t);
  Var e0 = make_edge_features(tape, v, g);
  Var re = edge_update(tape, e0, v, g, p);
  Var ebar = aggregate_edges(tape, re);
  Var rv = vertex_update(tape, ebar, v, p);
  return modulate_and_reshape(tape, rv, re, h, w, p);
}

}  // namespace gal
