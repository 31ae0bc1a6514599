#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gal/gal_layer.hpp"
#include "gal/io.hpp"
#include "gal/lattice.hpp"
#include "gal/optimizer.hpp"
#include "gal/rng.hpp"
#include "gal/tape.hpp"
#include "gal/tensor.hpp"

namespace gal {

struct NetConfig {
  int base = 16;        // B; encoder emits 2B channels, must keep 2B even
  bool with_gal = true;
  int in_channels = 1;  // 1 for disp/tdisp, 3 for rgb
  int classes = 2;
};

inline void validate_config(const NetConfig& c) {
  if (c.base < 2 || c.base % 2 != 0)
    throw std::invalid_argument("net: base channels must be even and >= 2, got " +
                                std::to_string(c.base));
  if (c.in_channels != 1 && c.in_channels != 3)
    throw std::invalid_argument("net: input channels must be 1 or 3, got " +
                                std::to_string(c.in_channels));
  if (c.classes < 2)
    throw std::invalid_argument("net: class count must be >= 2, got " +
                                std::to_string(c.classes));
}

// Encoder (stride 1,2,2) -> 2B-channel feature map at 1/4 resolution;
// optional GAL branch concatenated back onto its input; 1x1 fusion; bilinear
// x4 upsample; 3x3 head to per-pixel class logits.
template <typename T>
struct NetParams {
  NetConfig config;
  Param<T> enc1_w, enc1_b;  // (3,3,Cin,B) stride 1
  Param<T> enc2_w, enc2_b;  // (3,3,B,2B)  stride 2
  Param<T> enc3_w, enc3_b;  // (3,3,2B,2B) stride 2
  GalParams<T> gal;         // on 2B channels, present iff config.with_gal
  Param<T> fuse_w, fuse_b;  // (3B,2B) with GAL, else (2B,2B)
  Param<T> dec_w, dec_b;    // (3,3,2B,classes)

  static NetParams init(const NetConfig& cfg, Rng& rng) {
    validate_config(cfg);
    NetParams p;
    p.config = cfg;
    const int b = cfg.base;
    p.enc1_w = conv_init(cfg.in_channels, b, rng);
    p.enc1_b = Param<T>(Tensor<T>(Shape{b}));
    p.enc2_w = conv_init(b, 2 * b, rng);
    p.enc2_b = Param<T>(Tensor<T>(Shape{2 * b}));
    p.enc3_w = conv_init(2 * b, 2 * b, rng);
    p.enc3_b = Param<T>(Tensor<T>(Shape{2 * b}));
    if (cfg.with_gal) p.gal = GalParams<T>::init(2 * b, rng);
    const int fuse_in = cfg.with_gal ? 3 * b : 2 * b;
    const double limit = std::sqrt(3.0 / fuse_in);
    p.fuse_w = Param<T>(Tensor<T>::uniform(Shape{fuse_in, 2 * b}, rng, -limit, limit));
    p.fuse_b = Param<T>(Tensor<T>(Shape{2 * b}));
    p.dec_w = conv_init(2 * b, cfg.classes, rng);
    p.dec_b = Param<T>(Tensor<T>(Shape{cfg.classes}));
    return p;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out = {&enc1_w, &enc1_b, &enc2_w, &enc2_b, &enc3_w, &enc3_b};
    if (config.with_gal)
      for (Param<T>* p : gal.params()) out.push_back(p);
    out.push_back(&fuse_w);
    out.push_back(&fuse_b);
    out.push_back(&dec_w);
    out.push_back(&dec_b);
    return out;
  }

  std::vector<std::pair<std::string, Param<T>*>> named() {
    std::vector<std::pair<std::string, Param<T>*>> out = {
        {"enc1.w", &enc1_w}, {"enc1.b", &enc1_b}, {"enc2.w", &enc2_w},
        {"enc2.b", &enc2_b}, {"enc3.w", &enc3_w}, {"enc3.b", &enc3_b}};
    if (config.with_gal)
      for (auto& e : gal.named("gal.")) out.push_back(e);
    out.emplace_back("fuse.w", &fuse_w);
    out.emplace_back("fuse.b", &fuse_b);
    out.emplace_back("dec.w", &dec_w);
    out.emplace_back("dec.b", &dec_b);
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (Param<T>* p : params()) n += p->value.numel();
    return n;
  }

 private:
  static Param<T> conv_init(int cin, int cout, Rng& rng) {
    const double limit = std::sqrt(3.0 / (9.0 * cin));
    return Param<T>(Tensor<T>::uniform(Shape{3, 3, cin, cout}, rng, -limit, limit));
  }
};

struct NetVars {
  Var enc1_w, enc1_b, enc2_w, enc2_b, enc3_w, enc3_b;
  GalVars gal;
  Var fuse_w, fuse_b, dec_w, dec_b;
};

template <typename T>
NetVars bind_net(Tape<T>& tape, ParamBinder<T>& binder, NetParams<T>& p) {
  NetVars v;
  v.enc1_w = binder.bind(tape, p.enc1_w);
  v.enc1_b = binder.bind(tape, p.enc1_b);
  v.enc2_w = binder.bind(tape, p.enc2_w);
  v.enc2_b = binder.bind(tape, p.enc2_b);
  v.enc3_w = binder.bind(tape, p.enc3_w);
  v.enc3_b = binder.bind(tape, p.enc3_b);
  if (p.config.with_gal) v.gal = bind_gal(tape, binder, p.gal);
  v.fuse_w = binder.bind(tape, p.fuse_w);
  v.fuse_b = binder.bind(tape, p.fuse_b);
  v.dec_w = binder.bind(tape, p.dec_w);
  v.dec_b = binder.bind(tape, p.dec_b);
  return v;
}

// Intermediate features exposed for activation-map export.
struct NetTaps {
  Var encoder;  // (H/4, W/4, 2B)
  Var gal;      // (H/4, W/4, B); unset without the GAL branch
};

// x: (H,W,Cin) with H,W divisible by 4 and H/4,W/4 >= 2 -> logits (H,W,classes).
template <typename T>
Var net_forward(Tape<T>& tape, Var x, const NetVars& v, const NetConfig& cfg,
                NetTaps* taps = nullptr) {
  const Tensor<T>& tx = tape.value(x);
  if (tx.rank() != 3 || tx.dim(2) != cfg.in_channels)
    throw std::invalid_argument("net_forward: expected HxWx" +
                                std::to_string(cfg.in_channels) + " input, got " +
                                shape_str(tx.shape()));
  const int h = tx.dim(0), w = tx.dim(1);
  if (h % 4 != 0 || w % 4 != 0)
    throw std::invalid_argument("net_forward: spatial dims must be divisible by 4, got " +
                                shape_str(tx.shape()));
  if (h / 4 < 2 || w / 4 < 2)
    throw std::invalid_argument("net_forward: input " + shape_str(tx.shape()) +
                                " too small (needs at least 8x8)");
  auto conv_block = [&](Var in, Var kw, Var kb, int stride) {
    return tape.relu(tape.add_bias(tape.conv2d(in, kw, stride), kb));
  };
  Var h1 = conv_block(x, v.enc1_w, v.enc1_b, 1);
  Var h2 = conv_block(h1, v.enc2_w, v.enc2_b, 2);
  Var f = conv_block(h2, v.enc3_w, v.enc3_b, 2);  // (H/4, W/4, 2B)

  Var fused_in = f;
  if (taps) taps->encoder = f;
  if (cfg.with_gal) {
    const LatticeGraph graph = build_lattice(h / 4, w / 4);
    Var g = gal_forward(tape, f, graph, v.gal);  // (H/4, W/4, B)
    if (taps) taps->gal = g;
    fused_in = tape.concat_channels(f, g);
  }
  const int fh = h / 4, fw = w / 4;
  const int cf = tape.value(fused_in).dim(2);
  Var flat = tape.reshape(fused_in, Shape{fh * fw, cf});
  Var z = tape.relu(tape.add_bias(tape.matmul(flat, v.fuse_w), v.fuse_b));
  Var zmap = tape.reshape(z, Shape{fh, fw, 2 * cfg.base});
  Var up = tape.bilinear_upsample(zmap, 4);
  return tape.add_bias(tape.conv2d(up, v.dec_w, 1), v.dec_b);
}

// Per-pixel argmax; ties resolve to the lowest class index (background).
inline std::vector<int> predict(const Tensor<float>& logits) {
  if (logits.rank() != 3)
    throw std::invalid_argument("predict: expected rank-3 logits, got " +
                                shape_str(logits.shape()));
  const int h = logits.dim(0), w = logits.dim(1), k = logits.dim(2);
  std::vector<int> mask(static_cast<std::size_t>(h) * w);
  for (int p = 0; p < h * w; ++p) {
    int best = 0;
    float best_v = logits[static_cast<std::size_t>(p) * k];
    for (int j = 1; j < k; ++j) {
      const float vj = logits[static_cast<std::size_t>(p) * k + j];
      if (vj > best_v) {
        best = j;
        best_v = vj;
      }
    }
    mask[p] = best;
  }
  return mask;
}

// Channel-mean activation image, min-max scaled to 0..255 (round half up);
// constant maps export as all zeros.
inline std::vector<uint8_t> export_activation_map(const Tensor<float>& feature) {
  if (feature.rank() != 3)
    throw std::invalid_argument("export_activation_map: expected rank-3 feature, got " +
                                shape_str(feature.shape()));
  const int h = feature.dim(0), w = feature.dim(1), c = feature.dim(2);
  std::vector<double> mean(static_cast<std::size_t>(h) * w, 0.0);
  for (int p = 0; p < h * w; ++p) {
    for (int ch = 0; ch < c; ++ch)
      mean[p] += feature[static_cast<std::size_t>(p) * c + ch];
    mean[p] /= c;
  }
  double lo = mean[0], hi = mean[0];
  for (double v : mean) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<uint8_t> out(mean.size(), 0);
  if (hi > lo) {
    for (std::size_t i = 0; i < mean.size(); ++i)
      out[i] = static_cast<uint8_t>(std::floor((mean[i] - lo) / (hi - lo) * 255.0 + 0.5));
  }
  return out;
}

// --- checkpointing ---

template <typename T>
NamedTensors to_checkpoint(NetParams<T>& p) {
  NamedTensors entries;
  for (auto& [name, param] : p.named())
    entries.emplace_back(name, param->value.template cast<float>());
  return entries;
}

template <typename T>
void save_net(NetParams<T>& p, const std::string& path) {
  save_checkpoint(to_checkpoint(p), path);
}

// Reconstructs config and weights from a checkpoint. Shape consistency is
// re-derived from enc1.w; any tensor that disagrees is named in the error.
template <typename T>
NetParams<T> load_net(const std::string& path) {
  NamedTensors entries = load_checkpoint(path);
  const Tensor<float>& enc1 = checkpoint_entry(entries, "enc1.w");
  if (enc1.rank() != 4 || enc1.dim(0) != 3 || enc1.dim(1) != 3)
    throw std::runtime_error(path + ": enc1.w has shape " + shape_str(enc1.shape()) +
                             ", expected a 3x3 convolution kernel");
  NetConfig cfg;
  cfg.in_channels = enc1.dim(2);
  cfg.base = enc1.dim(3);
  cfg.with_gal = false;
  for (const auto& [name, t] : entries)
    if (name == "gal.edge.w1") cfg.with_gal = true;
  const Tensor<float>& dec = checkpoint_entry(entries, "dec.w");
  if (dec.rank() != 4)
    throw std::runtime_error(path + ": dec.w has shape " + shape_str(dec.shape()) +
                             ", expected a 3x3 convolution kernel");
  cfg.classes = dec.dim(3);
  validate_config(cfg);

  Rng rng(0);
  NetParams<T> p = NetParams<T>::init(cfg, rng);
  for (auto& [name, param] : p.named()) {
    const Tensor<float>& t = checkpoint_entry(entries, name);
    if (t.shape() != param->value.shape())
      throw std::runtime_error(path + ": tensor " + name + " has shape " +
                               shape_str(t.shape()) + ", expected " +
                               shape_str(param->value.shape()));
    param->value = t.template cast<T>();
    param->grad.fill(T(0));
    param->velocity.fill(T(0));
  }
  return p;
}

}  // namespace gal
