#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "gal/rng.hpp"
#include "gal/tensor.hpp"

namespace gal {

enum class Modality { kRgb, kDisp, kTdisp };

inline std::string modality_name(Modality m) {
  switch (m) {
    case Modality::kRgb: return "rgb";
    case Modality::kDisp: return "disp";
    case Modality::kTdisp: return "tdisp";
  }
  throw std::logic_error("unreachable");
}

inline Modality modality_from(const std::string& s) {
  if (s == "rgb") return Modality::kRgb;
  if (s == "disp") return Modality::kDisp;
  if (s == "tdisp") return Modality::kTdisp;
  throw std::invalid_argument("unknown modality '" + s + "' (expected rgb|disp|tdisp)");
}

inline int modality_channels(Modality m) { return m == Modality::kRgb ? 3 : 1; }

// One annotated image: H×W×Cin floats in [0,1] plus a binary per-pixel mask.
struct SegSample {
  Tensor<float> image;
  std::vector<int> label;  // row-major H*W, values {0,1}
  Modality modality = Modality::kTdisp;
  std::string id;

  int height() const { return image.dim(0); }
  int width() const { return image.dim(1); }
  int channels() const { return image.dim(2); }
};

inline void validate_sample(const SegSample& s) {
  if (s.image.rank() != 3)
    throw std::invalid_argument("sample " + s.id + ": image must be rank 3, got " +
                                shape_str(s.image.shape()));
  if (s.label.size() != static_cast<std::size_t>(s.height()) * s.width())
    throw std::invalid_argument("sample " + s.id + ": label has " +
                                std::to_string(s.label.size()) + " pixels for image " +
                                shape_str(s.image.shape()));
  for (int v : s.label)
    if (v != 0 && v != 1)
      throw std::invalid_argument("sample " + s.id + ": label values must be 0 or 1");
}

// Ordered list of folds over sample indices.
struct FoldSpec {
  std::vector<std::vector<int>> folds;

  // The 12 fold sizes of the reference protocol, covering 53 samples.
  static FoldSpec reference(int n = 53) {
    const int sizes[] = {13, 9, 5, 4, 3, 2, 3, 3, 2, 2, 2, 5};
    if (n != std::accumulate(std::begin(sizes), std::end(sizes), 0))
      throw std::invalid_argument("reference fold layout covers exactly 53 samples, got " +
                                  std::to_string(n));
    FoldSpec spec;
    int next = 0;
    for (int sz : sizes) {
      std::vector<int> fold(sz);
      std::iota(fold.begin(), fold.end(), next);
      next += sz;
      spec.folds.push_back(std::move(fold));
    }
    return spec;
  }

  // n samples in k contiguous folds, sizes as even as possible.
  static FoldSpec uniform(int n, int k) {
    if (k < 2 || k > n)
      throw std::invalid_argument("fold count " + std::to_string(k) +
                                  " out of range [2," + std::to_string(n) + "]");
    FoldSpec spec;
    int next = 0;
    for (int f = 0; f < k; ++f) {
      const int sz = n / k + (f < n % k ? 1 : 0);
      std::vector<int> fold(sz);
      std::iota(fold.begin(), fold.end(), next);
      next += sz;
      spec.folds.push_back(std::move(fold));
    }
    return spec;
  }

  // Folds must be disjoint, non-empty, and cover 0..n-1.
  void validate(int n) const {
    std::vector<int> seen(n, 0);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      if (folds[f].empty())
        throw std::invalid_argument("fold " + std::to_string(f + 1) + " is empty");
      for (int id : folds[f]) {
        if (id < 0 || id >= n)
          throw std::invalid_argument("fold " + std::to_string(f + 1) +
                                      " references sample " + std::to_string(id) +
                                      " outside corpus of " + std::to_string(n));
        if (seen[id]++)
          throw std::invalid_argument("sample " + std::to_string(id) +
                                      " appears in more than one fold");
      }
    }
    for (int id = 0; id < n; ++id)
      if (!seen[id])
        throw std::invalid_argument("sample " + std::to_string(id) +
                                    " is not covered by any fold");
  }
};

namespace detail {

struct Ellipse {
  double cy, cx;     // center
  double a, b;       // semi-axes (a along the rotated x axis)
  double cos_t, sin_t;
  double depth;

  // Squared normalized radius; interior iff <= 1.
  double rho2(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double u = (dx * cos_t + dy * sin_t) / a;
    const double v = (-dx * sin_t + dy * cos_t) / b;
    return u * u + v * v;
  }
};

// Rejection-sample an ellipse whose rotated bounding box lies inside the
// frame. Axes start at 3 px; parameters that do not fit are redrawn.
inline Ellipse sample_ellipse(int h, int w, Rng& rng, double depth_lo,
                              double depth_hi) {
  const double amax = std::max(3.0, std::min(h, w) / 4.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Ellipse e;
    e.a = rng.uniform(3.0, amax);
    e.b = rng.uniform(3.0, amax);
    const double theta = rng.uniform(0.0, 3.141592653589793);
    e.cos_t = std::cos(theta);
    e.sin_t = std::sin(theta);
    e.depth = rng.uniform(depth_lo, depth_hi);
    const double ex = std::sqrt(e.a * e.a * e.cos_t * e.cos_t +
                                e.b * e.b * e.sin_t * e.sin_t);
    const double ey = std::sqrt(e.a * e.a * e.sin_t * e.sin_t +
                                e.b * e.b * e.cos_t * e.cos_t);
    if (2 * ex >= w - 1 || 2 * ey >= h - 1) continue;  // cannot fit, redraw
    e.cx = rng.uniform(ex, (w - 1) - ex);
    e.cy = rng.uniform(ey, (h - 1) - ey);
    return e;
  }
  throw std::runtime_error("sample_ellipse: no ellipse with 3 px axes fits a " +
                           std::to_string(h) + "x" + std::to_string(w) + " frame");
}

inline void carve(Tensor<float>& img, std::vector<int>* label, const Ellipse& e) {
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r2 = e.rho2(y, x);
      if (r2 > 1.0) continue;
      const float dv = static_cast<float>(e.depth * (1.0 - r2));  // bowl profile
      for (int ch = 0; ch < c; ++ch) img.at(y, x, ch) -= dv;
      if (label) (*label)[static_cast<std::size_t>(y) * w + x] = 1;
    }
}

}  // namespace detail

// Deterministic synthetic pothole scenes. Backgrounds by modality:
// tdisp is near-constant, disp carries a row-wise linear gradient, rgb is
// textured and additionally contains stain distractors that darken the
// surface like potholes but are absent from the label.
inline std::vector<SegSample> synth_generate(Modality modality, int n, int h, int w,
                                             std::uint64_t seed,
                                             double noise_sigma = 0.02) {
  if (n < 1) throw std::invalid_argument("synth_generate: n must be >= 1, got " +
                                         std::to_string(n));
  if (h % 4 != 0 || w % 4 != 0)
    throw std::invalid_argument("synth_generate: H and W must be divisible by 4, got " +
                                std::to_string(h) + "x" + std::to_string(w));
  const Rng root(seed);
  std::vector<SegSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = root.child(static_cast<std::uint64_t>(i));
    SegSample s;
    s.modality = modality;
    s.id = modality_name(modality) + "_" + std::to_string(i);
    s.label.assign(static_cast<std::size_t>(h) * w, 0);

    const int c = modality_channels(modality);
    s.image = Tensor<float>(Shape{h, w, c});
    switch (modality) {
      case Modality::kTdisp: {
        const float base = static_cast<float>(0.75 + rng.uniform(-0.02, 0.02));
        s.image.fill(base);
        break;
      }
      case Modality::kDisp: {
        const double top = 0.35 + rng.uniform(-0.03, 0.03);
        const double bottom = 0.90 + rng.uniform(-0.03, 0.03);
        for (int y = 0; y < h; ++y) {
          const float v = static_cast<float>(top + (bottom - top) * y / (h - 1));
          for (int x = 0; x < w; ++x) s.image.at(y, x, 0) = v;
        }
        break;
      }
      case Modality::kRgb: {
        const double base = 0.55 + rng.uniform(-0.05, 0.05);
        double tint[3];
        for (double& t : tint) t = rng.uniform(-0.04, 0.04);
        const double fy = rng.uniform(0.5, 2.0), fx = rng.uniform(0.5, 2.0);
        const double py = rng.uniform(0.0, 6.283185307179586);
        const double px = rng.uniform(0.0, 6.283185307179586);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double tex =
                0.06 * std::sin(6.283185307179586 * fy * y / h + py) *
                    std::cos(6.283185307179586 * fx * x / w + px) +
                0.03 * rng.uniform(-1.0, 1.0);
            for (int ch = 0; ch < 3; ++ch)
              s.image.at(y, x, ch) = static_cast<float>(base + tint[ch] + tex);
          }
        break;
      }
    }

    const int potholes = static_cast<int>(rng.uniform_int(4));  // 0..3
    for (int p = 0; p < potholes; ++p)
      detail::carve(s.image, &s.label, detail::sample_ellipse(h, w, rng, 0.25, 0.45));

    if (modality == Modality::kRgb) {
      // stains: pothole-like darkening with no label support
      const int stains = 1 + static_cast<int>(rng.uniform_int(2));  // 1..2
      for (int p = 0; p < stains; ++p)
        detail::carve(s.image, nullptr, detail::sample_ellipse(h, w, rng, 0.20, 0.40));
    }

    for (std::size_t j = 0; j < s.image.numel(); ++j) {
      const float v = s.image[j] + static_cast<float>(noise_sigma * rng.normal());
      s.image[j] = std::clamp(v, 0.0f, 1.0f);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// --- augmentation: flip / rotate / translate, image and label in lockstep ---

inline SegSample flip_h(const SegSample& s) {
  SegSample out = s;
  const int h = s.height(), w = s.width(), c = s.channels();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch)
        out.image.at(y, x, ch) = s.image.at(y, w - 1 - x, ch);
      out.label[static_cast<std::size_t>(y) * w + x] =
          s.label[static_cast<std::size_t>(y) * w + (w - 1 - x)];
    }
  return out;
}

// Rotation about the image center; bilinear for the image, nearest for the
// label, zero outside the frame. angle_deg = 0 is an exact identity.
inline SegSample rotate(const SegSample& s, double angle_deg) {
  SegSample out = s;
  if (angle_deg == 0.0) return out;
  const int h = s.height(), w = s.width(), c = s.channels();
  const double rad = angle_deg * 3.141592653589793 / 180.0;
  const double cos_t = std::cos(rad), sin_t = std::sin(rad);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // inverse map: rotate the destination by -angle
      const double dy = y - cy, dx = x - cx;
      const double sy = cy + (-sin_t * dx + cos_t * dy);
      const double sx = cx + (cos_t * dx + sin_t * dy);
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const double wy = sy - y0, wx = sx - x0;
      for (int ch = 0; ch < c; ++ch) {
        auto px = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
          return s.image.at(yy, xx, ch);
        };
        out.image.at(y, x, ch) = static_cast<float>(
            (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x0 + 1)) +
            wy * ((1 - wx) * px(y0 + 1, x0) + wx * px(y0 + 1, x0 + 1)));
      }
      const int ny = static_cast<int>(std::lround(sy));
      const int nx = static_cast<int>(std::lround(sx));
      out.label[static_cast<std::size_t>(y) * w + x] =
          (ny < 0 || ny >= h || nx < 0 || nx >= w)
              ? 0
              : s.label[static_cast<std::size_t>(ny) * w + nx];
    }
  return out;
}

// Integer-pixel shift with zero padding; positive dy moves content down.
inline SegSample translate(const SegSample& s, int dy, int dx) {
  SegSample out = s;
  const int h = s.height(), w = s.width(), c = s.channels();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = y - dy, sx = x - dx;
      const bool in = sy >= 0 && sy < h && sx >= 0 && sx < w;
      for (int ch = 0; ch < c; ++ch)
        out.image.at(y, x, ch) = in ? s.image.at(sy, sx, ch) : 0.0f;
      out.label[static_cast<std::size_t>(y) * w + x] =
          in ? s.label[static_cast<std::size_t>(sy) * w + sx] : 0;
    }
  return out;
}

// Independent draws: flip p=0.5, rotation in [-10°,10°], translation in
// [-5%,+5%] per axis rounded to whole pixels.
inline SegSample augment(const SegSample& s, Rng& rng) {
  const bool flip = rng.bernoulli(0.5);
  const double angle = rng.uniform(-10.0, 10.0);
  const int dy = static_cast<int>(std::lround(rng.uniform(-0.05, 0.05) * s.height()));
  const int dx = static_cast<int>(std::lround(rng.uniform(-0.05, 0.05) * s.width()));
  SegSample out = flip ? flip_h(s) : s;
  out = rotate(out, angle);
  return translate(out, dy, dx);
}

inline SegSample augment(const SegSample& s, std::uint64_t seed) {
  Rng rng(seed);
  return augment(s, rng);
}

}  // namespace gal
