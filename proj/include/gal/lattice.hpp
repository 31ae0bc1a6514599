#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gal {

// Fixed 4-neighbor edge structure over H x W positions. Vertex id
// i = row*W + col; slot order per vertex is [up, down, left, right] and
// edge id k = 4*i + slot, so the four incoming edges of vertex i occupy
// rows 4i..4i+3 of any edge-feature matrix.
struct LatticeGraph {
  int height = 0;
  int width = 0;
  std::vector<int> senders;
  std::vector<int> receivers;

  int vertex_count() const { return height * width; }
  int edge_count() const { return 4 * height * width; }
};

enum Slot { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

inline constexpr int kSlotDr[4] = {-1, 1, 0, 0};
inline constexpr int kSlotDc[4] = {0, 0, -1, 1};

// Neighbor substitution: interior vertices take their true 4-neighborhood;
// an out-of-bounds slot of a boundary (non-corner) vertex is the vertex
// itself; each out-of-bounds slot of a corner wraps toroidally along its
// axis, landing on another corner.
inline LatticeGraph build_lattice(int h, int w) {
  if (h < 2 || w < 2)
    throw std::invalid_argument("build_lattice: lattice must be at least 2x2, got " +
                                std::to_string(h) + "x" + std::to_string(w));
  LatticeGraph g;
  g.height = h;
  g.width = w;
  g.senders.resize(static_cast<std::size_t>(4) * h * w);
  g.receivers.resize(static_cast<std::size_t>(4) * h * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int i = r * w + c;
      const bool corner = (r == 0 || r == h - 1) && (c == 0 || c == w - 1);
      for (int s = 0; s < 4; ++s) {
        const int nr = r + kSlotDr[s];
        const int nc = c + kSlotDc[s];
        int sender;
        if (nr >= 0 && nr < h && nc >= 0 && nc < w) {
          sender = nr * w + nc;
        } else if (corner) {
          sender = ((nr + h) % h) * w + ((nc + w) % w);
        } else {
          sender = i;
        }
        g.senders[static_cast<std::size_t>(4) * i + s] = sender;
        g.receivers[static_cast<std::size_t>(4) * i + s] = i;
      }
    }
  return g;
}

struct LatticeCheck {
  bool ok = true;
  int edge = -1;  // offending edge id, -1 for structural failures
  std::string what;
};

// Checks the structural invariants; reports the first violation.
inline LatticeCheck validate(const LatticeGraph& g) {
  auto violation = [](int edge, std::string what) {
    return LatticeCheck{false, edge, std::move(what)};
  };
  const int h = g.height, w = g.width;
  const std::size_t ne = static_cast<std::size_t>(4) * h * w;
  if (h < 2 || w < 2) return violation(-1, "lattice smaller than 2x2");
  if (g.senders.size() != ne || g.receivers.size() != ne)
    return violation(-1, "edge arrays must have length 4*H*W");
  for (int i = 0; i < h * w; ++i) {
    const int r = i / w, c = i % w;
    const bool corner = (r == 0 || r == h - 1) && (c == 0 || c == w - 1);
    const bool boundary = r == 0 || r == h - 1 || c == 0 || c == w - 1;
    for (int s = 0; s < 4; ++s) {
      const int k = 4 * i + s;
      if (g.receivers[k] != i)
        return violation(k, "receiver of edge " + std::to_string(k) + " is " +
                                std::to_string(g.receivers[k]) + ", expected " +
                                std::to_string(i));
      const int sd = g.senders[k];
      if (sd < 0 || sd >= h * w)
        return violation(k, "sender id " + std::to_string(sd) + " out of range");
      const int nr = r + kSlotDr[s], nc = c + kSlotDc[s];
      const bool in_bounds = nr >= 0 && nr < h && nc >= 0 && nc < w;
      if (in_bounds) {
        if (sd != nr * w + nc)
          return violation(k, "in-bounds slot must hold the true neighbor");
      } else if (corner) {
        const int wrapped = ((nr + h) % h) * w + ((nc + w) % w);
        if (sd != wrapped)
          return violation(k, "corner slot must wrap toroidally along its axis");
        const int sr = sd / w, sc = sd % w;
        if (!((sr == 0 || sr == h - 1) && (sc == 0 || sc == w - 1)))
          return violation(k, "corner substitute must itself be a corner");
      } else {
        if (sd != i)
          return violation(k, "boundary slot must hold the vertex itself");
      }
      if (sd == i && (!boundary || corner))
        return violation(k, "self-loop outside boundary non-corner vertex");
    }
  }
  return LatticeCheck{};
}

}  // namespace gal
