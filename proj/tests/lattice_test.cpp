#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "gal/lattice.hpp"

using gal::build_lattice;
using gal::LatticeGraph;

namespace {

// Independent enumeration of the neighbor rule, written case by case:
// in-bounds neighbors connect directly, edge vertices fall back to a
// self-loop on their missing side, and corner vertices wrap around.
std::vector<int> expected_senders(int h, int w) {
  std::vector<int> senders(static_cast<std::size_t>(4) * h * w);
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const bool corner = (r == 0 || r == h - 1) && (c == 0 || c == w - 1);
      const int i = r * w + c;
      for (int s = 0; s < 4; ++s) {
        const int nr = r + dr[s], nc = c + dc[s];
        int sender;
        if (nr >= 0 && nr < h && nc >= 0 && nc < w) {
          sender = nr * w + nc;
        } else if (corner) {
          sender = ((nr + h) % h) * w + ((nc + w) % w);
        } else {
          sender = i;
        }
        senders[static_cast<std::size_t>(4) * i + s] = sender;
      }
    }
  return senders;
}

std::vector<int> senders_of(const LatticeGraph& g, int vertex) {
  return {g.senders[4 * vertex + 0], g.senders[4 * vertex + 1],
          g.senders[4 * vertex + 2], g.senders[4 * vertex + 3]};
}

}  // namespace

TEST(Lattice, RejectsDegenerateSizes) {
  EXPECT_THROW(build_lattice(1, 5), std::invalid_argument);
  EXPECT_THROW(build_lattice(5, 1), std::invalid_argument);
  EXPECT_THROW(build_lattice(0, 0), std::invalid_argument);
}

TEST(Lattice, ThreeByThreeCenter) {
  LatticeGraph g = build_lattice(3, 3);
  EXPECT_EQ(senders_of(g, 4), (std::vector<int>{1, 7, 3, 5}));
}

TEST(Lattice, ThreeByThreeTopEdgeSelfLoop) {
  LatticeGraph g = build_lattice(3, 3);
  EXPECT_EQ(senders_of(g, 1), (std::vector<int>{1, 4, 0, 2}));
}

TEST(Lattice, ThreeByThreeCornerWraps) {
  LatticeGraph g = build_lattice(3, 3);
  EXPECT_EQ(senders_of(g, 0), (std::vector<int>{6, 3, 2, 1}));
}

TEST(Lattice, EveryEdgeReceiverIsItsVertex) {
  LatticeGraph g = build_lattice(4, 6);
  for (int i = 0; i < g.vertex_count(); ++i)
    for (int s = 0; s < 4; ++s) EXPECT_EQ(g.receivers[4 * i + s], i);
}

TEST(Lattice, MatchesEnumerationUpToEightByEight) {
  for (int h = 2; h <= 8; ++h)
    for (int w = 2; w <= 8; ++w) {
      LatticeGraph g = build_lattice(h, w);
      ASSERT_EQ(g.edge_count(), 4 * h * w);
      EXPECT_EQ(g.senders, expected_senders(h, w)) << h << "x" << w;
      gal::LatticeCheck chk = gal::validate(g);
      EXPECT_TRUE(chk.ok) << h << "x" << w << ": " << chk.what;
    }
}

TEST(Lattice, CornerWrapAndSelfLoopCensus) {
  for (int h = 3; h <= 7; ++h)
    for (int w = 3; w <= 7; ++w) {
      LatticeGraph g = build_lattice(h, w);
      int wrapped = 0, one_self = 0;
      for (int i = 0; i < g.vertex_count(); ++i) {
        const int r = i / w, c = i % w;
        int self_slots = 0, wrap_slots = 0;
        for (int s = 0; s < 4; ++s) {
          const int nr = r + gal::kSlotDr[s], nc = c + gal::kSlotDc[s];
          const bool oob = nr < 0 || nr >= h || nc < 0 || nc >= w;
          if (!oob) continue;
          if (g.senders[4 * i + s] == i)
            ++self_slots;
          else
            ++wrap_slots;
        }
        if (wrap_slots > 0) ++wrapped;
        if (self_slots == 1) ++one_self;
      }
      EXPECT_EQ(wrapped, 4) << h << "x" << w;
      EXPECT_EQ(one_self, 2 * (h - 2) + 2 * (w - 2)) << h << "x" << w;
    }
}

TEST(Lattice, TwoByTwoDuplicateSendersAllowed) {
  LatticeGraph g = build_lattice(2, 2);
  EXPECT_EQ(g.senders, expected_senders(2, 2));
  EXPECT_TRUE(gal::validate(g).ok);
  // vertex 0: up wraps to 2, down is 2, left wraps to 1, right is 1
  EXPECT_EQ(senders_of(g, 0), (std::vector<int>{2, 2, 1, 1}));
}

TEST(Lattice, HorizontalFlipSymmetry) {
  // mirroring columns and swapping the left/right slots maps the graph
  // onto itself
  const int h = 5, w = 7;
  LatticeGraph g = build_lattice(h, w);
  auto phi = [&](int i) {
    const int r = i / w, c = i % w;
    return r * w + (w - 1 - c);
  };
  const int slot_swap[4] = {0, 1, 3, 2};
  for (int i = 0; i < g.vertex_count(); ++i)
    for (int s = 0; s < 4; ++s)
      EXPECT_EQ(g.senders[4 * phi(i) + slot_swap[s]], phi(g.senders[4 * i + s]))
          << "vertex " << i << " slot " << s;
}

TEST(Lattice, ValidateFlagsTamperedReceiver) {
  LatticeGraph g = build_lattice(3, 3);
  g.receivers[3] = 5;
  gal::LatticeCheck chk = gal::validate(g);
  EXPECT_FALSE(chk.ok);
  EXPECT_EQ(chk.edge, 3);
}

TEST(Lattice, ValidateFlagsTamperedSender) {
  LatticeGraph g = build_lattice(3, 4);
  g.senders[10] = g.vertex_count() + 3;
  gal::LatticeCheck chk = gal::validate(g);
  EXPECT_FALSE(chk.ok);
  EXPECT_EQ(chk.edge, 10);
}

TEST(Lattice, ValidateFlagsWrongArrayLength) {
  LatticeGraph g = build_lattice(3, 3);
  g.senders.pop_back();
  EXPECT_FALSE(gal::validate(g).ok);
}
