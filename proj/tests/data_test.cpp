#include <cstdint>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gal/data.hpp"
#include "gal/io.hpp"
#include "gal/rng.hpp"
#include "gal/tensor.hpp"

using gal::Modality;
using gal::Rng;
using gal::SegSample;
using gal::Shape;
using gal::Tensor;

namespace {

int label_mass(const SegSample& s) {
  return std::accumulate(s.label.begin(), s.label.end(), 0);
}

// Variance of image values over background (label 0) pixels, channel 0.
double background_variance(const SegSample& s) {
  double sum = 0, sum2 = 0;
  int n = 0;
  for (int p = 0; p < s.height() * s.width(); ++p) {
    if (s.label[p]) continue;
    const double v = s.image[static_cast<std::size_t>(p) * s.channels()];
    sum += v;
    sum2 += v * v;
    ++n;
  }
  if (n == 0) return 0;
  const double mean = sum / n;
  return sum2 / n - mean * mean;
}

}  // namespace

TEST(Synth, SameSeedIsBitIdentical) {
  auto a = gal::synth_generate(Modality::kRgb, 3, 16, 16, 5);
  auto b = gal::synth_generate(Modality::kRgb, 3, 16, 16, 5);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image.vec(), b[i].image.vec());
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_EQ(a[i].id, b[i].id);
  }
}

TEST(Synth, DifferentSeedsDiffer) {
  auto a = gal::synth_generate(Modality::kTdisp, 1, 16, 16, 5);
  auto b = gal::synth_generate(Modality::kTdisp, 1, 16, 16, 6);
  EXPECT_NE(a[0].image.vec(), b[0].image.vec());
}

TEST(Synth, SamplesAreValidAndInRange) {
  for (Modality m : {Modality::kRgb, Modality::kDisp, Modality::kTdisp}) {
    auto samples = gal::synth_generate(m, 4, 20, 24, 7);
    ASSERT_EQ(samples.size(), 4u);
    for (const SegSample& s : samples) {
      gal::validate_sample(s);
      EXPECT_EQ(s.height(), 20);
      EXPECT_EQ(s.width(), 24);
      EXPECT_EQ(s.channels(), gal::modality_channels(m));
      for (std::size_t i = 0; i < s.image.numel(); ++i) {
        EXPECT_GE(s.image[i], 0.0f);
        EXPECT_LE(s.image[i], 1.0f);
      }
    }
  }
}

TEST(Synth, PotholeCountsSpanZeroToThree) {
  auto samples = gal::synth_generate(Modality::kTdisp, 40, 32, 32, 9);
  int empty = 0, filled = 0;
  for (const SegSample& s : samples) {
    if (label_mass(s) == 0)
      ++empty;
    else
      ++filled;
  }
  EXPECT_GT(empty, 0);
  EXPECT_GT(filled, 0);
}

TEST(Synth, RejectsBadArguments) {
  EXPECT_THROW(gal::synth_generate(Modality::kRgb, 0, 16, 16, 1),
               std::invalid_argument);
  EXPECT_THROW(gal::synth_generate(Modality::kRgb, 1, 15, 16, 1),
               std::invalid_argument);
}

TEST(Synth, ThermalBackgroundIsFlatterThanDisparity) {
  auto tdisp = gal::synth_generate(Modality::kTdisp, 100, 32, 32, 13);
  auto disp = gal::synth_generate(Modality::kDisp, 100, 32, 32, 13);
  double tvar = 0, dvar = 0;
  for (int i = 0; i < 100; ++i) {
    tvar += background_variance(tdisp[i]);
    dvar += background_variance(disp[i]);
  }
  EXPECT_LT(tvar, dvar);
}

TEST(Augment, ZeroRotationAndShiftAreExactIdentities) {
  SegSample s = gal::synth_generate(Modality::kRgb, 1, 16, 16, 21)[0];
  SegSample r = gal::rotate(s, 0.0);
  EXPECT_EQ(r.image.vec(), s.image.vec());
  EXPECT_EQ(r.label, s.label);
  SegSample t = gal::translate(s, 0, 0);
  EXPECT_EQ(t.image.vec(), s.image.vec());
  EXPECT_EQ(t.label, s.label);
}

TEST(Augment, FlipIsAnInvolution) {
  SegSample s = gal::synth_generate(Modality::kDisp, 1, 16, 20, 22)[0];
  SegSample ff = gal::flip_h(gal::flip_h(s));
  EXPECT_EQ(ff.image.vec(), s.image.vec());
  EXPECT_EQ(ff.label, s.label);
}

TEST(Augment, FlipMirrorsColumns) {
  SegSample s = gal::synth_generate(Modality::kTdisp, 1, 16, 16, 23)[0];
  SegSample f = gal::flip_h(s);
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x < s.width(); ++x)
      EXPECT_EQ(f.image.at(y, x, 0), s.image.at(y, s.width() - 1 - x, 0));
}

TEST(Augment, SmallRotationsRoughlyPreserveLabelMass) {
  Rng rng(31);
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 200; ++seed) {
    ASSERT_LT(seed, 2000u) << "not enough labeled samples";
    SegSample s = gal::synth_generate(Modality::kTdisp, 1, 32, 32, 100 + seed)[0];
    const int mass = label_mass(s);
    if (mass < 25) continue;
    SegSample r = gal::rotate(s, rng.uniform(-10.0, 10.0));
    const int rmass = label_mass(r);
    EXPECT_GE(rmass, static_cast<int>(0.85 * mass)) << "seed " << seed;
    EXPECT_LE(rmass, static_cast<int>(1.15 * mass) + 1) << "seed " << seed;
    ++checked;
  }
}

TEST(Augment, DeterministicPerSeed) {
  SegSample s = gal::synth_generate(Modality::kTdisp, 1, 16, 16, 24)[0];
  SegSample a = gal::augment(s, 77);
  SegSample b = gal::augment(s, 77);
  EXPECT_EQ(a.image.vec(), b.image.vec());
  EXPECT_EQ(a.label, b.label);
}

TEST(Galt, RoundTripIsBitIdentical) {
  Rng rng(41);
  Tensor<float> t = Tensor<float>::uniform(Shape{3, 4, 2}, rng, -5, 5);
  const std::string path = testing::TempDir() + "/roundtrip.galt";
  gal::save_galt(t, path);
  Tensor<float> back = gal::load_galt(path);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(back.vec(), t.vec());
}

TEST(Galt, TwoByThreeRecordIs44Bytes) {
  Tensor<float> t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  std::string out;
  gal::detail::encode_galt(out, t);
  EXPECT_EQ(out.size(), 44u);
  EXPECT_EQ(out.substr(0, 4), "GALT");
}

TEST(Galt, TruncationReportsExpectedVersusActual) {
  Tensor<float> t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  std::string out;
  gal::detail::encode_galt(out, t);
  const std::string path = testing::TempDir() + "/truncated.galt";
  gal::detail::write_file(path, out.substr(0, out.size() - 8));
  try {
    gal::load_galt(path);
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 24 payload bytes"), std::string::npos) << msg;
    EXPECT_NE(msg.find("have 16"), std::string::npos) << msg;
  }
}

TEST(Galt, RejectsBadMagicAndTrailingBytes) {
  const std::string path = testing::TempDir() + "/bad.galt";
  gal::detail::write_file(path, "NOPE----------------");
  EXPECT_THROW(gal::load_galt(path), std::runtime_error);
  Tensor<float> t(Shape{1}, {2.5f});
  std::string out;
  gal::detail::encode_galt(out, t);
  out += "x";
  gal::detail::write_file(path, out);
  EXPECT_THROW(gal::load_galt(path), std::runtime_error);
}

TEST(Checkpoint, NamedTensorsRoundTrip) {
  Rng rng(42);
  gal::NamedTensors entries;
  entries.emplace_back("alpha", Tensor<float>::uniform(Shape{2, 2}, rng, -1, 1));
  entries.emplace_back("beta", Tensor<float>::uniform(Shape{3}, rng, -1, 1));
  const std::string path = testing::TempDir() + "/entries.gckpt";
  gal::save_checkpoint(entries, path);
  gal::NamedTensors back = gal::load_checkpoint(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].first, "alpha");
  EXPECT_EQ(back[0].second.vec(), entries[0].second.vec());
  EXPECT_EQ(back[1].first, "beta");
  EXPECT_EQ(back[1].second.vec(), entries[1].second.vec());
  EXPECT_THROW(gal::checkpoint_entry(back, "gamma"), std::runtime_error);
}

TEST(Raster, BinaryPgmRoundTrip) {
  const std::string path = testing::TempDir() + "/gray.pgm";
  gal::write_pgm({0, 255, 0, 255}, 2, 2, path);
  Tensor<float> img = gal::load_raster(path);
  EXPECT_EQ(img.shape(), (Shape{2, 2, 1}));
  EXPECT_EQ(img.vec(), (std::vector<float>{0, 1, 0, 1}));
  int h = 0, w = 0;
  std::vector<int> mask = gal::load_mask(path, &h, &w);
  EXPECT_EQ(h, 2);
  EXPECT_EQ(w, 2);
  EXPECT_EQ(mask, (std::vector<int>{0, 1, 0, 1}));
}

TEST(Raster, BinaryPpmRoundTrip) {
  const std::string path = testing::TempDir() + "/color.ppm";
  gal::write_ppm({255, 0, 0, 0, 255, 0}, 1, 2, path);
  Tensor<float> img = gal::load_raster(path);
  EXPECT_EQ(img.shape(), (Shape{1, 2, 3}));
  EXPECT_EQ(img.at(0, 0, 0), 1.0f);
  EXPECT_EQ(img.at(0, 0, 1), 0.0f);
  EXPECT_EQ(img.at(0, 1, 1), 1.0f);
}

TEST(Raster, HeaderCommentsAreSkipped) {
  const std::string path = testing::TempDir() + "/comments.pgm";
  std::string bytes = "P5\n# made by hand\n# second note\n2 1\n255\n";
  bytes.push_back(static_cast<char>(7));
  bytes.push_back(static_cast<char>(250));
  gal::detail::write_file(path, bytes);
  Tensor<float> img = gal::load_raster(path);
  EXPECT_EQ(img.shape(), (Shape{1, 2, 1}));
  EXPECT_NEAR(img[0], 7.0f / 255.0f, 1e-7);
  EXPECT_NEAR(img[1], 250.0f / 255.0f, 1e-7);
}

TEST(Raster, RejectsAsciiAndSixteenBit) {
  const std::string ascii_path = testing::TempDir() + "/ascii.pgm";
  gal::detail::write_file(ascii_path, "P2\n2 2\n255\n0 1 2 3\n");
  try {
    gal::load_raster(ascii_path);
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("ASCII"), std::string::npos);
  }
  const std::string deep_path = testing::TempDir() + "/deep.pgm";
  std::string bytes = "P5\n2 1\n65535\n";
  bytes.append(4, '\0');
  gal::detail::write_file(deep_path, bytes);
  try {
    gal::load_raster(deep_path);
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("16-bit"), std::string::npos);
  }
}

TEST(Raster, MaskRejectsColorImages) {
  const std::string path = testing::TempDir() + "/color_mask.ppm";
  gal::write_ppm({0, 0, 0}, 1, 1, path);
  EXPECT_THROW(gal::load_mask(path), std::runtime_error);
}

TEST(Raster, WriteRasterQuantizes) {
  const std::string path = testing::TempDir() + "/quant.pgm";
  Tensor<float> t(Shape{1, 2, 1}, {0.5f, 2.0f});
  gal::write_raster(t, path);
  Tensor<float> back = gal::load_raster(path);
  EXPECT_NEAR(back[0], 128.0f / 255.0f, 1e-7);
  EXPECT_EQ(back[1], 1.0f);
}

TEST(Manifest, RoundTripResolvesRelativePaths) {
  const std::string dir = testing::TempDir();
  const std::string path = dir + "/manifest.txt";
  std::vector<gal::ManifestEntry> entries = {
      {"s0", "tdisp", "images/s0.pgm", "labels/s0.pgm"},
      {"s1", "rgb", "images/s1.ppm", "labels/s1.pgm"}};
  gal::write_manifest(entries, path);
  std::vector<gal::ManifestEntry> back = gal::read_manifest(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].id, "s0");
  EXPECT_EQ(back[0].modality, "tdisp");
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  EXPECT_EQ(back[0].image_path, (base / "images/s0.pgm").string());
  EXPECT_EQ(back[1].image_path, (base / "images/s1.ppm").string());
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  const std::string path = testing::TempDir() + "/bad_manifest.txt";
  gal::detail::write_file(path, "# header\ns0 tdisp a.pgm b.pgm\ns1 sonar a.pgm b.pgm\n");
  try {
    gal::read_manifest(path);
    FAIL() << "expected runtime_error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":3:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("sonar"), std::string::npos) << msg;
  }
  gal::detail::write_file(path, "s0 tdisp a.pgm\n");
  EXPECT_THROW(gal::read_manifest(path), std::runtime_error);
}
