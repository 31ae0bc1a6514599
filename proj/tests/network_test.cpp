#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gal/data.hpp"
#include "gal/gradcheck.hpp"
#include "gal/network.hpp"
#include "gal/train.hpp"

using gal::NetConfig;
using gal::NetParams;
using gal::NetTaps;
using gal::NetVars;
using gal::ParamBinder;
using gal::Rng;
using gal::Shape;
using gal::Tape;
using gal::Tensor;
using gal::Var;

namespace {

NetConfig small_cfg(bool with_gal) {
  NetConfig cfg;
  cfg.base = 2;
  cfg.with_gal = with_gal;
  cfg.in_channels = 1;
  return cfg;
}

Tensor<float> forward_once(NetParams<float>& params, const Tensor<float>& x,
                           NetTaps* taps = nullptr) {
  Tape<float> tape;
  ParamBinder<float> binder;
  NetVars vars = gal::bind_net(tape, binder, params);
  return tape.value(gal::net_forward(tape, tape.leaf(x), vars, params.config, taps));
}

}  // namespace

TEST(Network, ForwardShape32x32) {
  Rng rng(1);
  NetConfig cfg;  // base 16, GAL branch on
  for (bool with_gal : {true, false}) {
    cfg.with_gal = with_gal;
    NetParams<float> params = NetParams<float>::init(cfg, rng);
    Tensor<float> x = Tensor<float>::uniform(Shape{32, 32, 1}, rng, 0, 1);
    EXPECT_EQ(forward_once(params, x).shape(), (Shape{32, 32, 2}));
  }
}

TEST(Network, GalBranchAddsParameters) {
  Rng r1(2), r2(2);
  NetConfig cfg;
  cfg.with_gal = true;
  NetParams<float> with = NetParams<float>::init(cfg, r1);
  cfg.with_gal = false;
  NetParams<float> without = NetParams<float>::init(cfg, r2);
  EXPECT_GT(with.param_count(), without.param_count());
}

TEST(Network, RejectsBadInputs) {
  Rng rng(3);
  NetParams<float> params = NetParams<float>::init(small_cfg(true), rng);
  Tape<float> tape;
  ParamBinder<float> binder;
  NetVars vars = gal::bind_net(tape, binder, params);
  EXPECT_THROW(
      gal::net_forward(tape, tape.leaf(Tensor<float>(Shape{32, 32, 3})), vars,
                       params.config),
      std::invalid_argument);
  EXPECT_THROW(
      gal::net_forward(tape, tape.leaf(Tensor<float>(Shape{30, 32, 1})), vars,
                       params.config),
      std::invalid_argument);
  EXPECT_THROW(gal::net_forward(tape, tape.leaf(Tensor<float>(Shape{4, 4, 1})),
                                vars, params.config),
               std::invalid_argument);
}

TEST(Network, ConfigValidationRejectsOddBase) {
  NetConfig cfg;
  cfg.base = 3;
  EXPECT_THROW(gal::validate_config(cfg), std::invalid_argument);
  cfg.base = 16;
  cfg.in_channels = 2;
  EXPECT_THROW(gal::validate_config(cfg), std::invalid_argument);
}

TEST(Network, TapsExposeEncoderAndGalFeatures) {
  Rng rng(4);
  NetParams<float> params = NetParams<float>::init(small_cfg(true), rng);
  Tensor<float> x = Tensor<float>::uniform(Shape{16, 16, 1}, rng, 0, 1);
  NetTaps taps;
  forward_once(params, x, &taps);
  Tape<float> tape;
  ParamBinder<float> binder;
  NetVars vars = gal::bind_net(tape, binder, params);
  NetTaps t2;
  gal::net_forward(tape, tape.leaf(x), vars, params.config, &t2);
  EXPECT_EQ(tape.value(t2.encoder).shape(), (Shape{4, 4, 4}));
  EXPECT_EQ(tape.value(t2.gal).shape(), (Shape{4, 4, 2}));
}

TEST(Network, EndToEndGradcheck8x8) {
  const NetConfig cfg = small_cfg(true);
  auto rebuild = [](const std::vector<Var>& v) {
    NetVars nv;
    nv.enc1_w = v[2];
    nv.enc1_b = v[3];
    nv.enc2_w = v[4];
    nv.enc2_b = v[5];
    nv.enc3_w = v[6];
    nv.enc3_b = v[7];
    nv.gal.edge_w1 = v[8];
    nv.gal.edge_b1 = v[9];
    nv.gal.edge_w2 = v[10];
    nv.gal.edge_b2 = v[11];
    nv.gal.vertex_w1 = v[12];
    nv.gal.vertex_b1 = v[13];
    nv.gal.vertex_w2 = v[14];
    nv.gal.vertex_b2 = v[15];
    nv.gal.mod_w = v[16];
    nv.gal.mod_b = v[17];
    nv.fuse_w = v[18];
    nv.fuse_b = v[19];
    nv.dec_w = v[20];
    nv.dec_b = v[21];
    return nv;
  };
  auto f = [&](Tape<double>& t, const std::vector<Var>& v) {
    NetVars nv = rebuild(v);
    Var out = gal::net_forward(t, v[0], nv, cfg);
    return t.reduce_sum(t.mul(out, v[1]));
  };
  auto make = [&](Rng& rng) {
    std::vector<Tensor<double>> inputs;
    inputs.push_back(Tensor<double>::uniform(Shape{8, 8, 1}, rng, -1, 1));
    inputs.push_back(Tensor<double>::uniform(Shape{8, 8, 2}, rng, -1, 1));
    NetParams<double> p = NetParams<double>::init(cfg, rng);
    for (gal::Param<double>* q : p.params()) {
      if (q->value.rank() == 1)
        q->value = Tensor<double>::uniform(q->value.shape(), rng, -0.1, 0.1);
      inputs.push_back(q->value);
    }
    return inputs;
  };
  std::vector<Tensor<double>> inputs = gal::kink_free_inputs(7, 1e-3, make, f);
  const double err = gal::grad_check(f, inputs, 1e-5);
  EXPECT_LE(err, 1e-4);
}

TEST(Predict, ArgmaxWithBackgroundTies) {
  Tensor<float> logits(Shape{1, 2, 2}, {0.2f, 0.9f, 0.7f, 0.7f});
  EXPECT_EQ(gal::predict(logits), (std::vector<int>{1, 0}));
}

TEST(ActivationMap, ConstantFeatureExportsZeros) {
  Tensor<float> f(Shape{2, 3, 4}, 0.8f);
  const std::vector<uint8_t> m = gal::export_activation_map(f);
  ASSERT_EQ(m.size(), 6u);
  for (uint8_t v : m) EXPECT_EQ(v, 0);
}

TEST(ActivationMap, SingleChannelMinMaxScales) {
  Tensor<float> f(Shape{1, 3, 1}, {0.0f, 1.0f, 0.5f});
  EXPECT_EQ(gal::export_activation_map(f), (std::vector<uint8_t>{0, 255, 128}));
}

TEST(ActivationMap, ChannelMeanZeroMapsToMidGray) {
  Tensor<float> f(Shape{1, 3, 2}, {-1, -1, 1, 1, -1, 1});
  // channel means -1, 1, 0 -> 0, 255, 128
  EXPECT_EQ(gal::export_activation_map(f), (std::vector<uint8_t>{0, 255, 128}));
}

TEST(Network, SeveredGalBranchIgnoresGalParams) {
  Rng rng(5);
  NetParams<float> params = NetParams<float>::init(small_cfg(false), rng);
  Tensor<float> x = Tensor<float>::uniform(Shape{16, 16, 1}, rng, 0, 1);
  Tensor<float> before = forward_once(params, x);
  Rng junk(99);
  params.gal = gal::GalParams<float>::init(2 * params.config.base, junk);
  Tensor<float> after = forward_once(params, x);
  EXPECT_EQ(before.vec(), after.vec());
}

TEST(Network, CheckpointRoundTripIsExact) {
  Rng rng(6);
  NetParams<float> params = NetParams<float>::init(small_cfg(true), rng);
  const std::string path = testing::TempDir() + "/net_roundtrip.gckpt";
  gal::save_net(params, path);
  NetParams<float> loaded = gal::load_net<float>(path);
  EXPECT_EQ(loaded.config.base, params.config.base);
  EXPECT_EQ(loaded.config.with_gal, params.config.with_gal);
  EXPECT_EQ(loaded.config.in_channels, params.config.in_channels);
  EXPECT_EQ(loaded.config.classes, params.config.classes);
  auto a = params.named(), b = loaded.named();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(a[i].second->value.vec(), b[i].second->value.vec());
  }
}

TEST(Training, LossDecreasesForSomeLearningRate) {
  std::vector<gal::SegSample> samples =
      gal::synth_generate(gal::Modality::kTdisp, 4, 16, 16, 11);
  NetConfig cfg = small_cfg(true);
  cfg.base = 4;
  bool any = false;
  for (double lr : {1e-1, 1e-2, 1e-3}) {
    gal::TrainConfig tc;
    tc.epochs = 3;
    tc.lr = lr;
    tc.augment = false;
    tc.seed = 17;
    NetParams<float> params = gal::init_net<float>(cfg, tc.seed);
    std::vector<double> losses = gal::train_net(params, samples, tc);
    ASSERT_EQ(losses.size(), 3u);
    if (std::isfinite(losses.back()) && losses.back() < losses.front()) any = true;
  }
  EXPECT_TRUE(any);
}

TEST(Network, ForwardBackwardStaysFiniteAcrossSeeds) {
  const NetConfig cfg = small_cfg(true);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    NetParams<float> params = NetParams<float>::init(cfg, rng);
    Tape<float> tape;
    ParamBinder<float> binder;
    NetVars vars = gal::bind_net(tape, binder, params);
    Var x = tape.leaf(Tensor<float>::uniform(Shape{8, 8, 1}, rng, 0, 1));
    Var logits = gal::net_forward(tape, x, vars, cfg);
    std::vector<int> labels(64);
    for (int& l : labels) l = static_cast<int>(rng.uniform_int(2));
    Var loss = tape.softmax_cross_entropy(logits, labels);
    tape.backward(loss);
    for (const auto& n : tape.nodes()) {
      for (std::size_t i = 0; i < n.value.numel(); ++i)
        ASSERT_TRUE(std::isfinite(n.value[i])) << "seed " << seed;
      for (std::size_t i = 0; i < n.grad.numel(); ++i)
        ASSERT_TRUE(std::isfinite(n.grad[i])) << "seed " << seed;
    }
  }
}
