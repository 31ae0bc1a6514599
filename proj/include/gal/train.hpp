#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "gal/data.hpp"
#include "gal/metrics.hpp"
#include "gal/network.hpp"
#include "gal/optimizer.hpp"
#include "gal/rng.hpp"

namespace gal {

struct TrainConfig {
  int epochs = 30;
  double lr = 0.01;
  double momentum = 0.9;
  bool augment = true;
  std::uint64_t seed = 0;
};

// Seed-splitting scheme: every run derives child streams from one root seed —
// stream 0 initializes parameters, stream 1 drives the sample order, stream 2
// drives augmentation. Paired runs that differ only in architecture therefore
// see identical data order and augmentation draws.
inline constexpr std::uint64_t kSeedParams = 0;
inline constexpr std::uint64_t kSeedOrder = 1;
inline constexpr std::uint64_t kSeedAugment = 2;

template <typename T>
NetParams<T> init_net(const NetConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng(seed).child(kSeedParams);
  return NetParams<T>::init(cfg, rng);
}

// Plain online SGD with momentum, one step per sample, seeded shuffle each
// epoch. Returns the mean per-sample loss of each epoch.
template <typename T>
std::vector<double> train_net(NetParams<T>& params,
                              const std::vector<SegSample>& samples,
                              const TrainConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("train_net: no training samples");
  if (cfg.epochs < 1)
    throw std::invalid_argument("train_net: epochs must be >= 1, got " +
                                std::to_string(cfg.epochs));
  for (const SegSample& s : samples) {
    validate_sample(s);
    if (s.channels() != params.config.in_channels)
      throw std::invalid_argument("train_net: sample " + s.id + " has " +
                                  std::to_string(s.channels()) +
                                  " channels, network expects " +
                                  std::to_string(params.config.in_channels));
  }
  Rng order_rng = Rng(cfg.seed).child(kSeedOrder);
  Rng aug_rng = Rng(cfg.seed).child(kSeedAugment);
  std::vector<Param<T>*> plist = params.params();
  std::vector<double> epoch_loss;
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = order_rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    for (int idx : order) {
      const SegSample* s = &samples[idx];
      SegSample aug;
      if (cfg.augment) {
        aug = augment(*s, aug_rng);
        s = &aug;
      }
      Tape<T> tape;
      ParamBinder<T> binder;
      NetVars vars = bind_net(tape, binder, params);
      Var x = tape.leaf(s->image.template cast<T>());
      Var logits = net_forward(tape, x, vars, params.config);
      Var loss = tape.softmax_cross_entropy(logits, s->label);
      tape.backward(loss);
      binder.accumulate(tape);
      sgdm_step(plist, cfg.lr, cfg.momentum);
      loss_sum += static_cast<double>(tape.value(loss)[0]);
    }
    epoch_loss.push_back(loss_sum / static_cast<double>(samples.size()));
  }
  return epoch_loss;
}

// Forward pass only; returns the predicted mask.
template <typename T>
std::vector<int> predict_mask(NetParams<T>& params, const SegSample& s) {
  Tape<T> tape;
  ParamBinder<T> binder;
  NetVars vars = bind_net(tape, binder, params);
  Var x = tape.leaf(s.image.template cast<T>());
  Var logits = net_forward(tape, x, vars, params.config);
  return predict(tape.value(logits).template cast<float>());
}

template <typename T>
MetricRow evaluate_net(NetParams<T>& params, const std::vector<SegSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("evaluate_net: no samples");
  ConfusionCounts counts;
  for (const SegSample& s : samples)
    counts += confusion(predict_mask(params, s), s.label);
  return metrics_from_counts(counts);
}

}  // namespace gal
