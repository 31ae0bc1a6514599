#pragma once

#include <utility>
#include <vector>

#include "gal/tape.hpp"
#include "gal/tensor.hpp"

namespace gal {

// Learnable weight: value plus gradient accumulator and momentum velocity,
// all of identical shape. Gradients are zeroed by the optimizer step.
template <typename T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> velocity;

  Param() = default;
  explicit Param(Tensor<T> v)
      : value(std::move(v)), grad(value.shape()), velocity(value.shape()) {}
};

// Enters params into a tape as leaves and pulls their gradients back out
// after backward(). One binder per forward pass.
template <typename T>
class ParamBinder {
 public:
  Var bind(Tape<T>& tape, Param<T>& p) {
    Var v = tape.leaf(p.value);
    binds_.emplace_back(&p, v);
    return v;
  }

  void accumulate(const Tape<T>& tape) {
    for (auto& [p, v] : binds_) {
      const Tensor<T>& g = tape.grad(v);
      for (std::size_t i = 0; i < g.numel(); ++i) p->grad[i] += g[i];
    }
  }

 private:
  std::vector<std::pair<Param<T>*, Var>> binds_;
};

// SGD with momentum: velocity <- momentum*velocity + grad;
// value <- value - lr*velocity; grad zeroed.
template <typename T>
void sgdm_step(const std::vector<Param<T>*>& params, double lr, double momentum) {
  for (Param<T>* p : params) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      p->velocity[i] = static_cast<T>(momentum) * p->velocity[i] + p->grad[i];
      p->value[i] -= static_cast<T>(lr) * p->velocity[i];
      p->grad[i] = T(0);
    }
  }
}

}  // namespace gal
