#pragma once

#include <cstdint>
#include <vector>

#include "tkp/tensor.hpp"

namespace tkp {

struct AdamHyperparams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameter tensors. Moments are
/// kept in double regardless of the parameter precision.
template <typename T>
class Adam {
 public:
  Adam(std::vector<BasicTensor<T>> params, AdamHyperparams hp = {});

  /// Applies one update from the accumulated grads, then clears them.
  /// Throws ContractError if any parameter has no grad.
  void step();

  void zero_grad();
  void set_learning_rate(double lr) { hp_.learning_rate = lr; }
  const AdamHyperparams& hyperparams() const { return hp_; }
  std::uint64_t step_count() const { return steps_; }
  const std::vector<BasicTensor<T>>& params() const { return params_; }

 private:
  std::vector<BasicTensor<T>> params_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  AdamHyperparams hp_;
  std::uint64_t steps_ = 0;
};

}  // namespace tkp
