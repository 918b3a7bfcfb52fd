#include "tkp/adam.hpp"

#include <cmath>
#include <string>

#include "tkp/errors.hpp"

namespace tkp {

template <typename T>
Adam<T>::Adam(std::vector<BasicTensor<T>> params, AdamHyperparams hp)
    : params_(std::move(params)), hp_(hp) {
  if (!(hp_.learning_rate > 0.0)) throw ConfigError("Adam: learning rate must be positive");
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const auto& p : params_) {
    first_moment_.emplace_back(p.numel(), 0.0);
    second_moment_.emplace_back(p.numel(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("Adam: parameter " + std::to_string(i) + " of shape " +
                          shape_string(params_[i].shape()) + " has no grad");
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(hp_.beta1, t);
  const double bias2 = 1.0 - std::pow(hp_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto values = params_[i].mutable_values();
    auto grad = params_[i].grad();
    auto& m = first_moment_[i];
    auto& v = second_moment_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = static_cast<double>(grad[j]);
      m[j] = hp_.beta1 * m[j] + (1.0 - hp_.beta1) * g;
      v[j] = hp_.beta2 * v[j] + (1.0 - hp_.beta2) * g * g;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      values[j] = static_cast<T>(static_cast<double>(values[j]) -
                                 hp_.learning_rate * m_hat / (std::sqrt(v_hat) + hp_.epsilon));
    }
  }
  zero_grad();
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace tkp
