#pragma once

#include <span>
#include <vector>

#include "tkp/tensor.hpp"

namespace tkp {

enum class ElementwiseKind { add, sub, mul };
enum class Activation { relu, sigmoid, exponential };

/// Inputs above this are clamped before exponentiation (and get zero grad),
/// keeping the exponential activation finite in 32-bit.
inline constexpr double kExpInputCeiling = 30.0;

/// a (op) b. `b` must match `a` or equal a trailing suffix of a's shape, in
/// which case it is repeated along a's leading dimensions.
template <typename T>
BasicTensor<T> elementwise(ElementwiseKind kind, const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseKind::add, a, b);
}
template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseKind::sub, a, b);
}
template <typename T>
BasicTensor<T> operator*(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseKind::mul, a, b);
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

/// [M x K] . [K x N] -> [M x N]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// "Same" cross-correlation of a C_in x H x W map with C_out x C_in x k x k
/// kernels. `padding` must be (k - 1) / 2 with k odd.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                      const BasicTensor<T>& bias, std::size_t padding);

/// C x H x W -> C x 2H x 2W, half-pixel (align_corners = false) sampling.
template <typename T>
BasicTensor<T> upsample_bilinear_2x(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> activation(Activation kind, const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) { return activation(Activation::relu, x); }
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) { return activation(Activation::sigmoid, x); }
template <typename T>
BasicTensor<T> exponential(const BasicTensor<T>& x) { return activation(Activation::exponential, x); }

/// Bilinear lookup in a D x Ra x Rb plane. coords is N x 2 with (a, b) in
/// [0,1]; 0 and 1 land on the first and last lattice nodes. Out-of-range
/// coordinates are clamped. Returns N x D; coords are treated as constants.
template <typename T>
BasicTensor<T> grid_sample_bilinear(const BasicTensor<T>& plane, const BasicTensor<T>& coords);

template <typename T>
BasicTensor<T> concat(std::span<const BasicTensor<T>> tensors, std::size_t axis);

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& tensors, std::size_t axis) {
  return concat(std::span<const BasicTensor<T>>(tensors), axis);
}

/// Rows [begin, end) along axis 0.
template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& a, std::size_t begin, std::size_t end);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);

/// 2-D transpose.
template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a);

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a);

/// mean((a - b)^2); gradient flows to both sides.
template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace tkp
