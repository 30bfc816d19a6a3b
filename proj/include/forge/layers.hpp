#pragma once

#include <vector>

#include "forge/tensor.hpp"

// Forward/backward kernels for the denoiser. Backward functions accumulate (+=)
// into parameter gradients and overwrite input gradients unless noted.
namespace forge::nn {

/// Same-padding convolution, stride 1, kernel 1 or 3. weight is [out][in][k][k].
template <typename T>
void conv2d_forward(const Tensor<T>& x, const T* weight, const T* bias, int out_channels, int kernel, Tensor<T>& y);

/// dx may be null when the input gradient is not needed.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const T* weight, int out_channels, int kernel, const Tensor<T>& dy,
                     T* dweight, T* dbias, Tensor<T>* dx);

/// Per-sample, per-group statistics saved by the forward pass.
struct GroupNormStats {
  std::vector<double> mean;
  std::vector<double> rstd;
};

template <typename T>
void group_norm_forward(const Tensor<T>& x, const T* gamma, const T* beta, int groups, double eps, Tensor<T>& y,
                        GroupNormStats& stats);

template <typename T>
void group_norm_backward(const Tensor<T>& x, const T* gamma, int groups, const GroupNormStats& stats,
                         const Tensor<T>& dy, T* dgamma, T* dbeta, Tensor<T>& dx);

/// x * sigmoid(x).
template <typename T>
void silu_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void silu_backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx);
template <typename T>
T silu(T v);
template <typename T>
T silu_grad(T v);

template <typename T>
void avg_pool2_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void avg_pool2_backward(const Tensor<T>& dy, Tensor<T>& dx);

template <typename T>
void upsample2_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void upsample2_backward(const Tensor<T>& dy, Tensor<T>& dx);

/// out = [a | b] along channels.
template <typename T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out);
/// Splits a gradient of concat(a, b) back into its two parts.
template <typename T>
void split_channels(const Tensor<T>& d, int a_channels, Tensor<T>& da, Tensor<T>& db);

/// y[n][o] = sum_i W[o][i] x[n][i] + b[o]; x is rows x in, y is rows x out.
template <typename T>
void linear_forward(const T* x, int rows, int in, int out, const T* weight, const T* bias, T* y);
/// dx may be null.
template <typename T>
void linear_backward(const T* x, int rows, int in, int out, const T* weight, const T* dy, T* dweight, T* dbias,
                     T* dx);

/// x[n][c] += bias[n][c] over every pixel.
template <typename T>
void add_channel_bias(Tensor<T>& x, const T* bias);
/// dbias[n][c] = sum over pixels of dy[n][c].
template <typename T>
void channel_bias_backward(const Tensor<T>& dy, T* dbias);

}  // namespace forge::nn
