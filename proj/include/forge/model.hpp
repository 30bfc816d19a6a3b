#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forge/layers.hpp"
#include "forge/tensor.hpp"

namespace forge {

/// Architecture of the conditional denoiser.
///
/// Every scale runs `base_width` channels; `depth` scales means depth - 1
/// average-pool downsamplings, so inputs must be multiples of 2^(depth-1).
struct DenoiserConfig {
  int image_channels = 3;
  int base_width = 32;
  int depth = 4;
  int max_groups = 8;

  int input_channels() const { return 2 * image_channels + 1; }
  int time_dim() const { return base_width; }
  int time_hidden() const { return 2 * base_width; }
  int size_multiple() const { return 1 << (depth - 1); }
  /// Largest divisor of base_width not above max_groups.
  int groups() const;
  void validate() const;

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// One named parameter tensor inside the flat parameter vector.
struct ParamInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Sinusoidal embedding of a diffusion step: [sin(t f_0..f_{d/2-1}), cos(...)].
std::vector<double> timestep_embedding(int step, int dim);

namespace nn {

template <typename T>
struct BlockActivations {
  Tensor<T> input;
  Tensor<T> conv1;
  Tensor<T> pre1;  // group-normed conv1 plus time bias
  Tensor<T> act1;
  Tensor<T> conv2;
  Tensor<T> pre2;
  Tensor<T> output;
  GroupNormStats stats1;
  GroupNormStats stats2;
};

/// Everything the backward pass needs from one forward call.
template <typename T>
struct Activations {
  std::vector<int> steps;
  std::vector<T> embedding;    // N x time_dim
  std::vector<T> time_pre;     // N x time_hidden
  std::vector<T> time_hidden;  // N x time_hidden, after SiLU
  std::vector<BlockActivations<T>> encoder;
  std::vector<BlockActivations<T>> decoder;  // index = scale level, last entry unused
  Tensor<T> output;
};

}  // namespace nn

/// Attention-free UNet predicting the clean image from (x_t, y, M, t).
///
/// Block = conv3x3 -> GroupNorm -> +time bias -> SiLU -> conv3x3 -> GroupNorm -> SiLU.
/// Encoder scales are joined by 2x2 average pooling; decoder scales upsample by
/// nearest neighbour and concatenate the matching encoder output. A 1x1 conv
/// maps back to image channels. Parameters live in one flat vector so the
/// optimizer, checkpoints and gradient checks see the same layout.
template <typename T>
class Denoiser {
 public:
  explicit Denoiser(const DenoiserConfig& config, std::uint64_t init_seed = 0);

  const DenoiserConfig& config() const { return config_; }
  std::size_t parameter_count() const { return values_.size(); }
  const std::vector<ParamInfo>& parameter_info() const { return params_; }
  std::span<T> parameters() { return values_; }
  std::span<const T> parameters() const { return values_; }
  const ParamInfo& find_parameter(const std::string& name) const;

  /// Inputs are N x C x H x W (x_t, y) and N x 1 x H x W (mask in {0,1}); steps has N entries.
  nn::Tensor<T> forward(const nn::Tensor<T>& x_t, const nn::Tensor<T>& y, const nn::Tensor<T>& mask,
                        std::span<const int> steps, nn::Activations<T>* acts = nullptr) const;

  /// Accumulates dLoss/dParams into `grad` (same layout as parameters()).
  void backward(const nn::Activations<T>& acts, const nn::Tensor<T>& grad_output, std::span<T> grad) const;

 private:
  struct BlockLayout {
    int in = 0;
    int out = 0;
    std::size_t conv1_w, conv1_b, norm1_g, norm1_b, time_w, time_b, conv2_w, conv2_b, norm2_g, norm2_b;
  };

  std::size_t add_param(const std::string& name, std::vector<int> shape);
  BlockLayout add_block(const std::string& prefix, int in, int out);
  void init_parameters(std::uint64_t seed);

  void block_forward(const BlockLayout& b, nn::BlockActivations<T>& a, const T* time_hidden) const;
  /// Writes the input gradient into grad_in when it is non-null.
  void block_backward(const BlockLayout& b, const nn::BlockActivations<T>& a, const nn::Tensor<T>& grad_out,
                      const T* time_hidden, T* grad, std::vector<T>& grad_time_hidden, nn::Tensor<T>* grad_in) const;

  const T* p(std::size_t offset) const { return values_.data() + offset; }

  DenoiserConfig config_;
  std::vector<ParamInfo> params_;
  std::vector<T> values_;
  std::size_t time_w_ = 0;
  std::size_t time_b_ = 0;
  std::vector<BlockLayout> encoder_;
  std::vector<BlockLayout> decoder_;
  std::size_t out_w_ = 0;
  std::size_t out_b_ = 0;
};

extern template class Denoiser<float>;
extern template class Denoiser<double>;

}  // namespace forge
