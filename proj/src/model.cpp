#include "forge/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "forge/errors.hpp"
#include "forge/rng.hpp"

namespace forge {

int DenoiserConfig::groups() const {
  for (int g = std::min(max_groups, base_width); g > 1; --g) {
    if (base_width % g == 0) return g;
  }
  return 1;
}

void DenoiserConfig::validate() const {
  if (image_channels < 1 || image_channels > 16) throw ConfigError("image_channels must be in [1, 16]");
  if (base_width < 2 || base_width % 2 != 0) throw ConfigError("base_width must be even and >= 2");
  if (depth < 1 || depth > 8) throw ConfigError("depth must be in [1, 8]");
  if (max_groups < 1) throw ConfigError("max_groups must be >= 1");
}

std::vector<double> timestep_embedding(int step, int dim) {
  const int half = dim / 2;
  std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(step * freq);
    out[half + i] = std::cos(step * freq);
  }
  return out;
}

template <typename T>
Denoiser<T>::Denoiser(const DenoiserConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  const int width = config_.base_width;
  time_w_ = add_param("time.dense.weight", {config_.time_hidden(), config_.time_dim()});
  time_b_ = add_param("time.dense.bias", {config_.time_hidden()});
  for (int l = 0; l < config_.depth; ++l) {
    encoder_.push_back(add_block("enc" + std::to_string(l), l == 0 ? config_.input_channels() : width, width));
  }
  for (int l = config_.depth - 2; l >= 0; --l) {
    decoder_.push_back(add_block("dec" + std::to_string(l), 2 * width, width));
  }
  // decoder_ was filled coarse-to-fine; index it by level instead
  std::reverse(decoder_.begin(), decoder_.end());
  out_w_ = add_param("out.weight", {config_.image_channels, width, 1, 1});
  out_b_ = add_param("out.bias", {config_.image_channels});
  init_parameters(init_seed);
}

template <typename T>
std::size_t Denoiser<T>::add_param(const std::string& name, std::vector<int> shape) {
  const std::size_t size =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, [](std::size_t a, int b) { return a * b; });
  ParamInfo info{name, std::move(shape), values_.size(), size};
  values_.resize(values_.size() + size, T(0));
  params_.push_back(std::move(info));
  return params_.back().offset;
}

template <typename T>
typename Denoiser<T>::BlockLayout Denoiser<T>::add_block(const std::string& prefix, int in, int out) {
  BlockLayout b;
  b.in = in;
  b.out = out;
  b.conv1_w = add_param(prefix + ".conv1.weight", {out, in, 3, 3});
  b.conv1_b = add_param(prefix + ".conv1.bias", {out});
  b.norm1_g = add_param(prefix + ".norm1.weight", {out});
  b.norm1_b = add_param(prefix + ".norm1.bias", {out});
  b.time_w = add_param(prefix + ".time.weight", {out, config_.time_hidden()});
  b.time_b = add_param(prefix + ".time.bias", {out});
  b.conv2_w = add_param(prefix + ".conv2.weight", {out, out, 3, 3});
  b.conv2_b = add_param(prefix + ".conv2.bias", {out});
  b.norm2_g = add_param(prefix + ".norm2.weight", {out});
  b.norm2_b = add_param(prefix + ".norm2.bias", {out});
  return b;
}

template <typename T>
void Denoiser<T>::init_parameters(std::uint64_t seed) {
  Rng rng(seed);
  for (const ParamInfo& info : params_) {
    T* dst = values_.data() + info.offset;
    const bool is_norm = info.name.find(".norm") != std::string::npos;
    if (is_norm) {
      const bool is_gain = info.name.ends_with(".weight");
      std::fill(dst, dst + info.size, is_gain ? T(1) : T(0));
      continue;
    }
    // fan-in of the owning layer; biases share the weight's bound
    int fan_in = 1;
    if (info.name.ends_with(".weight")) {
      for (std::size_t k = 1; k < info.shape.size(); ++k) fan_in *= info.shape[k];
    } else {
      const std::string weight_name = info.name.substr(0, info.name.size() - 4) + "weight";
      const ParamInfo& w = find_parameter(weight_name);
      for (std::size_t k = 1; k < w.shape.size(); ++k) fan_in *= w.shape[k];
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t k = 0; k < info.size; ++k) dst[k] = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T>
const ParamInfo& Denoiser<T>::find_parameter(const std::string& name) const {
  for (const ParamInfo& info : params_) {
    if (info.name == name) return info;
  }
  throw ConfigError("unknown parameter " + name);
}

template <typename T>
void Denoiser<T>::block_forward(const BlockLayout& b, nn::BlockActivations<T>& a, const T* time_hidden) const {
  const int groups = config_.groups();
  const int n = a.input.n;
  nn::conv2d_forward(a.input, p(b.conv1_w), p(b.conv1_b), b.out, 3, a.conv1);
  nn::group_norm_forward(a.conv1, p(b.norm1_g), p(b.norm1_b), groups, 1e-5, a.pre1, a.stats1);
  std::vector<T> bias(static_cast<std::size_t>(n) * b.out);
  nn::linear_forward(time_hidden, n, config_.time_hidden(), b.out, p(b.time_w), p(b.time_b), bias.data());
  nn::add_channel_bias(a.pre1, bias.data());
  nn::silu_forward(a.pre1, a.act1);
  nn::conv2d_forward(a.act1, p(b.conv2_w), p(b.conv2_b), b.out, 3, a.conv2);
  nn::group_norm_forward(a.conv2, p(b.norm2_g), p(b.norm2_b), groups, 1e-5, a.pre2, a.stats2);
  nn::silu_forward(a.pre2, a.output);
}

template <typename T>
void Denoiser<T>::block_backward(const BlockLayout& b, const nn::BlockActivations<T>& a,
                                 const nn::Tensor<T>& grad_out, const T* time_hidden, T* grad,
                                 std::vector<T>& grad_time_hidden, nn::Tensor<T>* grad_in) const {
  const int groups = config_.groups();
  const int n = a.input.n;
  nn::Tensor<T> d_pre, d_conv, d_act;
  nn::silu_backward(a.pre2, grad_out, d_pre);
  nn::group_norm_backward(a.conv2, p(b.norm2_g), groups, a.stats2, d_pre, grad + b.norm2_g, grad + b.norm2_b, d_conv);
  nn::conv2d_backward(a.act1, p(b.conv2_w), b.out, 3, d_conv, grad + b.conv2_w, grad + b.conv2_b, &d_act);
  nn::silu_backward(a.pre1, d_act, d_pre);

  std::vector<T> d_bias(static_cast<std::size_t>(n) * b.out);
  nn::channel_bias_backward(d_pre, d_bias.data());
  std::vector<T> d_hidden(static_cast<std::size_t>(n) * config_.time_hidden());
  nn::linear_backward(time_hidden, n, config_.time_hidden(), b.out, p(b.time_w), d_bias.data(), grad + b.time_w,
                      grad + b.time_b, d_hidden.data());
  for (std::size_t k = 0; k < d_hidden.size(); ++k) grad_time_hidden[k] += d_hidden[k];

  nn::group_norm_backward(a.conv1, p(b.norm1_g), groups, a.stats1, d_pre, grad + b.norm1_g, grad + b.norm1_b, d_conv);
  nn::conv2d_backward(a.input, p(b.conv1_w), b.out, 3, d_conv, grad + b.conv1_w, grad + b.conv1_b, grad_in);
}

template <typename T>
nn::Tensor<T> Denoiser<T>::forward(const nn::Tensor<T>& x_t, const nn::Tensor<T>& y, const nn::Tensor<T>& mask,
                                   std::span<const int> steps, nn::Activations<T>* acts) const {
  if (x_t.c != config_.image_channels) {
    throw ChannelMismatchError("model expects " + std::to_string(config_.image_channels) + " channels, got " +
                               std::to_string(x_t.c));
  }
  nn::require_same_shape(x_t, y, "x_t vs y");
  if (mask.n != x_t.n || mask.c != 1 || mask.h != x_t.h || mask.w != x_t.w) {
    throw ShapeError("mask tensor must be N x 1 x H x W matching x_t");
  }
  if (steps.size() != static_cast<std::size_t>(x_t.n)) throw ShapeError("one diffusion step per batch entry");
  const int multiple = config_.size_multiple();
  if (x_t.h % multiple != 0 || x_t.w % multiple != 0) {
    throw ShapeError("spatial size must be a multiple of " + std::to_string(multiple));
  }
  for (int s : steps) {
    if (s < 1) throw ConfigError("diffusion step must be >= 1");
  }

  nn::Activations<T> local;
  nn::Activations<T>& a = acts != nullptr ? *acts : local;
  const int n = x_t.n;
  const int te = config_.time_dim();
  const int th = config_.time_hidden();
  a.steps.assign(steps.begin(), steps.end());
  a.embedding.assign(static_cast<std::size_t>(n) * te, T(0));
  for (int i = 0; i < n; ++i) {
    const auto e = timestep_embedding(steps[i], te);
    for (int k = 0; k < te; ++k) a.embedding[i * te + k] = static_cast<T>(e[k]);
  }
  a.time_pre.assign(static_cast<std::size_t>(n) * th, T(0));
  a.time_hidden.assign(static_cast<std::size_t>(n) * th, T(0));
  nn::linear_forward(a.embedding.data(), n, te, th, p(time_w_), p(time_b_), a.time_pre.data());
  for (std::size_t k = 0; k < a.time_pre.size(); ++k) a.time_hidden[k] = nn::silu(a.time_pre[k]);

  const int depth = config_.depth;
  a.encoder.resize(depth);
  a.decoder.resize(depth);
  {
    nn::Tensor<T> xy;
    nn::concat_channels(x_t, y, xy);
    nn::concat_channels(xy, mask, a.encoder[0].input);
  }
  for (int l = 0; l < depth; ++l) {
    if (l > 0) nn::avg_pool2_forward(a.encoder[l - 1].output, a.encoder[l].input);
    block_forward(encoder_[l], a.encoder[l], a.time_hidden.data());
  }
  const nn::Tensor<T>* h = &a.encoder[depth - 1].output;
  for (int l = depth - 2; l >= 0; --l) {
    nn::Tensor<T> up;
    nn::upsample2_forward(*h, up);
    nn::concat_channels(up, a.encoder[l].output, a.decoder[l].input);
    block_forward(decoder_[l], a.decoder[l], a.time_hidden.data());
    h = &a.decoder[l].output;
  }
  nn::conv2d_forward(*h, p(out_w_), p(out_b_), config_.image_channels, 1, a.output);
  return a.output;
}

template <typename T>
void Denoiser<T>::backward(const nn::Activations<T>& a, const nn::Tensor<T>& grad_output, std::span<T> grad) const {
  if (grad.size() != values_.size()) throw ShapeError("gradient buffer size differs from parameter count");
  nn::require_same_shape(a.output, grad_output, "output gradient");
  const int depth = config_.depth;
  const int width = config_.base_width;
  T* g = grad.data();
  std::vector<T> d_hidden(a.time_hidden.size(), T(0));

  const nn::Tensor<T>& last = depth > 1 ? a.decoder[0].output : a.encoder[0].output;
  nn::Tensor<T> d_h;
  nn::conv2d_backward(last, p(out_w_), config_.image_channels, 1, grad_output, g + out_w_, g + out_b_, &d_h);

  std::vector<nn::Tensor<T>> d_enc(depth);
  for (int l = 0; l + 1 < depth; ++l) {
    nn::Tensor<T> d_in, d_up, d_skip;
    block_backward(decoder_[l], a.decoder[l], d_h, a.time_hidden.data(), g, d_hidden, &d_in);
    nn::split_channels(d_in, width, d_up, d_skip);
    d_enc[l] = std::move(d_skip);
    nn::upsample2_backward(d_up, d_h);
  }
  if (d_enc[depth - 1].size() == 0) {
    d_enc[depth - 1] = std::move(d_h);
  } else {
    for (std::size_t k = 0; k < d_h.size(); ++k) d_enc[depth - 1].values[k] += d_h.values[k];
  }

  for (int l = depth - 1; l >= 0; --l) {
    nn::Tensor<T> d_in;
    block_backward(encoder_[l], a.encoder[l], d_enc[l], a.time_hidden.data(), g, d_hidden, l > 0 ? &d_in : nullptr);
    if (l > 0) {
      nn::Tensor<T> d_prev;
      nn::avg_pool2_backward(d_in, d_prev);
      auto& acc = d_enc[l - 1];
      for (std::size_t k = 0; k < d_prev.size(); ++k) acc.values[k] += d_prev.values[k];
    }
  }

  const int n = static_cast<int>(a.steps.size());
  for (std::size_t k = 0; k < d_hidden.size(); ++k) d_hidden[k] *= nn::silu_grad(a.time_pre[k]);
  nn::linear_backward(a.embedding.data(), n, config_.time_dim(), config_.time_hidden(), p(time_w_), d_hidden.data(),
                      g + time_w_, g + time_b_, static_cast<T*>(nullptr));
}

template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace forge
