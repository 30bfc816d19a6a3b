#include "forge/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "forge/errors.hpp"

namespace forge {
namespace {

nn::Tensor<float> as_batch(const ImageTensor& img) {
  nn::Tensor<float> t(1, img.channels(), img.height(), img.width());
  std::copy(img.data().begin(), img.data().end(), t.values.begin());
  return t;
}

nn::Tensor<float> as_batch(const Mask& m) {
  nn::Tensor<float> t(1, 1, m.height(), m.width());
  const auto d = m.data();
  std::transform(d.begin(), d.end(), t.values.begin(), [](std::uint8_t v) { return static_cast<float>(v); });
  return t;
}

ImageTensor normal_image(int c, int h, int w, Rng& rng) {
  ImageTensor out(c, h, w);
  rng.fill_normal(out.data());
  return out;
}

// Known pixels of x become sqrt(abar) * y + sqrt(1 - abar) * eps.
void replace_known(ImageTensor& x, const ImageTensor& y, const Mask& mask, double alpha_bar, Rng& rng) {
  const float signal = static_cast<float>(std::sqrt(alpha_bar));
  const float noise = static_cast<float>(std::sqrt(1.0 - alpha_bar));
  const auto m = mask.data();
  for (int c = 0; c < x.channels(); ++c) {
    auto dst = x.plane(c);
    const auto src = y.plane(c);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (m[i]) continue;
      dst[i] = noise == 0.0f ? src[i] : signal * src[i] + noise * static_cast<float>(rng.normal());
    }
  }
}

}  // namespace

ImageTensor DenoiserPredictor::predict(const ImageTensor& x_t, const ImageTensor& y, const Mask& mask,
                                       int step) const {
  const int steps[1] = {step};
  const nn::Tensor<float> out = model_.forward(as_batch(x_t), as_batch(y), as_batch(mask), steps);
  return ImageTensor(out.c, out.h, out.w, out.values);
}

ImageTensor inpaint(const X0Predictor& predictor, const NoiseSchedule& schedule, const ImageTensor& known,
                    const Mask& mask, Rng& rng, const SamplerOptions& options, SampleStats* stats,
                    const StepSink& sink, int sample_index) {
  if (predictor.channels() != known.channels()) {
    throw ChannelMismatchError("model expects " + std::to_string(predictor.channels()) +
                               "-channel images but the input has " + std::to_string(known.channels()));
  }
  assert_same_shape(known, mask);
  const auto start = std::chrono::steady_clock::now();
  const int multiple = predictor.size_multiple();
  const Mask m = pad_to_multiple(mask, multiple);
  const ImageTensor y = apply_mask(pad_to_multiple(known, multiple), m);

  const int total = schedule.steps();
  ImageTensor x = normal_image(y.channels(), y.height(), y.width(), rng);
  int calls = 0;
  for (int t = total; t >= 1; --t) {
    ImageTensor x0 = predictor.predict(x, y, m, t);
    ++calls;
    assert_same_shape(x0, x);
    if (!x0.all_finite()) {
      throw NumericError("non-finite model output at diffusion step " + std::to_string(t) + " of " +
                         std::to_string(total));
    }
    if (options.clamp) {
      for (float& v : x0.data()) v = std::clamp(v, -1.0f, 1.0f);
    }
    if (t > 1) {
      const ImageTensor z = normal_image(x.channels(), x.height(), x.width(), rng);
      x = schedule.posterior_step(x, x0, t, z);
    } else {
      x = schedule.posterior_step(x, x0, t, x);
    }
    if (options.replace_each_step) replace_known(x, y, m, schedule.alpha_bar(t - 1), rng);
    if (!x.all_finite()) {
      throw NumericError("non-finite sampler state after diffusion step " + std::to_string(t) + " of " +
                         std::to_string(total));
    }
    if (sink) sink(sample_index, total - t + 1, total);
  }

  ImageTensor out = x.height() == known.height() && x.width() == known.width()
                        ? std::move(x)
                        : crop_region(x, 0, 0, known.width(), known.height());
  if (options.composite) out = composite(known, out, mask);
  if (stats) {
    stats->model_calls += calls;
    stats->seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return out;
}

BatchResult inpaint_batch(const X0Predictor& predictor, const NoiseSchedule& schedule, const ImageTensor& known,
                          const Mask& mask, int count, std::uint64_t seed, const SamplerOptions& options,
                          const StepSink& sink) {
  if (count < 1) throw ConfigError("num_samples must be >= 1");
  BatchResult result;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    Rng rng(s);
    SampleStats stats;
    result.samples.push_back(inpaint(predictor, schedule, known, mask, rng, options, &stats, sink, i));
    result.seeds.push_back(s);
    result.seconds.push_back(stats.seconds);
    result.model_calls += stats.model_calls;
  }
  return result;
}

MapStack inpaint_svbrdf(const X0Predictor& predictor, const NoiseSchedule& schedule, const MapStack& maps,
                        const Mask& mask, std::uint64_t seed, const SamplerOptions& options, SampleStats* stats) {
  const ImageTensor stacked = stack_maps(maps);
  Rng rng(seed);
  return unstack_maps(inpaint(predictor, schedule, stacked, mask, rng, options, stats));
}

}  // namespace forge
