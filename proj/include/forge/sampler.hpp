#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "forge/image.hpp"
#include "forge/model.hpp"
#include "forge/rng.hpp"
#include "forge/schedule.hpp"
#include "forge/svbrdf.hpp"

namespace forge {

/// Anything that maps (x_t, y, M, t) to a clean-image estimate. The trained
/// denoiser is one implementation; tests plug in oracles.
class X0Predictor {
 public:
  virtual ~X0Predictor() = default;
  virtual int channels() const = 0;
  /// Spatial sizes must be multiples of this; the sampler pads otherwise.
  virtual int size_multiple() const { return 1; }
  virtual ImageTensor predict(const ImageTensor& x_t, const ImageTensor& y, const Mask& mask, int step) const = 0;
};

/// Read-only adapter over a trained model; safe to share between threads.
class DenoiserPredictor final : public X0Predictor {
 public:
  explicit DenoiserPredictor(const Denoiser<float>& model) : model_(model) {}
  int channels() const override { return model_.config().image_channels; }
  int size_multiple() const override { return model_.config().size_multiple(); }
  ImageTensor predict(const ImageTensor& x_t, const ImageTensor& y, const Mask& mask, int step) const override;

 private:
  const Denoiser<float>& model_;
};

struct SamplerOptions {
  /// Clamp every x0 estimate to [-1, 1].
  bool clamp = true;
  /// Paste known pixels of the input over the final sample.
  bool composite = true;
  /// Ablation: after each step overwrite known pixels with the input diffused to t-1.
  bool replace_each_step = false;
};

struct SampleStats {
  int model_calls = 0;
  double seconds = 0.0;
};

/// Called after each reverse step with (sample index, steps done, total steps).
using StepSink = std::function<void(int sample, int done, int total)>;

/// Runs the full T-step reverse chain for one sample. `known` is the observed
/// image (hole content is ignored), `mask` is 1 on the hole.
ImageTensor inpaint(const X0Predictor& predictor, const NoiseSchedule& schedule, const ImageTensor& known,
                    const Mask& mask, Rng& rng, const SamplerOptions& options = {}, SampleStats* stats = nullptr,
                    const StepSink& sink = {}, int sample_index = 0);

struct BatchResult {
  std::vector<ImageTensor> samples;
  std::vector<std::uint64_t> seeds;
  std::vector<double> seconds;
  int model_calls = 0;
};

/// `count` independent samples; sample i uses its own generator seeded with seed + i.
BatchResult inpaint_batch(const X0Predictor& predictor, const NoiseSchedule& schedule, const ImageTensor& known,
                          const Mask& mask, int count, std::uint64_t seed, const SamplerOptions& options = {},
                          const StepSink& sink = {});

/// Joint inpainting of all material maps with one shared mask.
MapStack inpaint_svbrdf(const X0Predictor& predictor, const NoiseSchedule& schedule, const MapStack& maps,
                        const Mask& mask, std::uint64_t seed, const SamplerOptions& options = {},
                        SampleStats* stats = nullptr);

}  // namespace forge
