#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/image.hpp"
#include "forge/mask_gen.hpp"
#include "forge/model.hpp"
#include "forge/optimizer.hpp"
#include "forge/rng.hpp"
#include "forge/schedule.hpp"

namespace forge {

enum class TrainMode { kSubregion, kDualMask };
enum class LossReduction { kMean, kSum };

/// Declarative description of a training run. Defaults reproduce the full recipe:
/// 15k iterations, lr 1e-4 dropped to 1e-5 at 10k, 256 px crops.
struct TrainConfig {
  int iterations = 15000;
  double lr_initial = 1e-4;
  double lr_after = 1e-5;
  int lr_drop_at = 10000;
  int crop = 256;
  int batch = 8;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kSubregion;
  std::vector<std::string> sources;
  std::optional<std::string> test_mask;
  std::optional<std::string> svbrdf;
  LossReduction loss_reduction = LossReduction::kMean;
  /// Share of training masks drawn as rectangles instead of brush strokes.
  double rect_mask_probability = 0.2;
  int crop_retries = 64;
  /// Subregion mode falls back to dual-mask sampling when no clean crop is found.
  bool allow_dual_fallback = true;
  int diffusion_steps = kDefaultDiffusionSteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
  int base_width = 32;
  int depth = 4;
  BrushConfig brush;

  /// Learning rate for a 0-based iteration index.
  double lr_at(int iteration) const { return iteration < lr_drop_at ? lr_initial : lr_after; }
  /// Same recipe with a different length; the LR drop keeps its relative position (10k of 15k).
  TrainConfig with_iterations(int count) const;
  void validate() const;
};

std::string to_string(TrainMode mode);
std::string to_string(LossReduction reduction);
TrainMode parse_train_mode(const std::string& text);
LossReduction parse_loss_reduction(const std::string& text);

/// Full config as JSON; `include_paths = false` drops sources and masks (checkpoint header form).
nlohmann::json to_json(const TrainConfig& cfg, bool include_paths = true);
/// Applies every key present in `j` on top of `base`; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Loaded training images plus the optional test mask (aligned with sources[0]).
class TrainingData {
 public:
  TrainingData(std::vector<ImageTensor> sources, std::optional<Mask> test_mask);
  static TrainingData load(const TrainConfig& cfg);

  const std::vector<ImageTensor>& sources() const { return sources_; }
  const std::optional<Mask>& test_mask() const { return test_mask_; }
  int channels() const { return sources_.front().channels(); }
  /// Number of test-mask pixels inside a window of sources[0].
  std::int64_t test_pixels_in(int x, int y, int width, int height) const;

 private:
  std::vector<ImageTensor> sources_;
  std::optional<Mask> test_mask_;
  std::vector<std::int64_t> integral_;  // (H+1) x (W+1) summed-area table of the test mask
};

struct CropInfo {
  int source = 0;
  int x = 0;
  int y = 0;
  bool dual_mask = false;
};

/// One minibatch: clean crops (test-mask pixels zeroed), synthetic masks, steps and noise.
template <typename T>
struct TrainBatch {
  nn::Tensor<T> x0;
  nn::Tensor<T> train_mask;  // N x 1 x S x S, {0, 1}
  nn::Tensor<T> test_mask;   // N x 1 x S x S, zero outside dual-mask samples
  nn::Tensor<T> noise;
  std::vector<int> steps;
  std::vector<CropInfo> crops;

  template <typename U>
  TrainBatch<U> cast() const;
};

/// Crop side used for training: cfg.crop clipped to the smallest source, rounded
/// down to the model's size multiple.
int effective_crop(const TrainingData& data, const TrainConfig& cfg);

TrainBatch<float> sample_batch(const TrainingData& data, const TrainConfig& cfg, Rng& rng);

/// Inputs the denoiser sees for a batch: x_t, y and the effective mask.
template <typename T>
struct ModelInputs {
  nn::Tensor<T> x_t;
  nn::Tensor<T> y;
  nn::Tensor<T> mask;   // train U test
  nn::Tensor<T> weight; // train AND NOT test
};

template <typename T>
ModelInputs<T> build_inputs(const TrainBatch<T>& batch, const NoiseSchedule& schedule);

/// Masked squared error between prediction and x0, averaged over batch entries.
/// kMean divides each entry by (channels x weighted pixels); kSum does not.
/// Writes dLoss/dPred into grad when non-null.
template <typename T>
double masked_x0_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& x0, const nn::Tensor<T>& weight,
                      LossReduction reduction, nn::Tensor<T>* grad = nullptr);

/// Loss of the denoiser on a batch; accumulates parameter gradients when grad is non-null.
template <typename T>
double batch_loss(const Denoiser<T>& model, const TrainBatch<T>& batch, const NoiseSchedule& schedule,
                  LossReduction reduction, std::vector<T>* grad = nullptr);

struct TrainProgress {
  int iteration = 0;  // 1-based count of completed iterations
  int iterations = 0;
  double loss = 0.0;
  double loss_ema = 0.0;
  double lr = 0.0;
  double elapsed_seconds = 0.0;
};

using ProgressSink = std::function<void(const TrainProgress&)>;

/// Thread-safe append-only record of progress events.
class ProgressLog {
 public:
  void append(const TrainProgress& p) {
    std::lock_guard lock(mutex_);
    events_.push_back(p);
  }
  std::vector<TrainProgress> snapshot() const {
    std::lock_guard lock(mutex_);
    return events_;
  }
  ProgressSink sink() {
    return [this](const TrainProgress& p) { append(p); };
  }

 private:
  mutable std::mutex mutex_;
  std::vector<TrainProgress> events_;
};

/// Owns model, optimizer and sampling state for a single training job.
class Trainer {
 public:
  Trainer(TrainConfig cfg, TrainingData data);

  /// Runs one optimizer iteration and returns its loss. Throws NumericError on NaN/Inf.
  double step();

  int iteration() const { return iteration_; }
  const TrainConfig& config() const { return cfg_; }
  const Denoiser<float>& model() const { return model_; }
  Denoiser<float>& model() { return model_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const TrainingData& data() const { return data_; }
  const std::vector<double>& loss_history() const { return losses_; }

  void save_checkpoint(const std::filesystem::path& path) const;

 private:
  TrainConfig cfg_;
  TrainingData data_;
  NoiseSchedule schedule_;
  Denoiser<float> model_;
  Adam optimizer_;
  Rng rng_;
  std::vector<float> grad_;
  std::vector<double> losses_;
  int iteration_ = 0;
};

struct TrainResult {
  std::vector<double> loss_trace;
  int iterations_completed = 0;
  bool stopped_early = false;
  double seconds = 0.0;
};

/// Full training run; the checkpoint is written on completion or when `stop` is requested.
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& checkpoint_path, const ProgressSink& sink = {},
                  std::stop_token stop = {});

namespace detail {
template <typename U, typename T>
nn::Tensor<U> cast_tensor(const nn::Tensor<T>& t) {
  nn::Tensor<U> out;
  out.n = t.n;
  out.c = t.c;
  out.h = t.h;
  out.w = t.w;
  out.values.assign(t.values.begin(), t.values.end());
  return out;
}
}  // namespace detail

template <typename T>
template <typename U>
TrainBatch<U> TrainBatch<T>::cast() const {
  return TrainBatch<U>{detail::cast_tensor<U>(x0), detail::cast_tensor<U>(train_mask), detail::cast_tensor<U>(test_mask),
                       detail::cast_tensor<U>(noise), steps, crops};
}

}  // namespace forge
