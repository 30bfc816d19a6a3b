#include "forge/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "forge/checkpoint.hpp"
#include "forge/errors.hpp"
#include "forge/png_io.hpp"
#include "forge/svbrdf.hpp"

namespace forge {
namespace {

constexpr std::uint64_t kDataStream = 0x9E3779B97F4A7C15ull;
constexpr double kEmaDecay = 0.98;

void copy_crop(const ImageTensor& src, int x, int y, int size, float* dst) {
  for (int c = 0; c < src.channels(); ++c) {
    for (int i = 0; i < size; ++i) {
      const float* row = src.plane(c).data() + static_cast<std::size_t>(y + i) * src.width() + x;
      std::copy(row, row + size, dst + (static_cast<std::size_t>(c) * size + i) * size);
    }
  }
}

void copy_mask(const Mask& m, int x, int y, int size, float* dst) {
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) dst[static_cast<std::size_t>(i) * size + j] = m.at(y + i, x + j);
  }
}

Mask training_mask(const TrainConfig& cfg, int size, Rng& rng) {
  const bool rect = rng.bernoulli(cfg.rect_mask_probability);
  const std::uint64_t seed = rng.next_u64();
  return rect ? generate_rect_mask(size, seed) : generate_mask(cfg.brush.scaled_to(size), seed);
}

std::string tail_of(const std::vector<double>& losses, std::size_t n) {
  std::ostringstream out;
  const std::size_t from = losses.size() > n ? losses.size() - n : 0;
  for (std::size_t i = from; i < losses.size(); ++i) out << (i > from ? ", " : "") << losses[i];
  return out.str();
}

}  // namespace

TrainConfig TrainConfig::with_iterations(int count) const {
  TrainConfig out = *this;
  out.iterations = count;
  const double ratio = static_cast<double>(lr_drop_at) / static_cast<double>(iterations);
  out.lr_drop_at = std::clamp(static_cast<int>(std::lround(ratio * count)), 0, std::max(0, count - 1));
  return out;
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (lr_drop_at < 0 || lr_drop_at >= iterations) {
    throw ConfigError("lr_drop_at (" + std::to_string(lr_drop_at) + ") must lie in [0, iterations = " +
                      std::to_string(iterations) + ")");
  }
  if (!(lr_initial > 0.0) || !(lr_after > 0.0)) throw ConfigError("learning rates must be positive");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (crop < 16) throw ConfigError("crop must be >= 16 pixels");
  if (!(rect_mask_probability >= 0.0 && rect_mask_probability <= 1.0)) {
    throw ConfigError("rect_mask_probability must lie in [0, 1]");
  }
  if (crop_retries < 1) throw ConfigError("crop_retries must be >= 1");
  if (sources.empty() && !svbrdf) throw ConfigError("training needs at least one source image or an SVBRDF directory");
  if (!sources.empty() && svbrdf) throw ConfigError("use either source images or an SVBRDF directory, not both");
  if (mode == TrainMode::kDualMask && !test_mask) throw ConfigError("dual-mask mode needs a test mask");
  (void)NoiseSchedule(diffusion_steps, beta_start, beta_end);
  DenoiserConfig model;
  model.base_width = base_width;
  model.depth = depth;
  model.validate();
  brush.validate();
}

std::string to_string(TrainMode mode) { return mode == TrainMode::kSubregion ? "subregion" : "dual-mask"; }
std::string to_string(LossReduction reduction) { return reduction == LossReduction::kMean ? "mean" : "sum"; }

TrainMode parse_train_mode(const std::string& text) {
  if (text == "subregion") return TrainMode::kSubregion;
  if (text == "dual-mask") return TrainMode::kDualMask;
  throw ConfigError("unknown training mode '" + text + "' (expected subregion or dual-mask)");
}

LossReduction parse_loss_reduction(const std::string& text) {
  if (text == "mean") return LossReduction::kMean;
  if (text == "sum") return LossReduction::kSum;
  throw ConfigError("unknown loss reduction '" + text + "' (expected mean or sum)");
}

nlohmann::json to_json(const TrainConfig& cfg, bool include_paths) {
  nlohmann::json j = {
      {"iterations", cfg.iterations},
      {"lr_initial", cfg.lr_initial},
      {"lr_after", cfg.lr_after},
      {"lr_drop_at", cfg.lr_drop_at},
      {"crop", cfg.crop},
      {"batch", cfg.batch},
      {"seed", cfg.seed},
      {"mode", to_string(cfg.mode)},
      {"loss_reduction", to_string(cfg.loss_reduction)},
      {"rect_mask_probability", cfg.rect_mask_probability},
      {"crop_retries", cfg.crop_retries},
      {"allow_dual_fallback", cfg.allow_dual_fallback},
      {"diffusion_steps", cfg.diffusion_steps},
      {"beta_start", cfg.beta_start},
      {"beta_end", cfg.beta_end},
      {"base_width", cfg.base_width},
      {"depth", cfg.depth},
      {"brush",
       {{"min_strokes", cfg.brush.min_strokes},
        {"max_strokes", cfg.brush.max_strokes},
        {"min_vertices", cfg.brush.min_vertices},
        {"max_vertices", cfg.brush.max_vertices},
        {"min_length", cfg.brush.min_length},
        {"max_length", cfg.brush.max_length},
        {"angle_jitter", cfg.brush.angle_jitter},
        {"min_width", cfg.brush.min_width},
        {"max_width", cfg.brush.max_width},
        {"target_size", cfg.brush.target_size}}},
  };
  if (include_paths) {
    j["sources"] = cfg.sources;
    j["test_mask"] = cfg.test_mask ? nlohmann::json(*cfg.test_mask) : nlohmann::json(nullptr);
    j["svbrdf"] = cfg.svbrdf ? nlohmann::json(*cfg.svbrdf) : nlohmann::json(nullptr);
  }
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  static const std::set<std::string> known = {
      "iterations", "lr_initial", "lr_after", "lr_drop_at", "crop", "batch", "seed", "mode",
      "loss_reduction", "rect_mask_probability", "crop_retries", "allow_dual_fallback", "diffusion_steps",
      "beta_start", "beta_end", "base_width", "depth", "brush", "sources", "test_mask", "svbrdf"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown training config key '" + key + "'");
  }
  try {
    TrainConfig c = base;
    if (j.contains("iterations")) {
      const int n = j["iterations"].get<int>();
      // An explicit length without an explicit drop keeps the drop at the same fraction.
      c = j.contains("lr_drop_at") || n < 1 ? c : c.with_iterations(n);
      c.iterations = n;
    }
    auto set = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::remove_reference_t<decltype(field)>>();
    };
    set("lr_initial", c.lr_initial);
    set("lr_after", c.lr_after);
    set("lr_drop_at", c.lr_drop_at);
    set("crop", c.crop);
    set("batch", c.batch);
    set("seed", c.seed);
    if (j.contains("mode")) c.mode = parse_train_mode(j["mode"].get<std::string>());
    if (j.contains("loss_reduction")) c.loss_reduction = parse_loss_reduction(j["loss_reduction"].get<std::string>());
    set("rect_mask_probability", c.rect_mask_probability);
    set("crop_retries", c.crop_retries);
    set("allow_dual_fallback", c.allow_dual_fallback);
    set("diffusion_steps", c.diffusion_steps);
    set("beta_start", c.beta_start);
    set("beta_end", c.beta_end);
    set("base_width", c.base_width);
    set("depth", c.depth);
    set("sources", c.sources);
    auto optional_path = [&](const char* key, std::optional<std::string>& field) {
      if (!j.contains(key)) return;
      if (j[key].is_null()) {
        field.reset();
      } else {
        field = j[key].get<std::string>();
      }
    };
    optional_path("test_mask", c.test_mask);
    optional_path("svbrdf", c.svbrdf);
    if (j.contains("brush")) {
      const auto& b = j["brush"];
      auto bset = [&](const char* key, auto& field) {
        if (b.contains(key)) field = b[key].get<std::remove_reference_t<decltype(field)>>();
      };
      bset("min_strokes", c.brush.min_strokes);
      bset("max_strokes", c.brush.max_strokes);
      bset("min_vertices", c.brush.min_vertices);
      bset("max_vertices", c.brush.max_vertices);
      bset("min_length", c.brush.min_length);
      bset("max_length", c.brush.max_length);
      bset("angle_jitter", c.brush.angle_jitter);
      bset("min_width", c.brush.min_width);
      bset("max_width", c.brush.max_width);
      bset("target_size", c.brush.target_size);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
}

TrainingData::TrainingData(std::vector<ImageTensor> sources, std::optional<Mask> test_mask)
    : sources_(std::move(sources)), test_mask_(std::move(test_mask)) {
  if (sources_.empty()) throw ConfigError("training data needs at least one source");
  for (const auto& s : sources_) {
    if (s.channels() != sources_.front().channels()) throw ShapeError("all sources must share a channel count");
  }
  if (test_mask_) {
    const Mask& m = *test_mask_;
    assert_same_shape(sources_.front(), m);
    const int h = m.height(), w = m.width();
    integral_.assign(static_cast<std::size_t>(h + 1) * (w + 1), 0);
    for (int y = 0; y < h; ++y) {
      std::int64_t row = 0;
      for (int x = 0; x < w; ++x) {
        row += m.at(y, x);
        integral_[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
            integral_[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
      }
    }
  }
}

TrainingData TrainingData::load(const TrainConfig& cfg) {
  std::vector<ImageTensor> sources;
  if (cfg.svbrdf) {
    sources.push_back(stack_maps(load_svbrdf(*cfg.svbrdf)));
  } else {
    for (const auto& path : cfg.sources) sources.push_back(load_image(path));
  }
  std::optional<Mask> test_mask;
  if (cfg.test_mask) test_mask = load_mask(*cfg.test_mask);
  return TrainingData(std::move(sources), std::move(test_mask));
}

std::int64_t TrainingData::test_pixels_in(int x, int y, int width, int height) const {
  if (!test_mask_) return 0;
  const std::size_t stride = static_cast<std::size_t>(test_mask_->width()) + 1;
  auto at = [&](int yy, int xx) { return integral_[static_cast<std::size_t>(yy) * stride + xx]; };
  return at(y + height, x + width) - at(y, x + width) - at(y + height, x) + at(y, x);
}

int effective_crop(const TrainingData& data, const TrainConfig& cfg) {
  int smallest = std::numeric_limits<int>::max();
  for (const auto& s : data.sources()) smallest = std::min({smallest, s.height(), s.width()});
  int crop = cfg.crop;
  if (crop > smallest) {
    if (cfg.mode == TrainMode::kSubregion) {
      throw ConfigError("crop " + std::to_string(crop) + " exceeds the smallest source dimension " +
                        std::to_string(smallest) + " in subregion mode");
    }
    crop = smallest;
  }
  DenoiserConfig model;
  model.depth = cfg.depth;
  const int multiple = model.size_multiple();
  crop -= crop % multiple;
  if (crop < 16) throw ConfigError("usable crop size " + std::to_string(crop) + " is below 16 pixels");
  return crop;
}

TrainBatch<float> sample_batch(const TrainingData& data, const TrainConfig& cfg, Rng& rng) {
  const int size = effective_crop(data, cfg);
  const int channels = data.channels();
  const int n = cfg.batch;
  TrainBatch<float> b;
  b.x0.resize(n, channels, size, size);
  b.train_mask.resize(n, 1, size, size);
  b.test_mask.resize(n, 1, size, size);
  b.noise.resize(n, channels, size, size);
  b.steps.resize(n);
  b.crops.resize(n);

  const int source_count = static_cast<int>(data.sources().size());
  for (int i = 0; i < n; ++i) {
    CropInfo& info = b.crops[i];
    info.source = source_count == 1 ? 0 : static_cast<int>(rng.uniform_int(0, source_count - 1));
    const ImageTensor& src = data.sources()[info.source];
    const int max_x = src.width() - size;
    const int max_y = src.height() - size;
    auto draw = [&] {
      info.x = max_x == 0 ? 0 : static_cast<int>(rng.uniform_int(0, max_x));
      info.y = max_y == 0 ? 0 : static_cast<int>(rng.uniform_int(0, max_y));
    };
    const bool has_test = info.source == 0 && data.test_mask().has_value();
    if (!has_test) {
      draw();
    } else if (cfg.mode == TrainMode::kDualMask) {
      draw();
      info.dual_mask = true;
    } else {
      bool found = false;
      for (int attempt = 0; attempt < cfg.crop_retries && !found; ++attempt) {
        draw();
        found = data.test_pixels_in(info.x, info.y, size, size) == 0;
      }
      if (!found) {
        if (!cfg.allow_dual_fallback) {
          throw ConfigError("no crop of size " + std::to_string(size) + " avoids the test mask after " +
                            std::to_string(cfg.crop_retries) + " attempts and dual-mask fallback is disabled");
        }
        info.dual_mask = true;
      }
    }

    copy_crop(src, info.x, info.y, size, b.x0.sample(i));
    if (info.dual_mask) {
      float* tm = b.test_mask.sample(i);
      copy_mask(*data.test_mask(), info.x, info.y, size, tm);
      // Pixels under the test mask are unknown at test time; never let them reach the model.
      for (int c = 0; c < channels; ++c) {
        float* x = b.x0.channel(i, c);
        for (std::size_t p = 0; p < b.x0.plane(); ++p) {
          if (tm[p] != 0.0f) x[p] = 0.0f;
        }
      }
    }
    const Mask m = training_mask(cfg, size, rng);
    float* tr = b.train_mask.sample(i);
    const auto md = m.data();
    for (std::size_t p = 0; p < md.size(); ++p) tr[p] = md[p];
    b.steps[i] = static_cast<int>(rng.uniform_int(1, cfg.diffusion_steps));
  }
  rng.fill_normal(std::span<float>(b.noise.values));
  return b;
}

template <typename T>
ModelInputs<T> build_inputs(const TrainBatch<T>& batch, const NoiseSchedule& schedule) {
  nn::require_same_shape(batch.x0, batch.noise, "x0 vs noise");
  nn::require_same_shape(batch.train_mask, batch.test_mask, "train vs test mask");
  if (batch.train_mask.n != batch.x0.n || batch.train_mask.c != 1 || batch.train_mask.h != batch.x0.h ||
      batch.train_mask.w != batch.x0.w || static_cast<int>(batch.steps.size()) != batch.x0.n) {
    throw ShapeError("training batch fields disagree on shape");
  }
  ModelInputs<T> in;
  const auto& x0 = batch.x0;
  in.x_t.resize(x0.n, x0.c, x0.h, x0.w);
  in.y.resize(x0.n, x0.c, x0.h, x0.w);
  in.mask.resize(x0.n, 1, x0.h, x0.w);
  in.weight.resize(x0.n, 1, x0.h, x0.w);
  const std::size_t plane = x0.plane();
  for (int i = 0; i < x0.n; ++i) {
    const double ab = schedule.alpha_bar(batch.steps[i]);
    const T signal = static_cast<T>(std::sqrt(ab));
    const T noise = static_cast<T>(std::sqrt(1.0 - ab));
    const T* tr = batch.train_mask.sample(i);
    const T* te = batch.test_mask.sample(i);
    T* m = in.mask.sample(i);
    T* w = in.weight.sample(i);
    for (std::size_t p = 0; p < plane; ++p) {
      const bool train = tr[p] != T(0);
      const bool test = te[p] != T(0);
      m[p] = (train || test) ? T(1) : T(0);
      w[p] = (train && !test) ? T(1) : T(0);
    }
    for (int c = 0; c < x0.c; ++c) {
      const T* x = x0.channel(i, c);
      const T* e = batch.noise.channel(i, c);
      T* xt = in.x_t.channel(i, c);
      T* y = in.y.channel(i, c);
      for (std::size_t p = 0; p < plane; ++p) {
        // Test-mask pixels are unknown: they enter neither x_t nor y.
        const T clean = te[p] != T(0) ? T(0) : x[p];
        xt[p] = signal * clean + noise * e[p];
        y[p] = clean * (T(1) - m[p]);
      }
    }
  }
  return in;
}

template <typename T>
double masked_x0_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& x0, const nn::Tensor<T>& weight,
                      LossReduction reduction, nn::Tensor<T>* grad) {
  nn::require_same_shape(pred, x0, "prediction vs x0");
  if (weight.n != x0.n || weight.c != 1 || weight.h != x0.h || weight.w != x0.w) {
    throw ShapeError("loss weight must be N x 1 x H x W");
  }
  if (grad) grad->resize(pred.n, pred.c, pred.h, pred.w);
  const std::size_t plane = x0.plane();
  double total = 0.0;
  for (int i = 0; i < x0.n; ++i) {
    const T* w = weight.sample(i);
    double wsum = 0.0;
    for (std::size_t p = 0; p < plane; ++p) wsum += static_cast<double>(w[p]);
    if (wsum == 0.0) continue;
    const double norm = reduction == LossReduction::kMean ? 1.0 / (x0.c * wsum) : 1.0;
    double s = 0.0;
    for (int c = 0; c < x0.c; ++c) {
      const T* f = pred.channel(i, c);
      const T* x = x0.channel(i, c);
      T* g = grad ? grad->channel(i, c) : nullptr;
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = static_cast<double>(f[p]) - static_cast<double>(x[p]);
        s += static_cast<double>(w[p]) * d * d;
        if (g) g[p] = static_cast<T>(2.0 * static_cast<double>(w[p]) * d * norm / x0.n);
      }
    }
    total += s * norm;
  }
  return total / x0.n;
}

template <typename T>
double batch_loss(const Denoiser<T>& model, const TrainBatch<T>& batch, const NoiseSchedule& schedule,
                  LossReduction reduction, std::vector<T>* grad) {
  const ModelInputs<T> in = build_inputs(batch, schedule);
  nn::Activations<T> acts;
  const nn::Tensor<T> pred = model.forward(in.x_t, in.y, in.mask, batch.steps, grad ? &acts : nullptr);
  if (!grad) return masked_x0_loss(pred, batch.x0, in.weight, reduction);
  if (grad->size() != model.parameter_count()) throw ShapeError("gradient buffer does not match the model");
  nn::Tensor<T> grad_pred;
  const double loss = masked_x0_loss(pred, batch.x0, in.weight, reduction, &grad_pred);
  model.backward(acts, grad_pred, *grad);
  return loss;
}

template ModelInputs<float> build_inputs(const TrainBatch<float>&, const NoiseSchedule&);
template ModelInputs<double> build_inputs(const TrainBatch<double>&, const NoiseSchedule&);
template double masked_x0_loss(const nn::Tensor<float>&, const nn::Tensor<float>&, const nn::Tensor<float>&,
                               LossReduction, nn::Tensor<float>*);
template double masked_x0_loss(const nn::Tensor<double>&, const nn::Tensor<double>&, const nn::Tensor<double>&,
                               LossReduction, nn::Tensor<double>*);
template double batch_loss(const Denoiser<float>&, const TrainBatch<float>&, const NoiseSchedule&, LossReduction,
                           std::vector<float>*);
template double batch_loss(const Denoiser<double>&, const TrainBatch<double>&, const NoiseSchedule&, LossReduction,
                           std::vector<double>*);

namespace {

DenoiserConfig model_config_for(const TrainConfig& cfg, int channels) {
  DenoiserConfig m;
  m.image_channels = channels;
  m.base_width = cfg.base_width;
  m.depth = cfg.depth;
  return m;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, TrainingData data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      schedule_(cfg_.diffusion_steps, cfg_.beta_start, cfg_.beta_end),
      model_(model_config_for(cfg_, data_.channels()), cfg_.seed),
      optimizer_(model_.parameter_count()),
      rng_(cfg_.seed ^ kDataStream),
      grad_(model_.parameter_count(), 0.0f) {
  cfg_.validate();
  (void)effective_crop(data_, cfg_);
}

double Trainer::step() {
  const double lr = cfg_.lr_at(iteration_);
  const TrainBatch<float> batch = sample_batch(data_, cfg_, rng_);
  std::fill(grad_.begin(), grad_.end(), 0.0f);
  const double loss = batch_loss(model_, batch, schedule_, cfg_.loss_reduction, &grad_);
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss at iteration " + std::to_string(iteration_ + 1) + " (lr " +
                       std::to_string(lr) + "); recent losses: [" + tail_of(losses_, 10) + "]");
  }
  optimizer_.step(model_.parameters(), std::span<const float>(grad_), lr);
  losses_.push_back(loss);
  ++iteration_;
  return loss;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  nlohmann::json training = to_json(cfg_, false);
  training["iterations_completed"] = iteration_;
  forge::save_checkpoint(path, model_, schedule_, training);
}

TrainResult train(const TrainConfig& cfg, const std::filesystem::path& checkpoint_path, const ProgressSink& sink,
                  std::stop_token stop) {
  cfg.validate();
  Trainer trainer(cfg, TrainingData::load(cfg));
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  double ema = 0.0;
  while (trainer.iteration() < cfg.iterations) {
    if (stop.stop_requested()) {
      result.stopped_early = true;
      spdlog::info("training stopped at iteration {} of {}; writing partial checkpoint", trainer.iteration(),
                   cfg.iterations);
      break;
    }
    const double lr = cfg.lr_at(trainer.iteration());
    const double loss = trainer.step();
    ema = trainer.iteration() == 1 ? loss : kEmaDecay * ema + (1.0 - kEmaDecay) * loss;
    if (sink) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      sink(TrainProgress{trainer.iteration(), cfg.iterations, loss, ema, lr, elapsed});
    }
  }
  trainer.save_checkpoint(checkpoint_path);
  result.loss_trace = trainer.loss_history();
  result.iterations_completed = trainer.iteration();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace forge
