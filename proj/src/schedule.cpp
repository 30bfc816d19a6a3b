#include "forge/schedule.hpp"

#include <cmath>
#include <string>

#include "forge/errors.hpp"

namespace forge {

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end)
    : steps_(steps), beta_start_(beta_start), beta_end_(beta_end) {
  if (steps < 2) throw ConfigError("diffusion schedule needs T >= 2, got " + std::to_string(steps));
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw ConfigError("beta endpoints must satisfy 0 < beta_start < beta_end < 1");
  }
  const std::size_t n = static_cast<std::size_t>(steps);
  beta_.resize(n);
  alpha_bar_.resize(n);
  sigma2_.resize(n);
  coef_x0_.resize(n);
  coef_xt_.resize(n);

  double running = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    beta_[i] = i + 1 == n ? beta_end
                          : beta_start + static_cast<double>(i) / static_cast<double>(n - 1) * (beta_end - beta_start);
    const double alpha = 1.0 - beta_[i];
    const double prev_bar = running;
    running *= alpha;
    alpha_bar_[i] = running;
    sigma2_[i] = (1.0 - prev_bar) / (1.0 - running) * beta_[i];
    coef_x0_[i] = std::sqrt(prev_bar) * beta_[i] / (1.0 - running);
    coef_xt_[i] = std::sqrt(alpha) * (1.0 - prev_bar) / (1.0 - running);
  }
}

std::size_t NoiseSchedule::checked(int t) const {
  if (t < 1 || t > steps_) {
    throw ConfigError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(steps_) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  return alpha_bar_[checked(t)];
}

ImageTensor NoiseSchedule::forward_diffuse(const ImageTensor& x0, int t, const ImageTensor& eps) const {
  assert_same_shape(x0, eps);
  const double ab = alpha_bar(static_cast<int>(checked(t)) + 1);
  const float signal = static_cast<float>(std::sqrt(ab));
  const float noise = static_cast<float>(std::sqrt(1.0 - ab));
  ImageTensor out = x0;
  auto dst = out.data();
  const auto e = eps.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = signal * dst[i] + noise * e[i];
  return out;
}

ImageTensor NoiseSchedule::posterior_step(const ImageTensor& x_t, const ImageTensor& x0_hat, int t,
                                          const ImageTensor& noise) const {
  assert_same_shape(x_t, x0_hat);
  const std::size_t i = checked(t);
  const float a = static_cast<float>(coef_x0_[i]);
  const float b = static_cast<float>(coef_xt_[i]);
  ImageTensor out = x0_hat;
  auto dst = out.data();
  const auto xt = x_t.data();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = a * dst[k] + b * xt[k];
  if (t > 1) {
    assert_same_shape(x_t, noise);
    const float sigma = static_cast<float>(std::sqrt(sigma2_[i]));
    const auto z = noise.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += sigma * z[k];
  }
  return out;
}

}  // namespace forge
