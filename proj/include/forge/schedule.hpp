#pragma once

#include <vector>

#include "forge/image.hpp"

namespace forge {

inline constexpr int kDefaultDiffusionSteps = 1000;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

/// Linear variance schedule with every derived table the trainer and sampler need.
///
/// Steps are 1-based: valid t is [1, T]. alpha_bar(0) is defined as 1, which makes
/// the reverse variance at t = 1 exactly zero.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(int steps = kDefaultDiffusionSteps, double beta_start = kDefaultBetaStart,
                         double beta_end = kDefaultBetaEnd);

  int steps() const { return steps_; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }

  double beta(int t) const { return beta_[checked(t)]; }
  double alpha(int t) const { return 1.0 - beta_[checked(t)]; }
  double alpha_bar(int t) const;
  /// Reverse-process variance (1 - abar[t-1]) / (1 - abar[t]) * beta[t].
  double sigma2(int t) const { return sigma2_[checked(t)]; }

  /// Posterior mean coefficients: mu = coef_x0 * x0_hat + coef_xt * x_t.
  double posterior_coef_x0(int t) const { return coef_x0_[checked(t)]; }
  double posterior_coef_xt(int t) const { return coef_xt_[checked(t)]; }

  /// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
  ImageTensor forward_diffuse(const ImageTensor& x0, int t, const ImageTensor& eps) const;

  /// One reverse step: mu + sigma_t * noise (noise ignored at t = 1).
  ImageTensor posterior_step(const ImageTensor& x_t, const ImageTensor& x0_hat, int t,
                             const ImageTensor& noise) const;

  void check_step(int t) const { (void)checked(t); }

 private:
  std::size_t checked(int t) const;

  int steps_;
  double beta_start_;
  double beta_end_;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma2_;
  std::vector<double> coef_x0_;
  std::vector<double> coef_xt_;
};

}  // namespace forge
