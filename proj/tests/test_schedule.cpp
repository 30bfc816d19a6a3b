#include <doctest.h>

#include <cmath>

#include "forge/errors.hpp"
#include "forge/schedule.hpp"
#include "support.hpp"

using namespace forge;

namespace {

double brute_alpha_bar(int t, int steps) {
  double prod = 1.0;
  for (int s = 1; s <= t; ++s) prod *= 1.0 - (1e-4 + (s - 1) * (0.02 - 1e-4) / (steps - 1));
  return prod;
}

}  // namespace

TEST_CASE("beta endpoints for any step count") {
  for (int steps : {2, 10, 250, 1000, 4000}) {
    const NoiseSchedule s(steps);
    CHECK(s.beta(1) == 1e-4);
    CHECK(std::abs(s.beta(steps) - 0.02) <= 1e-17);
    for (int t = 2; t <= steps; ++t) CHECK_MESSAGE(s.beta(t) > s.beta(t - 1), "t=" << t);
  }
  CHECK_THROWS_AS(NoiseSchedule(1), ConfigError);
}

TEST_CASE("beta is linear in t") {
  const NoiseSchedule s(1000);
  for (int t = 1; t <= 1000; t += 37) {
    CHECK(s.beta(t) == doctest::Approx(1e-4 + (t - 1) / 999.0 * (0.02 - 1e-4)).epsilon(1e-14));
  }
}

TEST_CASE("alpha_bar matches a running product") {
  const NoiseSchedule s(1000);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-15));
  for (int t : {1, 2, 17, 500, 999, 1000}) {
    const double ref = brute_alpha_bar(t, 1000);
    CHECK(std::abs(s.alpha_bar(t) - ref) / ref < 1e-10);
  }
  for (int t = 1; t <= 1000; ++t) {
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.alpha_bar(t) > 0.0);
    CHECK(s.alpha(t) == 1.0 - s.beta(t));
  }
}

TEST_CASE("reverse variance") {
  const NoiseSchedule s(1000);
  CHECK(s.sigma2(1) == 0.0);
  for (int t = 2; t <= 1000; ++t) {
    const double ref = (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t);
    CHECK(std::abs(s.sigma2(t) - ref) <= 1e-12);
    CHECK(s.sigma2(t) > 0.0);
    CHECK(s.sigma2(t) < s.beta(t));
  }
}

TEST_CASE("step range is checked") {
  const NoiseSchedule s(50);
  CHECK_THROWS_AS(s.beta(0), ConfigError);
  CHECK_THROWS_AS(s.sigma2(51), ConfigError);
  CHECK_THROWS_AS(s.check_step(-3), ConfigError);
  CHECK_NOTHROW(s.check_step(50));
}

TEST_CASE("forward_diffuse closed forms") {
  const NoiseSchedule s(1000);
  const ImageTensor x0 = forge::test::random_image(3, 6, 5, 1);
  const ImageTensor zero(3, 6, 5, 0.0f);
  const ImageTensor x1 = s.forward_diffuse(x0, 1, zero);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    CHECK(x1.data()[i] == doctest::Approx(std::sqrt(0.9999) * x0.data()[i]).epsilon(1e-6));
  }
  const ImageTensor e = forge::test::random_image(3, 6, 5, 2);
  const ImageTensor xt = s.forward_diffuse(zero, 400, e);
  for (std::size_t i = 0; i < e.size(); ++i) {
    CHECK(xt.data()[i] == doctest::Approx(std::sqrt(1.0 - s.alpha_bar(400)) * e.data()[i]).epsilon(1e-6));
  }
  CHECK_THROWS_AS(s.forward_diffuse(x0, 1, ImageTensor(3, 6, 4)), ShapeError);
  CHECK_THROWS_AS(s.forward_diffuse(x0, 1001, e), ConfigError);
}

TEST_CASE("forward_diffuse moments") {
  // Each pixel of a 1 x 1 x 100000 image is one draw.
  const NoiseSchedule s(1000);
  const int n = 100000;
  const float c = 0.6f;
  const ImageTensor x0(1, 1, n, c);
  for (int t : {10, 300, 900}) {
    Rng rng(static_cast<std::uint64_t>(t));
    ImageTensor eps(1, 1, n);
    rng.fill_normal(eps.data());
    const ImageTensor xt = s.forward_diffuse(x0, t, eps);
    double mean = 0.0;
    for (float v : xt.data()) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : xt.data()) var += (v - mean) * (v - mean);
    var /= n - 1;
    const double want_var = 1.0 - s.alpha_bar(t);
    const double se_mean = std::sqrt(want_var / n);
    const double se_var = want_var * std::sqrt(2.0 / (n - 1));
    CHECK(std::abs(mean - std::sqrt(s.alpha_bar(t)) * c) < 3.0 * se_mean);
    CHECK(std::abs(var - want_var) < 3.0 * se_var);
  }
}

TEST_CASE("posterior coefficients match scalar formulas") {
  const NoiseSchedule s(1000);
  Rng rng(5);
  for (int k = 0; k < 5; ++k) {
    const int t = static_cast<int>(rng.uniform_int(2, 1000));
    const double ab = brute_alpha_bar(t, 1000);
    const double ab_prev = brute_alpha_bar(t - 1, 1000);
    const double beta = 1e-4 + (t - 1) * (0.02 - 1e-4) / 999.0;
    const double cx0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double cxt = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
    CHECK(s.posterior_coef_x0(t) == doctest::Approx(cx0).epsilon(1e-10));
    CHECK(s.posterior_coef_xt(t) == doctest::Approx(cxt).epsilon(1e-10));

    const float c = static_cast<float>(rng.uniform(-1.0, 1.0));
    const ImageTensor flat(2, 3, 3, c);
    const ImageTensor mu = s.posterior_step(flat, flat, t, ImageTensor(2, 3, 3, 0.0f));
    const double want = c * (std::sqrt(ab_prev) * beta + std::sqrt(1.0 - beta) * (1.0 - ab_prev)) / (1.0 - ab);
    for (float v : mu.data()) CHECK(v == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("posterior step at t = 1 is deterministic") {
  const NoiseSchedule s(1000);
  const ImageTensor xt = forge::test::random_image(3, 4, 4, 8);
  const ImageTensor x0 = forge::test::random_image(3, 4, 4, 9);
  const ImageTensor a = s.posterior_step(xt, x0, 1, forge::test::random_image(3, 4, 4, 10));
  const ImageTensor b = s.posterior_step(xt, x0, 1, forge::test::random_image(3, 4, 4, 11));
  CHECK(a == b);
  // With abar(0) = 1 the final mean is x0_hat itself.
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == doctest::Approx(x0.data()[i]).epsilon(1e-6));
}

TEST_CASE("posterior step from zero is pure noise") {
  const NoiseSchedule s(1000);
  const ImageTensor zero(1, 5, 5, 0.0f);
  const ImageTensor noise = forge::test::random_image(1, 5, 5, 3);
  const ImageTensor out = s.posterior_step(zero, zero, 600, noise);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.data()[i] == doctest::Approx(std::sqrt(s.sigma2(600)) * noise.data()[i]).epsilon(1e-6));
  }
}

TEST_CASE("composed forward kernels match the closed form") {
  // 10^4 independent pixels, each pushed through t single-step kernels.
  const NoiseSchedule s(1000);
  const int n = 10000;
  const double c = -0.3;
  for (int t : {5, 50, 200}) {
    Rng rng(1000 + t);
    std::vector<double> x(n, c);
    for (int k = 1; k <= t; ++k) {
      const double a = std::sqrt(s.alpha(k));
      const double b = std::sqrt(s.beta(k));
      for (double& v : x) v = a * v + b * rng.normal();
    }
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n - 1;
    const double want_var = 1.0 - s.alpha_bar(t);
    CHECK(std::abs(mean - std::sqrt(s.alpha_bar(t)) * c) < 4.0 * std::sqrt(want_var / n));
    CHECK(std::abs(var - want_var) < 4.0 * want_var * std::sqrt(2.0 / (n - 1)));
  }
}
