#include "forge/optimizer.hpp"

#include <cmath>

#include "forge/errors.hpp"

namespace forge {

template <typename T>
void Adam::step(std::span<T> params, std::span<const T> grad, double lr) {
  if (params.size() != first_.size() || grad.size() != first_.size()) {
    throw ShapeError("optimizer state size differs from parameter count");
  }
  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double step_size = lr / correction1;
  const double inv_sqrt_c2 = 1.0 / std::sqrt(correction2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    first_[i] = b1 * first_[i] + (1.0 - b1) * g;
    second_[i] = b2 * second_[i] + (1.0 - b2) * g * g;
    const double denom = std::sqrt(second_[i]) * inv_sqrt_c2 + options_.eps;
    params[i] = static_cast<T>(params[i] - step_size * first_[i] / denom);
  }
}

template void Adam::step<float>(std::span<float>, std::span<const float>, double);
template void Adam::step<double>(std::span<double>, std::span<const double>, double);

}  // namespace forge
