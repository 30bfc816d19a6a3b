#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace forge {

/// Adaptive moment estimation with bias correction.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(std::size_t parameter_count) : Adam(parameter_count, Options{}) {}
  Adam(std::size_t parameter_count, Options options)
      : options_(options), first_(parameter_count, 0.0), second_(parameter_count, 0.0) {}

  /// params -= lr * mhat / (sqrt(vhat) + eps).
  template <typename T>
  void step(std::span<T> params, std::span<const T> grad, double lr);

  std::int64_t steps_taken() const { return step_; }

 private:
  Options options_;
  std::vector<double> first_;
  std::vector<double> second_;
  std::int64_t step_ = 0;
};

}  // namespace forge
