#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dnres {

enum class OptimizerKind { adam, sgd };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-4;  // constant for the whole run, never decayed
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Plain SGD or Adam with bias correction. Moment buffers are created on the
/// first step and must keep the same parameter layout afterwards.
template <class T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  const OptimizerConfig& config() const noexcept { return config_; }
  std::int64_t steps() const noexcept { return step_; }

  /// Applies one update. If any gradient is non-finite nothing is modified
  /// and NumericError is thrown.
  void step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads);

  void reset();

 private:
  OptimizerConfig config_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace dnres
