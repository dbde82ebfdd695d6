#pragma once

#include <limits>
#include <string>

#include "dnres/tensor.hpp"

namespace dnres {

enum class EdgeMode { sobel_magnitude, binary_mask };

/// Which edge map weights the edge term, and how strongly.
struct EdgeMapSpec {
  EdgeMode mode = EdgeMode::sobel_magnitude;
  double weight = 0.025;
  double threshold = 150.0;  // 0-255 Sobel-magnitude scale, binary mode only

  static EdgeMapSpec sobel(double weight = 0.025) { return {EdgeMode::sobel_magnitude, weight, 150.0}; }
  static EdgeMapSpec binary(double weight = 4.0, double threshold = 150.0) {
    return {EdgeMode::binary_mask, weight, threshold};
  }
};

struct LossReport {
  double total = 0;
  double mse_term = 0;
  double edge_term = 0;
};

template <class T>
struct LossResult {
  LossReport report;
  Tensor<T> grad;  // d total / d pred
};

/// Loss selection for training: plain MSE or MSE plus edge term.
struct LossSpec {
  bool edge_aware = false;
  EdgeMapSpec edge{};

  static LossSpec mse() { return {}; }
  static LossSpec edge_a(double w = 0.025) { return {true, EdgeMapSpec::sobel(w)}; }
  static LossSpec edge_b(double w = 4.0) { return {true, EdgeMapSpec::binary(w)}; }
};

std::string to_string(const LossSpec& spec);
/// "mse", "edge-a" or "edge-b"; weight < 0 keeps the mode default.
LossSpec parse_loss_spec(const std::string& name, double weight = -1.0);

/// mean((target - pred)^2) and its gradient 2 (pred - target) / count.
template <class T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// Per-plane 3x3 Sobel response with replicate borders. sobel_magnitude:
/// min(1, |G|); binary_mask: 1 where 255 |G| >= threshold.
template <class T>
Tensor<T> sobel_edge_map(const Tensor<T>& clean, const EdgeMapSpec& spec);

/// mse + w * mean((target*M - pred*M)^2), with M taken from the target and
/// held constant for the gradient.
template <class T>
LossResult<T> edge_aware_loss(const Tensor<T>& pred, const Tensor<T>& target, const EdgeMapSpec& spec);
template <class T>
LossResult<T> edge_aware_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& edge_map,
                              double weight);

template <class T>
LossResult<T> compute_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossSpec& spec);

/// Returned by psnr() for identical inputs.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double max_val = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double max_val = 1.0;
};

/// Mean SSIM over every full Gaussian-weighted window position, averaged
/// over all planes.
template <class T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& options = {});

}  // namespace dnres
