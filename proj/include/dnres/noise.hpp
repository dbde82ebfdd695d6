#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dnres/rng.hpp"
#include "dnres/tensor.hpp"

namespace dnres {

/// Additive white Gaussian noise; sigma on the 0-255 intensity scale.
struct GaussianNoise {
  double sigma = 25.0;
  bool operator==(const GaussianNoise&) const = default;
};

/// Shot noise: the [0,1] image is scaled so that 1.0 maps to `peak` expected
/// photons, sampled, and scaled back.
struct PoissonNoise {
  double peak = 4.0;
  bool operator==(const PoissonNoise&) const = default;
};

/// Poisson component plus AWGN, both on the photon (peak) scale with unit
/// gain: z = Poisson(x * peak) + N(0, sigma^2), y = z / peak.
struct PoissonGaussianNoise {
  double sigma = 1.0;
  double peak = 10.0;
  bool operator==(const PoissonGaussianNoise&) const = default;
};

using NoiseModel = std::variant<GaussianNoise, PoissonNoise, PoissonGaussianNoise>;

/// Text form used on the command line and in CSV files:
///   gaussian:25   poisson:4   pg:1 (peak defaults to 10*sigma)   pg:1:10
std::string to_string(const NoiseModel& model);
NoiseModel parse_noise_model(std::string_view text);
void validate(const NoiseModel& model);

std::vector<NoiseModel> gaussian_levels();          // sigma 10, 25, 50, 75
std::vector<NoiseModel> poisson_levels();           // peak 1, 2, 4, 8
std::vector<NoiseModel> poisson_gaussian_levels();  // sigma 0.1 .. 12, peak = 10 sigma
std::vector<NoiseModel> all_noise_levels();

template <class T>
Tensor<T> degrade_gaussian(const Tensor<T>& clean, double sigma, Rng& rng);
template <class T>
Tensor<T> degrade_poisson(const Tensor<T>& clean, double peak, Rng& rng);
template <class T>
Tensor<T> degrade_poisson_gaussian(const Tensor<T>& clean, double sigma, double peak, Rng& rng);
template <class T>
Tensor<T> degrade(const Tensor<T>& clean, const NoiseModel& model, Rng& rng);

/// Expected mean and variance of y for a clean pixel of value x.
struct NoiseMoments {
  double mean;
  double variance;
};
NoiseMoments noise_moments(const NoiseModel& model, double x);

struct MomentCheck {
  double intensity = 0;
  double expected_mean = 0;
  double empirical_mean = 0;
  double mean_tolerance = 0;  // 3 standard errors
  double expected_variance = 0;
  double empirical_variance = 0;
  double variance_tolerance = 0;  // 3 standard errors of the sample variance
  double variance_relative_error = 0;
  bool passed = false;
};

struct NoiseStatsReport {
  std::string claimed;
  std::string sampled;
  std::size_t samples_per_level = 0;
  std::vector<MomentCheck> checks;
  bool passed = false;
};

/// Degrades constant images at several intensities with `sampled_with`
/// (defaults to `claimed`) and compares the empirical moments with the
/// moments `claimed` predicts, at 3-sigma sampling tolerance.
NoiseStatsReport validate_noise_statistics(const NoiseModel& claimed, std::size_t n_samples, Rng& rng,
                                           const std::optional<NoiseModel>& sampled_with = std::nullopt);

struct ChiSquareResult {
  double statistic = 0;
  int dof = 0;
  double p_value = 0;
};

/// Upper tail probability of the chi-square distribution.
double chi_square_p_value(double statistic, int dof);

/// Goodness of fit of Rng::poisson(lambda) against the exact pmf. Bins with
/// expected count < 5 are pooled into the tail bins.
ChiSquareResult poisson_goodness_of_fit(double lambda, std::size_t n_samples, Rng& rng);

}  // namespace dnres
