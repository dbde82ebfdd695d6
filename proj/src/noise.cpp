#include "dnres/noise.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <charconv>
#include <cmath>
#include <sstream>

namespace dnres {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double parse_number(std::string_view text, std::string_view whole) {
  double v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InvalidArgument("noise model '" + std::string(whole) + "': '" + std::string(text) + "' is not a number");
  }
  return v;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(const NoiseModel& model) {
  return std::visit(overloaded{
                        [](const GaussianNoise& g) { return "gaussian:" + format_number(g.sigma); },
                        [](const PoissonNoise& p) { return "poisson:" + format_number(p.peak); },
                        [](const PoissonGaussianNoise& pg) {
                          return "pg:" + format_number(pg.sigma) + ":" + format_number(pg.peak);
                        },
                    },
                    model);
}

NoiseModel parse_noise_model(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t colon = text.find(':', start);
    parts.push_back(text.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  const std::string_view kind = parts[0];
  NoiseModel model;
  if ((kind == "gaussian" || kind == "g") && parts.size() == 2) {
    model = GaussianNoise{parse_number(parts[1], text)};
  } else if ((kind == "poisson" || kind == "p") && parts.size() == 2) {
    model = PoissonNoise{parse_number(parts[1], text)};
  } else if ((kind == "pg" || kind == "poisson-gaussian") && (parts.size() == 2 || parts.size() == 3)) {
    const double sigma = parse_number(parts[1], text);
    const double peak = parts.size() == 3 ? parse_number(parts[2], text) : 10.0 * sigma;
    model = PoissonGaussianNoise{sigma, peak};
  } else {
    throw InvalidArgument("cannot parse noise model '" + std::string(text) +
                          "' (expected gaussian:SIGMA, poisson:PEAK or pg:SIGMA[:PEAK])");
  }
  validate(model);
  return model;
}

void validate(const NoiseModel& model) {
  std::visit(overloaded{
                 [](const GaussianNoise& g) {
                   if (!(g.sigma >= 0.0) || !std::isfinite(g.sigma)) {
                     throw InvalidArgument("gaussian noise: sigma must be finite and >= 0");
                   }
                 },
                 [](const PoissonNoise& p) {
                   if (!(p.peak > 0.0) || !std::isfinite(p.peak)) {
                     throw InvalidArgument("poisson noise: peak must be finite and > 0");
                   }
                 },
                 [](const PoissonGaussianNoise& pg) {
                   if (!(pg.sigma >= 0.0) || !std::isfinite(pg.sigma)) {
                     throw InvalidArgument("poisson-gaussian noise: sigma must be finite and >= 0");
                   }
                   if (!(pg.peak > 0.0) || !std::isfinite(pg.peak)) {
                     throw InvalidArgument("poisson-gaussian noise: peak must be finite and > 0");
                   }
                 },
             },
             model);
}

std::vector<NoiseModel> gaussian_levels() {
  return {GaussianNoise{10}, GaussianNoise{25}, GaussianNoise{50}, GaussianNoise{75}};
}

std::vector<NoiseModel> poisson_levels() { return {PoissonNoise{1}, PoissonNoise{2}, PoissonNoise{4}, PoissonNoise{8}}; }

std::vector<NoiseModel> poisson_gaussian_levels() {
  std::vector<NoiseModel> out;
  for (double s : {0.1, 0.2, 0.5, 1.0, 2.0, 3.0, 6.0, 12.0}) out.push_back(PoissonGaussianNoise{s, 10.0 * s});
  return out;
}

std::vector<NoiseModel> all_noise_levels() {
  auto out = gaussian_levels();
  for (auto& m : poisson_levels()) out.push_back(m);
  for (auto& m : poisson_gaussian_levels()) out.push_back(m);
  return out;
}

template <class T>
Tensor<T> degrade_gaussian(const Tensor<T>& clean, double sigma, Rng& rng) {
  validate(GaussianNoise{sigma});
  Tensor<T> out(clean.shape());
  const double s = sigma / 255.0;
  auto src = clean.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(static_cast<double>(src[i]) + s * rng.normal());
  return out;
}

template <class T>
Tensor<T> degrade_poisson(const Tensor<T>& clean, double peak, Rng& rng) {
  validate(PoissonNoise{peak});
  Tensor<T> out(clean.shape());
  auto src = clean.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double lambda = std::max(0.0, static_cast<double>(src[i])) * peak;
    dst[i] = static_cast<T>(static_cast<double>(rng.poisson(lambda)) / peak);
  }
  return out;
}

template <class T>
Tensor<T> degrade_poisson_gaussian(const Tensor<T>& clean, double sigma, double peak, Rng& rng) {
  validate(PoissonGaussianNoise{sigma, peak});
  Tensor<T> out(clean.shape());
  auto src = clean.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double lambda = std::max(0.0, static_cast<double>(src[i])) * peak;
    const double z = static_cast<double>(rng.poisson(lambda)) + sigma * rng.normal();
    dst[i] = static_cast<T>(z / peak);
  }
  return out;
}

template <class T>
Tensor<T> degrade(const Tensor<T>& clean, const NoiseModel& model, Rng& rng) {
  return std::visit(overloaded{
                        [&](const GaussianNoise& g) { return degrade_gaussian(clean, g.sigma, rng); },
                        [&](const PoissonNoise& p) { return degrade_poisson(clean, p.peak, rng); },
                        [&](const PoissonGaussianNoise& pg) {
                          return degrade_poisson_gaussian(clean, pg.sigma, pg.peak, rng);
                        },
                    },
                    model);
}

NoiseMoments noise_moments(const NoiseModel& model, double x) {
  return std::visit(overloaded{
                        [&](const GaussianNoise& g) {
                          const double s = g.sigma / 255.0;
                          return NoiseMoments{x, s * s};
                        },
                        [&](const PoissonNoise& p) { return NoiseMoments{x, x / p.peak}; },
                        [&](const PoissonGaussianNoise& pg) {
                          return NoiseMoments{x, (x * pg.peak + pg.sigma * pg.sigma) / (pg.peak * pg.peak)};
                        },
                    },
                    model);
}

NoiseStatsReport validate_noise_statistics(const NoiseModel& claimed, std::size_t n_samples, Rng& rng,
                                           const std::optional<NoiseModel>& sampled_with) {
  if (n_samples < 2) throw InvalidArgument("validate_noise_statistics: need at least 2 samples");
  const NoiseModel& actual = sampled_with ? *sampled_with : claimed;
  NoiseStatsReport report;
  report.claimed = to_string(claimed);
  report.sampled = to_string(actual);
  report.samples_per_level = n_samples;
  report.passed = true;
  for (double x : {0.1, 0.5, 0.9}) {
    Tensor<double> flat(1, 1, 1, n_samples, x);
    const Tensor<double> y = degrade(flat, actual, rng);
    const auto d = y.data();
    double mean = 0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(n_samples);
    double m2 = 0, m4 = 0;
    for (double v : d) {
      const double e = (v - mean) * (v - mean);
      m2 += e;
      m4 += e * e;
    }
    const double n = static_cast<double>(n_samples);
    const double var = m2 / (n - 1.0);
    m4 /= n;

    const NoiseMoments expected = noise_moments(claimed, x);
    MomentCheck c;
    c.intensity = x;
    c.expected_mean = expected.mean;
    c.empirical_mean = mean;
    c.mean_tolerance = 3.0 * std::sqrt(std::max(expected.variance, var) / n);
    c.expected_variance = expected.variance;
    c.empirical_variance = var;
    c.variance_tolerance = 3.0 * std::sqrt(std::max(m4 - var * var, 0.0) / n);
    c.variance_relative_error =
        expected.variance > 0 ? std::fabs(var - expected.variance) / expected.variance : std::fabs(var);
    c.passed = std::fabs(mean - expected.mean) <= c.mean_tolerance &&
               std::fabs(var - expected.variance) <= c.variance_tolerance;
    report.passed = report.passed && c.passed;
    report.checks.push_back(c);
  }
  return report;
}

double chi_square_p_value(double statistic, int dof) {
  if (dof <= 0) throw InvalidArgument("chi_square_p_value: dof must be positive");
  if (statistic <= 0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

ChiSquareResult poisson_goodness_of_fit(double lambda, std::size_t n_samples, Rng& rng) {
  if (!(lambda > 0)) throw InvalidArgument("poisson_goodness_of_fit: lambda must be > 0");
  // Exact pmf up to where the remaining tail is negligible.
  std::vector<double> pmf;
  double p = std::exp(-lambda);
  double cum = 0;
  for (std::size_t k = 0; cum < 1.0 - 1e-13 && k < 10000; ++k) {
    if (k > 0) p *= lambda / static_cast<double>(k);
    pmf.push_back(p);
    cum += p;
  }
  const double n = static_cast<double>(n_samples);
  std::size_t lo = 0;
  while (lo + 1 < pmf.size() && n * pmf[lo] < 5.0) ++lo;
  std::size_t hi = pmf.size() - 1;
  while (hi > lo && n * pmf[hi] < 5.0) --hi;

  // bins: [0, lo], lo+1 .. hi-1, [hi, inf)
  const std::size_t bins = hi > lo ? hi - lo + 1 : 1;
  std::vector<double> expected(bins, 0.0), observed(bins, 0.0);
  auto bin_of = [&](std::size_t k) {
    if (k <= lo) return std::size_t{0};
    if (k >= hi) return bins - 1;
    return k - lo;
  };
  double below = 0;
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    if (k < hi) below += pmf[k];
    if (k < hi) expected[bin_of(k)] += n * pmf[k];
  }
  expected[bins - 1] += n * (1.0 - below);
  for (std::size_t i = 0; i < n_samples; ++i) observed[bin_of(rng.poisson(lambda))] += 1.0;

  ChiSquareResult r;
  for (std::size_t b = 0; b < bins; ++b) {
    const double d = observed[b] - expected[b];
    r.statistic += d * d / expected[b];
  }
  r.dof = static_cast<int>(bins) - 1;
  r.p_value = r.dof > 0 ? chi_square_p_value(r.statistic, r.dof) : 1.0;
  return r;
}

#define DNRES_INSTANTIATE_NOISE(T)                                                   \
  template Tensor<T> degrade_gaussian(const Tensor<T>&, double, Rng&);               \
  template Tensor<T> degrade_poisson(const Tensor<T>&, double, Rng&);                \
  template Tensor<T> degrade_poisson_gaussian(const Tensor<T>&, double, double, Rng&); \
  template Tensor<T> degrade(const Tensor<T>&, const NoiseModel&, Rng&);

DNRES_INSTANTIATE_NOISE(float)
DNRES_INSTANTIATE_NOISE(double)

#undef DNRES_INSTANTIATE_NOISE

}  // namespace dnres
