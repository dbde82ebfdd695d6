#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dnres/loss.hpp"
#include "dnres/network.hpp"
#include "dnres/rng.hpp"

namespace dnres {

/// A differentiable f64 function reduced to a scalar by projecting its
/// output onto a fixed random tensor R: L = sum(R * f(x)).
///
/// The signature returned by evaluate() identifies the ReLU activation
/// pattern. Between kinks every function checked here is piecewise linear
/// (or quadratic for losses), so a central difference whose two probes see
/// the same pattern as the unperturbed point is exact up to rounding.
class GradientProbe {
 public:
  virtual ~GradientProbe() = default;

  virtual double evaluate(const TensorD& x, std::uint64_t* signature) = 0;
  /// Analytic dL/dparams (one vector per parameter tensor) and dL/dx.
  virtual void analytic(const TensorD& x, std::vector<std::vector<double>>& param_grads, TensorD& input_grad) = 0;
  virtual std::vector<std::span<double>> parameters() = 0;
  virtual std::vector<std::string> parameter_names() const = 0;
};

struct GradcheckOptions {
  double step = 1e-4;
  double tolerance = 1e-5;
  double floor = 1e-12;          // denominator floor of the relative error
  int max_step_reductions = 3;   // step /= 10 each time a probe crosses a kink
  std::size_t max_entries = 0;   // per tensor; 0 checks every entry
  bool check_input = true;
};

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // every step size crossed a kink
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;

  bool passed() const noexcept { return checked > 0 && max_rel_error <= tolerance; }
  std::string summary() const;
};

/// Central differences against probe.analytic(). `rng` picks the entries
/// when options.max_entries limits them.
GradcheckReport gradient_check(GradientProbe& probe, const TensorD& input, Rng& rng, const GradcheckOptions& options);

/// Probe over a single layer of any kind.
std::unique_ptr<GradientProbe> make_layer_probe(Layer<double>& layer, std::uint64_t seed);
/// Probe over a whole network (parameters are the network's own).
std::unique_ptr<GradientProbe> make_network_probe(NetworkD& net, std::uint64_t seed);
/// Probe over add(x, b); b is exposed as the only "parameter".
std::unique_ptr<GradientProbe> make_add_probe(TensorD& b, std::uint64_t seed);
/// Losses are quadratic in each prediction entry, so any step is exact; a
/// large one keeps the difference clear of rounding noise.
inline constexpr double kLossCheckStep = 0.1;

/// A network is piecewise linear in any single weight or input entry, so a
/// difference whose probes keep the ReLU pattern is exact whatever the step.
/// At fresh-init scale the block branches are ~1e-6 of the skip path and a
/// 1e-4 step leaves mostly rounding; 1e-2 keeps the signal well above it.
inline constexpr double kNetworkCheckStep = 1e-2;

/// Probe over a loss as a function of the prediction `x`; L is the loss itself.
std::unique_ptr<GradientProbe> make_loss_probe(const TensorD& target, const LossSpec& spec);

enum class GradcheckSubject { conv, depthwise_conv, relu, add, resblock, ds_resblock, network, loss_mse, loss_edge_a, loss_edge_b };

std::string to_string(GradcheckSubject subject);
std::vector<GradcheckSubject> all_gradcheck_subjects();

struct TrialSummary {
  GradcheckSubject subject{};
  int trials = 0;
  int passed = 0;
  double worst_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::string first_failure;
};

/// Randomised trials: shapes, padding, parameter scales and inputs are drawn
/// from (seed, trial). The network subject is a fresh 5-layer DN-ResNet
/// (one ResBlock) whose weights are redrawn at a trial-dependent scale.
TrialSummary run_gradcheck_trials(GradcheckSubject subject, int trials, std::uint64_t seed,
                                  const GradcheckOptions& options);

}  // namespace dnres
