#include "dnres/optimizer.hpp"

#include <cmath>

#include "dnres/error.hpp"

namespace dnres {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw InvalidArgument("unknown optimizer '" + name + "' (expected adam or sgd)");
}

template <class T>
void Optimizer<T>::reset() {
  step_ = 0;
  m_.clear();
  v_.clear();
}

template <class T>
void Optimizer<T>::step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer_step", "parameter tensor count", params.size(), grads.size());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) {
      throw ShapeError("optimizer_step", "parameter " + std::to_string(i) + " length", params[i].size(),
                       grads[i].size());
    }
    for (const T g : grads[i]) {
      if (!std::isfinite(g)) {
        throw NumericError("optimizer_step: non-finite gradient in parameter tensor " + std::to_string(i));
      }
    }
  }

  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::sgd) {
    ++step_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (std::size_t j = 0; j < params[i].size(); ++j) {
        params[i][j] = static_cast<T>(params[i][j] - lr * grads[i][j]);
      }
    }
    return;
  }

  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].size(), 0.0);
      v_[i].assign(params[i].size(), 0.0);
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError("optimizer_step", "parameter tensor count", m_.size(), params.size());
  }

  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m_[i].size() != params[i].size()) {
      throw ShapeError("optimizer_step", "parameter " + std::to_string(i) + " length", m_[i].size(),
                       params[i].size());
    }
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double g = grads[i][j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      params[i][j] = static_cast<T>(params[i][j] - lr * m_hat / (std::sqrt(v_hat) + config_.epsilon));
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace dnres
