#include "mplexnet/diffcore/optim.hpp"

#include <cmath>

#include "mplexnet/error.hpp"

namespace mplexnet::diffcore {

double LrSchedule::lr(int epoch) const {
  if (decay_every <= 0) throw ConfigError("lr schedule decay_every must be positive");
  return base_lr * std::pow(decay_factor, epoch / decay_every);
}

void AdamW::step(ParameterSet& params, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("AdamW learning rate must be finite and positive");
  if (m_.empty()) {
    for (const auto& [name, t] : params) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw DimensionError("AdamW state does not match the parameter set");

  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (double g : t.node()->grad)
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter '" + name + "'");
  }

  ++step_count_;
  const double b1 = hyper_.beta1, b2 = hyper_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  std::size_t idx = 0;
  for (auto& [name, t] : params) {
    auto& m = m_[idx];
    auto& v = v_[idx];
    ++idx;
    if (m.size() != t.size()) throw DimensionError("AdamW moment shape mismatch for '" + name + "'");
    auto theta = t.mutable_values();
    const auto& grad = t.node()->grad;
    const bool has_grad = !grad.empty();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = has_grad ? grad[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] = theta[i] - lr * m_hat / (std::sqrt(v_hat) + hyper_.eps) - lr * hyper_.weight_decay * theta[i];
    }
  }
}

void AdamW::load_state(std::uint64_t step_count, std::vector<std::vector<double>> m,
                       std::vector<std::vector<double>> v) {
  if (m.size() != v.size()) throw DimensionError("AdamW state: moment lists differ in length");
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace mplexnet::diffcore
