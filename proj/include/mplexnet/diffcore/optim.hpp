#pragma once

#include <cstdint>
#include <vector>

#include "mplexnet/diffcore/nn.hpp"

namespace mplexnet::diffcore {

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

/// Step decay: lr(epoch) = base_lr * decay_factor^floor(epoch / decay_every).
struct LrSchedule {
  double base_lr = 1e-3;
  double decay_factor = 0.1;
  int decay_every = 20;

  double lr(int epoch) const;
};

/// Adam with decoupled weight decay:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
/// The decay term uses the pre-update parameter value.
class AdamW {
 public:
  explicit AdamW(AdamWHyper hyper = {}) : hyper_(hyper) {}

  /// Updates every parameter from its accumulated gradient using `lr`
  /// (hyper().lr is ignored when a schedule supplies the rate). Parameters
  /// without a gradient are treated as having a zero gradient.
  /// Throws NumericalError naming the first parameter with a non-finite gradient.
  void step(ParameterSet& params, double lr);
  void step(ParameterSet& params) { step(params, hyper_.lr); }

  const AdamWHyper& hyper() const { return hyper_; }
  std::uint64_t step_count() const { return step_count_; }

  // State access for checkpointing.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void load_state(std::uint64_t step_count, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  AdamWHyper hyper_;
  std::uint64_t step_count_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace mplexnet::diffcore
