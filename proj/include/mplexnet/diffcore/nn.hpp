#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mplexnet/diffcore/ops.hpp"
#include "mplexnet/diffcore/tensor.hpp"

namespace mplexnet::diffcore {

using Rng = std::mt19937_64;

/// Ordered, named collection of trainable tensors. Order defines checkpoint
/// layout and optimizer state alignment.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  /// Deep copy of the current values (used to keep the best epoch).
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Fully connected layer registered into a ParameterSet under `prefix`.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, ParameterSet& params, const std::string& prefix);

  Tensor operator()(const Tensor& x) const { return affine(x, weight_, bias_); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }

 private:
  Tensor weight_;
  Tensor bias_;
};

/// Stack of Linear layers with LeakyReLU between them and none after the last.
class Mlp {
 public:
  Mlp() = default;
  /// widths = {input, hidden..., output}
  Mlp(const std::vector<std::size_t>& widths, Rng& rng, ParameterSet& params, const std::string& prefix,
      double neg_slope = kLeakySlope);

  Tensor operator()(const Tensor& x) const;
  std::size_t depth() const { return layers_.size(); }
  Linear& layer(std::size_t i) { return layers_.at(i); }
  const Linear& layer(std::size_t i) const { return layers_.at(i); }

 private:
  std::vector<Linear> layers_;
  double neg_slope_ = kLeakySlope;
};

}  // namespace mplexnet::diffcore
