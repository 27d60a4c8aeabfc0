#include "mplexnet/diffcore/nn.hpp"

#include <cmath>

#include "mplexnet/error.hpp"

namespace mplexnet::diffcore {

Tensor& ParameterSet::add(std::string name, Tensor t) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  entries_.emplace_back(std::move(name), std::move(t));
  return entries_.back().second;
}

Tensor& ParameterSet::get(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw ConfigError("unknown parameter: " + name);
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw ConfigError("unknown parameter: " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

std::vector<std::vector<double>> ParameterSet::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.emplace_back(e.second.values().begin(), e.second.values().end());
  return out;
}

void ParameterSet::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) throw DimensionError("parameter snapshot has wrong entry count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = entries_[i].second.mutable_values();
    if (dst.size() != values[i].size()) throw DimensionError("parameter snapshot size mismatch: " + entries_[i].first);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = dist(rng);
  return Tensor::from({fan_in, fan_out}, std::move(v), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, ParameterSet& params, const std::string& prefix) {
  weight_ = params.add(prefix + ".weight", glorot_uniform(in, out, rng));
  bias_ = params.add(prefix + ".bias", Tensor::zeros({out}, true));
}

Mlp::Mlp(const std::vector<std::size_t>& widths, Rng& rng, ParameterSet& params, const std::string& prefix,
         double neg_slope)
    : neg_slope_(neg_slope) {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    layers_.emplace_back(widths[i], widths[i + 1], rng, params, prefix + "." + std::to_string(i));
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = leaky_relu(h, neg_slope_);
  }
  return h;
}

}  // namespace mplexnet::diffcore
