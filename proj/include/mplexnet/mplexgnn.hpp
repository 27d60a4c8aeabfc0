#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mplexnet/diffcore/nn.hpp"
#include "mplexnet/kernels.hpp"
#include "mplexnet/model.hpp"
#include "mplexnet/mplexgraph.hpp"

namespace mplexnet::mplexgnn {

using OperatorBlocks = std::vector<std::shared_ptr<const kernels::CsrMatrix<double>>>;

/// multiplicity: neighbor messages weighted by walk counts (entries of A*C can
/// exceed 1). binary: every nonzero entry counts once.
enum class WalkWeighting { multiplicity, binary };
enum class Readout { flatten, mean_pool };

struct MplexGnnConfig {
  std::size_t num_layers = 2;
  std::size_t hidden_width = 1;
  double gin_epsilon = 0.0;
  bool learn_epsilon = false;
  std::vector<std::size_t> readout_hidden{100, 20};
  std::size_t num_classes = 5;
  double neg_slope = diffcore::kLeakySlope;
  WalkWeighting weighting = WalkWeighting::multiplicity;
  Readout readout = Readout::flatten;
  /// Replace every GIN map by the identity (state width doubles per layer).
  bool identity_mlp = false;

  void validate() const;
  /// Per-supra-node width after layer `layer` (0 = input).
  std::size_t state_width(std::size_t layer) const;
};

/// One GIN aggregator: h'_i = mlp((1 + eps) h_i + sum_j S[i, j] h_j), with
/// mlp = LeakyReLU(affine) or the identity.
struct GinAggregator {
  diffcore::Linear mlp;
  bool identity = false;
  double neg_slope = diffcore::kLeakySlope;
  /// Learnable scalar when defined; otherwise fixed_epsilon is used.
  diffcore::Tensor epsilon;
  double fixed_epsilon = 0.0;
};

/// H is the row-wise stack of per-sample states; s holds each sample's walk operator.
diffcore::Tensor gin_aggregate(const diffcore::Tensor& h, const OperatorBlocks& s, const GinAggregator& phi);

/// concat(phi_one(H, walk_one), phi_two(H, walk_two)) along the feature axis.
diffcore::Tensor mplex_layer(const diffcore::Tensor& h, const OperatorBlocks& walk_one, const OperatorBlocks& walk_two,
                             const GinAggregator& phi_one, const GinAggregator& phi_two);

struct WalkOperators {
  std::shared_ptr<const kernels::CsrMatrix<double>> type_one;
  std::shared_ptr<const kernels::CsrMatrix<double>> type_two;
};

WalkOperators walk_operators(const mplexgraph::MultiplexGraph& g, WalkWeighting weighting);

/// Multiplexed GNN: L stacked mplex layers over the lifted node features and an
/// MLP readout over the flattened (or mean-pooled) supra-node states.
class MplexGnn : public Classifier {
 public:
  MplexGnn(std::size_t num_nodes, std::size_t num_planes, MplexGnnConfig cfg, std::uint64_t seed);

  std::string kind() const override { return "mplex"; }
  std::size_t num_classes() const override { return cfg_.num_classes; }
  diffcore::ParameterSet& params() override { return params_; }
  void bind(const Dataset& data) override;
  diffcore::Tensor logits(const Dataset& data, std::span<const std::size_t> rows) const override;
  nlohmann::json describe() const override;

  const MplexGnnConfig& config() const { return cfg_; }
  std::size_t readout_width() const;
  GinAggregator& aggregator(std::size_t layer, int walk_type) { return aggregators_.at(2 * layer + (walk_type == 1 ? 0 : 1)); }
  diffcore::Mlp& readout() { return readout_; }

  /// Final supra-node states for a stack of lifted inputs.
  diffcore::Tensor states(const diffcore::Tensor& h0, const OperatorBlocks& walk_one,
                          const OperatorBlocks& walk_two) const;
  /// [1 x C] logits for a single patient.
  diffcore::Tensor forward(std::span<const double> x, const mplexgraph::MultiplexGraph& g) const;

 private:
  diffcore::Tensor head(const diffcore::Tensor& states, std::size_t batch) const;
  void check_graph(const mplexgraph::MultiplexGraph& g) const;

  std::size_t p_;
  std::size_t k_;
  MplexGnnConfig cfg_;
  diffcore::ParameterSet params_;
  std::vector<GinAggregator> aggregators_;
  diffcore::Mlp readout_;
  std::shared_ptr<const kernels::CsrMatrix<double>> pool_;
  std::vector<WalkOperators> bound_;
};

}  // namespace mplexnet::mplexgnn
