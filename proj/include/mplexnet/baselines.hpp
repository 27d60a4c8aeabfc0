#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mplexnet/diffcore/nn.hpp"
#include "mplexnet/kernels.hpp"
#include "mplexnet/model.hpp"

namespace mplexnet::baselines {

using Csr = kernels::CsrMatrix<double>;

/// Two-hidden-layer LeakyReLU MLP over the dataset feature columns.
class MlpClassifier : public Classifier {
 public:
  MlpClassifier(std::string kind, std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t num_classes,
                std::uint64_t seed, double neg_slope = diffcore::kLeakySlope);

  std::string kind() const override { return kind_; }
  std::size_t num_classes() const override { return num_classes_; }
  diffcore::ParameterSet& params() override { return params_; }
  diffcore::Tensor logits(const Dataset& data, std::span<const std::size_t> rows) const override;
  nlohmann::json describe() const override;

  diffcore::Mlp& mlp() { return mlp_; }

 private:
  std::string kind_;
  std::size_t input_dim_;
  std::vector<std::size_t> hidden_;
  std::size_t num_classes_;
  double neg_slope_;
  diffcore::ParameterSet params_;
  diffcore::Mlp mlp_;
};

inline constexpr std::size_t kFlatHiddenWide = 400;
inline constexpr std::size_t kFlatHiddenNarrow = 20;
inline constexpr std::size_t kIntermediateHidden = 150;

/// One modality's raw features, or all of them concatenated (early fusion).
std::unique_ptr<MlpClassifier> make_no_fusion(const std::string& modality, std::size_t input_dim,
                                              std::size_t num_classes, std::uint64_t seed);
std::unique_ptr<MlpClassifier> make_early_fusion(std::size_t input_dim, std::size_t num_classes, std::uint64_t seed);
/// Over the concatenated d-AE codes x.
std::unique_ptr<MlpClassifier> make_intermediate_fusion(std::size_t input_dim, std::size_t num_classes,
                                                        std::uint64_t seed);

/// Row-wise mean of the probability matrices, renormalized per row. A
/// simplification of uncertainty-weighted late fusion.
Matrix late_fusion_average(const std::vector<Matrix>& scores);

/// D^-1/2 (A + I) D^-1/2 for a symmetric 0/1 adjacency.
Csr gcn_normalize(const kernels::CsrMatrix<std::int64_t>& adjacency);

/// Relation operator R [P x P*K] with R[i, j*K + k] = planes[k][i, j], so one
/// sparse product sums every plane's message.
Csr stack_relations(const std::vector<Csr>& planes);

/// Complete graph (no self-loops) on each contiguous node block.
std::vector<kernels::CsrMatrix<std::int64_t>> block_planes(const std::vector<std::size_t>& block_sizes);

struct RgcnConfig {
  std::size_t num_layers = 2;
  std::size_t hidden_width = 2;
  std::vector<std::size_t> readout_hidden{100, 20};
  std::size_t num_classes = 5;
  double neg_slope = diffcore::kLeakySlope;

  void validate() const;
};

enum class PlaneSource {
  /// Per-patient planes from the dataset graphs.
  patient_graphs,
  /// One fixed set of planes shared by every patient.
  shared,
};

/// Relational GCN: per layer, H' = LeakyReLU(sum_k A_k H W_k + b) with GCN
/// normalized planes A_k, then an MLP over the flattened P x D states.
class RelationalGcn : public Classifier {
 public:
  /// Planes come from the bound dataset's multiplex graphs.
  static std::unique_ptr<RelationalGcn> multiplex(std::size_t num_nodes, std::size_t num_planes, RgcnConfig cfg,
                                                  std::uint64_t seed);
  /// One complete plane per modality block.
  static std::unique_ptr<RelationalGcn> modality_planes(const std::vector<std::size_t>& block_sizes, RgcnConfig cfg,
                                                        std::uint64_t seed);
  /// A single complete plane over all P nodes.
  static std::unique_ptr<RelationalGcn> monoplex(std::size_t num_nodes, RgcnConfig cfg, std::uint64_t seed);

  std::string kind() const override { return kind_; }
  std::size_t num_classes() const override { return cfg_.num_classes; }
  diffcore::ParameterSet& params() override { return params_; }
  void bind(const Dataset& data) override;
  diffcore::Tensor logits(const Dataset& data, std::span<const std::size_t> rows) const override;
  nlohmann::json describe() const override;

  std::size_t num_nodes() const { return p_; }
  std::size_t num_relations() const { return k_; }
  const RgcnConfig& config() const { return cfg_; }
  /// Shared relation operator, or nullptr for per-patient planes.
  std::shared_ptr<const Csr> shared_operator() const { return shared_; }
  /// Layer l weight [D_l x K*D_{l+1}] (relation k in column block k) and bias [D_{l+1}].
  diffcore::Tensor& layer_weight(std::size_t l) { return weights_.at(l); }
  diffcore::Tensor& layer_bias(std::size_t l) { return biases_.at(l); }
  diffcore::Mlp& readout() { return readout_; }
  /// [rows*P x D_L] node states.
  diffcore::Tensor states(const Dataset& data, std::span<const std::size_t> rows) const;

 private:
  RelationalGcn(std::string kind, std::size_t num_nodes, std::size_t num_planes, PlaneSource source,
                std::vector<std::size_t> block_sizes, RgcnConfig cfg, std::uint64_t seed);

  std::string kind_;
  std::size_t p_;
  std::size_t k_;
  PlaneSource source_;
  std::vector<std::size_t> blocks_;
  RgcnConfig cfg_;
  diffcore::ParameterSet params_;
  std::vector<diffcore::Tensor> weights_;
  std::vector<diffcore::Tensor> biases_;
  diffcore::Mlp readout_;
  std::shared_ptr<const Csr> shared_;
  std::vector<std::shared_ptr<const Csr>> bound_;
};

}  // namespace mplexnet::baselines
