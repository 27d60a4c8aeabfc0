#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mplexnet/diffcore/nn.hpp"
#include "mplexnet/matrix.hpp"
#include "mplexnet/mplexgraph.hpp"

namespace mplexnet {

/// Inputs for every model kind. Models read the columns they need; graph
/// models read `graphs` (one per row, or a single graph shared by all rows).
struct Dataset {
  Matrix features;
  std::vector<mplexgraph::MultiplexGraph> graphs;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return features.rows; }
  const mplexgraph::MultiplexGraph& graph(std::size_t row) const;
  void validate(std::size_t num_classes) const;
};

/// A trainable classifier producing one logit per class.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual diffcore::ParameterSet& params() = 0;
  const diffcore::ParameterSet& params() const { return const_cast<Classifier*>(this)->params(); }

  /// Precomputes per-row operators for `data`; must be called before logits().
  /// Rebinding to another dataset replaces the cache.
  virtual void bind(const Dataset& data) { (void)data; }
  /// [rows x C] logits for the given rows of the bound dataset.
  virtual diffcore::Tensor logits(const Dataset& data, std::span<const std::size_t> rows) const = 0;
  /// Architecture description stored in checkpoints.
  virtual nlohmann::json describe() const = 0;
};

/// Softmax probabilities for `rows`, evaluated without gradient recording in
/// chunks of `batch_size`.
Matrix predict_proba(const Classifier& model, const Dataset& data, std::span<const std::size_t> rows,
                     std::size_t batch_size = 32);

}  // namespace mplexnet
