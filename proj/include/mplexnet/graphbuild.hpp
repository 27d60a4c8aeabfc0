#pragma once

#include <span>
#include <vector>

#include "mplexnet/encoders.hpp"
#include "mplexnet/kernels.hpp"
#include "mplexnet/matrix.hpp"
#include "mplexnet/mplexgraph.hpp"

namespace mplexnet::graphbuild {

/// Per-plane node budget: max(min_nodes, ceil(fraction * P)), capped at P.
struct SparsityRule {
  double fraction = 0.01;
  std::size_t min_nodes = 2;

  void validate() const;
  std::size_t count(std::size_t num_features) const;
};

/// Copy of x with coordinate i set to zero.
std::vector<double> perturb_input(std::span<const double> x, std::size_t i);

/// P x K matrix p[i, k] = |enc(perturb(x, i))[k] - enc(x)[k]| from P forward
/// passes of the encoder. The parallel path splits the passes across threads
/// and returns the same bits as the serial one.
Matrix saliency(const encoders::TiedAutoencoder& cae, std::span<const double> x,
                kernels::Exec exec = kernels::default_exec());
/// Throws ArtifactError when the stack is untrained.
Matrix saliency(const encoders::EncoderStack& stack, std::span<const double> x,
                kernels::Exec exec = kernels::default_exec());

/// Indices of the rule.count(P) largest entries, ties to the lower index,
/// returned in ascending order.
std::vector<std::size_t> select_salient(std::span<const double> column, const SparsityRule& rule);

/// Plane k is the complete graph on select_salient(p[:, k]).
mplexgraph::MultiplexGraph graph_from_saliency(const Matrix& p, const SparsityRule& rule);

mplexgraph::MultiplexGraph build_patient_multiplex(const encoders::EncoderStack& stack, std::span<const double> x,
                                                   const SparsityRule& rule,
                                                   kernels::Exec exec = kernels::default_exec());

/// One graph per row of `features`. Parallel execution distributes patients
/// across threads; each graph is identical to the serial result.
std::vector<mplexgraph::MultiplexGraph> build_cohort_graphs(const encoders::EncoderStack& stack,
                                                            const Matrix& features, const SparsityRule& rule,
                                                            kernels::Exec exec = kernels::default_exec());

/// Shared topology from the mean saliency over the given (training) rows.
mplexgraph::MultiplexGraph build_global_multiplex(const encoders::EncoderStack& stack, const Matrix& features,
                                                  std::span<const std::size_t> rows, const SparsityRule& rule,
                                                  kernels::Exec exec = kernels::default_exec());

struct PlaneSummary {
  std::vector<std::size_t> nodes_per_plane;
  std::vector<std::size_t> edges_per_plane;
};

PlaneSummary summarize(const mplexgraph::MultiplexGraph& g);

}  // namespace mplexnet::graphbuild
