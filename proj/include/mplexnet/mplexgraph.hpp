#pragma once

// Multiplex graphs and their supra-matrix algebra.
//
// Supra-node indexing is plane-major: supra(k, i) = k * P + i for plane
// k in [0, K) and feature node i in [0, P).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mplexnet/kernels.hpp"

namespace mplexnet::mplexgraph {

using IntCsr = kernels::CsrMatrix<std::int64_t>;

/// Undirected intra-plane edge with m < n.
struct Edge {
  std::uint32_t m;
  std::uint32_t n;
  auto operator<=>(const Edge&) const = default;
};

/// K binary, symmetric, zero-diagonal adjacency matrices over P shared nodes.
/// Immutable after construction.
class MultiplexGraph {
 public:
  MultiplexGraph() = default;
  MultiplexGraph(std::size_t num_nodes, std::size_t num_planes);
  /// Edges may be given in either orientation; duplicates collapse.
  /// Self-loops or out-of-range endpoints throw.
  MultiplexGraph(std::size_t num_nodes, std::size_t num_planes, std::vector<std::vector<Edge>> plane_edges);
  /// From K dense row-major P x P 0/1 matrices. Rejects asymmetric, non-binary
  /// or non-zero-diagonal input.
  static MultiplexGraph from_dense(std::size_t num_nodes, const std::vector<std::vector<int>>& planes);

  std::size_t num_nodes() const { return p_; }
  std::size_t num_planes() const { return k_; }
  std::size_t supra_size() const { return p_ * k_; }
  const std::vector<Edge>& plane_edges(std::size_t k) const { return planes_.at(k); }
  std::size_t edge_count() const;

  std::size_t supra_index(std::size_t plane, std::size_t node) const;
  std::pair<std::size_t, std::size_t> supra_coords(std::size_t index) const;

  /// Symmetric P x P adjacency of one plane.
  IntCsr plane_adjacency(std::size_t k) const;

  bool operator==(const MultiplexGraph&) const = default;

 private:
  std::size_t p_ = 0;
  std::size_t k_ = 0;
  std::vector<std::vector<Edge>> planes_;  // sorted, unique
};

/// Block-diagonal direct sum of the plane adjacencies (PK x PK).
IntCsr build_supra_adjacency(const MultiplexGraph& g);

/// (1_K 1_K^T) kron I_P: identity blocks in every K x K block position.
IntCsr build_transition_control(std::size_t num_nodes, std::size_t num_planes);

struct SupraWalks {
  IntCsr type_one;  // A * C: intra-plane step, then stay or switch plane
  IntCsr type_two;  // C * A: stay or switch plane, then intra-plane step
};

struct SupraMatrices {
  IntCsr supra_adjacency;
  IntCsr transition_control;
  SupraWalks walks;
};

/// Sparse products A*C and C*A.
SupraWalks supra_walk_matrices(const IntCsr& supra_adjacency, const IntCsr& transition_control);

/// Same matrices as supra_walk_matrices(), built in O(nnz) from the plane edge
/// lists without materializing the transition control matrix.
SupraWalks supra_walks_direct(const MultiplexGraph& g);

SupraMatrices build_supra_matrices(const MultiplexGraph& g);

/// (S^L)[i, j] for L >= 1.
std::int64_t count_walks(const IntCsr& s, int length, std::size_t i, std::size_t j);

struct Neighbor {
  std::size_t index;
  std::int64_t multiplicity;
};

/// { j : S[i, j] >= 1 } with the entry values as multiplicities.
std::vector<Neighbor> neighbors(const IntCsr& s, std::size_t i);

/// H0 = x kron 1_K laid out plane-major: H0[k * P + i] = x[i].
std::vector<double> lift_node_features(std::span<const double> x, std::size_t num_planes);

// Edge-list text format:
//   line 1: "P K"
//   optional comment lines starting with '#' (the writer emits the config hash)
//   one line per edge "k m n" with m < n, sorted by (k, m, n)
std::string to_edge_list(const MultiplexGraph& g, const std::string& config_hash = "");
MultiplexGraph parse_edge_list(const std::string& text, std::string* config_hash = nullptr);
void write_edge_list(const std::filesystem::path& path, const MultiplexGraph& g, const std::string& config_hash = "");
MultiplexGraph read_edge_list(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace mplexnet::mplexgraph
