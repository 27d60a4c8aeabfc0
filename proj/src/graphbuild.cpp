#include "mplexnet/graphbuild.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mplexnet/error.hpp"

namespace mplexnet::graphbuild {

using mplexgraph::Edge;
using mplexgraph::MultiplexGraph;

void SparsityRule::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("sparsity fraction must lie in (0, 1]");
  if (min_nodes < 2) throw ConfigError("sparsity min_nodes must be at least 2");
}

std::size_t SparsityRule::count(std::size_t num_features) const {
  validate();
  // The small slack keeps ceil(0.01 * 400) at 4 despite rounding in the product.
  const auto by_fraction = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(num_features) - 1e-9));
  return std::min(num_features, std::max(min_nodes, by_fraction));
}

std::vector<double> perturb_input(std::span<const double> x, std::size_t i) {
  if (i >= x.size())
    throw DimensionError("perturbation index " + std::to_string(i) + " out of range for " + std::to_string(x.size()) +
                         " features");
  std::vector<double> out(x.begin(), x.end());
  out[i] = 0.0;
  return out;
}

Matrix saliency(const encoders::TiedAutoencoder& cae, std::span<const double> x, kernels::Exec exec) {
  const auto p = cae.spec().input_dim, k = cae.spec().bottleneck_dim;
  if (x.size() != p)
    throw DimensionError("saliency: encoder expects " + std::to_string(p) + " features, got " + std::to_string(x.size()));
  std::vector<double> base(k);
  cae.encode_row(x, base);
  Matrix out(p, k);
  auto row = [&](std::size_t i, std::vector<double>& buf, std::vector<double>& z) {
    std::copy(x.begin(), x.end(), buf.begin());
    buf[i] = 0.0;
    cae.encode_row(buf, z);
    for (std::size_t c = 0; c < k; ++c) out(i, c) = std::abs(z[c] - base[c]);
  };
  if (exec == kernels::Exec::serial) {
    std::vector<double> buf(p), z(k);
    for (std::size_t i = 0; i < p; ++i) row(i, buf, z);
  } else {
#pragma omp parallel
    {
      std::vector<double> buf(p), z(k);
#pragma omp for schedule(static)
      for (std::size_t i = 0; i < p; ++i) row(i, buf, z);
    }
  }
  return out;
}

Matrix saliency(const encoders::EncoderStack& stack, std::span<const double> x, kernels::Exec exec) {
  if (!stack.trained()) throw ArtifactError("saliency needs a trained encoder stack");
  return saliency(stack.cae, x, exec);
}

std::vector<std::size_t> select_salient(std::span<const double> column, const SparsityRule& rule) {
  const auto s = rule.count(column.size());
  std::vector<std::size_t> idx(column.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(s), idx.end(), [&](std::size_t a, std::size_t b) {
    return column[a] > column[b] || (column[a] == column[b] && a < b);
  });
  idx.resize(s);
  std::sort(idx.begin(), idx.end());
  return idx;
}

MultiplexGraph graph_from_saliency(const Matrix& p, const SparsityRule& rule) {
  std::vector<std::vector<Edge>> planes(p.cols);
  std::vector<double> col(p.rows);
  for (std::size_t k = 0; k < p.cols; ++k) {
    for (std::size_t i = 0; i < p.rows; ++i) col[i] = p(i, k);
    const auto nodes = select_salient(col, rule);
    for (std::size_t a = 0; a < nodes.size(); ++a)
      for (std::size_t b = a + 1; b < nodes.size(); ++b) planes[k].push_back({static_cast<std::uint32_t>(nodes[a]), static_cast<std::uint32_t>(nodes[b])});
  }
  return MultiplexGraph(p.rows, p.cols, std::move(planes));
}

MultiplexGraph build_patient_multiplex(const encoders::EncoderStack& stack, std::span<const double> x,
                                       const SparsityRule& rule, kernels::Exec exec) {
  return graph_from_saliency(saliency(stack, x, exec), rule);
}

std::vector<MultiplexGraph> build_cohort_graphs(const encoders::EncoderStack& stack, const Matrix& features,
                                                const SparsityRule& rule, kernels::Exec exec) {
  if (!stack.trained()) throw ArtifactError("graph construction needs a trained encoder stack");
  rule.validate();
  std::vector<MultiplexGraph> out(features.rows);
  const auto n = static_cast<long>(features.rows);
  if (exec == kernels::Exec::serial) {
    for (long r = 0; r < n; ++r)
      out[static_cast<std::size_t>(r)] =
          build_patient_multiplex(stack, features.row(static_cast<std::size_t>(r)), rule, kernels::Exec::serial);
  } else {
#pragma omp parallel for schedule(dynamic)
    for (long r = 0; r < n; ++r)
      out[static_cast<std::size_t>(r)] =
          build_patient_multiplex(stack, features.row(static_cast<std::size_t>(r)), rule, kernels::Exec::serial);
  }
  return out;
}

MultiplexGraph build_global_multiplex(const encoders::EncoderStack& stack, const Matrix& features,
                                      std::span<const std::size_t> rows, const SparsityRule& rule,
                                      kernels::Exec exec) {
  if (rows.empty()) throw ConfigError("global graph needs at least one row");
  Matrix mean(stack.num_features(), stack.num_concepts());
  for (auto r : rows) {
    auto p = saliency(stack, features.row(r), exec);
    for (std::size_t i = 0; i < p.data.size(); ++i) mean.data[i] += p.data[i];
  }
  for (auto& v : mean.data) v /= static_cast<double>(rows.size());
  return graph_from_saliency(mean, rule);
}

PlaneSummary summarize(const MultiplexGraph& g) {
  PlaneSummary s;
  for (std::size_t k = 0; k < g.num_planes(); ++k) {
    std::set<std::size_t> nodes;
    for (const auto& e : g.plane_edges(k)) {
      nodes.insert(e.m);
      nodes.insert(e.n);
    }
    s.nodes_per_plane.push_back(nodes.size());
    s.edges_per_plane.push_back(g.plane_edges(k).size());
  }
  return s;
}

}  // namespace mplexnet::graphbuild
