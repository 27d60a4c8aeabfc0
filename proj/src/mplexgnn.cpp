#include "mplexnet/mplexgnn.hpp"

#include <cmath>

#include "mplexnet/diffcore/ops.hpp"
#include "mplexnet/error.hpp"

namespace mplexnet::mplexgnn {

using diffcore::Tensor;

void MplexGnnConfig::validate() const {
  if (num_layers < 1) throw ConfigError("mplex GNN needs at least one layer");
  if (hidden_width < 1) throw ConfigError("mplex GNN hidden width must be positive");
  if (num_classes < 2) throw ConfigError("mplex GNN needs at least two classes");
  if (!std::isfinite(gin_epsilon)) throw ConfigError("GIN epsilon must be finite");
  for (auto w : readout_hidden)
    if (w < 1) throw ConfigError("readout hidden widths must be positive");
}

std::size_t MplexGnnConfig::state_width(std::size_t layer) const {
  if (layer == 0) return 1;
  return identity_mlp ? 2 * state_width(layer - 1) : 2 * hidden_width;
}

Tensor gin_aggregate(const Tensor& h, const OperatorBlocks& s, const GinAggregator& phi) {
  Tensor self;
  if (phi.epsilon.defined())
    self = diffcore::add(h, diffcore::scale_by(h, phi.epsilon));
  else if (phi.fixed_epsilon == 0.0)
    self = h;
  else
    self = diffcore::scale(h, 1.0 + phi.fixed_epsilon);
  auto pre = diffcore::add(self, diffcore::block_spmm(s, h));
  if (phi.identity) return pre;
  return diffcore::leaky_relu(phi.mlp(pre), phi.neg_slope);
}

Tensor mplex_layer(const Tensor& h, const OperatorBlocks& walk_one, const OperatorBlocks& walk_two,
                   const GinAggregator& phi_one, const GinAggregator& phi_two) {
  return diffcore::concat_cols(gin_aggregate(h, walk_one, phi_one), gin_aggregate(h, walk_two, phi_two));
}

WalkOperators walk_operators(const mplexgraph::MultiplexGraph& g, WalkWeighting weighting) {
  auto walks = mplexgraph::supra_walks_direct(g);
  auto convert = [&](const mplexgraph::IntCsr& m) {
    auto d = m.cast<double>();
    if (weighting == WalkWeighting::binary)
      for (auto& v : d.values) v = 1.0;
    return std::make_shared<const kernels::CsrMatrix<double>>(std::move(d));
  };
  return {convert(walks.type_one), convert(walks.type_two)};
}

MplexGnn::MplexGnn(std::size_t num_nodes, std::size_t num_planes, MplexGnnConfig cfg, std::uint64_t seed)
    : p_(num_nodes), k_(num_planes), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (p_ == 0 || k_ == 0) throw ConfigError("mplex GNN needs at least one node and one plane");
  diffcore::Rng rng(seed);
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    const auto din = cfg_.state_width(l);
    for (const char* type : {"type_one", "type_two"}) {
      GinAggregator phi;
      phi.identity = cfg_.identity_mlp;
      phi.neg_slope = cfg_.neg_slope;
      phi.fixed_epsilon = cfg_.gin_epsilon;
      const std::string prefix = "layer" + std::to_string(l) + "." + type;
      if (!phi.identity) phi.mlp = diffcore::Linear(din, cfg_.hidden_width, rng, params_, prefix);
      if (cfg_.learn_epsilon) phi.epsilon = params_.add(prefix + ".epsilon", Tensor::from({1}, {cfg_.gin_epsilon}, true));
      aggregators_.push_back(std::move(phi));
    }
  }
  std::vector<std::size_t> widths{readout_width()};
  widths.insert(widths.end(), cfg_.readout_hidden.begin(), cfg_.readout_hidden.end());
  widths.push_back(cfg_.num_classes);
  readout_ = diffcore::Mlp(widths, rng, params_, "readout", cfg_.neg_slope);
  if (cfg_.readout == Readout::mean_pool) {
    const auto n = p_ * k_;
    std::vector<kernels::Triplet<double>> t;
    for (std::size_t j = 0; j < n; ++j) t.push_back({0, j, 1.0 / static_cast<double>(n)});
    pool_ = std::make_shared<const kernels::CsrMatrix<double>>(kernels::CsrMatrix<double>::from_triplets(1, n, t));
  }
}

std::size_t MplexGnn::readout_width() const {
  const auto d = cfg_.state_width(cfg_.num_layers);
  return cfg_.readout == Readout::flatten ? p_ * k_ * d : d;
}

void MplexGnn::check_graph(const mplexgraph::MultiplexGraph& g) const {
  if (g.num_nodes() != p_ || g.num_planes() != k_)
    throw DimensionError("graph has P=" + std::to_string(g.num_nodes()) + ", K=" + std::to_string(g.num_planes()) +
                         " but the model expects P=" + std::to_string(p_) + ", K=" + std::to_string(k_));
}

void MplexGnn::bind(const Dataset& data) {
  if (data.features.cols != p_)
    throw DimensionError("mplex GNN expects " + std::to_string(p_) + " node features, dataset has " +
                         std::to_string(data.features.cols));
  if (data.graphs.empty()) throw ArtifactError("mplex GNN needs graphs in the dataset");
  for (const auto& g : data.graphs) check_graph(g);
  bound_.assign(data.graphs.size(), {});
  const auto n = static_cast<long>(data.graphs.size());
#pragma omp parallel for schedule(dynamic) if (kernels::default_exec() == kernels::Exec::parallel)
  for (long i = 0; i < n; ++i)
    bound_[static_cast<std::size_t>(i)] = walk_operators(data.graphs[static_cast<std::size_t>(i)], cfg_.weighting);
}

Tensor MplexGnn::states(const Tensor& h0, const OperatorBlocks& walk_one, const OperatorBlocks& walk_two) const {
  Tensor h = h0;
  for (std::size_t l = 0; l < cfg_.num_layers; ++l)
    h = mplex_layer(h, walk_one, walk_two, aggregators_[2 * l], aggregators_[2 * l + 1]);
  return h;
}

Tensor MplexGnn::head(const Tensor& h, std::size_t batch) const {
  if (cfg_.readout == Readout::flatten) return readout_(diffcore::reshape(h, {batch, readout_width()}));
  return readout_(diffcore::block_spmm(OperatorBlocks(batch, pool_), h));
}

Tensor MplexGnn::logits(const Dataset& data, std::span<const std::size_t> rows) const {
  if (bound_.empty()) throw ConfigError("mplex GNN used before bind()");
  OperatorBlocks one, two;
  std::vector<double> h0;
  h0.reserve(rows.size() * p_ * k_);
  for (auto r : rows) {
    const auto& ops = bound_.size() == 1 ? bound_[0] : bound_.at(r);
    one.push_back(ops.type_one);
    two.push_back(ops.type_two);
    auto lifted = mplexgraph::lift_node_features(data.features.row(r), k_);
    h0.insert(h0.end(), lifted.begin(), lifted.end());
  }
  auto h = states(Tensor::from({rows.size() * p_ * k_, 1}, std::move(h0)), one, two);
  return head(h, rows.size());
}

Tensor MplexGnn::forward(std::span<const double> x, const mplexgraph::MultiplexGraph& g) const {
  check_graph(g);
  if (x.size() != p_)
    throw DimensionError("expected " + std::to_string(p_) + " node features, got " + std::to_string(x.size()));
  auto ops = walk_operators(g, cfg_.weighting);
  auto h0 = Tensor::from({p_ * k_, 1}, mplexgraph::lift_node_features(x, k_));
  return head(states(h0, {ops.type_one}, {ops.type_two}), 1);
}

nlohmann::json MplexGnn::describe() const {
  return {{"kind", kind()},
          {"num_nodes", p_},
          {"num_planes", k_},
          {"num_layers", cfg_.num_layers},
          {"hidden_width", cfg_.hidden_width},
          {"gin_epsilon", cfg_.gin_epsilon},
          {"learn_epsilon", cfg_.learn_epsilon},
          {"readout_hidden", cfg_.readout_hidden},
          {"num_classes", cfg_.num_classes},
          {"neg_slope", cfg_.neg_slope},
          {"weighting", cfg_.weighting == WalkWeighting::binary ? "binary" : "multiplicity"},
          {"readout", cfg_.readout == Readout::flatten ? "flatten" : "mean_pool"},
          {"identity_mlp", cfg_.identity_mlp}};
}

}  // namespace mplexnet::mplexgnn
