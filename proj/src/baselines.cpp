#include "mplexnet/baselines.hpp"

#include <cmath>

#include "mplexnet/diffcore/ops.hpp"
#include "mplexnet/error.hpp"

namespace mplexnet::baselines {

using diffcore::Tensor;

MlpClassifier::MlpClassifier(std::string kind, std::size_t input_dim, std::vector<std::size_t> hidden,
                             std::size_t num_classes, std::uint64_t seed, double neg_slope)
    : kind_(std::move(kind)), input_dim_(input_dim), hidden_(std::move(hidden)), num_classes_(num_classes),
      neg_slope_(neg_slope) {
  if (input_dim_ == 0) throw ConfigError(kind_ + ": input width must be positive");
  if (num_classes_ < 2) throw ConfigError(kind_ + ": needs at least two classes");
  std::vector<std::size_t> widths{input_dim_};
  for (auto h : hidden_) {
    if (h == 0) throw ConfigError(kind_ + ": hidden widths must be positive");
    widths.push_back(h);
  }
  widths.push_back(num_classes_);
  diffcore::Rng rng(seed);
  mlp_ = diffcore::Mlp(widths, rng, params_, "mlp", neg_slope_);
}

Tensor MlpClassifier::logits(const Dataset& data, std::span<const std::size_t> rows) const {
  if (data.features.cols != input_dim_)
    throw DimensionError(kind_ + " expects " + std::to_string(input_dim_) + " input columns, dataset has " +
                         std::to_string(data.features.cols));
  std::vector<double> x;
  x.reserve(rows.size() * input_dim_);
  for (auto r : rows) {
    auto row = data.features.row(r);
    x.insert(x.end(), row.begin(), row.end());
  }
  return mlp_(Tensor::from({rows.size(), input_dim_}, std::move(x)));
}

nlohmann::json MlpClassifier::describe() const {
  return {{"kind", kind_},
          {"input_dim", input_dim_},
          {"hidden", hidden_},
          {"num_classes", num_classes_},
          {"neg_slope", neg_slope_}};
}

std::unique_ptr<MlpClassifier> make_no_fusion(const std::string& modality, std::size_t input_dim,
                                              std::size_t num_classes, std::uint64_t seed) {
  return std::make_unique<MlpClassifier>("no_fusion:" + modality, input_dim,
                                         std::vector<std::size_t>{kFlatHiddenWide, kFlatHiddenNarrow}, num_classes,
                                         seed);
}

std::unique_ptr<MlpClassifier> make_early_fusion(std::size_t input_dim, std::size_t num_classes, std::uint64_t seed) {
  return std::make_unique<MlpClassifier>("early", input_dim,
                                         std::vector<std::size_t>{kFlatHiddenWide, kFlatHiddenNarrow}, num_classes,
                                         seed);
}

std::unique_ptr<MlpClassifier> make_intermediate_fusion(std::size_t input_dim, std::size_t num_classes,
                                                        std::uint64_t seed) {
  return std::make_unique<MlpClassifier>("intermediate", input_dim,
                                         std::vector<std::size_t>{kIntermediateHidden, kFlatHiddenNarrow},
                                         num_classes, seed);
}

Matrix late_fusion_average(const std::vector<Matrix>& scores) {
  if (scores.size() < 2) throw ConfigError("late fusion needs at least two score sets");
  const auto n = scores[0].rows, c = scores[0].cols;
  for (const auto& s : scores)
    if (s.rows != n || s.cols != c)
      throw DimensionError("late fusion score sets cover different patients or classes");
  Matrix out(n, c);
  for (std::size_t r = 0; r < n; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double acc = 0.0;
      for (const auto& s : scores) acc += s(r, j);
      out(r, j) = acc / static_cast<double>(scores.size());
      total += out(r, j);
    }
    if (!(total > 0.0)) throw NumericalError("late fusion row " + std::to_string(r) + " has no probability mass");
    for (std::size_t j = 0; j < c; ++j) out(r, j) /= total;
  }
  return out;
}

Csr gcn_normalize(const kernels::CsrMatrix<std::int64_t>& adjacency) {
  if (adjacency.rows != adjacency.cols) throw DimensionError("adjacency must be square");
  const auto n = adjacency.rows;
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 1.0;
    for (auto v : adjacency.row_values(i)) deg += static_cast<double>(v);
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  std::vector<kernels::Triplet<double>> t;
  t.reserve(adjacency.nnz() + n);
  for (std::size_t i = 0; i < n; ++i) {
    t.push_back({i, i, inv_sqrt[i] * inv_sqrt[i]});
    auto cols = adjacency.row_cols(i);
    auto vals = adjacency.row_values(i);
    for (std::size_t e = 0; e < cols.size(); ++e)
      if (cols[e] != i) t.push_back({i, cols[e], static_cast<double>(vals[e]) * inv_sqrt[i] * inv_sqrt[cols[e]]});
  }
  return Csr::from_triplets(n, n, std::move(t));
}

Csr stack_relations(const std::vector<Csr>& planes) {
  if (planes.empty()) throw ConfigError("need at least one relation");
  const auto n = planes[0].rows;
  const auto k = planes.size();
  std::vector<kernels::Triplet<double>> t;
  for (std::size_t r = 0; r < k; ++r) {
    if (planes[r].rows != n || planes[r].cols != n) throw DimensionError("relation planes differ in size");
    for (std::size_t i = 0; i < n; ++i) {
      auto cols = planes[r].row_cols(i);
      auto vals = planes[r].row_values(i);
      for (std::size_t e = 0; e < cols.size(); ++e) t.push_back({i, cols[e] * k + r, vals[e]});
    }
  }
  return Csr::from_triplets(n, n * k, std::move(t));
}

std::vector<kernels::CsrMatrix<std::int64_t>> block_planes(const std::vector<std::size_t>& block_sizes) {
  std::size_t total = 0;
  for (auto b : block_sizes) total += b;
  std::vector<kernels::CsrMatrix<std::int64_t>> planes;
  std::size_t offset = 0;
  for (auto b : block_sizes) {
    std::vector<kernels::Triplet<std::int64_t>> t;
    for (std::size_t i = offset; i < offset + b; ++i)
      for (std::size_t j = offset; j < offset + b; ++j)
        if (i != j) t.push_back({i, j, 1});
    planes.push_back(kernels::CsrMatrix<std::int64_t>::from_triplets(total, total, std::move(t)));
    offset += b;
  }
  return planes;
}

void RgcnConfig::validate() const {
  if (num_layers < 1) throw ConfigError("relational GCN needs at least one layer");
  if (hidden_width < 1) throw ConfigError("relational GCN hidden width must be positive");
  if (num_classes < 2) throw ConfigError("relational GCN needs at least two classes");
  for (auto w : readout_hidden)
    if (w < 1) throw ConfigError("readout hidden widths must be positive");
}

RelationalGcn::RelationalGcn(std::string kind, std::size_t num_nodes, std::size_t num_planes, PlaneSource source,
                             std::vector<std::size_t> block_sizes, RgcnConfig cfg, std::uint64_t seed)
    : kind_(std::move(kind)), p_(num_nodes), k_(num_planes), source_(source), blocks_(std::move(block_sizes)),
      cfg_(std::move(cfg)) {
  cfg_.validate();
  if (p_ == 0 || k_ == 0) throw ConfigError("relational GCN needs at least one node and one relation");
  diffcore::Rng rng(seed);
  std::size_t din = 1;
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    const auto dout = cfg_.hidden_width;
    const double bound = std::sqrt(6.0 / static_cast<double>(din + dout));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(din * k_ * dout);
    for (auto& v : w) v = dist(rng);
    const auto prefix = "layer" + std::to_string(l);
    weights_.push_back(params_.add(prefix + ".weight", Tensor::from({din, k_ * dout}, std::move(w), true)));
    biases_.push_back(params_.add(prefix + ".bias", Tensor::zeros({dout}, true)));
    din = dout;
  }
  std::vector<std::size_t> widths{p_ * cfg_.hidden_width};
  widths.insert(widths.end(), cfg_.readout_hidden.begin(), cfg_.readout_hidden.end());
  widths.push_back(cfg_.num_classes);
  readout_ = diffcore::Mlp(widths, rng, params_, "readout", cfg_.neg_slope);

  if (source_ == PlaneSource::shared) {
    std::vector<Csr> planes;
    for (const auto& a : block_planes(blocks_)) planes.push_back(gcn_normalize(a));
    shared_ = std::make_shared<const Csr>(stack_relations(planes));
  }
}

std::unique_ptr<RelationalGcn> RelationalGcn::multiplex(std::size_t num_nodes, std::size_t num_planes, RgcnConfig cfg,
                                                        std::uint64_t seed) {
  return std::unique_ptr<RelationalGcn>(
      new RelationalGcn("rgcn_multiplex", num_nodes, num_planes, PlaneSource::patient_graphs, {}, std::move(cfg), seed));
}

std::unique_ptr<RelationalGcn> RelationalGcn::modality_planes(const std::vector<std::size_t>& block_sizes,
                                                              RgcnConfig cfg, std::uint64_t seed) {
  std::size_t total = 0;
  for (auto b : block_sizes) {
    if (b == 0) throw ConfigError("modality plane sizes must be positive");
    total += b;
  }
  return std::unique_ptr<RelationalGcn>(new RelationalGcn("rgcn_modality", total, block_sizes.size(),
                                                          PlaneSource::shared, block_sizes, std::move(cfg), seed));
}

std::unique_ptr<RelationalGcn> RelationalGcn::monoplex(std::size_t num_nodes, RgcnConfig cfg, std::uint64_t seed) {
  return std::unique_ptr<RelationalGcn>(
      new RelationalGcn("gcn", num_nodes, 1, PlaneSource::shared, {num_nodes}, std::move(cfg), seed));
}

void RelationalGcn::bind(const Dataset& data) {
  if (data.features.cols != p_)
    throw DimensionError(kind_ + " expects " + std::to_string(p_) + " node features, dataset has " +
                         std::to_string(data.features.cols));
  if (source_ == PlaneSource::shared) return;
  if (data.graphs.empty()) throw ArtifactError(kind_ + " needs multiplex graphs in the dataset");
  for (const auto& g : data.graphs)
    if (g.num_nodes() != p_ || g.num_planes() != k_)
      throw DimensionError(kind_ + " expects graphs with P=" + std::to_string(p_) + ", K=" + std::to_string(k_) +
                           ", got P=" + std::to_string(g.num_nodes()) + ", K=" + std::to_string(g.num_planes()));
  bound_.assign(data.graphs.size(), nullptr);
  const auto n = static_cast<long>(data.graphs.size());
#pragma omp parallel for schedule(dynamic) if (kernels::default_exec() == kernels::Exec::parallel)
  for (long i = 0; i < n; ++i) {
    const auto& g = data.graphs[static_cast<std::size_t>(i)];
    std::vector<Csr> planes;
    for (std::size_t k = 0; k < k_; ++k) planes.push_back(gcn_normalize(g.plane_adjacency(k)));
    bound_[static_cast<std::size_t>(i)] = std::make_shared<const Csr>(stack_relations(planes));
  }
}

Tensor RelationalGcn::states(const Dataset& data, std::span<const std::size_t> rows) const {
  if (source_ == PlaneSource::patient_graphs && bound_.empty()) throw ConfigError(kind_ + " used before bind()");
  if (data.features.cols != p_) throw DimensionError(kind_ + ": dataset feature width changed since bind()");
  std::vector<std::shared_ptr<const Csr>> ops;
  std::vector<double> h0;
  h0.reserve(rows.size() * p_);
  for (auto r : rows) {
    ops.push_back(shared_ ? shared_ : (bound_.size() == 1 ? bound_[0] : bound_.at(r)));
    auto x = data.features.row(r);
    h0.insert(h0.end(), x.begin(), x.end());
  }
  Tensor h = Tensor::from({rows.size() * p_, 1}, std::move(h0));
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    const auto dout = cfg_.hidden_width;
    // [B*P x K*D'] viewed as [B*P*K x D']: row (b*P + j)*K + k holds H_b[j] W_k.
    auto projected = diffcore::reshape(diffcore::matmul(h, weights_[l]), {rows.size() * p_ * k_, dout});
    h = diffcore::leaky_relu(diffcore::add_bias(diffcore::block_spmm(ops, projected), biases_[l]), cfg_.neg_slope);
  }
  return h;
}

Tensor RelationalGcn::logits(const Dataset& data, std::span<const std::size_t> rows) const {
  auto h = states(data, rows);
  return readout_(diffcore::reshape(h, {rows.size(), p_ * cfg_.hidden_width}));
}

nlohmann::json RelationalGcn::describe() const {
  return {{"kind", kind_},
          {"num_nodes", p_},
          {"num_relations", k_},
          {"block_sizes", blocks_},
          {"num_layers", cfg_.num_layers},
          {"hidden_width", cfg_.hidden_width},
          {"readout_hidden", cfg_.readout_hidden},
          {"num_classes", cfg_.num_classes},
          {"neg_slope", cfg_.neg_slope}};
}

}  // namespace mplexnet::baselines
