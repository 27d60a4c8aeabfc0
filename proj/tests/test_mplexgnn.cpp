#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mplexnet/diffcore/ops.hpp"
#include "mplexnet/error.hpp"
#include "mplexnet/graphbuild.hpp"
#include "mplexnet/mplexgnn.hpp"
#include "mplexnet/training.hpp"

using namespace mplexnet;
using namespace mplexnet::mplexgnn;
using diffcore::Tensor;
using mplexgraph::Edge;
using mplexgraph::MultiplexGraph;

namespace {

using Csr = kernels::CsrMatrix<double>;

MultiplexGraph random_multiplex(std::size_t p, std::size_t k, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(density);
  std::vector<std::vector<Edge>> planes(k);
  for (auto& plane : planes)
    for (std::uint32_t m = 0; m < p; ++m)
      for (std::uint32_t n = m + 1; n < p; ++n)
        if (keep(rng)) plane.push_back({m, n});
  return MultiplexGraph(p, k, std::move(planes));
}

std::shared_ptr<const Csr> to_shared(Csr m) { return std::make_shared<const Csr>(std::move(m)); }

Csr dense_to_csr(std::size_t n, const std::vector<double>& d) {
  std::vector<kernels::Triplet<double>> t;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      if (d[r * n + c] != 0.0) t.push_back({r, c, d[r * n + c]});
  return Csr::from_triplets(n, n, t);
}

Csr transpose(const Csr& m) {
  auto d = m.to_dense();
  std::vector<double> t(d.size());
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) t[c * m.rows + r] = d[r * m.cols + c];
  return dense_to_csr(m.rows, t);
}

Tensor integer_states(std::size_t rows, std::size_t d, std::mt19937_64& rng, int lo = -3, int hi = 3) {
  std::uniform_int_distribution<int> u(lo, hi);
  std::vector<double> v(rows * d);
  for (auto& x : v) x = u(rng);
  return Tensor::from({rows, d}, std::move(v));
}

void set_integer_weights(diffcore::Linear& lin, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(-2, 2);
  for (auto& w : lin.weight().mutable_values()) w = u(rng);
  for (auto& b : lin.bias().mutable_values()) b = u(rng);
}

GinAggregator make_gin(std::size_t din, std::size_t dout, double eps, diffcore::ParameterSet& ps, std::uint64_t seed,
                       const std::string& name) {
  diffcore::Rng rng(seed);
  GinAggregator phi;
  phi.mlp = diffcore::Linear(din, dout, rng, ps, name);
  phi.fixed_epsilon = eps;
  return phi;
}

GinAggregator identity_gin(double eps = 0.0) {
  GinAggregator phi;
  phi.identity = true;
  phi.fixed_epsilon = eps;
  return phi;
}

std::vector<double> values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

double leaky(double v, double slope = diffcore::kLeakySlope) { return v > 0.0 ? v : slope * v; }

/// Naive per-node GIN oracle with a dense S.
std::vector<double> gin_oracle(const std::vector<double>& s, const std::vector<double>& h, std::size_t n, std::size_t d,
                               const GinAggregator& phi) {
  std::vector<double> pre(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      double acc = (1.0 + phi.fixed_epsilon) * h[i * d + c];
      for (std::size_t j = 0; j < n; ++j) acc += s[i * n + j] * h[j * d + c];
      pre[i * d + c] = acc;
    }
  if (phi.identity) return pre;
  const auto dout = phi.mlp.out_features();
  auto w = phi.mlp.weight().values();
  auto b = phi.mlp.bias().values();
  std::vector<double> out(n * dout);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = b[o];
      for (std::size_t c = 0; c < d; ++c) acc += pre[i * d + c] * w[c * dout + o];
      out[i * dout + o] = leaky(acc);
    }
  return out;
}

Dataset random_dataset(std::size_t n, std::size_t p, std::size_t k, std::size_t classes, std::mt19937_64& rng) {
  Dataset d;
  d.features = Matrix(n, p);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : d.features.data) v = g(rng);
  for (std::size_t i = 0; i < n; ++i) {
    d.graphs.push_back(random_multiplex(p, k, 0.4, rng));
    d.labels.push_back(static_cast<int>(i % classes));
  }
  return d;
}

MplexGnnConfig small_config(std::size_t classes = 3) {
  MplexGnnConfig cfg;
  cfg.hidden_width = 2;
  cfg.readout_hidden = {6, 4};
  cfg.num_classes = classes;
  return cfg;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

}  // namespace

TEST_CASE("GIN aggregation hand cases") {
  const std::size_t n = 3;
  auto h = Tensor::from({n, 2}, {1, 2, 3, 4, 5, 6});
  SUBCASE("no neighbors, identity map") {
    auto s = to_shared(Csr::from_triplets(n, n, {}));
    CHECK(values(gin_aggregate(h, {s}, identity_gin())) == values(h));
  }
  SUBCASE("multiplicity-weighted edge") {
    auto s = to_shared(Csr::from_triplets(n, n, {{0, 1, 2.0}, {1, 0, 2.0}}));
    auto out = values(gin_aggregate(h, {s}, identity_gin()));
    CHECK(out == std::vector<double>{1 + 2 * 3, 2 + 2 * 4, 3 + 2 * 1, 4 + 2 * 2, 5, 6});
  }
  SUBCASE("self term scales by 1 + eps") {
    auto s = to_shared(Csr::from_triplets(n, n, {}));
    auto out = values(gin_aggregate(h, {s}, identity_gin(0.5)));
    CHECK(out == std::vector<double>{1.5, 3, 4.5, 6, 7.5, 9});
  }
}

TEST_CASE("GIN aggregation matches a per-node loop") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> entry(0, 3);
  diffcore::ParameterSet ps;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 7), d = 1 + static_cast<std::size_t>(trial % 3);
    std::vector<double> s(n * n);
    for (auto& v : s) v = entry(rng) == 3 ? entry(rng) : 0.0;
    auto h = gradcheck::random_tensor({n, d}, rng, false);
    auto phi = make_gin(d, 2, trial % 2 ? 0.25 : 0.0, ps, static_cast<std::uint64_t>(trial), "g" + std::to_string(trial));
    auto got = values(gin_aggregate(h, {to_shared(dense_to_csr(n, s))}, phi));
    auto want = gin_oracle(s, values(h), n, d, phi);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("batched aggregation equals per-sample aggregation") {
  std::mt19937_64 rng(5);
  diffcore::ParameterSet ps;
  auto phi = make_gin(2, 3, 0.0, ps, 1, "g");
  std::vector<std::shared_ptr<const Csr>> blocks;
  std::vector<double> stacked, expect;
  for (int b = 0; b < 4; ++b) {
    auto g = random_multiplex(4, 2, 0.5, rng);
    auto ops = walk_operators(g, WalkWeighting::multiplicity);
    blocks.push_back(ops.type_one);
    auto h = gradcheck::random_tensor({8, 2}, rng, false);
    stacked.insert(stacked.end(), h.values().begin(), h.values().end());
    auto one = values(gin_aggregate(h, {ops.type_one}, phi));
    expect.insert(expect.end(), one.begin(), one.end());
  }
  auto got = values(gin_aggregate(Tensor::from({32, 2}, stacked), blocks, phi));
  CHECK(got == expect);
}

TEST_CASE("mplex layer on an empty graph and width contract") {
  std::mt19937_64 rng(3);
  diffcore::ParameterSet ps;
  const std::size_t p = 5, k = 3, n = p * k;
  MultiplexGraph g(p, k);
  auto ops = walk_operators(g, WalkWeighting::multiplicity);
  auto h = gradcheck::random_tensor({n, 2}, rng, false);
  auto one = make_gin(2, 4, 0.3, ps, 1, "one");
  auto two = make_gin(2, 4, 0.3, ps, 2, "two");
  auto out = mplex_layer(h, {ops.type_one}, {ops.type_two}, one, two);
  CHECK(out.dim(0) == n);
  CHECK(out.dim(1) == 8);
  auto scaled = diffcore::scale(h, 1.3);
  auto a = values(one.mlp(scaled)), b = values(two.mlp(scaled));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(out.values()[r * 8 + c] == doctest::Approx(leaky(a[r * 4 + c])).epsilon(1e-14));
      CHECK(out.values()[r * 8 + 4 + c] == doctest::Approx(leaky(b[r * 4 + c])).epsilon(1e-14));
    }

  MplexGnnConfig cfg;
  cfg.hidden_width = 3;
  CHECK(cfg.state_width(0) == 1);
  CHECK(cfg.state_width(1) == 6);
  CHECK(cfg.state_width(2) == 6);
  MplexGnn model(p, k, cfg, 1);
  CHECK(model.readout_width() == n * 6);
}

TEST_CASE("Type II aggregation equals Type I on the transposed operator") {
  std::mt19937_64 rng(17);
  diffcore::ParameterSet ps;
  auto phi = make_gin(1, 2, 0.0, ps, 4, "g");
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_multiplex(5, 3, 0.5, rng);
    auto ops = walk_operators(g, WalkWeighting::multiplicity);
    auto h = gradcheck::random_tensor({15, 1}, rng, false);
    auto via_two = values(gin_aggregate(h, {ops.type_two}, phi));
    auto via_t = values(gin_aggregate(h, {to_shared(transpose(*ops.type_one))}, phi));
    CHECK(via_two == via_t);
  }
}

TEST_CASE("mplex layer is equivariant under node relabeling") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::size_t> psize(2, 8), ksize(1, 3), dsize(1, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = psize(rng), k = ksize(rng), d = dsize(rng);
    auto g = random_multiplex(p, k, 0.4, rng);
    std::vector<std::uint32_t> perm(p);
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<Edge>> moved(k);
    for (std::size_t pl = 0; pl < k; ++pl)
      for (auto e : g.plane_edges(pl)) moved[pl].push_back({perm[e.m], perm[e.n]});
    MultiplexGraph gp(p, k, moved);

    diffcore::ParameterSet ps;
    auto one = make_gin(d, 2, 0.0, ps, 1, "one");
    auto two = make_gin(d, 2, 0.0, ps, 2, "two");
    set_integer_weights(one.mlp, rng);
    set_integer_weights(two.mlp, rng);

    auto h = integer_states(p * k, d, rng);
    std::vector<double> hp(h.size());
    for (std::size_t pl = 0; pl < k; ++pl)
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t c = 0; c < d; ++c) hp[(pl * p + perm[i]) * d + c] = h.values()[(pl * p + i) * d + c];

    auto ops = walk_operators(g, WalkWeighting::multiplicity);
    auto opsp = walk_operators(gp, WalkWeighting::multiplicity);
    auto out = mplex_layer(h, {ops.type_one}, {ops.type_two}, one, two);
    auto outp = mplex_layer(Tensor::from({p * k, d}, hp), {opsp.type_one}, {opsp.type_two}, one, two);
    const auto w = out.dim(1);
    bool equal = true;
    for (std::size_t pl = 0; pl < k; ++pl)
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t c = 0; c < w; ++c)
          equal = equal && out.values()[(pl * p + i) * w + c] == outp.values()[(pl * p + perm[i]) * w + c];
    CHECK(equal);
  }
}

TEST_CASE("messages arrive only from walk neighbors") {
  std::mt19937_64 rng(29);
  diffcore::ParameterSet ps;
  auto phi = make_gin(2, 3, 0.2, ps, 3, "g");
  for (int trial = 0; trial < 10; ++trial) {
    auto g = random_multiplex(6, 3, 0.4, rng);
    auto walks = mplexgraph::supra_walks_direct(g);
    auto ops = walk_operators(g, WalkWeighting::multiplicity);
    for (int type = 1; type <= 2; ++type) {
      const auto& s = type == 1 ? walks.type_one : walks.type_two;
      const auto& op = type == 1 ? ops.type_one : ops.type_two;
      const std::size_t i = static_cast<std::size_t>(trial) % 18;
      auto h = gradcheck::random_tensor({18, 2}, rng, false);
      auto vals = h.mutable_values();
      for (auto nb : mplexgraph::neighbors(s, i)) {
        vals[nb.index * 2] = 0.0;
        vals[nb.index * 2 + 1] = 0.0;
      }
      auto out = gin_aggregate(h, {op}, phi);
      auto self = Tensor::from({1, 2}, {1.2 * vals[i * 2], 1.2 * vals[i * 2 + 1]});
      auto want = values(phi.mlp(self));
      for (std::size_t c = 0; c < 3; ++c) CHECK(out.values()[i * 3 + c] == leaky(want[c]));
    }
  }
}

TEST_CASE("stacked identity aggregations reproduce walk counts") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t p = 3 + static_cast<std::size_t>(trial % 4), k = 1 + static_cast<std::size_t>(trial % 3);
    const std::size_t n = p * k;
    const int depth = 1 + trial % 4;
    auto g = random_multiplex(p, k, 0.5, rng);
    auto walks = mplexgraph::supra_walks_direct(g);
    auto ops = walk_operators(g, WalkWeighting::multiplicity);
    auto h0 = integer_states(n, 1, rng);

    // eps = -1 removes the self term: S^L H0.
    // eps = 0 keeps it: (I + S)^L H0, i.e. walks on S with a stay-put step.
    for (int type = 1; type <= 2; ++type) {
      const auto& s = type == 1 ? walks.type_one : walks.type_two;
      const auto& op = type == 1 ? ops.type_one : ops.type_two;
      std::vector<kernels::Triplet<std::int64_t>> lazy;
      for (std::size_t r = 0; r < n; ++r) {
        lazy.push_back({r, r, 1});
        for (auto nb : mplexgraph::neighbors(s, r)) lazy.push_back({r, nb.index, nb.multiplicity});
      }
      auto s_lazy = mplexgraph::IntCsr::from_triplets(n, n, lazy);
      for (double eps : {-1.0, 0.0}) {
        Tensor h = h0;
        for (int l = 0; l < depth; ++l) h = gin_aggregate(h, {op}, identity_gin(eps));
        const auto& walk = eps == 0.0 ? s_lazy : s;
        bool equal = true;
        for (std::size_t i = 0; i < n; ++i) {
          double want = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            want += static_cast<double>(mplexgraph::count_walks(walk, depth, i, j)) * h0.values()[j];
          equal = equal && h.values()[i] == want;
        }
        CHECK(equal);
      }
    }

    // Both walk types through the model: columns enumerate the type sequence.
    MplexGnnConfig cfg;
    cfg.identity_mlp = true;
    cfg.num_layers = 2;
    MplexGnn model(p, k, cfg, 1);
    auto states = model.states(h0, {ops.type_one}, {ops.type_two});
    REQUIRE(states.dim(1) == 4);
    auto lazy_dense = [&](const mplexgraph::IntCsr& s) {
      auto d = s.to_dense();
      for (std::size_t i = 0; i < n; ++i) d[i * n + i] += 1;
      return d;
    };
    auto t1 = lazy_dense(walks.type_one), t2 = lazy_dense(walks.type_two);
    auto apply = [&](const std::vector<std::int64_t>& t, const std::vector<std::int64_t>& v) {
      std::vector<std::int64_t> out(n, 0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += t[i * n + j] * v[j];
      return out;
    };
    std::vector<std::int64_t> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<std::int64_t>(h0.values()[i]);
    // layer 1 -> [T1 h, T2 h]; layer 2 -> [T1 T1 h, T1 T2 h, T2 T1 h, T2 T2 h]
    std::vector<std::vector<std::int64_t>> cols{apply(t1, apply(t1, x)), apply(t1, apply(t2, x)),
                                                apply(t2, apply(t1, x)), apply(t2, apply(t2, x))};
    bool equal = true;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 4; ++c) equal = equal && states.values()[i * 4 + c] == static_cast<double>(cols[c][i]);
    CHECK(equal);
  }
}

TEST_CASE("walk weighting modes") {
  std::mt19937_64 rng(37);
  auto g = random_multiplex(6, 3, 0.5, rng);
  auto m = walk_operators(g, WalkWeighting::multiplicity);
  auto b = walk_operators(g, WalkWeighting::binary);
  for (auto v : b.type_one->values) CHECK(v == 1.0);
  for (auto v : b.type_two->values) CHECK(v == 1.0);
  // One-step walk matrices of binary planes are already 0/1.
  CHECK(*m.type_one == *b.type_one);
  CHECK(*m.type_two == *b.type_two);
  auto walks = mplexgraph::supra_walks_direct(g);
  CHECK(m.type_one->values.size() == walks.type_one.values.size());
}

TEST_CASE("full model gradients match finite differences") {
  // Seed chosen so no LeakyReLU input lies within h of its kink.
  std::mt19937_64 rng(42);
  auto data = random_dataset(3, 5, 2, 3, rng);
  for (bool learn : {false, true}) {
    auto cfg = small_config();
    cfg.learn_epsilon = learn;
    cfg.gin_epsilon = learn ? 0.1 : 0.0;
    MplexGnn model(5, 2, cfg, 9);
    model.bind(data);
    auto rows = iota_rows(3);
    std::vector<Tensor> inputs;
    for (auto& [name, t] : model.params()) inputs.push_back(t);
    auto loss = [&] { return diffcore::softmax_cross_entropy(model.logits(data, rows), data.labels); };
    auto r = gradcheck::check(loss, inputs, 3);
    CHECK(r.checked >= 20);
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("logits stay finite on random inputs") {
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<std::size_t> psize(2, 8), ksize(1, 3);
  std::normal_distribution<double> g(0.0, 10.0);
  bool finite = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = psize(rng), k = ksize(rng);
    auto graph = random_multiplex(p, k, 0.5, rng);
    std::vector<double> x(p);
    for (auto& v : x) v = g(rng);
    MplexGnnConfig cfg;
    cfg.readout_hidden = {8, 4};
    MplexGnn model(p, k, cfg, static_cast<std::uint64_t>(trial));
    diffcore::NoGradGuard ng;
    auto lg = model.forward(x, graph);
    CHECK(lg.dim(1) == 5);
    for (auto v : lg.values()) finite = finite && std::isfinite(v);
  }
  CHECK(finite);
}

TEST_CASE("zero final readout layer gives uniform probabilities") {
  std::mt19937_64 rng(47);
  auto data = random_dataset(4, 6, 2, 5, rng);
  MplexGnn model(6, 2, {}, 3);
  model.bind(data);
  auto& last = model.readout().layer(model.readout().depth() - 1);
  for (auto& w : last.weight().mutable_values()) w = 0.0;
  for (auto& b : last.bias().mutable_values()) b = 0.0;
  auto probs = predict_proba(model, data, iota_rows(4));
  for (auto v : probs.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("batched logits equal single-patient forward") {
  std::mt19937_64 rng(53);
  auto data = random_dataset(5, 6, 3, 3, rng);
  for (auto readout : {Readout::flatten, Readout::mean_pool}) {
    auto cfg = small_config();
    cfg.readout = readout;
    MplexGnn model(6, 3, cfg, 2);
    model.bind(data);
    diffcore::NoGradGuard ng;
    auto batch = model.logits(data, iota_rows(5));
    for (std::size_t r = 0; r < 5; ++r) {
      auto one = model.forward(data.features.row(r), data.graphs[r]);
      for (std::size_t c = 0; c < 3; ++c) CHECK(batch.values()[r * 3 + c] == doctest::Approx(one.values()[c]).epsilon(1e-13));
    }
  }
}

TEST_CASE("mean-pool readout averages supra-node states") {
  std::mt19937_64 rng(59);
  auto data = random_dataset(1, 4, 2, 3, rng);
  auto cfg = small_config();
  cfg.readout = Readout::mean_pool;
  MplexGnn model(4, 2, cfg, 5);
  CHECK(model.readout_width() == 4);
  diffcore::NoGradGuard ng;
  auto ops = walk_operators(data.graphs[0], cfg.weighting);
  auto h0 = Tensor::from({8, 1}, mplexgraph::lift_node_features(data.features.row(0), 2));
  auto pooled = diffcore::mean_rows(model.states(h0, {ops.type_one}, {ops.type_two}));
  auto want = values(model.readout()(pooled));
  auto got = values(model.forward(data.features.row(0), data.graphs[0]));
  for (std::size_t c = 0; c < 3; ++c) CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-13));
}

TEST_CASE("shape and configuration errors") {
  MplexGnnConfig bad;
  bad.num_layers = 0;
  CHECK_THROWS_AS(MplexGnn(4, 2, bad, 0), ConfigError);
  bad = {};
  bad.num_classes = 1;
  CHECK_THROWS_AS(MplexGnn(4, 2, bad, 0), ConfigError);
  MplexGnn model(4, 2, {}, 0);
  std::vector<double> x(4, 1.0);
  CHECK_THROWS_AS(model.forward(x, MultiplexGraph(5, 2)), DimensionError);
  CHECK_THROWS_AS(model.forward(std::vector<double>(3, 1.0), MultiplexGraph(4, 2)), DimensionError);
  Dataset d;
  d.features = Matrix(1, 4);
  d.graphs = {MultiplexGraph(4, 3)};
  d.labels = {0};
  CHECK_THROWS_AS(model.bind(d), DimensionError);
  CHECK_THROWS_AS(model.logits(d, iota_rows(1)), ConfigError);
}

TEST_CASE("default model overfits two separable patients") {
  const std::size_t p = 396, k = 32;
  std::mt19937_64 rng(61);
  Dataset data;
  data.features = Matrix(2, p);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < p; ++i) {
    data.features(0, i) = g(rng);
    data.features(1, i) = -data.features(0, i);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int r = 0; r < 2; ++r) {
    Matrix sal(p, k);
    for (auto& v : sal.data) v = u(rng);
    data.graphs.push_back(graphbuild::graph_from_saliency(sal, {}));
  }
  data.labels = {0, 1};
  MplexGnn model(p, k, {}, 7);
  training::TrainConfig tc;
  tc.seed = 7;
  training::Trainer tr(model, data, {0, 1}, {0, 1}, tc);
  tr.run();
  CHECK(tr.history().size() == 40);
  CHECK(tr.history().back().train_loss < 0.01);
}

TEST_CASE("training is deterministic and resumes exactly") {
  std::mt19937_64 rng(67);
  auto data = random_dataset(12, 5, 2, 3, rng);
  auto train = iota_rows(9);
  std::vector<std::size_t> val{9, 10, 11};
  training::TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 4;
  tc.seed = 3;

  MplexGnn a(5, 2, small_config(), 1), b(5, 2, small_config(), 1);
  training::Trainer ta(a, data, train, val, tc), tb(b, data, train, val, tc);
  ta.run();
  tb.run();
  REQUIRE(ta.history().size() == 6);
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(ta.history()[e].train_loss == tb.history()[e].train_loss);
    CHECK(ta.history()[e].val_loss == tb.history()[e].val_loss);
  }

  auto dir = std::filesystem::temp_directory_path() / "mplexnet_test_resume";
  std::filesystem::create_directories(dir);
  MplexGnn c(5, 2, small_config(), 1);
  {
    training::Trainer tc3(c, data, train, val, tc);
    for (int e = 0; e < 3; ++e) tc3.run_epoch();
    tc3.save_state(dir / "state", "h");
  }
  MplexGnn d(5, 2, small_config(), 99);
  training::Trainer td(d, data, train, val, tc);
  std::string hash;
  td.load_state(dir / "state", &hash);
  CHECK(hash == "h");
  CHECK(td.epochs_done() == 3);
  td.run();
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(td.history()[e].train_loss == ta.history()[e].train_loss);
    CHECK(td.history()[e].val_wauc == ta.history()[e].val_wauc);
  }
  CHECK(td.best_epoch() == ta.best_epoch());
  auto pa = a.params().snapshot(), pd = d.params().snapshot();
  CHECK(pa == pd);
  std::filesystem::remove_all(dir);
}
