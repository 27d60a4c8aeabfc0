#include "mplexnet/mplexgraph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mplexnet/error.hpp"

namespace mplexnet::mplexgraph {

namespace {

std::vector<std::vector<std::uint32_t>> adjacency_lists(const MultiplexGraph& g, std::size_t k) {
  std::vector<std::vector<std::uint32_t>> adj(g.num_nodes());
  for (const auto& e : g.plane_edges(k)) {
    adj[e.m].push_back(e.n);
    adj[e.n].push_back(e.m);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

IntCsr csr_from_rows(std::size_t n, const std::vector<std::vector<std::uint32_t>>& rows) {
  IntCsr m;
  m.rows = rows.size();
  m.cols = n;
  m.row_ptr.assign(rows.size() + 1, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    m.col_idx.insert(m.col_idx.end(), rows[r].begin(), rows[r].end());
    m.row_ptr[r + 1] = m.col_idx.size();
  }
  m.values.assign(m.col_idx.size(), 1);
  return m;
}

}  // namespace

MultiplexGraph::MultiplexGraph(std::size_t num_nodes, std::size_t num_planes)
    : p_(num_nodes), k_(num_planes), planes_(num_planes) {
  if (num_nodes == 0 || num_planes == 0) throw ConfigError("a multiplex graph needs P >= 1 and K >= 1");
}

MultiplexGraph::MultiplexGraph(std::size_t num_nodes, std::size_t num_planes,
                               std::vector<std::vector<Edge>> plane_edges)
    : MultiplexGraph(num_nodes, num_planes) {
  if (plane_edges.size() != num_planes)
    throw DimensionError("expected " + std::to_string(num_planes) + " planes, got " +
                         std::to_string(plane_edges.size()));
  for (std::size_t k = 0; k < num_planes; ++k) {
    auto& edges = plane_edges[k];
    for (auto& e : edges) {
      if (e.m == e.n) throw ConfigError("self-loop on node " + std::to_string(e.m) + " in plane " + std::to_string(k));
      if (e.m >= num_nodes || e.n >= num_nodes)
        throw DimensionError("edge endpoint outside [0, " + std::to_string(num_nodes) + ") in plane " +
                             std::to_string(k));
      if (e.m > e.n) std::swap(e.m, e.n);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    planes_[k] = std::move(edges);
  }
}

MultiplexGraph MultiplexGraph::from_dense(std::size_t num_nodes, const std::vector<std::vector<int>>& planes) {
  std::vector<std::vector<Edge>> edges(planes.size());
  for (std::size_t k = 0; k < planes.size(); ++k) {
    const auto& a = planes[k];
    if (a.size() != num_nodes * num_nodes) throw DimensionError("dense plane " + std::to_string(k) + " is not P x P");
    for (std::size_t m = 0; m < num_nodes; ++m) {
      if (a[m * num_nodes + m] != 0) throw ConfigError("non-zero diagonal in plane " + std::to_string(k));
      for (std::size_t n = 0; n < num_nodes; ++n) {
        const int v = a[m * num_nodes + n];
        if (v != 0 && v != 1) throw ConfigError("non-binary entry in plane " + std::to_string(k));
        if (v != a[n * num_nodes + m]) throw ConfigError("asymmetric adjacency in plane " + std::to_string(k));
        if (v == 1 && m < n) edges[k].push_back({static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(n)});
      }
    }
  }
  return MultiplexGraph(num_nodes, planes.size(), std::move(edges));
}

std::size_t MultiplexGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& p : planes_) n += p.size();
  return n;
}

std::size_t MultiplexGraph::supra_index(std::size_t plane, std::size_t node) const {
  if (plane >= k_ || node >= p_) throw DimensionError("supra-node (plane, node) out of range");
  return plane * p_ + node;
}

std::pair<std::size_t, std::size_t> MultiplexGraph::supra_coords(std::size_t index) const {
  if (index >= p_ * k_) throw DimensionError("supra-node index out of range");
  return {index / p_, index % p_};
}

IntCsr MultiplexGraph::plane_adjacency(std::size_t k) const { return csr_from_rows(p_, adjacency_lists(*this, k)); }

IntCsr build_supra_adjacency(const MultiplexGraph& g) {
  const auto p = g.num_nodes();
  std::vector<std::vector<std::uint32_t>> rows(g.supra_size());
  for (std::size_t k = 0; k < g.num_planes(); ++k) {
    auto adj = adjacency_lists(g, k);
    for (std::size_t m = 0; m < p; ++m)
      for (auto n : adj[m]) rows[k * p + m].push_back(static_cast<std::uint32_t>(k * p + n));
  }
  return csr_from_rows(g.supra_size(), rows);
}

IntCsr build_transition_control(std::size_t num_nodes, std::size_t num_planes) {
  if (num_nodes == 0 || num_planes == 0) throw ConfigError("transition control needs P >= 1 and K >= 1");
  const auto n = num_nodes * num_planes;
  std::vector<std::vector<std::uint32_t>> rows(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < num_planes; ++k)
      rows[r].push_back(static_cast<std::uint32_t>(k * num_nodes + r % num_nodes));
  return csr_from_rows(n, rows);
}

SupraWalks supra_walk_matrices(const IntCsr& supra_adjacency, const IntCsr& transition_control) {
  if (supra_adjacency.rows != supra_adjacency.cols || transition_control.rows != transition_control.cols ||
      supra_adjacency.rows != transition_control.rows)
    throw DimensionError("supra-walk matrices need conforming square PK x PK inputs");
  return {kernels::spgemm(supra_adjacency, transition_control), kernels::spgemm(transition_control, supra_adjacency)};
}

SupraWalks supra_walks_direct(const MultiplexGraph& g) {
  const auto p = g.num_nodes(), kk = g.num_planes();
  std::vector<std::vector<std::vector<std::uint32_t>>> adj(kk);
  for (std::size_t k = 0; k < kk; ++k) adj[k] = adjacency_lists(g, k);

  std::vector<std::vector<std::uint32_t>> one(g.supra_size()), two(g.supra_size());
  for (std::size_t m = 0; m < p; ++m) {
    // Type II rows of (k, m) are identical for every k.
    std::vector<std::uint32_t> row_two;
    for (std::size_t k2 = 0; k2 < kk; ++k2)
      for (auto n : adj[k2][m]) row_two.push_back(static_cast<std::uint32_t>(k2 * p + n));
    for (std::size_t k = 0; k < kk; ++k) {
      auto& row_one = one[k * p + m];
      for (std::size_t k2 = 0; k2 < kk; ++k2)
        for (auto n : adj[k][m]) row_one.push_back(static_cast<std::uint32_t>(k2 * p + n));
      two[k * p + m] = row_two;
    }
  }
  return {csr_from_rows(g.supra_size(), one), csr_from_rows(g.supra_size(), two)};
}

SupraMatrices build_supra_matrices(const MultiplexGraph& g) {
  SupraMatrices s;
  s.supra_adjacency = build_supra_adjacency(g);
  s.transition_control = build_transition_control(g.num_nodes(), g.num_planes());
  s.walks = supra_walk_matrices(s.supra_adjacency, s.transition_control);
  return s;
}

std::int64_t count_walks(const IntCsr& s, int length, std::size_t i, std::size_t j) {
  if (length < 1) throw ConfigError("walk length must be >= 1");
  if (i >= s.rows || j >= s.cols) throw DimensionError("count_walks: index out of range");
  std::vector<std::int64_t> v(s.rows, 0), next(s.rows, 0);
  v[i] = 1;
  for (int step = 0; step < length; ++step) {
    std::fill(next.begin(), next.end(), 0);
    for (std::size_t r = 0; r < s.rows; ++r) {
      if (v[r] == 0) continue;
      for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e) next[s.col_idx[e]] += v[r] * s.values[e];
    }
    std::swap(v, next);
  }
  return v[j];
}

std::vector<Neighbor> neighbors(const IntCsr& s, std::size_t i) {
  if (i >= s.rows) throw DimensionError("neighbors: supra-node " + std::to_string(i) + " out of range");
  std::vector<Neighbor> out;
  for (std::size_t e = s.row_ptr[i]; e < s.row_ptr[i + 1]; ++e)
    if (s.values[e] >= 1) out.push_back({s.col_idx[e], s.values[e]});
  return out;
}

std::vector<double> lift_node_features(std::span<const double> x, std::size_t num_planes) {
  std::vector<double> h;
  h.reserve(x.size() * num_planes);
  for (std::size_t k = 0; k < num_planes; ++k) h.insert(h.end(), x.begin(), x.end());
  return h;
}

std::string to_edge_list(const MultiplexGraph& g, const std::string& config_hash) {
  std::ostringstream os;
  os << g.num_nodes() << ' ' << g.num_planes() << '\n';
  if (!config_hash.empty()) os << "# config_hash " << config_hash << '\n';
  for (std::size_t k = 0; k < g.num_planes(); ++k)
    for (const auto& e : g.plane_edges(k)) os << k << ' ' << e.m << ' ' << e.n << '\n';
  return os.str();
}

MultiplexGraph parse_edge_list(const std::string& text, std::string* config_hash) {
  std::istringstream is(text);
  std::string line;
  std::size_t p = 0, kk = 0;
  bool have_header = false;
  std::vector<std::vector<Edge>> edges;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream cs(line.substr(1));
      std::string key, value;
      if (cs >> key >> value && key == "config_hash" && config_hash) *config_hash = value;
      continue;
    }
    std::istringstream ls(line);
    if (!have_header) {
      if (!(ls >> p >> kk) || p == 0 || kk == 0) throw FormatError("edge list: bad header line \"" + line + "\"");
      edges.resize(kk);
      have_header = true;
      continue;
    }
    long long k, m, n;
    std::string extra;
    if (!(ls >> k >> m >> n) || (ls >> extra))
      throw FormatError("edge list line " + std::to_string(lineno) + ": expected \"k m n\"");
    if (k < 0 || static_cast<std::size_t>(k) >= kk || m < 0 || n < 0)
      throw FormatError("edge list line " + std::to_string(lineno) + ": index out of range");
    edges[static_cast<std::size_t>(k)].push_back({static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(n)});
  }
  if (!have_header) throw FormatError("edge list: missing \"P K\" header");
  return MultiplexGraph(p, kk, std::move(edges));
}

void write_edge_list(const std::filesystem::path& path, const MultiplexGraph& g, const std::string& config_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArtifactError("cannot write graph file " + path.string());
  os << to_edge_list(g, config_hash);
}

MultiplexGraph read_edge_list(const std::filesystem::path& path, std::string* config_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactError("missing graph file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_edge_list(ss.str(), config_hash);
}

}  // namespace mplexnet::mplexgraph
