#include "mplexnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "mplexnet/error.hpp"

namespace mplexnet::data {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
    throw FormatError("non-numeric cell \"" + s + "\" in " + where);
  return v;
}

struct CsvTable {
  std::string config_hash;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactError("missing file " + path.string());
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream cs(line.substr(1));
      std::string key, value;
      if (cs >> key >> value && key == "config_hash") t.config_hash = value;
      continue;
    }
    if (!have_header) {
      t.header = split_csv(line);
      have_header = true;
    } else {
      t.rows.push_back(split_csv(line));
    }
  }
  if (!have_header) throw FormatError("empty CSV file " + path.string());
  return t;
}

void write_hash_line(std::ostream& os, const std::string& config_hash) {
  if (!config_hash.empty()) os << "# config_hash " << config_hash << '\n';
}

}  // namespace

std::vector<ModalitySchema> reference_schemas() {
  return {{"CT", 2048, 128, ValueKind::continuous},       {"Genomic", 4081, 64, ValueKind::categorical},
          {"Demographic", 29, 8, ValueKind::categorical}, {"Clinical", 1726, 128, ValueKind::categorical},
          {"Regimen", 233, 64, ValueKind::categorical},   {"Continuous", 8, 4, ValueKind::continuous}};
}

std::vector<ModalitySchema> synthetic_schemas() {
  auto s = reference_schemas();
  for (auto& m : s) m.native_dim = 2 * m.reduced_dim;
  return s;
}

std::size_t total_reduced_dim(std::span<const ModalitySchema> schemas) {
  std::size_t n = 0;
  for (const auto& s : schemas) n += s.reduced_dim;
  return n;
}

std::size_t total_native_dim(std::span<const ModalitySchema> schemas) {
  std::size_t n = 0;
  for (const auto& s : schemas) n += s.native_dim;
  return n;
}

void require_reference_schemas(std::span<const ModalitySchema> schemas) {
  const auto ref = reference_schemas();
  if (schemas.size() != ref.size()) throw ConfigError("replication mode needs exactly six modalities");
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (schemas[i].name != ref[i].name || schemas[i].native_dim != ref[i].native_dim ||
        schemas[i].reduced_dim != ref[i].reduced_dim)
      throw ConfigError("modality " + schemas[i].name + " (" + std::to_string(schemas[i].native_dim) + "->" +
                        std::to_string(schemas[i].reduced_dim) + ") differs from the reference layout " + ref[i].name +
                        " (" + std::to_string(ref[i].native_dim) + "->" + std::to_string(ref[i].reduced_dim) + ")");
}

std::vector<int> Cohort::labels() const {
  std::vector<int> out;
  out.reserve(patients.size());
  for (const auto& p : patients) out.push_back(p.label);
  return out;
}

Matrix Cohort::modality_matrix(std::size_t modality) const {
  const auto d = schemas.at(modality).native_dim;
  Matrix m(patients.size(), d);
  for (std::size_t r = 0; r < patients.size(); ++r) std::copy_n(patients[r].blocks[modality].data(), d, m.row(r).data());
  return m;
}

Matrix Cohort::concatenated() const {
  std::vector<Matrix> parts;
  for (std::size_t m = 0; m < schemas.size(); ++m) parts.push_back(modality_matrix(m));
  return hconcat(parts);
}

void save_cohort(const fs::path& dir, const Cohort& cohort, const std::string& config_hash) {
  fs::create_directories(dir);
  for (std::size_t m = 0; m < cohort.schemas.size(); ++m) {
    const auto& s = cohort.schemas[m];
    std::ofstream os(dir / (s.name + ".csv"), std::ios::binary);
    if (!os) throw ArtifactError("cannot write " + (dir / (s.name + ".csv")).string());
    write_hash_line(os, config_hash);
    os << "patient_id";
    for (std::size_t f = 0; f < s.native_dim; ++f) os << ",f" << f;
    os << '\n';
    for (const auto& p : cohort.patients) {
      if (!p.present[m]) continue;
      os << p.id;
      for (double v : p.blocks[m]) {
        os << ',';
        if (!std::isnan(v)) os << format_double(v);
      }
      os << '\n';
    }
  }
  std::ofstream os(dir / "labels.csv", std::ios::binary);
  if (!os) throw ArtifactError("cannot write " + (dir / "labels.csv").string());
  write_hash_line(os, config_hash);
  os << "patient_id,label\n";
  for (const auto& p : cohort.patients) os << p.id << ',' << p.label << '\n';
}

Cohort load_cohort(const fs::path& dir, std::span<const ModalitySchema> schemas, std::string* config_hash) {
  const auto labels_path = dir / "labels.csv";
  if (!fs::exists(labels_path)) throw ArtifactError("missing labels file " + labels_path.string());
  auto labels = read_csv(labels_path);
  if (labels.header.size() != 2 || labels.header[0] != "patient_id" || labels.header[1] != "label")
    throw FormatError("labels.csv header must be \"patient_id,label\"");

  Cohort cohort;
  cohort.schemas.assign(schemas.begin(), schemas.end());
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& row : labels.rows) {
    if (row.size() != 2) throw FormatError("labels.csv: expected 2 columns, got " + std::to_string(row.size()));
    if (index.count(row[0])) throw FormatError("duplicate patient_id " + row[0] + " in labels.csv");
    const double v = parse_double(row[1], "labels.csv");
    if (v != std::floor(v) || v < 0 || v >= kNumClasses)
      throw FormatError("label " + row[1] + " for patient " + row[0] + " is outside {0..4}");
    PatientRecord p;
    p.id = row[0];
    p.label = static_cast<int>(v);
    p.present.assign(schemas.size(), false);
    p.blocks.resize(schemas.size());
    for (std::size_t m = 0; m < schemas.size(); ++m) p.blocks[m].assign(schemas[m].native_dim, kNaN);
    index.emplace(p.id, cohort.patients.size());
    cohort.patients.push_back(std::move(p));
  }

  std::unordered_set<std::string> unmatched;
  for (std::size_t m = 0; m < schemas.size(); ++m) {
    const auto& s = schemas[m];
    const auto path = dir / (s.name + ".csv");
    auto table = read_csv(path);
    if (table.config_hash != labels.config_hash)
      throw ArtifactError(path.string() + " has config hash \"" + table.config_hash + "\" but labels.csv has \"" +
                          labels.config_hash + "\"");
    if (table.header.size() != s.native_dim + 1 || table.header[0] != "patient_id")
      throw FormatError(path.string() + ": expected patient_id plus " + std::to_string(s.native_dim) + " features");
    std::unordered_set<std::string> seen;
    for (const auto& row : table.rows) {
      if (row.size() != s.native_dim + 1)
        throw FormatError(path.string() + ": row for " + row[0] + " has " + std::to_string(row.size()) + " cells");
      if (!seen.insert(row[0]).second) throw FormatError("duplicate patient_id " + row[0] + " in " + path.string());
      auto it = index.find(row[0]);
      if (it == index.end()) {
        unmatched.insert(row[0]);
        continue;
      }
      auto& p = cohort.patients[it->second];
      bool any = false;
      for (std::size_t f = 0; f < s.native_dim; ++f) {
        const auto& cell = row[f + 1];
        if (cell.empty()) continue;
        p.blocks[m][f] = parse_double(cell, path.string());
        any = true;
      }
      p.present[m] = any;
    }
  }
  for (const auto& p : cohort.patients)
    if (std::none_of(p.present.begin(), p.present.end(), [](bool b) { return b; }))
      throw FormatError("patient " + p.id + " has no modality present");
  cohort.unmatched_ids.assign(unmatched.begin(), unmatched.end());
  std::sort(cohort.unmatched_ids.begin(), cohort.unmatched_ids.end());
  if (config_hash) *config_hash = labels.config_hash;
  return cohort;
}

ImputationStats fit_imputation(const Cohort& cohort, std::span<const std::size_t> train_rows) {
  ImputationStats stats;
  for (std::size_t m = 0; m < cohort.schemas.size(); ++m) {
    const auto d = cohort.schemas[m].native_dim;
    std::vector<double> sum(d, 0.0);
    std::vector<std::size_t> count(d, 0);
    for (auto r : train_rows) {
      const auto& block = cohort.patients.at(r).blocks[m];
      for (std::size_t f = 0; f < d; ++f)
        if (!std::isnan(block[f])) {
          sum[f] += block[f];
          ++count[f];
        }
    }
    std::vector<double> mean(d);
    for (std::size_t f = 0; f < d; ++f) {
      if (count[f] == 0)
        throw ConfigError("feature f" + std::to_string(f) + " of modality " + cohort.schemas[m].name +
                          " is missing in every training row");
      mean[f] = sum[f] / static_cast<double>(count[f]);
    }
    stats.means.push_back(std::move(mean));
  }
  return stats;
}

void apply_imputation(Cohort& cohort, const ImputationStats& stats) {
  for (auto& p : cohort.patients)
    for (std::size_t m = 0; m < cohort.schemas.size(); ++m)
      for (std::size_t f = 0; f < p.blocks[m].size(); ++f)
        if (std::isnan(p.blocks[m][f])) p.blocks[m][f] = stats.means[m][f];
}

Cohort impute_mean(Cohort cohort, std::span<const std::size_t> train_rows) {
  apply_imputation(cohort, fit_imputation(cohort, train_rows));
  return cohort;
}

Standardizer Standardizer::fit(const Matrix& m, std::span<const std::size_t> train_rows,
                               const std::vector<bool>& passthrough) {
  if (train_rows.empty()) throw ConfigError("standardization needs at least one training row");
  if (!passthrough.empty() && passthrough.size() != m.cols) throw DimensionError("passthrough mask width mismatch");
  Standardizer s;
  s.mean.assign(m.cols, 0.0);
  s.stddev.assign(m.cols, 1.0);
  const double n = static_cast<double>(train_rows.size());
  for (std::size_t c = 0; c < m.cols; ++c) {
    if (!passthrough.empty() && passthrough[c]) continue;
    double sum = 0.0;
    for (auto r : train_rows) sum += m(r, c);
    const double mu = sum / n;
    double ss = 0.0;
    for (auto r : train_rows) ss += (m(r, c) - mu) * (m(r, c) - mu);
    const double sd = std::sqrt(ss / n);
    s.mean[c] = mu;
    s.stddev[c] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& m) const {
  if (m.cols != mean.size()) throw DimensionError("standardizer width mismatch");
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = (m(r, c) - mean[c]) / stddev[c];
  return out;
}

void SplitSpec::validate() const {
  for (double f : {train, val, test})
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (n_repeats < 1) throw ConfigError("n_repeats must be >= 1");
}

std::vector<Split> make_splits(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  if (n < 10) throw ConfigError("need at least 10 records to split, got " + std::to_string(n));
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(n) + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) throw ConfigError("split fractions leave an empty split");
  std::vector<Split> out;
  for (int r = 0; r < spec.n_repeats; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Split s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<long>(n_train));
    s.val.assign(perm.begin() + static_cast<long>(n_train), perm.begin() + static_cast<long>(n_train + n_val));
    s.test.assign(perm.begin() + static_cast<long>(n_train + n_val), perm.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    out.push_back(std::move(s));
  }
  return out;
}

void SynthSpec::validate() const {
  if (n_patients < 2) throw ConfigError("synthetic cohort needs at least 2 patients");
  if (class_priors.size() != kNumClasses) throw ConfigError("class_priors needs one entry per class");
  double total = 0.0;
  for (double p : class_priors) {
    if (!(p > 0.0 && p < 0.5)) throw ConfigError("each class prior must lie in (0, 0.5)");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("class priors must sum to 1");
  if (modality_factors.size() != schemas.size()) throw ConfigError("modality_factors needs one entry per modality");
  if (num_factors < 2) throw ConfigError("synthetic cohort needs at least 2 latent factors");
  for (std::size_t m = 0; m < schemas.size(); ++m) {
    if (schemas[m].native_dim < 4) throw ConfigError("modality " + schemas[m].name + " is narrower than 4");
    if (modality_factors[m].empty()) throw ConfigError("modality " + schemas[m].name + " observes no factor");
    for (auto f : modality_factors[m])
      if (f >= num_factors) throw ConfigError("modality factor index out of range");
  }
  if (!(noise_scale >= 0.0)) throw ConfigError("noise_scale must be non-negative");
  if (!(marker_strength >= 0.0) || !std::isfinite(marker_strength))
    throw ConfigError("marker_strength must be finite and non-negative");
  if (class_marker_modalities.size() != kNumClasses)
    throw ConfigError("class_marker_modalities needs one entry per class");
  for (const auto& mods : class_marker_modalities)
    for (auto m : mods) {
      if (m >= schemas.size()) throw ConfigError("class marker modality index out of range");
      if (markers_per_block * kNumClasses > schemas[m].native_dim)
        throw ConfigError("modality " + schemas[m].name + " is too narrow for the class markers");
    }
  if (!(first_modality_missing_rate >= 0.0 && first_modality_missing_rate < 1.0))
    throw ConfigError("missing rate must lie in [0, 1)");
}

Cohort synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Random loadings per modality: [native_dim x |factors|], scaled so every
  // feature has unit signal variance.
  std::vector<std::vector<double>> loadings(spec.schemas.size());
  for (std::size_t m = 0; m < spec.schemas.size(); ++m) {
    const auto nf = spec.modality_factors[m].size();
    const double scale = 1.0 / std::sqrt(static_cast<double>(nf));
    loadings[m].resize(spec.schemas[m].native_dim * nf);
    for (auto& w : loadings[m]) w = scale * normal(rng);
  }

  // Marker features: disjoint per class within a modality.
  std::vector<std::vector<std::vector<std::size_t>>> markers(kNumClasses,
                                                             std::vector<std::vector<std::size_t>>(spec.schemas.size()));
  for (std::size_t m = 0; m < spec.schemas.size(); ++m) {
    std::vector<std::size_t> order(spec.schemas[m].native_dim);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (int c = 0; c < kNumClasses; ++c)
      for (auto mm : spec.class_marker_modalities[static_cast<std::size_t>(c)])
        if (mm == m) {
          auto first = order.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * spec.markers_per_block);
          markers[static_cast<std::size_t>(c)][m].assign(first, first + static_cast<std::ptrdiff_t>(spec.markers_per_block));
        }
  }

  std::vector<double> cumulative{0.0};
  for (double p : spec.class_priors) cumulative.push_back(cumulative.back() + p);
  constexpr double kTwoPi = 6.283185307179586476925286766559;

  Cohort cohort;
  cohort.schemas = spec.schemas;
  for (std::size_t i = 0; i < spec.n_patients; ++i) {
    std::vector<double> u(spec.num_factors);
    for (auto& v : u) v = normal(rng);
    double angle = std::atan2(u[1], u[0]);
    if (angle < 0.0) angle += kTwoPi;
    const double pos = angle / kTwoPi;
    int label = kNumClasses - 1;
    for (int c = 0; c < kNumClasses; ++c)
      if (pos < cumulative[static_cast<std::size_t>(c) + 1]) {
        label = c;
        break;
      }

    PatientRecord p;
    char id[32];
    std::snprintf(id, sizeof id, "P%05zu", i);
    p.id = id;
    p.label = label;
    p.present.assign(spec.schemas.size(), true);
    for (std::size_t m = 0; m < spec.schemas.size(); ++m) {
      const auto& s = spec.schemas[m];
      const auto& factors = spec.modality_factors[m];
      std::vector<double> block(s.native_dim);
      for (std::size_t f = 0; f < s.native_dim; ++f) {
        double signal = 0.0;
        for (std::size_t q = 0; q < factors.size(); ++q) signal += loadings[m][f * factors.size() + q] * u[factors[q]];
        block[f] = signal + spec.noise_scale * normal(rng);
      }
      for (auto f : markers[static_cast<std::size_t>(label)][m]) block[f] += spec.marker_strength;
      if (s.kind == ValueKind::categorical)
        for (auto& v : block) v = v > 0.0 ? 1.0 : 0.0;
      p.blocks.push_back(std::move(block));
    }
    if (unit(rng) < spec.first_modality_missing_rate) {
      p.present[0] = false;
      std::fill(p.blocks[0].begin(), p.blocks[0].end(), kNaN);
    }
    cohort.patients.push_back(std::move(p));
  }
  return cohort;
}

}  // namespace mplexnet::data
