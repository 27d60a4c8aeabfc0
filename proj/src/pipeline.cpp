#include "mplexnet/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "mplexnet/baselines.hpp"
#include "mplexnet/error.hpp"
#include "mplexnet/metrics.hpp"

namespace mplexnet::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw bad(key);
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_integer() || (!it->is_number_unsigned() && it->get<std::int64_t>() < 0)) throw bad(key);
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw bad(key);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw bad(key);
    }
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw bad(key);
    }
  }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key " + where_ + "." + k);
  }

 private:
  ConfigError bad(const std::string& key) const { return ConfigError("config key " + path(key) + " has the wrong type"); }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <class E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<GraphMode> kGraphModes[]{{GraphMode::per_patient, "per_patient"}, {GraphMode::global, "global"}};
constexpr EnumName<mplexgnn::Readout> kReadouts[]{{mplexgnn::Readout::flatten, "flatten"},
                                                   {mplexgnn::Readout::mean_pool, "mean_pool"}};
constexpr EnumName<mplexgnn::WalkWeighting> kWeightings[]{{mplexgnn::WalkWeighting::multiplicity, "multiplicity"},
                                                           {mplexgnn::WalkWeighting::binary, "binary"}};
constexpr EnumName<data::ValueKind> kKinds[]{{data::ValueKind::continuous, "continuous"},
                                              {data::ValueKind::categorical, "categorical"}};

template <class E, std::size_t N>
const char* enum_name(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  throw ConfigError("unnamed enum value");
}

template <class E, std::size_t N>
void enum_value(const EnumName<E> (&table)[N], Reader& r, const std::string& key, E& out) {
  std::string s = enum_name(table, out);
  r.get(key, s);
  std::string valid;
  for (const auto& e : table) {
    if (s == e.name) {
      out = e.value;
      return;
    }
    valid += std::string(valid.empty() ? "" : ", ") + e.name;
  }
  throw ConfigError("config key " + r.path(key) + " must be one of: " + valid);
}

json schedule_json(const diffcore::LrSchedule& s) {
  return {{"lr", s.base_lr}, {"decay_factor", s.decay_factor}, {"decay_every", s.decay_every}};
}

void read_schedule(Reader& r, diffcore::LrSchedule& s) {
  r.get("lr", s.base_lr);
  r.get("decay_factor", s.decay_factor);
  r.get("decay_every", s.decay_every);
}

json ae_json(const encoders::AeTrainConfig& c) {
  auto j = schedule_json(c.schedule);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["weight_decay"] = c.weight_decay;
  j["required_reduction"] = c.required_reduction;
  return j;
}

void read_ae(const json& j, const std::string& where, encoders::AeTrainConfig& c) {
  Reader r(j, where);
  read_schedule(r, c.schedule);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("weight_decay", c.weight_decay);
  r.get("required_reduction", c.required_reduction);
  r.finish();
}

void check_schedule(const diffcore::LrSchedule& s, const std::string& where) {
  if (!(s.base_lr > 0.0 && std::isfinite(s.base_lr))) throw ConfigError(where + ".lr must be positive");
  if (!(s.decay_factor > 0.0 && s.decay_factor <= 1.0)) throw ConfigError(where + ".decay_factor must lie in (0, 1]");
  if (s.decay_every < 1) throw ConfigError(where + ".decay_every must be >= 1");
}

void check_ae(const encoders::AeTrainConfig& c, const std::string& where) {
  check_schedule(c.schedule, where);
  if (c.epochs < 1 || c.batch_size < 1) throw ConfigError(where + " epochs and batch_size must be positive");
  if (!(c.weight_decay >= 0.0)) throw ConfigError(where + ".weight_decay must be >= 0");
}

std::string hash_line(const std::string& h) { return "# config_hash " + h + "\n"; }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArtifactError("cannot write " + path.string());
  os << text;
  if (!os) throw ArtifactError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactError("missing artifact " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool safe_file_stem(const std::string& s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  });
}

std::vector<std::size_t> reduced_dims(const RunConfig& cfg) {
  std::vector<std::size_t> out;
  for (const auto& s : cfg.schemas()) out.push_back(s.reduced_dim);
  return out;
}

baselines::RgcnConfig rgcn_config(const RunConfig& cfg) {
  baselines::RgcnConfig rc;
  rc.num_layers = cfg.gnn.num_layers;
  // Matches the mplex state width after concatenation.
  rc.hidden_width = 2 * cfg.gnn.hidden_width;
  rc.readout_hidden = cfg.gnn.readout_hidden;
  rc.num_classes = cfg.gnn.num_classes;
  rc.neg_slope = cfg.gnn.neg_slope;
  return rc;
}

constexpr const char* kLateFusion = "late_fusion_avg";

}  // namespace

// ---- RunConfig ------------------------------------------------------------

void RunConfig::validate() const {
  if (cohort_path.empty()) synth.validate();
  split.validate();
  sparsity.validate();
  gnn.validate();
  if (gnn.num_classes != static_cast<std::size_t>(data::kNumClasses))
    throw ConfigError("the cohort has " + std::to_string(data::kNumClasses) + " classes");
  if (encoders.num_concepts < 1) throw ConfigError("encoders.num_concepts must be positive");
  check_ae(encoders.dae, "encoders.dae");
  check_ae(encoders.cae, "encoders.cae");
  check_schedule(training.schedule, "training");
  if (training.epochs < 1 || training.batch_size < 1)
    throw ConfigError("training epochs and batch_size must be positive");
  if (!(training.weight_decay >= 0.0)) throw ConfigError("training.weight_decay must be >= 0");
  std::set<std::string> names;
  for (const auto& s : schemas()) {
    if (!safe_file_stem(s.name)) throw ConfigError("modality name '" + s.name + "' is not usable as a file name");
    if (!names.insert(s.name).second) throw ConfigError("duplicate modality name " + s.name);
    if (s.reduced_dim < 1 || s.reduced_dim > s.native_dim)
      throw ConfigError("modality " + s.name + " needs 1 <= reduced_dim <= native_dim");
  }
  if (paper_replication) data::require_reference_schemas(schemas());
}

json RunConfig::to_json() const {
  json schemas_j = json::array();
  for (const auto& s : synth.schemas)
    schemas_j.push_back({{"name", s.name},
                         {"native_dim", s.native_dim},
                         {"reduced_dim", s.reduced_dim},
                         {"kind", enum_name(kKinds, s.kind)}});
  auto training_j = schedule_json(training.schedule);
  training_j["epochs"] = training.epochs;
  training_j["batch_size"] = training.batch_size;
  training_j["weight_decay"] = training.weight_decay;
  return {
      {"seed", seed},
      {"cohort_path", cohort_path},
      {"paper_replication", paper_replication},
      {"schemas", schemas_j},
      {"cohort",
       {{"n_patients", synth.n_patients},
        {"noise_scale", synth.noise_scale},
        {"class_priors", synth.class_priors},
        {"num_factors", synth.num_factors},
        {"modality_factors", synth.modality_factors},
        {"first_modality_missing_rate", synth.first_modality_missing_rate},
        {"marker_strength", synth.marker_strength},
        {"markers_per_block", synth.markers_per_block},
        {"class_marker_modalities", synth.class_marker_modalities}}},
      {"split", {{"train", split.train}, {"val", split.val}, {"test", split.test}, {"n_repeats", split.n_repeats}}},
      {"encoders",
       {{"num_concepts", encoders.num_concepts},
        {"neg_slope", encoders.neg_slope},
        {"dae", ae_json(encoders.dae)},
        {"cae", ae_json(encoders.cae)}}},
      {"sparsity", {{"fraction", sparsity.fraction}, {"min_nodes", sparsity.min_nodes}}},
      {"gnn",
       {{"num_layers", gnn.num_layers},
        {"hidden_width", gnn.hidden_width},
        {"gin_epsilon", gnn.gin_epsilon},
        {"learn_epsilon", gnn.learn_epsilon},
        {"readout_hidden", gnn.readout_hidden},
        {"neg_slope", gnn.neg_slope}}},
      {"training", training_j},
      {"modes",
       {{"graph", enum_name(kGraphModes, graph_mode)},
        {"readout", enum_name(kReadouts, gnn.readout)},
        {"weighting", enum_name(kWeightings, gnn.weighting)}}},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Reader top(j, "config");
  top.get("seed", c.seed);
  top.get("cohort_path", c.cohort_path);
  top.get("paper_replication", c.paper_replication);
  if (const auto* s = top.sub("schemas")) {
    if (!s->is_array() || s->empty()) throw ConfigError("config.schemas must be a non-empty array");
    c.synth.schemas.clear();
    for (std::size_t i = 0; i < s->size(); ++i) {
      Reader r((*s)[i], "config.schemas[" + std::to_string(i) + "]");
      data::ModalitySchema m;
      r.get("name", m.name);
      r.get("native_dim", m.native_dim);
      r.get("reduced_dim", m.reduced_dim);
      enum_value(kKinds, r, "kind", m.kind);
      r.finish();
      c.synth.schemas.push_back(m);
    }
  }
  if (const auto* s = top.sub("cohort")) {
    Reader r(*s, "config.cohort");
    r.get("n_patients", c.synth.n_patients);
    r.get("noise_scale", c.synth.noise_scale);
    r.get("class_priors", c.synth.class_priors);
    r.get("num_factors", c.synth.num_factors);
    r.get("modality_factors", c.synth.modality_factors);
    r.get("first_modality_missing_rate", c.synth.first_modality_missing_rate);
    r.get("marker_strength", c.synth.marker_strength);
    r.get("markers_per_block", c.synth.markers_per_block);
    r.get("class_marker_modalities", c.synth.class_marker_modalities);
    r.finish();
  }
  if (const auto* s = top.sub("split")) {
    Reader r(*s, "config.split");
    r.get("train", c.split.train);
    r.get("val", c.split.val);
    r.get("test", c.split.test);
    r.get("n_repeats", c.split.n_repeats);
    r.finish();
  }
  if (const auto* s = top.sub("encoders")) {
    Reader r(*s, "config.encoders");
    r.get("num_concepts", c.encoders.num_concepts);
    r.get("neg_slope", c.encoders.neg_slope);
    if (const auto* d = r.sub("dae")) read_ae(*d, "config.encoders.dae", c.encoders.dae);
    if (const auto* d = r.sub("cae")) read_ae(*d, "config.encoders.cae", c.encoders.cae);
    r.finish();
  }
  if (const auto* s = top.sub("sparsity")) {
    Reader r(*s, "config.sparsity");
    r.get("fraction", c.sparsity.fraction);
    r.get("min_nodes", c.sparsity.min_nodes);
    r.finish();
  }
  if (const auto* s = top.sub("gnn")) {
    Reader r(*s, "config.gnn");
    r.get("num_layers", c.gnn.num_layers);
    r.get("hidden_width", c.gnn.hidden_width);
    r.get("gin_epsilon", c.gnn.gin_epsilon);
    r.get("learn_epsilon", c.gnn.learn_epsilon);
    r.get("readout_hidden", c.gnn.readout_hidden);
    r.get("neg_slope", c.gnn.neg_slope);
    r.finish();
  }
  if (const auto* s = top.sub("training")) {
    Reader r(*s, "config.training");
    read_schedule(r, c.training.schedule);
    r.get("epochs", c.training.epochs);
    r.get("batch_size", c.training.batch_size);
    r.get("weight_decay", c.training.weight_decay);
    r.finish();
  }
  if (const auto* s = top.sub("modes")) {
    Reader r(*s, "config.modes");
    enum_value(kGraphModes, r, "graph", c.graph_mode);
    enum_value(kReadouts, r, "readout", c.gnn.readout);
    enum_value(kWeightings, r, "weighting", c.gnn.weighting);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  } catch (const ArtifactError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  // A run directory's config.json wraps the config with its hash.
  if (j.is_object() && j.contains("config") && j.contains("config_hash")) return from_json(j.at("config"));
  return from_json(j);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()).substr(0, 16); }

// ---- models ---------------------------------------------------------------

std::vector<std::string> model_names(const RunConfig& cfg) {
  std::vector<std::string> out{"mplex", "rgcn_multiplex", "rgcn_modality", "gcn", "early", "intermediate"};
  for (const auto& s : cfg.schemas()) out.push_back("no_fusion:" + s.name);
  return out;
}

bool is_graph_model(const std::string& name) { return name == "mplex" || name == "rgcn_multiplex"; }

void check_model_name(const RunConfig& cfg, const std::string& name) {
  auto names = model_names(cfg);
  if (std::find(names.begin(), names.end(), name) != names.end()) return;
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown model '" + name + "'; valid models: " + valid);
}

std::string model_dir_name(const std::string& name) {
  auto out = name;
  std::replace(out.begin(), out.end(), ':', '_');
  return out;
}

std::unique_ptr<Classifier> make_model(const RunConfig& cfg, const std::string& name, std::size_t input_dim,
                                       std::uint64_t seed) {
  check_model_name(cfg, name);
  const auto c = static_cast<std::size_t>(data::kNumClasses);
  if (name == "mplex") return std::make_unique<mplexgnn::MplexGnn>(input_dim, cfg.encoders.num_concepts, cfg.gnn, seed);
  if (name == "rgcn_multiplex")
    return baselines::RelationalGcn::multiplex(input_dim, cfg.encoders.num_concepts, rgcn_config(cfg), seed);
  if (name == "rgcn_modality") return baselines::RelationalGcn::modality_planes(reduced_dims(cfg), rgcn_config(cfg), seed);
  if (name == "gcn") return baselines::RelationalGcn::monoplex(input_dim, rgcn_config(cfg), seed);
  if (name == "early") return baselines::make_early_fusion(input_dim, c, seed);
  if (name == "intermediate") return baselines::make_intermediate_fusion(input_dim, c, seed);
  return baselines::make_no_fusion(name.substr(std::string("no_fusion:").size()), input_dim, c, seed);
}

// ---- scores ---------------------------------------------------------------

void write_scores_csv(const fs::path& path, const std::vector<std::string>& ids, const Matrix& probs,
                      const std::string& config_hash) {
  if (ids.size() != probs.rows) throw DimensionError("one id per score row required");
  std::string out = config_hash.empty() ? "" : hash_line(config_hash);
  out += "patient_id";
  for (std::size_t c = 0; c < probs.cols; ++c) out += fmt::format(",class_{}", c);
  out += '\n';
  for (std::size_t r = 0; r < probs.rows; ++r) {
    out += ids[r];
    for (std::size_t c = 0; c < probs.cols; ++c) out += fmt::format(",{}", probs(r, c));
    out += '\n';
  }
  write_text(path, out);
}

Matrix read_scores_csv(const fs::path& path, std::vector<std::string>* ids, std::string* config_hash) {
  std::istringstream is(read_text(path));
  std::string line, hash;
  std::vector<std::string> row_ids;
  std::vector<double> values;
  std::size_t cols = 0;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.rfind("# config_hash ", 0) == 0) {
      hash = line.substr(14);
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!header) {
      if (cells.size() < 2 || cells[0] != "patient_id") throw FormatError(path.string() + ": bad scores header");
      cols = cells.size() - 1;
      header = true;
      continue;
    }
    if (cells.size() != cols + 1) throw FormatError(path.string() + ": ragged row for " + cells[0]);
    row_ids.push_back(cells[0]);
    for (std::size_t c = 1; c <= cols; ++c) {
      double v = 0.0;
      const auto& s = cells[c];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) throw FormatError(path.string() + ": non-numeric score " + s);
      values.push_back(v);
    }
  }
  if (!header) throw FormatError(path.string() + ": empty scores file");
  if (ids) *ids = row_ids;
  if (config_hash) *config_hash = hash;
  return Matrix(row_ids.size(), cols, std::move(values));
}

// ---- Run ------------------------------------------------------------------

Run::Run(fs::path dir, RunConfig cfg) : dir_(std::move(dir)), cfg_(std::move(cfg)) {
  cfg_.validate();
  hash_ = cfg_.hash();
}

fs::path Run::cohort_dir() const { return cfg_.cohort_path.empty() ? dir_ / "cohort" : fs::path(cfg_.cohort_path); }
fs::path Run::split_dir(std::size_t i) const { return dir_ / fmt::format("split_{:02}", i); }
fs::path Run::encoder_base(std::size_t i) const { return split_dir(i) / "encoders"; }
fs::path Run::graph_dir(std::size_t i) const { return split_dir(i) / "graphs"; }
fs::path Run::model_dir(std::size_t i, const std::string& model) const {
  return split_dir(i) / "models" / model_dir_name(model);
}
fs::path Run::report_dir() const { return dir_ / "report"; }

void Run::check_hash(const std::string& found, const fs::path& what) const {
  if (found == hash_) return;
  if (found.empty()) throw ArtifactError(what.string() + " carries no config hash (expected " + hash_ + ")");
  throw ArtifactError(what.string() + " was produced by config " + found + ", but the current config is " + hash_);
}

void Run::write_config() const {
  const auto path = dir_ / "config.json";
  if (fs::exists(path)) {
    json j;
    try {
      j = json::parse(read_text(path));
    } catch (const json::parse_error&) {
      throw ArtifactError("unreadable " + path.string());
    }
    check_hash(j.value("config_hash", std::string()), path);
    return;
  }
  json j{{"config_hash", hash_}, {"config", cfg_.to_json()}};
  write_text(path, j.dump(2) + "\n");
}

void Run::synth() const {
  if (!cfg_.cohort_path.empty()) throw ConfigError("synth writes a synthetic cohort; unset cohort_path");
  write_config();
  auto cohort = data::synth_generate(cfg_.synth, cfg_.seed);
  data::save_cohort(cohort_dir(), cohort, hash_);
  spdlog::info("wrote {} synthetic patients to {}", cohort.size(), cohort_dir().string());
}

data::Cohort Run::cohort() const {
  std::string h;
  auto c = data::load_cohort(cohort_dir(), cfg_.schemas(), &h);
  if (cfg_.cohort_path.empty()) check_hash(h, cohort_dir());
  if (cfg_.paper_replication) data::require_reference_schemas(c.schemas);
  if (!c.unmatched_ids.empty()) spdlog::warn("{} ids have no label and were dropped", c.unmatched_ids.size());
  return c;
}

std::vector<data::Split> Run::splits(std::size_t n) const {
  auto spec = cfg_.split;
  spec.seed = cfg_.seed;
  return data::make_splits(n, spec);
}

void Run::train_encoders(const std::vector<std::size_t>& splits_to_run) const {
  const auto raw = cohort();
  write_config();
  const auto sps = splits(raw.size());
  for (auto i : splits_to_run) {
    auto imputed = data::impute_mean(raw, sps[i].train);
    auto tc = cfg_.encoders;
    tc.dae.seed = tc.cae.seed = cfg_.split_seed(i);
    encoders::StackTrainReport report;
    auto stack = encoders::train_encoder_stack(imputed, sps[i].train, tc, &report);
    fs::create_directories(split_dir(i));
    encoders::save_encoder_stack(encoder_base(i), stack, hash_);
    std::string csv = hash_line(hash_) + "autoencoder,initial_mse,final_mse,converged\n";
    for (std::size_t m = 0; m < report.dae.size(); ++m)
      csv += fmt::format("{},{},{},{}\n", cfg_.schemas()[m].name, report.dae[m].initial_mse(),
                         report.dae[m].final_mse(), report.dae[m].converged ? 1 : 0);
    csv += fmt::format("common,{},{},{}\n", report.cae.initial_mse(), report.cae.final_mse(),
                       report.cae.converged ? 1 : 0);
    write_text(split_dir(i) / "encoders_report.csv", csv);
    spdlog::info("split {}: encoders trained (common MSE {:.4g} -> {:.4g})", i, report.cae.initial_mse(),
                 report.cae.final_mse());
  }
}

namespace {

encoders::EncoderStack load_stack(const Run& run, std::size_t i, std::string* h) {
  const auto base = run.encoder_base(i);
  if (!fs::exists(base.string() + ".json"))
    throw ArtifactError("encoders for split " + std::to_string(i) + " are not trained (missing " + base.string() +
                        ".json); run train-encoders first");
  return encoders::load_encoder_stack(base, h);
}

}  // namespace

void Run::build_graphs(const std::vector<std::size_t>& splits_to_run, kernels::Exec exec) const {
  const auto raw = cohort();
  write_config();
  const auto sps = splits(raw.size());
  for (const auto& p : raw.patients)
    if (!safe_file_stem(p.id)) throw FormatError("patient id '" + p.id + "' is not usable as a file name");
  for (auto i : splits_to_run) {
    std::string h;
    auto stack = load_stack(*this, i, &h);
    check_hash(h, encoder_base(i));
    const auto x = stack.features(data::impute_mean(raw, sps[i].train));
    const auto dir = graph_dir(i);
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string summary = hash_line(hash_) + "patient_id,plane,nodes,edges\n";
    auto add_summary = [&](const std::string& id, const mplexgraph::MultiplexGraph& g) {
      const auto s = graphbuild::summarize(g);
      for (std::size_t k = 0; k < g.num_planes(); ++k)
        summary += fmt::format("{},{},{},{}\n", id, k, s.nodes_per_plane[k], s.edges_per_plane[k]);
    };
    if (cfg_.graph_mode == GraphMode::global) {
      auto g = graphbuild::build_global_multiplex(stack, x, sps[i].train, cfg_.sparsity, exec);
      mplexgraph::write_edge_list(dir / "global.edges", g, hash_);
      add_summary("global", g);
    } else {
      auto graphs = graphbuild::build_cohort_graphs(stack, x, cfg_.sparsity, exec);
      for (std::size_t r = 0; r < graphs.size(); ++r) {
        mplexgraph::write_edge_list(dir / (raw.patients[r].id + ".edges"), graphs[r], hash_);
        add_summary(raw.patients[r].id, graphs[r]);
      }
    }
    write_text(dir / "summary.csv", summary);
    spdlog::info("split {}: graphs written to {}", i, dir.string());
  }
}

Dataset Run::dataset(const std::string& model, std::size_t i, const data::Cohort& raw, const data::Split& sp) const {
  check_model_name(cfg_, model);
  Dataset d;
  d.labels = raw.labels();
  for (const auto& p : raw.patients) d.ids.push_back(p.id);
  const auto imputed = data::impute_mean(raw, sp.train);

  auto standardized = [&](const Matrix& m, std::vector<bool> passthrough) {
    return data::Standardizer::fit(m, sp.train, passthrough).apply(m);
  };
  auto passthrough = [&](std::size_t m) {
    return std::vector<bool>(cfg_.schemas()[m].native_dim, cfg_.schemas()[m].kind == data::ValueKind::categorical);
  };

  if (model.rfind("no_fusion:", 0) == 0) {
    const auto name = model.substr(10);
    std::size_t m = 0;
    while (cfg_.schemas()[m].name != name) ++m;
    d.features = standardized(imputed.modality_matrix(m), passthrough(m));
    return d;
  }
  if (model == "early") {
    std::vector<bool> mask;
    for (std::size_t m = 0; m < cfg_.schemas().size(); ++m) {
      auto part = passthrough(m);
      mask.insert(mask.end(), part.begin(), part.end());
    }
    d.features = standardized(imputed.concatenated(), mask);
    return d;
  }

  std::string h;
  auto stack = load_stack(*this, i, &h);
  check_hash(h, encoder_base(i));
  d.features = stack.features(imputed);
  if (!is_graph_model(model)) return d;

  const auto dir = graph_dir(i);
  auto read_graph = [&](const fs::path& path) {
    if (!fs::exists(path))
      throw ArtifactError("missing graph " + path.string() + "; run build-graphs for split " + std::to_string(i));
    std::string gh;
    auto g = mplexgraph::read_edge_list(path, &gh);
    check_hash(gh, path);
    return g;
  };
  if (cfg_.graph_mode == GraphMode::global) {
    d.graphs.push_back(read_graph(dir / "global.edges"));
  } else {
    for (const auto& p : raw.patients) d.graphs.push_back(read_graph(dir / (p.id + ".edges")));
  }
  return d;
}

void Run::train(const std::string& model, const std::vector<std::size_t>& splits_to_run,
                const TrainOptions& opts) const {
  check_model_name(cfg_, model);
  const auto raw = cohort();
  write_config();
  const auto sps = splits(raw.size());
  for (auto i : splits_to_run) {
    const auto& sp = sps[i];
    const auto ds = dataset(model, i, raw, sp);
    auto net = make_model(cfg_, model, ds.features.cols, cfg_.split_seed(i));
    auto tc = cfg_.training;
    tc.seed = cfg_.split_seed(i);
    training::Trainer tr(*net, ds, sp.train, sp.val, tc);

    const auto dir = model_dir(i, model);
    fs::create_directories(dir);
    const auto state = dir / "state";
    if (opts.resume && fs::exists(state.string() + ".json")) {
      std::string h;
      tr.load_state(state, &h);
      check_hash(h, state.string() + ".json");
      spdlog::info("split {}: {} resumed after epoch {}", i, model, tr.epochs_done());
    }
    bool stopped = false;
    while (!tr.finished()) {
      if (opts.stop_after && tr.epochs_done() >= *opts.stop_after) {
        stopped = true;
        break;
      }
      tr.run_epoch();
      tr.save_state(state, hash_);
    }
    std::ostringstream hist;
    training::write_history_csv(hist, tr.history(), hash_);
    write_text(dir / "history.csv", hist.str());
    if (stopped) {
      spdlog::info("split {}: {} stopped after epoch {}", i, model, tr.epochs_done());
      continue;
    }
    tr.save_best(dir / "best", hash_);
    tr.restore_best();
    auto ids_of = [&](const std::vector<std::size_t>& rows) {
      std::vector<std::string> out;
      for (auto r : rows) out.push_back(ds.ids[r]);
      return out;
    };
    write_scores_csv(dir / "scores_val.csv", ids_of(sp.val), predict_proba(*net, ds, sp.val), hash_);
    write_scores_csv(dir / "scores_test.csv", ids_of(sp.test), predict_proba(*net, ds, sp.test), hash_);
    spdlog::info("split {}: {} done, best epoch {} (val weighted AUC {:.4f})", i, model, tr.best_epoch(),
                 tr.best_val_wauc());
  }
}

void Run::evaluate() const {
  const auto raw = cohort();
  write_config();
  const auto sps = splits(raw.size());
  const auto labels = raw.labels();
  std::vector<std::vector<int>> split_labels;
  std::vector<std::vector<std::string>> split_ids;
  for (const auto& sp : sps) {
    std::vector<int> y;
    std::vector<std::string> ids;
    for (auto r : sp.test) {
      y.push_back(labels[r]);
      ids.push_back(raw.patients[r].id);
    }
    split_labels.push_back(std::move(y));
    split_ids.push_back(std::move(ids));
  }

  std::vector<metrics::ModelScores> scores;
  for (const auto& name : model_names(cfg_)) {
    std::vector<std::size_t> have;
    for (std::size_t i = 0; i < sps.size(); ++i)
      if (fs::exists(model_dir(i, name) / "scores_test.csv")) have.push_back(i);
    if (have.empty()) continue;
    if (have.size() != sps.size())
      throw ArtifactError("model " + name + " has test scores for " + std::to_string(have.size()) + " of " +
                          std::to_string(sps.size()) + " splits");
    metrics::ModelScores ms{name, {}};
    for (std::size_t i = 0; i < sps.size(); ++i) {
      const auto path = model_dir(i, name) / "scores_test.csv";
      std::vector<std::string> ids;
      std::string h;
      auto m = read_scores_csv(path, &ids, &h);
      check_hash(h, path);
      if (ids != split_ids[i]) throw ArtifactError("patient ids in " + path.string() + " do not match the test split");
      if (m.cols != static_cast<std::size_t>(data::kNumClasses))
        throw FormatError(path.string() + " does not have one column per class");
      ms.per_split.push_back(std::move(m));
    }
    scores.push_back(std::move(ms));
  }
  if (scores.empty()) throw ArtifactError("no trained models with test scores under " + dir_.string());

  std::vector<const metrics::ModelScores*> single;
  for (const auto& s : scores)
    if (s.model.rfind("no_fusion:", 0) == 0) single.push_back(&s);
  const bool late = single.size() == cfg_.schemas().size() && single.size() >= 2;
  if (late) {
    metrics::ModelScores lf{kLateFusion, {}};
    for (std::size_t i = 0; i < sps.size(); ++i) {
      std::vector<Matrix> sets;
      for (const auto* s : single) sets.push_back(s->per_split[i]);
      lf.per_split.push_back(baselines::late_fusion_average(sets));
    }
    scores.push_back(std::move(lf));
  }

  std::vector<metrics::ModelSummary> summaries;
  for (const auto& s : scores) summaries.push_back(metrics::summarize(s, split_labels));
  const auto ref = std::find_if(scores.begin(), scores.end(), [](const auto& s) { return s.model == "mplex"; });
  const auto& reference = ref == scores.end() ? scores.front() : *ref;
  std::vector<metrics::Comparison> comparisons;
  for (const auto& s : scores) {
    auto rows = metrics::compare(reference, s, split_labels);
    comparisons.insert(comparisons.end(), rows.begin(), rows.end());
  }

  std::vector<std::size_t> counts(data::kNumClasses, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];

  const auto dir = report_dir();
  std::ostringstream report, sig, plot;
  metrics::write_report_csv(report, summaries, hash_);
  metrics::write_significance_csv(sig, comparisons, hash_);
  metrics::write_plot_csv(plot, summaries, hash_);
  write_text(dir / "report.csv", report.str());
  write_text(dir / "significance.csv", sig.str());
  write_text(dir / "plot.csv", plot.str());

  std::string txt = hash_line(hash_);
  if (late)
    txt += std::string("# ") + kLateFusion +
           ": unweighted mean of the single-modality probabilities (simplified late fusion)\n";
  txt += metrics::format_report_table(summaries, comparisons, counts);
  write_text(dir / "report.txt", txt);
  spdlog::info("report written to {}", dir.string());
}

std::vector<std::size_t> select_splits(const Run& run, std::optional<std::size_t> only) {
  if (only) {
    if (*only >= run.num_splits())
      throw ConfigError("split " + std::to_string(*only) + " out of range (n_repeats = " +
                        std::to_string(run.num_splits()) + ")");
    return {*only};
  }
  std::vector<std::size_t> all(run.num_splits());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

}  // namespace mplexnet::pipeline
