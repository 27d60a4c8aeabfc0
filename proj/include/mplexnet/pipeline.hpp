#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mplexnet/data.hpp"
#include "mplexnet/encoders.hpp"
#include "mplexnet/graphbuild.hpp"
#include "mplexnet/kernels.hpp"
#include "mplexnet/model.hpp"
#include "mplexnet/mplexgnn.hpp"
#include "mplexnet/training.hpp"

namespace mplexnet::pipeline {

/// per_patient: one multiplex graph per patient. global: one graph from the
/// mean training-set saliency, shared by every patient.
enum class GraphMode { per_patient, global };

/// Everything that determines a run's outputs. Paths of the run directory
/// itself and thread counts are not part of it.
struct RunConfig {
  std::uint64_t seed = 0;
  /// Directory of an existing cohort; empty means the synthetic cohort in <run>/cohort.
  std::string cohort_path;
  /// Refuse cohorts whose widths differ from the reference layout.
  bool paper_replication = false;
  data::SynthSpec synth;
  data::SplitSpec split;
  encoders::StackTrainConfig encoders;
  graphbuild::SparsityRule sparsity;
  mplexgnn::MplexGnnConfig gnn;
  training::TrainConfig training;
  GraphMode graph_mode = GraphMode::per_patient;

  const std::vector<data::ModalitySchema>& schemas() const { return synth.schemas; }
  /// Seeds of everything trained on split i.
  std::uint64_t split_seed(std::size_t i) const { return seed * 1000 + i; }

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys and bad values throw ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  /// First 16 hex digits of SHA-256 over the canonical JSON.
  std::string hash() const;
};

std::string sha256_hex(const std::string& bytes);

/// Names accepted by train: mplex, rgcn_multiplex, rgcn_modality, gcn, early,
/// intermediate and no_fusion:<modality> for each schema.
std::vector<std::string> model_names(const RunConfig& cfg);
bool is_graph_model(const std::string& name);
/// Throws ConfigError listing the valid names.
void check_model_name(const RunConfig& cfg, const std::string& name);
/// Directory-safe form of a model name (':' becomes '_').
std::string model_dir_name(const std::string& name);

std::unique_ptr<Classifier> make_model(const RunConfig& cfg, const std::string& name, std::size_t input_dim,
                                       std::uint64_t seed);

/// Scores CSV: optional "# config_hash" line, then "patient_id,class_0,...".
void write_scores_csv(const std::filesystem::path& path, const std::vector<std::string>& ids, const Matrix& probs,
                      const std::string& config_hash);
Matrix read_scores_csv(const std::filesystem::path& path, std::vector<std::string>* ids,
                       std::string* config_hash = nullptr);

struct TrainOptions {
  bool resume = false;
  /// Stop (after checkpointing) once this many epochs are done.
  std::optional<int> stop_after;
};

/// A run directory:
///   config.json, cohort/, split_XX/{encoders.*, graphs/, models/<model>/}, report/
class Run {
 public:
  Run(std::filesystem::path dir, RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path cohort_dir() const;
  std::filesystem::path split_dir(std::size_t i) const;
  std::filesystem::path encoder_base(std::size_t i) const;
  std::filesystem::path graph_dir(std::size_t i) const;
  std::filesystem::path model_dir(std::size_t i, const std::string& model) const;
  std::filesystem::path report_dir() const;
  std::size_t num_splits() const { return static_cast<std::size_t>(cfg_.split.n_repeats); }

  /// Writes config.json; a directory holding another hash is rejected.
  void write_config() const;

  void synth() const;
  void train_encoders(const std::vector<std::size_t>& splits) const;
  void build_graphs(const std::vector<std::size_t>& splits, kernels::Exec exec) const;
  void train(const std::string& model, const std::vector<std::size_t>& splits, const TrainOptions& opts) const;
  void evaluate() const;

  /// Imputed cohort (with the split's training means) and the split itself.
  data::Cohort cohort() const;
  std::vector<data::Split> splits(std::size_t n) const;
  Dataset dataset(const std::string& model, std::size_t split, const data::Cohort& raw,
                  const data::Split& sp) const;

 private:
  void check_hash(const std::string& found, const std::filesystem::path& what) const;

  std::filesystem::path dir_;
  RunConfig cfg_;
  std::string hash_;
};

/// All split indices, or just `only` when given (range-checked).
std::vector<std::size_t> select_splits(const Run& run, std::optional<std::size_t> only);

}  // namespace mplexnet::pipeline
