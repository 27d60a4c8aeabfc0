#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mplexnet/matrix.hpp"

namespace mplexnet::data {

inline constexpr int kNumClasses = 5;
inline constexpr std::array<const char*, kNumClasses> kClassNames{"Still on treatment", "Died", "Cured", "Completed",
                                                                  "Failure"};

enum class ValueKind { continuous, categorical };

struct ModalitySchema {
  std::string name;
  std::size_t native_dim = 0;
  std::size_t reduced_dim = 0;
  ValueKind kind = ValueKind::continuous;

  bool operator==(const ModalitySchema&) const = default;
};

/// The six source modalities of the tuberculosis cohort with native and
/// autoencoder-reduced widths.
std::vector<ModalitySchema> reference_schemas();

/// Reference layout with native widths shrunk to 2x the reduced width, for
/// desk-scale synthetic runs. Reduced widths (and so P = 396) are unchanged.
std::vector<ModalitySchema> synthetic_schemas();

/// Sum of reduced widths (P).
std::size_t total_reduced_dim(std::span<const ModalitySchema> schemas);
std::size_t total_native_dim(std::span<const ModalitySchema> schemas);

/// Throws ConfigError when the widths differ from reference_schemas().
void require_reference_schemas(std::span<const ModalitySchema> schemas);

struct PatientRecord {
  std::string id;
  /// One block per modality, native width; NaN marks a missing cell.
  std::vector<std::vector<double>> blocks;
  /// False when the patient has no row (or only empty cells) for a modality.
  std::vector<bool> present;
  int label = 0;
};

struct Cohort {
  std::vector<ModalitySchema> schemas;
  std::vector<PatientRecord> patients;
  /// Ids seen in modality files but absent from the labels file.
  std::vector<std::string> unmatched_ids;

  std::size_t size() const { return patients.size(); }
  std::vector<int> labels() const;
  /// N x native_dim matrix for one modality (NaN where missing).
  Matrix modality_matrix(std::size_t modality) const;
  /// Early-fusion input: all modality blocks concatenated.
  Matrix concatenated() const;
};

// CSV layout: "<modality name>.csv" with header "patient_id,f0,...,f{D-1}"
// (an empty cell is missing) and "labels.csv" with header "patient_id,label".
// A leading "# config_hash <hash>" line is written when a hash is given and is
// skipped (and reported) on load.

void save_cohort(const std::filesystem::path& dir, const Cohort& cohort, const std::string& config_hash = "");
/// Throws ArtifactError for a missing labels/modality file or mixed config
/// hashes, FormatError for duplicate ids, non-numeric cells, bad widths or
/// labels outside {0..4}.
Cohort load_cohort(const std::filesystem::path& dir, std::span<const ModalitySchema> schemas,
                   std::string* config_hash = nullptr);

/// Per-feature means of the training rows, per modality.
struct ImputationStats {
  std::vector<std::vector<double>> means;
};

/// Throws ConfigError naming the modality/feature when a feature has no
/// observed value among the training rows.
ImputationStats fit_imputation(const Cohort& cohort, std::span<const std::size_t> train_rows);
/// Replaces NaN cells with training means; presence flags are kept for reporting.
void apply_imputation(Cohort& cohort, const ImputationStats& stats);
Cohort impute_mean(Cohort cohort, std::span<const std::size_t> train_rows);

/// Column-wise z-scoring with training-set statistics (population std).
/// Columns flagged as categorical, or with zero spread, keep mean 0 / std 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const Matrix& m, std::span<const std::size_t> train_rows,
                          const std::vector<bool>& passthrough = {});
  Matrix apply(const Matrix& m) const;
};

struct SplitSpec {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
  std::uint64_t seed = 0;
  int n_repeats = 10;

  void validate() const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// n_repeats seeded shuffles of [0, n). Train and val sizes are floor(f * n);
/// the remainder goes to test. Each list is sorted ascending.
std::vector<Split> make_splits(std::size_t n, const SplitSpec& spec);

struct SynthSpec {
  std::size_t n_patients = 600;
  std::vector<ModalitySchema> schemas = synthetic_schemas();
  double noise_scale = 0.25;
  std::vector<double> class_priors{0.25, 0.10, 0.30, 0.25, 0.10};
  std::size_t num_factors = 8;
  /// Latent factors each modality observes. Factor 0 and factor 1 drive the
  /// label and are never observed by the same modality by default.
  std::vector<std::vector<std::size_t>> modality_factors{{0, 2, 3}, {4, 5}, {2, 6}, {1, 3, 7}, {5, 6}, {1, 7}};
  /// Probability that a patient's first modality (CT) is missing.
  double first_modality_missing_rate = 0.0;
  /// Class-linked co-activation: a patient of class c gets +marker_strength on
  /// markers_per_block fixed features in each modality of class_marker_modalities[c].
  double marker_strength = 2.0;
  std::size_t markers_per_block = 8;
  std::vector<std::vector<std::size_t>> class_marker_modalities{{0, 3}, {1, 4}, {0, 1}, {3, 4}, {0, 4}};

  void validate() const;
};

/// Synthetic cohort with planted cross-modal structure. Each patient draws
/// latent factors u ~ N(0, I); each modality is a noisy random-linear view of
/// its factor subset (thresholded at 0 for categorical modalities). The class
/// is the sector of angle atan2(u1, u0), with sector widths proportional to
/// class_priors, so predicting it needs factors from two modalities. On top,
/// every class co-activates a fixed marker set in two modalities.
Cohort synth_generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace mplexnet::data
