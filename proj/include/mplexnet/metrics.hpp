#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mplexnet/matrix.hpp"

namespace mplexnet::metrics {

inline constexpr double kSignificanceLevel = 0.01;

/// Mann-Whitney AUC with midranks: P(s+ > s-) + 0.5 P(s+ == s-).
/// labels are 0/1; throws UndefinedMetricError when one class is absent.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct EvalReport {
  /// NaN for classes absent from the labels.
  std::vector<double> per_class_auc;
  std::vector<bool> present;
  std::vector<std::size_t> class_counts;
  double weighted_auc = 0.0;
};

/// One-vs-rest AUC per column of an N x C score matrix. Absent classes (or a
/// class that is the only one present) are flagged and left out of the
/// support-weighted average with a warning.
EvalReport per_class_report(const Matrix& scores, std::span<const int> labels);

struct DelongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double variance = 0.0;  // of auc_a - auc_b
  double z = 0.0;
  double p_value = 1.0;
};

/// Paired DeLong test on two score vectors for the same binary labels, using
/// midrank placement values. Needs at least two positives and two negatives.
/// Zero variance gives p = 1 when the AUCs agree and NumericalError otherwise.
DelongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels);

/// Test-set scores of one model over every split.
struct ModelScores {
  std::string model;
  std::vector<Matrix> per_split;
};

struct ModelSummary {
  std::string model;
  std::vector<EvalReport> per_split;
  /// Per class: mean over splits where the class is present, and its standard error.
  std::vector<double> mean_auc;
  std::vector<double> stderr_auc;
  /// Test-set class counts pooled over splits; weights for weighted_auc.
  std::vector<std::size_t> pooled_counts;
  double weighted_auc = 0.0;
  double weighted_stderr = 0.0;
};

ModelSummary summarize(const ModelScores& scores, std::span<const std::vector<int>> split_labels);

/// DeLong p-values of reference vs baseline for one class, one per split,
/// plus their median. significant means median < kSignificanceLevel.
struct Comparison {
  std::string reference;
  std::string baseline;
  int cls = 0;
  std::vector<double> p_values;
  double median_p = 1.0;
  bool significant = false;
};

std::vector<Comparison> compare(const ModelScores& reference, const ModelScores& baseline,
                                std::span<const std::vector<int>> split_labels);

double median(std::vector<double> values);

// Report writers. CSV outputs start with "# config_hash <hash>".

/// model,split,n_<class>...,auc_<class>...,weighted_auc rows per split plus a "mean" row.
void write_report_csv(std::ostream& os, std::span<const ModelSummary> models, const std::string& config_hash);
/// reference,baseline,class,split_00..,median_p,significant
void write_significance_csv(std::ostream& os, std::span<const Comparison> rows, const std::string& config_hash);
/// class,model,mean_auc,stderr for plotting; class "weighted" carries the summary.
void write_plot_csv(std::ostream& os, std::span<const ModelSummary> models, const std::string& config_hash);
/// Fixed-width table with class frequencies under the header. A '*' marks a
/// baseline AUC whose difference from the reference has median p < 0.01.
std::string format_report_table(std::span<const ModelSummary> models, std::span<const Comparison> comparisons,
                                std::span<const std::size_t> cohort_class_counts);

}  // namespace mplexnet::metrics
