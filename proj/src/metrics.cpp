#include "mplexnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mplexnet/data.hpp"
#include "mplexnet/error.hpp"

namespace mplexnet::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// 1-based midranks of values (ties share the mean of their ranks).
std::vector<double> midranks(std::span<const double> v) {
  const auto n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = rank;
    i = j + 1;
  }
  return r;
}

void check_binary(std::span<const double> scores, std::span<const int> labels, std::size_t& npos, std::size_t& nneg) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  npos = 0;
  nneg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1)
      ++npos;
    else if (labels[i] == 0)
      ++nneg;
    else
      throw ConfigError("binary labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw NumericalError("non-finite score at index " + std::to_string(i));
  }
  if (npos == 0 || nneg == 0) throw UndefinedMetricError("AUC is undefined when only one class is present");
}

/// Placement values: per positive, the fraction of negatives it beats (ties 1/2);
/// per negative, the fraction of positives that beat it.
struct Placements {
  std::vector<double> v10;
  std::vector<double> v01;
  double auc = 0.0;
};

Placements placements(std::span<const double> scores, std::span<const int> labels, std::size_t m, std::size_t n) {
  std::vector<double> pos, neg;
  pos.reserve(m);
  neg.reserve(n);
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  std::vector<double> all(pos);
  all.insert(all.end(), neg.begin(), neg.end());
  const auto tz = midranks(all);
  const auto tx = midranks(pos);
  const auto ty = midranks(neg);
  Placements p;
  p.v10.resize(m);
  p.v01.resize(n);
  const double dm = static_cast<double>(m);
  const double dn = static_cast<double>(n);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    p.v10[i] = (tz[i] - tx[i]) / dn;
    rank_sum += tz[i];
  }
  for (std::size_t j = 0; j < n; ++j) p.v01[j] = 1.0 - (tz[m + j] - ty[j]) / dm;
  p.auc = (rank_sum - dm * (dm + 1.0) / 2.0) / (dm * dn);
  return p;
}

double sample_cov(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / (n - 1.0);
}

std::vector<int> one_vs_rest(std::span<const int> labels, int cls) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] == cls ? 1 : 0;
  return out;
}

std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) out[r] = m(r, c);
  return out;
}

std::string class_label(std::size_t c) {
  return c < data::kClassNames.size() ? std::string(data::kClassNames[c]) : "class " + std::to_string(c);
}

std::string fmt_num(double v) { return std::isnan(v) ? std::string("NA") : fmt::format("{:.6f}", v); }

void hash_line(std::ostream& os, const std::string& h) {
  if (!h.empty()) os << "# config_hash " << h << '\n';
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t m = 0, n = 0;
  check_binary(scores, labels, m, n);
  const auto r = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) rank_sum += r[i];
  const double dm = static_cast<double>(m);
  return (rank_sum - dm * (dm + 1.0) / 2.0) / (dm * static_cast<double>(n));
}

EvalReport per_class_report(const Matrix& scores, std::span<const int> labels) {
  if (scores.rows != labels.size()) throw DimensionError("score rows and labels differ in length");
  const auto c_count = scores.cols;
  EvalReport rep;
  rep.per_class_auc.assign(c_count, kNaN);
  rep.present.assign(c_count, false);
  rep.class_counts.assign(c_count, 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c_count) throw ConfigError("label outside score columns");
    ++rep.class_counts[static_cast<std::size_t>(l)];
  }
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < c_count; ++c) {
    if (rep.class_counts[c] == 0 || rep.class_counts[c] == labels.size()) {
      spdlog::warn("class {} is {} in this evaluation set; excluded from the weighted AUC", c,
                   rep.class_counts[c] == 0 ? "absent" : "the only class");
      continue;
    }
    const auto col = column(scores, c);
    const auto bin = one_vs_rest(labels, static_cast<int>(c));
    rep.per_class_auc[c] = auroc(col, bin);
    rep.present[c] = true;
    num += static_cast<double>(rep.class_counts[c]) * rep.per_class_auc[c];
    den += static_cast<double>(rep.class_counts[c]);
  }
  if (den == 0.0) throw UndefinedMetricError("no class has a defined AUC");
  rep.weighted_auc = num / den;
  return rep;
}

DelongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels) {
  std::size_t m = 0, n = 0;
  check_binary(scores_a, labels, m, n);
  check_binary(scores_b, labels, m, n);
  if (m < 2 || n < 2) throw UndefinedMetricError("DeLong test needs at least two positives and two negatives");
  const auto pa = placements(scores_a, labels, m, n);
  const auto pb = placements(scores_b, labels, m, n);
  const double dm = static_cast<double>(m);
  const double dn = static_cast<double>(n);
  const double s_aa = sample_cov(pa.v10, pa.v10) / dm + sample_cov(pa.v01, pa.v01) / dn;
  const double s_bb = sample_cov(pb.v10, pb.v10) / dm + sample_cov(pb.v01, pb.v01) / dn;
  const double s_ab = sample_cov(pa.v10, pb.v10) / dm + sample_cov(pa.v01, pb.v01) / dn;

  DelongResult r;
  r.auc_a = pa.auc;
  r.auc_b = pb.auc;
  r.variance = s_aa + s_bb - 2.0 * s_ab;
  const double diff = r.auc_a - r.auc_b;
  if (!(r.variance > 1e-15 * (s_aa + s_bb))) {
    if (diff == 0.0) {
      r.variance = 0.0;
      r.z = 0.0;
      r.p_value = 1.0;
      return r;
    }
    throw NumericalError(fmt::format("DeLong variance is zero while AUCs differ ({} vs {})", r.auc_a, r.auc_b));
  }
  r.z = diff / std::sqrt(r.variance);
  r.p_value = std::max(std::erfc(std::abs(r.z) / std::sqrt(2.0)), std::numeric_limits<double>::min());
  return r;
}

double median(std::vector<double> values) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ModelSummary summarize(const ModelScores& scores, std::span<const std::vector<int>> split_labels) {
  if (scores.per_split.size() != split_labels.size())
    throw DimensionError("model " + scores.model + " has scores for " + std::to_string(scores.per_split.size()) +
                         " splits, labels for " + std::to_string(split_labels.size()));
  ModelSummary s;
  s.model = scores.model;
  for (std::size_t k = 0; k < split_labels.size(); ++k)
    s.per_split.push_back(per_class_report(scores.per_split[k], split_labels[k]));
  const auto c_count = s.per_split.empty() ? 0 : s.per_split[0].per_class_auc.size();
  s.mean_auc.assign(c_count, kNaN);
  s.stderr_auc.assign(c_count, kNaN);
  s.pooled_counts.assign(c_count, 0);
  auto mean_se = [](const std::vector<double>& v, double& mean, double& se) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) {
      se = 0.0;
      return;
    }
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  };
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < c_count; ++c) {
    std::vector<double> vals;
    for (const auto& r : s.per_split) {
      s.pooled_counts[c] += r.class_counts[c];
      if (r.present[c]) vals.push_back(r.per_class_auc[c]);
    }
    if (vals.empty()) continue;
    mean_se(vals, s.mean_auc[c], s.stderr_auc[c]);
    num += static_cast<double>(s.pooled_counts[c]) * s.mean_auc[c];
    den += static_cast<double>(s.pooled_counts[c]);
  }
  s.weighted_auc = den > 0 ? num / den : kNaN;
  std::vector<double> w;
  for (const auto& r : s.per_split) w.push_back(r.weighted_auc);
  if (!w.empty()) {
    double unused = 0.0;
    mean_se(w, unused, s.weighted_stderr);
  }
  return s;
}

std::vector<Comparison> compare(const ModelScores& reference, const ModelScores& baseline,
                                std::span<const std::vector<int>> split_labels) {
  if (reference.per_split.size() != split_labels.size() || baseline.per_split.size() != split_labels.size())
    throw DimensionError("comparison needs scores for every split");
  const auto c_count = split_labels.empty() ? 0 : reference.per_split[0].cols;
  std::vector<Comparison> out;
  for (std::size_t c = 0; c < c_count; ++c) {
    Comparison cmp;
    cmp.reference = reference.model;
    cmp.baseline = baseline.model;
    cmp.cls = static_cast<int>(c);
    for (std::size_t k = 0; k < split_labels.size(); ++k) {
      const auto bin = one_vs_rest(split_labels[k], static_cast<int>(c));
      const auto pos = static_cast<std::size_t>(std::count(bin.begin(), bin.end(), 1));
      if (pos < 2 || bin.size() - pos < 2) {
        cmp.p_values.push_back(kNaN);
        continue;
      }
      const auto a = column(reference.per_split[k], c);
      const auto b = column(baseline.per_split[k], c);
      cmp.p_values.push_back(delong_test(a, b, bin).p_value);
    }
    std::vector<double> defined;
    for (double p : cmp.p_values)
      if (!std::isnan(p)) defined.push_back(p);
    cmp.median_p = median(defined);
    cmp.significant = !std::isnan(cmp.median_p) && cmp.median_p < kSignificanceLevel;
    out.push_back(std::move(cmp));
  }
  return out;
}

void write_report_csv(std::ostream& os, std::span<const ModelSummary> models, const std::string& config_hash) {
  hash_line(os, config_hash);
  const auto c_count = models.empty() ? 0 : models[0].mean_auc.size();
  os << "model,split";
  for (std::size_t c = 0; c < c_count; ++c) os << ",n_c" << c;
  for (std::size_t c = 0; c < c_count; ++c) os << ",auc_c" << c;
  os << ",weighted_auc\n";
  for (const auto& m : models) {
    for (std::size_t k = 0; k < m.per_split.size(); ++k) {
      const auto& r = m.per_split[k];
      os << m.model << ',' << k;
      for (auto n : r.class_counts) os << ',' << n;
      for (double a : r.per_class_auc) os << ',' << fmt_num(a);
      os << ',' << fmt_num(r.weighted_auc) << '\n';
    }
    os << m.model << ",mean";
    for (auto n : m.pooled_counts) os << ',' << n;
    for (double a : m.mean_auc) os << ',' << fmt_num(a);
    os << ',' << fmt_num(m.weighted_auc) << '\n';
  }
}

void write_significance_csv(std::ostream& os, std::span<const Comparison> rows, const std::string& config_hash) {
  hash_line(os, config_hash);
  const auto splits = rows.empty() ? 0 : rows[0].p_values.size();
  os << "# DeLong test per split (one-vs-rest per class); significance uses the median p-value < "
     << kSignificanceLevel << '\n';
  os << "reference,baseline,class";
  for (std::size_t k = 0; k < splits; ++k) os << fmt::format(",p_split_{:02}", k);
  os << ",median_p,significant\n";
  for (const auto& r : rows) {
    os << r.reference << ',' << r.baseline << ',' << r.cls;
    for (double p : r.p_values) os << ',' << (std::isnan(p) ? std::string("NA") : fmt::format("{:.6g}", p));
    os << ',' << (std::isnan(r.median_p) ? std::string("NA") : fmt::format("{:.6g}", r.median_p)) << ','
       << (r.significant ? 1 : 0) << '\n';
  }
}

void write_plot_csv(std::ostream& os, std::span<const ModelSummary> models, const std::string& config_hash) {
  hash_line(os, config_hash);
  os << "class,model,mean_auc,stderr\n";
  const auto c_count = models.empty() ? 0 : models[0].mean_auc.size();
  for (std::size_t c = 0; c <= c_count; ++c)
    for (const auto& m : models) {
      if (c < c_count)
        os << c << ',' << m.model << ',' << fmt_num(m.mean_auc[c]) << ',' << fmt_num(m.stderr_auc[c]) << '\n';
      else
        os << "weighted," << m.model << ',' << fmt_num(m.weighted_auc) << ',' << fmt_num(m.weighted_stderr) << '\n';
    }
}

std::string format_report_table(std::span<const ModelSummary> models, std::span<const Comparison> comparisons,
                                std::span<const std::size_t> cohort_class_counts) {
  std::ostringstream os;
  const auto c_count = models.empty() ? 0 : models[0].mean_auc.size();
  std::size_t total = 0;
  for (auto n : cohort_class_counts) total += n;
  std::size_t name_w = 8;
  for (const auto& m : models) name_w = std::max(name_w, m.model.size() + 2);
  constexpr int kCol = 20;

  os << "Mean test AU-ROC over " << (models.empty() ? 0 : models[0].per_split.size())
     << " splits (one-vs-rest per class, support-weighted summary)\n";
  os << "DeLong test per split; '*' = median p < " << kSignificanceLevel << " versus "
     << (comparisons.empty() ? std::string("-") : comparisons[0].reference) << "\n\n";
  os << std::left << std::setw(static_cast<int>(name_w)) << "model";
  for (std::size_t c = 0; c < c_count; ++c) os << std::setw(kCol) << class_label(c);
  os << std::setw(kCol) << "Weighted" << '\n';
  os << std::setw(static_cast<int>(name_w)) << "freq";
  for (std::size_t c = 0; c < c_count; ++c) {
    const double f = c < cohort_class_counts.size() && total > 0
                         ? static_cast<double>(cohort_class_counts[c]) / static_cast<double>(total)
                         : kNaN;
    os << std::setw(kCol) << fmt::format("{:.3f} (n={})", f, c < cohort_class_counts.size() ? cohort_class_counts[c] : 0);
  }
  os << '\n';
  for (const auto& m : models) {
    os << std::setw(static_cast<int>(name_w)) << m.model;
    for (std::size_t c = 0; c < c_count; ++c) {
      bool star = false;
      for (const auto& cmp : comparisons)
        if (cmp.baseline == m.model && cmp.reference != m.model && cmp.cls == static_cast<int>(c) && cmp.significant)
          star = true;
      os << std::setw(kCol)
         << (std::isnan(m.mean_auc[c]) ? std::string("NA")
                                       : fmt::format("{:.3f}+-{:.3f}{}", m.mean_auc[c], m.stderr_auc[c], star ? "*" : ""));
    }
    os << std::setw(kCol) << fmt::format("{:.3f}+-{:.3f}", m.weighted_auc, m.weighted_stderr) << '\n';
  }
  return os.str();
}

}  // namespace mplexnet::metrics
