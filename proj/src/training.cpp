#include "mplexnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mplexnet/diffcore/checkpoint.hpp"
#include "mplexnet/error.hpp"
#include "mplexnet/metrics.hpp"

namespace mplexnet::training {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double nan_from_json(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

nlohmann::json json_number(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

std::string fmt_csv(double v) { return std::isnan(v) ? std::string("NA") : fmt::format("{:.10g}", v); }

}  // namespace

namespace {

struct Scored {
  double loss = 0.0;
  Matrix probs;
};

// Loss and probabilities from one forward pass per batch.
Scored score_rows(const Classifier& model, const Dataset& data, std::span<const std::size_t> rows,
                  std::size_t batch_size, bool want_probs) {
  diffcore::NoGradGuard guard;
  Scored out;
  if (want_probs) out.probs = Matrix(rows.size(), model.num_classes());
  double total = 0.0;
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const auto n = std::min(batch_size, rows.size() - start);
    auto batch = rows.subspan(start, n);
    std::vector<int> labels;
    for (auto r : batch) labels.push_back(data.labels[r]);
    auto logits = model.logits(data, batch);
    total += static_cast<double>(n) * diffcore::softmax_cross_entropy(logits, labels).item();
    if (want_probs) {
      auto probs = diffcore::softmax_rows(logits);
      std::copy(probs.begin(), probs.end(), out.probs.data.begin() + static_cast<long>(start * model.num_classes()));
    }
  }
  out.loss = rows.empty() ? kNaN : total / static_cast<double>(rows.size());
  return out;
}

}  // namespace

double evaluate_loss(const Classifier& model, const Dataset& data, std::span<const std::size_t> rows,
                     std::size_t batch_size) {
  return score_rows(model, data, rows, batch_size, false).loss;
}

Trainer::Trainer(Classifier& model, const Dataset& data, std::vector<std::size_t> train_rows,
                 std::vector<std::size_t> val_rows, TrainConfig cfg)
    : model_(model),
      data_(data),
      train_rows_(std::move(train_rows)),
      val_rows_(std::move(val_rows)),
      cfg_(cfg),
      opt_(diffcore::AdamWHyper{cfg.schedule.base_lr, 0.9, 0.999, 1e-8, cfg.weight_decay}),
      best_wauc_(-std::numeric_limits<double>::infinity()) {
  if (train_rows_.empty()) throw ConfigError("training split is empty");
  if (val_rows_.empty()) throw ConfigError("validation split is empty");
  if (cfg_.epochs < 1 || cfg_.batch_size < 1) throw ConfigError("epochs and batch size must be positive");
  data_.validate(model_.num_classes());
  for (auto r : train_rows_)
    if (r >= data_.size()) throw DimensionError("training row out of range");
  for (auto r : val_rows_)
    if (r >= data_.size()) throw DimensionError("validation row out of range");
  model_.bind(data_);
}

const EpochRecord& Trainer::run_epoch() {
  if (finished()) throw ConfigError("training already finished");
  const int epoch = epochs_done_;
  std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x7a11u};
  std::mt19937_64 rng(seq);
  auto order = train_rows_;
  std::shuffle(order.begin(), order.end(), rng);

  const double lr = cfg_.schedule.lr(epoch);
  double loss_sum = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size, ++batch_index) {
    const auto n = std::min(cfg_.batch_size, order.size() - start);
    std::span<const std::size_t> batch(order.data() + start, n);
    std::vector<int> labels;
    for (auto r : batch) labels.push_back(data_.labels[r]);
    model_.params().zero_grad();
    auto loss = diffcore::softmax_cross_entropy(model_.logits(data_, batch), labels);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw NumericalError(fmt::format("non-finite training loss in epoch {}, batch {}", epoch, batch_index));
    diffcore::backward(loss);
    opt_.step(model_.params(), lr);
    loss_sum += value * static_cast<double>(n);
  }

  EpochRecord rec;
  rec.epoch = epoch;
  rec.lr = lr;
  rec.train_loss = loss_sum / static_cast<double>(order.size());
  auto scored = score_rows(model_, data_, val_rows_, cfg_.batch_size, true);
  rec.val_loss = scored.loss;
  const auto& probs = scored.probs;
  std::vector<int> val_labels;
  for (auto r : val_rows_) val_labels.push_back(data_.labels[r]);
  try {
    rec.val_wauc = metrics::per_class_report(probs, val_labels).weighted_auc;
  } catch (const UndefinedMetricError&) {
    rec.val_wauc = kNaN;
  }
  const double score = std::isnan(rec.val_wauc) ? -std::numeric_limits<double>::infinity() : rec.val_wauc;
  if (best_epoch_ < 0 || score > best_wauc_) {
    best_wauc_ = score;
    best_epoch_ = epoch;
    best_params_ = model_.params().snapshot();
  }
  history_.push_back(rec);
  ++epochs_done_;
  spdlog::info("{} epoch {} lr {:.3g} train_loss {:.5f} val_loss {:.5f} val_wauc {:.4f}", model_.kind(), epoch, lr,
               rec.train_loss, rec.val_loss, rec.val_wauc);
  return history_.back();
}

void Trainer::run(const std::function<void(const Trainer&)>& after_epoch) {
  while (!finished()) {
    run_epoch();
    if (after_epoch) after_epoch(*this);
  }
}

void Trainer::restore_best() {
  if (best_epoch_ >= 0) model_.params().restore(best_params_);
}

void Trainer::save_state(const std::filesystem::path& base, const std::string& config_hash) const {
  diffcore::Checkpoint ckpt;
  diffcore::append_parameters(ckpt, model_.params(), "model.");
  diffcore::append_optimizer(ckpt, opt_, model_.params());
  if (best_epoch_ >= 0) {
    std::size_t i = 0;
    for (const auto& [name, t] : model_.params())
      ckpt.arrays.push_back({"best." + name, t.shape(), best_params_[i++]});
  }
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : history_)
    hist.push_back({h.epoch, h.lr, json_number(h.train_loss), json_number(h.val_loss), json_number(h.val_wauc)});
  ckpt.meta["kind"] = "train_state";
  ckpt.meta["model"] = model_.describe();
  ckpt.meta["config_hash"] = config_hash;
  ckpt.meta["epochs_done"] = epochs_done_;
  ckpt.meta["best_epoch"] = best_epoch_;
  ckpt.meta["best_val_wauc"] = json_number(best_wauc_ == -std::numeric_limits<double>::infinity() ? kNaN : best_wauc_);
  ckpt.meta["history"] = hist;
  diffcore::save_checkpoint(base, ckpt);
}

void Trainer::load_state(const std::filesystem::path& base, std::string* config_hash) {
  auto ckpt = diffcore::load_checkpoint(base);
  if (ckpt.meta.value("kind", std::string()) != "train_state")
    throw ArtifactError(base.string() + " is not a training state checkpoint");
  if (ckpt.meta.at("model") != model_.describe())
    throw ArtifactError(base.string() + " was written for a different model architecture");
  diffcore::restore_parameters(ckpt, model_.params(), "model.");
  diffcore::restore_optimizer(ckpt, opt_, model_.params());
  epochs_done_ = ckpt.meta.at("epochs_done").get<int>();
  best_epoch_ = ckpt.meta.at("best_epoch").get<int>();
  const double best = nan_from_json(ckpt.meta.at("best_val_wauc"));
  best_wauc_ = std::isnan(best) ? -std::numeric_limits<double>::infinity() : best;
  best_params_.clear();
  if (best_epoch_ >= 0)
    for (const auto& [name, t] : model_.params()) best_params_.push_back(ckpt.array("best." + name).values);
  history_.clear();
  for (const auto& h : ckpt.meta.at("history"))
    history_.push_back({h[0].get<int>(), h[1].get<double>(), nan_from_json(h[2]), nan_from_json(h[3]),
                        nan_from_json(h[4])});
  if (config_hash) *config_hash = ckpt.meta.value("config_hash", std::string());
}

void Trainer::save_best(const std::filesystem::path& base, const std::string& config_hash) const {
  diffcore::Checkpoint ckpt;
  std::size_t i = 0;
  for (const auto& [name, t] : model_.params())
    ckpt.arrays.push_back({"model." + name, t.shape(),
                           best_epoch_ >= 0 ? best_params_[i++]
                                            : std::vector<double>(t.values().begin(), t.values().end())});
  ckpt.meta["kind"] = "model";
  ckpt.meta["model"] = model_.describe();
  ckpt.meta["config_hash"] = config_hash;
  ckpt.meta["best_epoch"] = best_epoch_;
  ckpt.meta["best_val_wauc"] = json_number(best_wauc_ == -std::numeric_limits<double>::infinity() ? kNaN : best_wauc_);
  diffcore::save_checkpoint(base, ckpt);
}

void load_model_parameters(const std::filesystem::path& base, Classifier& model, std::string* config_hash) {
  auto ckpt = diffcore::load_checkpoint(base);
  if (ckpt.meta.contains("model") && ckpt.meta.at("model") != model.describe())
    throw ArtifactError(base.string() + " was written for a different model architecture");
  diffcore::restore_parameters(ckpt, model.params(), "model.");
  if (config_hash) *config_hash = ckpt.meta.value("config_hash", std::string());
}

void write_history_csv(std::ostream& os, std::span<const EpochRecord> history, const std::string& config_hash) {
  if (!config_hash.empty()) os << "# config_hash " << config_hash << '\n';
  os << "epoch,lr,train_loss,val_loss,val_wauc\n";
  for (const auto& h : history)
    os << h.epoch << ',' << fmt_csv(h.lr) << ',' << fmt_csv(h.train_loss) << ',' << fmt_csv(h.val_loss) << ','
       << fmt_csv(h.val_wauc) << '\n';
}

}  // namespace mplexnet::training
