#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mplexnet/diffcore/optim.hpp"
#include "mplexnet/model.hpp"

namespace mplexnet::training {

struct TrainConfig {
  int epochs = 40;
  std::size_t batch_size = 32;
  diffcore::LrSchedule schedule{};
  double weight_decay = 1e-3;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  /// NaN when the validation rows do not define an AUC.
  double val_wauc = 0.0;
};

/// Minibatch cross-entropy training with AdamW and a step schedule. After each
/// epoch the model is scored on the validation rows; the parameters with the
/// highest validation weighted AUC (earliest epoch on ties) are kept as best.
class Trainer {
 public:
  Trainer(Classifier& model, const Dataset& data, std::vector<std::size_t> train_rows,
          std::vector<std::size_t> val_rows, TrainConfig cfg);

  /// Runs one epoch. Throws NumericalError naming epoch and batch on a
  /// non-finite loss.
  const EpochRecord& run_epoch();
  /// Runs the remaining epochs, calling `after_epoch` after each one.
  void run(const std::function<void(const Trainer&)>& after_epoch = {});

  bool finished() const { return epochs_done_ >= cfg_.epochs; }
  int epochs_done() const { return epochs_done_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  int best_epoch() const { return best_epoch_; }
  double best_val_wauc() const { return best_wauc_; }
  /// Copies the best parameters into the model.
  void restore_best();

  /// Full state (current and best parameters, optimizer moments, history).
  void save_state(const std::filesystem::path& base, const std::string& config_hash) const;
  /// Restores a state written by save_state for the same model architecture.
  void load_state(const std::filesystem::path& base, std::string* config_hash = nullptr);
  /// Best parameters only, with the architecture description.
  void save_best(const std::filesystem::path& base, const std::string& config_hash) const;

 private:
  Classifier& model_;
  const Dataset& data_;
  std::vector<std::size_t> train_rows_;
  std::vector<std::size_t> val_rows_;
  TrainConfig cfg_;
  diffcore::AdamW opt_;
  int epochs_done_ = 0;
  std::vector<EpochRecord> history_;
  std::vector<std::vector<double>> best_params_;
  double best_wauc_;
  int best_epoch_ = -1;
};

/// Mean cross-entropy of the model on `rows` (no gradient recording).
double evaluate_loss(const Classifier& model, const Dataset& data, std::span<const std::size_t> rows,
                     std::size_t batch_size = 32);

void write_history_csv(std::ostream& os, std::span<const EpochRecord> history, const std::string& config_hash);

/// Loads parameters saved by Trainer::save_best (or the current parameters of
/// a save_state file) into a model of the same architecture.
void load_model_parameters(const std::filesystem::path& base, Classifier& model, std::string* config_hash = nullptr);

}  // namespace mplexnet::training
