#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "leuko/augment.hpp"
#include "leuko/grid.hpp"
#include "leuko/tinycnn.hpp"

namespace leuko {

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t early_stop_patience = 5;
  std::size_t input_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
  Architecture architecture() const;
};

/// Slice-level samples. patient_ids is either empty or one id per slice.
struct Dataset {
  std::vector<UnitSlice> slices;
  std::vector<int> labels;
  std::vector<std::string> patient_ids;

  std::size_t size() const noexcept { return slices.size(); }
  void add(UnitSlice slice, int label, std::string patient_id = {});
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;
  /// Last epoch that ran (1-based).
  std::size_t stopped_epoch = 0;
  /// Epoch whose parameters were returned.
  std::size_t best_epoch = 0;

  bool operator==(const TrainHistory&) const = default;
};

struct TrainResult {
  CnnModel model;
  TrainHistory history;
};

/// Mini-batch Adam on mean BCE. Validation loss is measured after every
/// epoch; training stops once it has not improved for early_stop_patience
/// consecutive epochs, and the best-validation parameters are returned.
/// Augmentation, when given, applies to training samples only and is redrawn
/// every epoch from a stream seeded by (augment.seed, epoch, sample index).
TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const std::optional<AugmentConfig>& augment = std::nullopt);

/// Bilinear resample to input_size x input_size (no-op when already that size).
UnitSlice to_model_input(const UnitSlice& slice, std::size_t input_size);

/// Probability of the positive class for one slice at the model's input size.
double predict(const CnnModel& model, const UnitSlice& slice);

struct DatasetScores {
  std::vector<double> probabilities;
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

/// Forward passes in small chunks; threshold 0.5 for accuracy.
DatasetScores score_dataset(const CnnModel& model, const Dataset& data, std::size_t chunk = 8);

inline constexpr double kDecisionThreshold = 0.5;
inline int classify(double probability) noexcept { return probability >= kDecisionThreshold ? 1 : 0; }

/// CSV with header epoch,train_loss,val_loss,val_acc.
std::string format_history_csv(const TrainHistory& history);
void save_history_csv(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace leuko
