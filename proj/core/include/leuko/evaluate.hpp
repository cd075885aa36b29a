#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leuko/augment.hpp"
#include "leuko/train.hpp"

namespace leuko {

// ---- splitting ----

enum class SplitPart { Train, Val, Test };

std::string_view split_name(SplitPart part) noexcept;
SplitPart parse_split_part(std::string_view text);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  void validate() const;
};

struct PatientLabel {
  std::string patient_id;
  int label = 0;
};

struct SplitAssignment {
  std::map<std::string, SplitPart> parts;
  std::uint64_t seed = 0;

  /// Patient ids of one part in lexicographic order.
  std::vector<std::string> members(SplitPart part) const;
  bool operator==(const SplitAssignment&) const = default;
};

/// Per class: sort ids, shuffle with a seeded stream, then cut at
/// round(n * train) and round(n * (train + val)). Exact halves round up for
/// label 0 and down for label 1 so that balanced classes give balanced totals.
SplitAssignment stratified_split(std::span<const PatientLabel> patients, const SplitRatios& ratios,
                                 std::uint64_t seed);

/// {"seed": S, "train": [...], "val": [...], "test": [...]}
std::string format_split_json(const SplitAssignment& split);
SplitAssignment parse_split_json(std::string_view text);
void save_split(const std::filesystem::path& path, const SplitAssignment& split);
SplitAssignment load_split(const std::filesystem::path& path);

// ---- metrics ----

double binary_accuracy(std::span<const int> predicted, std::span<const int> truth);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  double accuracy() const noexcept {
    return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
  }
  bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const int> predicted, std::span<const int> truth);

struct VoteConfig {
  std::size_t k = 30;
  std::size_t t = 15;

  /// Throws BadThreshold unless 1 <= t <= k.
  void validate() const;
};

/// Positive iff the number of positive slice predictions strictly exceeds t.
int patient_vote(std::span<const int> slice_predictions, const VoteConfig& cfg);

// ---- reporting ----

struct RunMetrics {
  std::string variant;
  std::string model;
  std::uint64_t seed = 0;
  SplitPart split = SplitPart::Val;
  double accuracy = 0.0;
  double loss = 0.0;
  Confusion counts;

  bool operator==(const RunMetrics&) const = default;
};

struct AggregateRow {
  double accuracy = 0.0;
  double loss = 0.0;
  double tp = 0.0, fp = 0.0, tn = 0.0, fn = 0.0;
};

struct SplitSummary {
  SplitPart split = SplitPart::Val;
  std::vector<RunMetrics> runs;
  AggregateRow avg;
  /// Run with the highest accuracy on this split; ties go to lower loss, then lower seed.
  RunMetrics best;
};

struct MetricsReport {
  std::vector<RunMetrics> runs;

  /// Summaries for the splits present, validation first.
  std::vector<SplitSummary> summaries() const;
};

inline constexpr std::string_view kReportHeader =
    "variant,model,run_seed,split,slice_accuracy,loss,tp,fp,tn,fn";

/// Per split (val, then test): one row per run in seed order, then AVG and
/// BEST rows carrying those labels in the run_seed column.
std::string format_report_csv(const MetricsReport& report);
/// Run rows only; aggregate rows are skipped.
std::vector<RunMetrics> parse_metrics_csv(std::string_view text);
void save_report_csv(const std::filesystem::path& path, const MetricsReport& report);

/// Slice-level metrics of a model on one dataset.
RunMetrics evaluate_dataset(const CnnModel& model, const Dataset& data, std::string_view variant,
                            std::string_view model_name, std::uint64_t seed, SplitPart split);

/// Patient-level confusion after voting; every patient needs exactly cfg.k slices.
Confusion vote_confusion(const CnnModel& model, const Dataset& data, const VoteConfig& cfg);

struct ExperimentSpec {
  Dataset train;
  Dataset val;
  Dataset test;
  TrainConfig train_config;
  /// Augmentation for the training set; its seed is derived per run.
  std::optional<AugmentConfig> augment;
  std::vector<std::uint64_t> seeds{0};
  std::string variant = "A";
  std::string model_name = "tinycnn";
};

struct ExperimentRun {
  std::uint64_t seed = 0;
  TrainResult result;
  RunMetrics val;
  RunMetrics test;
};

struct ExperimentResult {
  std::vector<ExperimentRun> runs;
  MetricsReport report;
};

/// Trains one model per seed on the same data and evaluates each on the
/// validation and test sets. on_run is called after every run.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::function<void(const ExperimentRun&)>& on_run = {});

}  // namespace leuko
