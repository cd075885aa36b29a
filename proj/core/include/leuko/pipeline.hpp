#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leuko/augment.hpp"
#include "leuko/evaluate.hpp"
#include "leuko/grid.hpp"
#include "leuko/preprocess.hpp"
#include "leuko/train.hpp"
#include "leuko/volume_prep.hpp"

namespace leuko {

struct PipelineConfig {
  std::filesystem::path data_dir;
  std::filesystem::path output_dir;
  Variant variant = Variant::A;
  SliceSelectConfig select;
  ResizeConfig resize;
  /// Training-time augmentation; disabled when empty. Seeds derive from the run seed.
  std::optional<AugmentConfig> augment = AugmentConfig{};
  TrainConfig train;
  std::optional<VoteConfig> vote;
  SplitRatios ratios;
  std::uint64_t split_seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  /// Test slices rendered as Grad-CAM overlays with the best validation model.
  std::size_t gradcam_examples = 4;

  /// Throws BadConfig for invalid values or a data_dir that is not a directory.
  void validate() const;
};

std::string format_pipeline_config(const PipelineConfig& cfg);
/// Accepts a config document or a manifest (whose "config" member is used).
/// Unknown keys are rejected.
PipelineConfig parse_pipeline_config(std::string_view json_text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// FNV-1a over the canonical config text, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);
std::string format_manifest(const PipelineConfig& cfg);

/// Patient id -> label, as {"P0001": 1, ...}.
using LabelMap = std::map<std::string, int>;
std::string format_labels_json(const LabelMap& labels);
LabelMap parse_labels_json(std::string_view text);
void save_labels(const std::filesystem::path& path, const LabelMap& labels);
LabelMap load_labels(const std::filesystem::path& path);

/// Every *.uvol file in a directory, keyed by patient id.
std::map<std::string, UnitVolume> load_volume_directory(const std::filesystem::path& dir);

/// Slices of the listed patients resampled to input_size, tagged with patient ids.
Dataset build_dataset(const std::map<std::string, UnitVolume>& volumes, const LabelMap& labels,
                      const std::vector<std::string>& patient_ids, std::size_t input_size);

/// Re-throws an Error with "stage <name>[, patient <id>]: " prefixed to its detail.
[[noreturn]] void rethrow_in_stage(const Error& error, std::string_view stage, std::string_view patient = {});

struct PipelineResult {
  MetricsReport report;
  std::filesystem::path report_path;
  std::uint64_t best_seed = 0;
};

/// ingest -> prepare -> variant -> split -> train per seed -> eval -> report,
/// with every artifact under cfg.output_dir. Progress lines go to log when given.
PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream* log = nullptr);

}  // namespace leuko
