#include "leuko/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "leuko/volume_prep.hpp"

namespace leuko {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(Errc::BadConfig, "learning_rate must be positive");
  if (batch_size < 1) fail(Errc::BadConfig, "batch_size must be at least 1");
  if (max_epochs < 1) fail(Errc::BadConfig, "max_epochs must be at least 1");
  if (early_stop_patience < 1) fail(Errc::BadConfig, "early_stop_patience must be at least 1");
  architecture().validate();
}

Architecture TrainConfig::architecture() const {
  Architecture arch;
  arch.input_size = input_size;
  return arch;
}

void Dataset::add(UnitSlice slice, int label, std::string patient_id) {
  slices.push_back(std::move(slice));
  labels.push_back(label);
  if (!patient_id.empty() || !patient_ids.empty()) patient_ids.push_back(std::move(patient_id));
}

UnitSlice to_model_input(const UnitSlice& slice, std::size_t input_size) {
  if (slice.rows() == input_size && slice.cols() == input_size) return slice;
  UnitSlice out = resample_bilinear(slice, input_size, input_size);
  for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

double predict(const CnnModel& model, const UnitSlice& slice) {
  const UnitSlice* one[] = {&slice};
  return forward(model, make_batch(one, model.architecture().input_channels)).probabilities.front();
}

DatasetScores score_dataset(const CnnModel& model, const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) fail(Errc::EmptyInput, "empty dataset");
  DatasetScores scores;
  scores.probabilities.reserve(data.size());
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<const UnitSlice*> ptrs;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const std::size_t end = std::min(begin + chunk, data.size());
    ptrs.clear();
    for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&data.slices[i]);
    const auto cache = forward(model, make_batch(ptrs, model.architecture().input_channels));
    for (std::size_t i = begin; i < end; ++i) {
      const double z = cache.logits[i - begin];
      const double p = cache.probabilities[i - begin];
      loss_sum += bce_with_logits(z, data.labels[i]);
      correct += classify(p) == data.labels[i] ? 1 : 0;
      scores.probabilities.push_back(p);
    }
  }
  scores.mean_loss = loss_sum / static_cast<double>(data.size());
  scores.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return scores;
}

namespace {

// Samples per forward/backward pass inside a mini-batch; keeps activations cache resident.
constexpr std::size_t kGradientChunk = 4;

void check_dataset(const Dataset& data, const std::string& name, std::size_t input_size) {
  if (data.size() == 0) fail(Errc::EmptySplit, name + " split is empty");
  if (data.labels.size() != data.slices.size()) {
    fail(Errc::LengthMismatch, name + " split has mismatched labels");
  }
  for (const auto& s : data.slices) {
    if (s.rows() != input_size || s.cols() != input_size) {
      fail(Errc::ShapeMismatch, name + " slice is " + std::to_string(s.rows()) + "x" +
                                    std::to_string(s.cols()) + ", expected input_size " +
                                    std::to_string(input_size));
    }
  }
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const std::optional<AugmentConfig>& augment) {
  cfg.validate();
  if (augment) augment->validate();
  check_dataset(train_set, "train", cfg.input_size);
  check_dataset(val_set, "validation", cfg.input_size);
  const bool has_negative = std::find(train_set.labels.begin(), train_set.labels.end(), 0) != train_set.labels.end();
  const bool has_positive = std::find(train_set.labels.begin(), train_set.labels.end(), 1) != train_set.labels.end();
  if (!has_negative || !has_positive) fail(Errc::SingleClassTrainSet, "training split needs both classes");

  CnnModel model = CnnModel::glorot(cfg.architecture(), derive_seed(cfg.seed, 0));
  const std::size_t channels = model.architecture().input_channels;
  AdamState adam(model.parameters().size());
  const AdamConfig adam_cfg = cfg.adam();
  Rng order_rng(derive_seed(cfg.seed, 1));

  TrainResult result{model, {}};
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_without_improvement = 0;
  std::int64_t step = 0;

  std::vector<std::size_t> order(train_set.size());
  std::vector<UnitSlice> augmented;
  std::vector<const UnitSlice*> batch_slices;
  std::vector<double> batch_labels;
  std::vector<double> grads(model.parameters().size());
  std::vector<double> logit_grads;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      batch_slices.clear();
      batch_labels.clear();
      augmented.clear();
      augmented.reserve(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        if (augment) {
          Rng sample_rng(derive_seed(augment->seed, epoch, idx));
          augmented.push_back(augment_sample(train_set.slices[idx], *augment, sample_rng));
          batch_slices.push_back(&augmented.back());
        } else {
          batch_slices.push_back(&train_set.slices[idx]);
        }
        batch_labels.push_back(static_cast<double>(train_set.labels[idx]));
      }
      // Gradients of the batch-mean loss, accumulated over cache-sized chunks.
      std::fill(grads.begin(), grads.end(), 0.0);
      const double batch_n = static_cast<double>(batch_slices.size());
      for (std::size_t c0 = 0; c0 < batch_slices.size(); c0 += kGradientChunk) {
        const std::size_t c1 = std::min(c0 + kGradientChunk, batch_slices.size());
        const std::span<const UnitSlice* const> chunk(batch_slices.data() + c0, c1 - c0);
        const ForwardCache cache = forward(model, make_batch(chunk, channels));
        logit_grads.resize(c1 - c0);
        for (std::size_t i = 0; i < cache.logits.size(); ++i) {
          loss_sum += bce_with_logits(cache.logits[i], batch_labels[c0 + i]);
          logit_grads[i] = (cache.probabilities[i] - batch_labels[c0 + i]) / batch_n;
        }
        const auto part = backprop(model, cache, logit_grads).parameter_gradients;
        for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += part[k];
      }
      if (!std::isfinite(loss_sum)) {
        fail(Errc::NonFinite, "training loss became non-finite in epoch " + std::to_string(epoch));
      }
      adam_step(model.parameters(), grads, adam, ++step, adam_cfg);
    }
    if (!model.all_finite()) {
      fail(Errc::NonFinite, "parameters became non-finite in epoch " + std::to_string(epoch));
    }

    const DatasetScores val = score_dataset(model, val_set);
    result.history.train_loss.push_back(loss_sum / static_cast<double>(train_set.size()));
    result.history.val_loss.push_back(val.mean_loss);
    result.history.val_accuracy.push_back(val.accuracy);
    result.history.stopped_epoch = epoch;

    if (val.mean_loss < best_val_loss) {
      best_val_loss = val.mean_loss;
      epochs_without_improvement = 0;
      result.model = model;
      result.history.best_epoch = epoch;
    } else if (++epochs_without_improvement >= cfg.early_stop_patience) {
      break;
    }
  }
  return result;
}

std::string format_history_csv(const TrainHistory& history) {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  char line[160];
  for (std::size_t i = 0; i < history.train_loss.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.6f\n", i + 1, history.train_loss[i],
                  history.val_loss[i], history.val_accuracy[i]);
    out += line;
  }
  return out;
}

void save_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  out << format_history_csv(history);
}

}  // namespace leuko
