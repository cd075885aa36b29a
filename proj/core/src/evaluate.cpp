#include "leuko/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace leuko {

std::string_view split_name(SplitPart part) noexcept {
  switch (part) {
    case SplitPart::Train: return "train";
    case SplitPart::Val: return "val";
    case SplitPart::Test: return "test";
  }
  return "?";
}

SplitPart parse_split_part(std::string_view text) {
  if (text == "train") return SplitPart::Train;
  if (text == "val") return SplitPart::Val;
  if (text == "test") return SplitPart::Test;
  fail(Errc::Malformed, "unknown split '" + std::string(text) + "'");
}

void SplitRatios::validate() const {
  for (const double r : {train, val, test}) {
    if (!(r >= 0.0 && r <= 1.0)) fail(Errc::BadConfig, "split ratios must lie in [0,1]");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) fail(Errc::BadConfig, "split ratios must sum to 1");
}

std::vector<std::string> SplitAssignment::members(SplitPart part) const {
  std::vector<std::string> out;
  for (const auto& [id, p] : parts) {
    if (p == part) out.push_back(id);
  }
  return out;
}

namespace {

// Rounds x to the nearest integer; values within 1e-9 of a half go up or down as asked.
std::size_t round_cut(double x, bool halves_up) {
  const double lower = std::floor(x);
  const double frac = x - lower;
  if (std::abs(frac - 0.5) < 1e-9) return static_cast<std::size_t>(halves_up ? lower + 1.0 : lower);
  return static_cast<std::size_t>(std::llround(x));
}

}  // namespace

SplitAssignment stratified_split(std::span<const PatientLabel> patients, const SplitRatios& ratios,
                                 std::uint64_t seed) {
  ratios.validate();
  std::vector<std::string> by_class[2];
  for (const auto& p : patients) {
    if (p.label != 0 && p.label != 1) {
      fail(Errc::Malformed, "patient " + p.patient_id + " has label " + std::to_string(p.label));
    }
    by_class[p.label].push_back(p.patient_id);
  }
  SplitAssignment split;
  split.seed = seed;
  for (int label = 0; label < 2; ++label) {
    auto& ids = by_class[label];
    if (ids.empty()) fail(Errc::EmptyClass, "no patients with label " + std::to_string(label));
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      fail(Errc::Malformed, "duplicate patient id in roster");
    }
    Rng rng(derive_seed(seed, 0x5171, static_cast<std::uint64_t>(label)));
    rng.shuffle(std::span<std::string>(ids));
    const double n = static_cast<double>(ids.size());
    const bool halves_up = label == 0;
    const std::size_t train_end = round_cut(n * ratios.train, halves_up);
    const std::size_t val_end = std::max(train_end, round_cut(n * (ratios.train + ratios.val), halves_up));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const SplitPart part = i < train_end ? SplitPart::Train : i < val_end ? SplitPart::Val : SplitPart::Test;
      if (!split.parts.emplace(ids[i], part).second) {
        fail(Errc::Malformed, "patient " + ids[i] + " listed with both labels");
      }
    }
  }
  return split;
}

std::string format_split_json(const SplitAssignment& split) {
  nlohmann::ordered_json j;
  j["seed"] = split.seed;
  for (const SplitPart part : {SplitPart::Train, SplitPart::Val, SplitPart::Test}) {
    j[std::string(split_name(part))] = split.members(part);
  }
  return j.dump(2) + "\n";
}

SplitAssignment parse_split_json(std::string_view text) {
  SplitAssignment split;
  try {
    const auto j = nlohmann::json::parse(text);
    split.seed = j.value("seed", std::uint64_t{0});
    for (const SplitPart part : {SplitPart::Train, SplitPart::Val, SplitPart::Test}) {
      for (const auto& id : j.at(std::string(split_name(part)))) {
        if (!split.parts.emplace(id.get<std::string>(), part).second) {
          fail(Errc::Malformed, "patient " + id.get<std::string>() + " appears in two splits");
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::Malformed, std::string("split file: ") + e.what());
  }
  return split;
}

void save_split(const std::filesystem::path& path, const SplitAssignment& split) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  out << format_split_json(split);
}

SplitAssignment load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_split_json(text.str());
}

// ---- metrics ----

namespace {

void check_lengths(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    fail(Errc::LengthMismatch, std::to_string(predicted.size()) + " predictions for " +
                                   std::to_string(truth.size()) + " labels");
  }
}

}  // namespace

double binary_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  check_lengths(predicted, truth);
  if (truth.empty()) fail(Errc::EmptyInput, "accuracy of zero samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

Confusion confusion(std::span<const int> predicted, std::span<const int> truth) {
  check_lengths(predicted, truth);
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

void VoteConfig::validate() const {
  if (t < 1 || t > k) {
    fail(Errc::BadThreshold, "vote threshold t=" + std::to_string(t) + " outside [1," + std::to_string(k) + "]");
  }
}

int patient_vote(std::span<const int> slice_predictions, const VoteConfig& cfg) {
  cfg.validate();
  if (slice_predictions.size() != cfg.k) {
    fail(Errc::LengthMismatch, std::to_string(slice_predictions.size()) + " slice predictions, k=" +
                                   std::to_string(cfg.k));
  }
  const auto positives = static_cast<std::size_t>(
      std::count_if(slice_predictions.begin(), slice_predictions.end(), [](int p) { return p != 0; }));
  return positives > cfg.t ? 1 : 0;
}

// ---- reporting ----

namespace {

bool better(const RunMetrics& a, const RunMetrics& b) {
  if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
  if (a.loss != b.loss) return a.loss < b.loss;
  return a.seed < b.seed;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<SplitSummary> MetricsReport::summaries() const {
  std::vector<SplitSummary> out;
  for (const SplitPart part : {SplitPart::Val, SplitPart::Test, SplitPart::Train}) {
    SplitSummary s;
    s.split = part;
    for (const auto& r : runs) {
      if (r.split == part) s.runs.push_back(r);
    }
    if (s.runs.empty()) continue;
    std::stable_sort(s.runs.begin(), s.runs.end(),
                     [](const RunMetrics& a, const RunMetrics& b) { return a.seed < b.seed; });
    const double n = static_cast<double>(s.runs.size());
    s.best = s.runs.front();
    for (const auto& r : s.runs) {
      s.avg.accuracy += r.accuracy / n;
      s.avg.loss += r.loss / n;
      s.avg.tp += static_cast<double>(r.counts.tp) / n;
      s.avg.fp += static_cast<double>(r.counts.fp) / n;
      s.avg.tn += static_cast<double>(r.counts.tn) / n;
      s.avg.fn += static_cast<double>(r.counts.fn) / n;
      if (better(r, s.best)) s.best = r;
    }
    // A mean of equal values can drift above them in the last bit.
    s.avg.accuracy = std::min(s.avg.accuracy, s.best.accuracy);
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_report_csv(const MetricsReport& report) {
  std::string out(kReportHeader);
  out += '\n';
  auto row = [&out](std::string_view variant, std::string_view model, std::string_view seed,
                    SplitPart split, double acc, double loss, const std::string& counts) {
    out += std::string(variant) + ',' + std::string(model) + ',' + std::string(seed) + ',' +
           std::string(split_name(split)) + ',' + fixed(acc, 6) + ',' + fixed(loss, 6) + ',' + counts + '\n';
  };
  for (const auto& s : report.summaries()) {
    for (const auto& r : s.runs) {
      row(r.variant, r.model, std::to_string(r.seed), s.split, r.accuracy, r.loss,
          std::to_string(r.counts.tp) + ',' + std::to_string(r.counts.fp) + ',' +
              std::to_string(r.counts.tn) + ',' + std::to_string(r.counts.fn));
    }
    const auto& first = s.runs.front();
    row(first.variant, first.model, "AVG", s.split, s.avg.accuracy, s.avg.loss,
        fixed(s.avg.tp, 2) + ',' + fixed(s.avg.fp, 2) + ',' + fixed(s.avg.tn, 2) + ',' + fixed(s.avg.fn, 2));
    const auto& b = s.best;
    row(b.variant, b.model, "BEST", s.split, b.accuracy, b.loss,
        std::to_string(b.counts.tp) + ',' + std::to_string(b.counts.fp) + ',' + std::to_string(b.counts.tn) +
            ',' + std::to_string(b.counts.fn));
  }
  return out;
}

std::vector<RunMetrics> parse_metrics_csv(std::string_view text) {
  std::vector<RunMetrics> out;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) fail(Errc::Malformed, "metrics CSV header mismatch");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream fields(line);
    for (std::string cell; std::getline(fields, cell, ',');) cells.push_back(cell);
    if (cells.size() != 10) fail(Errc::Malformed, "metrics CSV row with " + std::to_string(cells.size()) + " cells");
    if (cells[2] == "AVG" || cells[2] == "BEST") continue;
    try {
      RunMetrics r;
      r.variant = cells[0];
      r.model = cells[1];
      r.seed = std::stoull(cells[2]);
      r.split = parse_split_part(cells[3]);
      r.accuracy = std::stod(cells[4]);
      r.loss = std::stod(cells[5]);
      r.counts = {std::stoull(cells[6]), std::stoull(cells[7]), std::stoull(cells[8]), std::stoull(cells[9])};
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      fail(Errc::Malformed, "metrics CSV row '" + line + "'");
    }
  }
  return out;
}

void save_report_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  out << format_report_csv(report);
}

RunMetrics evaluate_dataset(const CnnModel& model, const Dataset& data, std::string_view variant,
                            std::string_view model_name, std::uint64_t seed, SplitPart split) {
  const DatasetScores scores = score_dataset(model, data);
  std::vector<int> predicted(scores.probabilities.size());
  std::transform(scores.probabilities.begin(), scores.probabilities.end(), predicted.begin(), classify);
  RunMetrics m;
  m.variant = variant;
  m.model = model_name;
  m.seed = seed;
  m.split = split;
  m.accuracy = scores.accuracy;
  m.loss = scores.mean_loss;
  m.counts = confusion(predicted, data.labels);
  return m;
}

Confusion vote_confusion(const CnnModel& model, const Dataset& data, const VoteConfig& cfg) {
  cfg.validate();
  if (data.patient_ids.size() != data.size()) fail(Errc::LengthMismatch, "voting needs a patient id per slice");
  const DatasetScores scores = score_dataset(model, data);
  std::map<std::string, std::pair<std::vector<int>, int>> patients;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& [preds, label] = patients[data.patient_ids[i]];
    preds.push_back(classify(scores.probabilities[i]));
    label = data.labels[i];
  }
  std::vector<int> predicted, truth;
  for (const auto& [id, entry] : patients) {
    predicted.push_back(patient_vote(entry.first, cfg));
    truth.push_back(entry.second);
  }
  return confusion(predicted, truth);
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::function<void(const ExperimentRun&)>& on_run) {
  if (spec.seeds.empty()) fail(Errc::BadConfig, "an experiment needs at least one seed");
  ExperimentResult result;
  for (const std::uint64_t seed : spec.seeds) {
    TrainConfig cfg = spec.train_config;
    cfg.seed = seed;
    std::optional<AugmentConfig> augment = spec.augment;
    if (augment) augment->seed = derive_seed(seed, 0xA06);
    ExperimentRun run;
    run.seed = seed;
    run.result = train(spec.train, spec.val, cfg, augment);
    run.val = evaluate_dataset(run.result.model, spec.val, spec.variant, spec.model_name, seed, SplitPart::Val);
    run.test = evaluate_dataset(run.result.model, spec.test, spec.variant, spec.model_name, seed, SplitPart::Test);
    result.report.runs.push_back(run.val);
    result.report.runs.push_back(run.test);
    if (on_run) on_run(run);
    result.runs.push_back(std::move(run));
  }
  return result;
}

}  // namespace leuko
