#include "leuko/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "leuko/dicom.hpp"
#include "leuko/gradcam.hpp"
#include "leuko/hu_window.hpp"

namespace leuko {

using ojson = nlohmann::ordered_json;

void PipelineConfig::validate() const {
  if (data_dir.empty()) fail(Errc::BadConfig, "data_dir is required");
  if (output_dir.empty()) fail(Errc::BadConfig, "output_dir is required");
  std::error_code ec;
  if (!std::filesystem::is_directory(data_dir, ec)) {
    fail(Errc::BadConfig, "data_dir " + data_dir.string() + " is not a directory");
  }
  select.validate();
  resize.validate();
  if (augment) augment->validate();
  try {
    train.validate();
  } catch (const Error& e) {
    fail(Errc::BadConfig, "train: " + e.detail());
  }
  if (vote) {
    try {
      vote->validate();
    } catch (const Error& e) {
      fail(Errc::BadConfig, "vote: " + e.detail());
    }
    if (vote->k != select.depth) fail(Errc::BadConfig, "vote.k must equal slice_select.depth");
  }
  ratios.validate();
  if (seeds.empty()) fail(Errc::BadConfig, "seeds must not be empty");
}

namespace {

ojson config_to_json(const PipelineConfig& c) {
  ojson j;
  j["data_dir"] = c.data_dir.string();
  j["output_dir"] = c.output_dir.string();
  j["variant"] = std::string(1, variant_name(c.variant));
  j["slice_select"] = {{"center_position", c.select.center_position}, {"depth", c.select.depth}};
  j["resize"] = {{"target_rows", c.resize.target_rows},
                 {"target_cols", c.resize.target_cols},
                 {"majority_rows", c.resize.majority_rows},
                 {"majority_cols", c.resize.majority_cols}};
  if (c.augment) {
    j["augment"] = {{"enabled", true},
                    {"max_rotation_deg", c.augment->max_rotation_deg},
                    {"flip_probability", c.augment->flip_probability}};
  } else {
    j["augment"] = {{"enabled", false}};
  }
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"early_stop_patience", c.train.early_stop_patience},
                {"input_size", c.train.input_size}};
  j["vote"] = c.vote ? ojson{{"k", c.vote->k}, {"t", c.vote->t}} : ojson(nullptr);
  j["split"] = {{"train", c.ratios.train}, {"val", c.ratios.val}, {"test", c.ratios.test}, {"seed", c.split_seed}};
  j["seeds"] = c.seeds;
  j["gradcam_examples"] = c.gradcam_examples;
  return j;
}

// Reads known keys into out and rejects anything else.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(Errc::BadConfig, where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(Errc::BadConfig, where_ + "." + key + " has the wrong type");
    }
  }
  const nlohmann::json* child(const char* key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        fail(Errc::BadConfig, "unknown key " + where_ + "." + key);
      }
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  Reader top(j, "config");
  std::string data_dir, output_dir, variant = "A";
  top.get("data_dir", data_dir);
  top.get("output_dir", output_dir);
  top.get("variant", variant);
  c.data_dir = data_dir;
  c.output_dir = output_dir;
  c.variant = parse_variant(variant);
  if (const auto* s = top.child("slice_select")) {
    Reader r(*s, "slice_select");
    r.get("center_position", c.select.center_position);
    r.get("depth", c.select.depth);
    r.finish();
  }
  if (const auto* s = top.child("resize")) {
    Reader r(*s, "resize");
    r.get("target_rows", c.resize.target_rows);
    r.get("target_cols", c.resize.target_cols);
    r.get("majority_rows", c.resize.majority_rows);
    r.get("majority_cols", c.resize.majority_cols);
    r.finish();
  }
  if (const auto* s = top.child("augment")) {
    Reader r(*s, "augment");
    bool enabled = true;
    AugmentConfig a;
    r.get("enabled", enabled);
    r.get("max_rotation_deg", a.max_rotation_deg);
    r.get("flip_probability", a.flip_probability);
    r.finish();
    c.augment = enabled ? std::optional<AugmentConfig>(a) : std::nullopt;
  }
  if (const auto* s = top.child("train")) {
    Reader r(*s, "train");
    r.get("learning_rate", c.train.learning_rate);
    r.get("batch_size", c.train.batch_size);
    r.get("max_epochs", c.train.max_epochs);
    r.get("adam_beta1", c.train.adam_beta1);
    r.get("adam_beta2", c.train.adam_beta2);
    r.get("adam_eps", c.train.adam_eps);
    r.get("early_stop_patience", c.train.early_stop_patience);
    r.get("input_size", c.train.input_size);
    r.finish();
  }
  if (const auto* s = top.child("vote"); s && !s->is_null()) {
    Reader r(*s, "vote");
    VoteConfig v;
    r.get("k", v.k);
    r.get("t", v.t);
    r.finish();
    c.vote = v;
  }
  if (const auto* s = top.child("split")) {
    Reader r(*s, "split");
    r.get("train", c.ratios.train);
    r.get("val", c.ratios.val);
    r.get("test", c.ratios.test);
    r.get("seed", c.split_seed);
    r.finish();
  }
  top.get("seeds", c.seeds);
  top.get("gradcam_examples", c.gradcam_examples);
  top.finish();
  return c;
}

std::string read_text(const std::filesystem::path& path, Errc missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(missing, "cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  out << text;
}

}  // namespace

std::string format_pipeline_config(const PipelineConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

PipelineConfig parse_pipeline_config(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::BadConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (j.is_object() && j.contains("config") && j.contains("config_hash")) return config_from_json(j.at("config"));
  return config_from_json(j);
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return parse_pipeline_config(read_text(path, Errc::BadConfig));
}

std::string config_hash(const PipelineConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char ch : text) h = (h ^ ch) * 1099511628211ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_manifest(const PipelineConfig& cfg) {
  ojson j;
  j["config_hash"] = config_hash(cfg);
  j["seeds"] = cfg.seeds;
  j["split_seed"] = cfg.split_seed;
  j["config"] = config_to_json(cfg);
  return j.dump(2) + "\n";
}

std::string format_labels_json(const LabelMap& labels) {
  ojson j = ojson::object();
  for (const auto& [id, label] : labels) j[id] = label;
  return j.dump(2) + "\n";
}

LabelMap parse_labels_json(std::string_view text) {
  LabelMap labels;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [id, label] : j.items()) {
      const int v = label.get<int>();
      if (v != 0 && v != 1) fail(Errc::Malformed, "label of " + id + " must be 0 or 1");
      labels[id] = v;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::Malformed, std::string("labels file: ") + e.what());
  }
  return labels;
}

void save_labels(const std::filesystem::path& path, const LabelMap& labels) {
  write_text(path, format_labels_json(labels));
}

LabelMap load_labels(const std::filesystem::path& path) { return parse_labels_json(read_text(path, Errc::Io)); }

std::map<std::string, UnitVolume> load_volume_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) fail(Errc::Io, dir.string() + " is not a directory");
  std::map<std::string, UnitVolume> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".uvol") continue;
    UnitVolume v = load_unit_volume(entry.path());
    std::string id = v.patient_id;
    out.emplace(std::move(id), std::move(v));
  }
  if (out.empty()) fail(Errc::NoSlices, "no .uvol files in " + dir.string());
  return out;
}

Dataset build_dataset(const std::map<std::string, UnitVolume>& volumes, const LabelMap& labels,
                      const std::vector<std::string>& patient_ids, std::size_t input_size) {
  Dataset data;
  for (const auto& id : patient_ids) {
    const auto v = volumes.find(id);
    if (v == volumes.end()) fail(Errc::NoSlices, "no volume for patient " + id);
    const auto l = labels.find(id);
    if (l == labels.end()) fail(Errc::MissingSidecar, "no label for patient " + id);
    for (const auto& slice : v->second.slices) data.add(to_model_input(slice, input_size), l->second, id);
  }
  return data;
}

void rethrow_in_stage(const Error& error, std::string_view stage, std::string_view patient) {
  std::string where = "stage " + std::string(stage);
  if (!patient.empty()) where += ", patient " + std::string(patient);
  throw Error(error.code(), where + ": " + error.detail());
}

PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream* log) {
  cfg.validate();
  const auto note = [log](const std::string& line) {
    if (log) *log << line << '\n' << std::flush;
  };
  const auto patient_dirs = find_patient_directories(cfg.data_dir);
  if (patient_dirs.empty()) fail(Errc::NoSlices, "no patient directories under " + cfg.data_dir.string());

  const auto& out = cfg.output_dir;
  std::error_code ec;
  for (const auto* sub : {"volumes", "runs", "heatmaps"}) {
    std::filesystem::create_directories(out / sub, ec);
    if (ec) fail(Errc::Io, "cannot create " + (out / sub).string() + ": " + ec.message());
  }
  write_text(out / "manifest.json", format_manifest(cfg));

  // ingest, prepare, variant
  std::map<std::string, UnitVolume> volumes;
  LabelMap labels;
  for (const auto& dir : patient_dirs) {
    const std::string dir_name = dir.filename().string();
    std::string id = dir_name;
    try {
      PatientRecord record = load_patient(dir);
      id = record.patient_id;
      UnitVolume volume = apply_variant(prepare_volume(record, cfg.select, cfg.resize), cfg.variant);
      for (auto& slice : volume.slices) slice = to_model_input(slice, cfg.train.input_size);
      save_unit_volume(out / "volumes" / (id + ".uvol"), volume);
      if (!labels.emplace(id, record.label).second) fail(Errc::Malformed, "duplicate patient id");
      volumes.emplace(id, std::move(volume));
    } catch (const Error& e) {
      rethrow_in_stage(e, "ingest", id);
    }
  }
  save_labels(out / "labels.json", labels);
  note("ingested " + std::to_string(volumes.size()) + " patients");

  // split
  SplitAssignment split;
  try {
    std::vector<PatientLabel> roster;
    for (const auto& [id, label] : labels) roster.push_back({id, label});
    split = stratified_split(roster, cfg.ratios, cfg.split_seed);
  } catch (const Error& e) {
    rethrow_in_stage(e, "split");
  }
  save_split(out / "split.json", split);

  ExperimentSpec spec;
  spec.train = build_dataset(volumes, labels, split.members(SplitPart::Train), cfg.train.input_size);
  spec.val = build_dataset(volumes, labels, split.members(SplitPart::Val), cfg.train.input_size);
  spec.test = build_dataset(volumes, labels, split.members(SplitPart::Test), cfg.train.input_size);
  spec.train_config = cfg.train;
  spec.augment = cfg.augment;
  spec.seeds = cfg.seeds;
  spec.variant = std::string(1, variant_name(cfg.variant));
  note("split " + std::to_string(spec.train.size()) + "/" + std::to_string(spec.val.size()) + "/" +
       std::to_string(spec.test.size()) + " slices");

  // train and evaluate
  std::string vote_csv = "run_seed,split,patient_accuracy,tp,fp,tn,fn\n";
  ExperimentResult experiment;
  try {
    experiment = run_experiment(spec, [&](const ExperimentRun& run) {
      const auto dir = out / "runs" / ("seed_" + std::to_string(run.seed));
      std::filesystem::create_directories(dir);
      save_model(dir / "model.tcnn", run.result.model);
      save_history_csv(dir / "history.csv", run.result.history);
      MetricsReport single;
      single.runs = {run.val, run.test};
      save_report_csv(dir / "metrics.csv", single);
      if (cfg.vote) {
        for (const auto& [part, data] : {std::pair{SplitPart::Val, &spec.val}, std::pair{SplitPart::Test, &spec.test}}) {
          const Confusion c = vote_confusion(run.result.model, *data, *cfg.vote);
          char acc[32];
          std::snprintf(acc, sizeof acc, "%.6f", c.accuracy());
          vote_csv += std::to_string(run.seed) + "," + std::string(split_name(part)) + "," + acc + "," +
                      std::to_string(c.tp) + "," + std::to_string(c.fp) + "," + std::to_string(c.tn) + "," +
                      std::to_string(c.fn) + "\n";
        }
      }
      char line[160];
      std::snprintf(line, sizeof line, "seed %llu: %zu epochs, val acc %.4f, test acc %.4f",
                    static_cast<unsigned long long>(run.seed), run.result.history.stopped_epoch,
                    run.val.accuracy, run.test.accuracy);
      note(line);
    });
  } catch (const Error& e) {
    rethrow_in_stage(e, "train");
  }

  PipelineResult result;
  result.report = experiment.report;
  result.report_path = out / "report.csv";
  save_report_csv(result.report_path, result.report);
  if (cfg.vote) write_text(out / "votes.csv", vote_csv);

  // Grad-CAM overlays of the first test slices under the best validation model.
  const auto summaries = result.report.summaries();
  result.best_seed = summaries.front().best.seed;
  const ExperimentRun* best = nullptr;
  for (const auto& run : experiment.runs) {
    if (run.seed == result.best_seed) best = &run;
  }
  const std::size_t examples = std::min(cfg.gradcam_examples, spec.test.size());
  const std::size_t stride = examples == 0 ? 1 : std::max<std::size_t>(1, spec.test.size() / examples);
  for (std::size_t e = 0; e < examples; ++e) {
    const std::size_t i = e * stride;
    const UnitSlice& slice = spec.test.slices[i];
    const Heatmap heatmap = gradcam(best->result.model, slice);
    const std::string stem = spec.test.patient_ids[i] + "_" + std::to_string(i);
    save_png(out / "heatmaps" / (stem + ".png"), overlay(slice, heatmap, 0.4));
    write_text(out / "heatmaps" / (stem + ".csv"), encode_heatmap_csv(heatmap));
    save_pgm(out / "heatmaps" / (stem + ".pgm"), heatmap.grid);
  }
  note("report written to " + result.report_path.string());
  return result;
}

}  // namespace leuko
