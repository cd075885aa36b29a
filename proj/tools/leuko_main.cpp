// leuko: command line front end for the CT leukoencephalopathy pipeline.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "leuko/dicom.hpp"
#include "leuko/evaluate.hpp"
#include "leuko/gradcam.hpp"
#include "leuko/hu_window.hpp"
#include "leuko/phantom.hpp"
#include "leuko/pipeline.hpp"
#include "leuko/preprocess.hpp"
#include "leuko/train.hpp"
#include "leuko/volume_prep.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kTrainingError = 4 };

int exit_code_for(leuko::Errc code) {
  switch (code) {
    case leuko::Errc::BadConfig:
    case leuko::Errc::BadThreshold:
      return kConfigError;
    case leuko::Errc::EmptySplit:
    case leuko::Errc::SingleClassTrainSet:
    case leuko::Errc::NonFinite:
      return kTrainingError;
    default:
      return kDataError;
  }
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) leuko::fail(leuko::Errc::Io, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) leuko::fail(leuko::Errc::Io, "cannot write " + path.string());
  out << text;
}

void require_directory(const fs::path& dir, const char* what) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) leuko::fail(leuko::Errc::BadConfig, std::string(what) + " " + dir.string() + " is not a directory");
}

struct PhantomArgs {
  leuko::PhantomConfig cfg;
  fs::path out;
};

struct IngestArgs {
  fs::path data, out;
  leuko::SliceSelectConfig select;
  leuko::ResizeConfig resize;
};

struct PreprocessArgs {
  fs::path in, out;
  std::string variant = "A";
};

struct SplitArgs {
  fs::path labels, out;
  leuko::SplitRatios ratios;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  fs::path volumes, split, labels, out;
  leuko::TrainConfig cfg;
  bool augment = false;
};

struct EvalArgs {
  fs::path split, model, volumes, labels, out;
  std::string variant = "A";
  std::uint64_t seed = 0;
  std::size_t vote_k = 0, vote_t = 0;
};

struct GradcamArgs {
  fs::path model, input, out;
  std::size_t slice = 0;
  std::string layer{leuko::kDefaultGradcamLayer};
  double alpha = 0.4;
  bool negative = false;
};

struct ReportArgs {
  fs::path runs, out;
};

struct RunArgs {
  fs::path config, data, out;
  std::vector<std::uint64_t> seeds;
  std::size_t epochs = 0;
};

fs::path labels_or_default(const fs::path& labels, const fs::path& volumes) {
  return labels.empty() ? volumes / "labels.json" : labels;
}

int cmd_phantom(const PhantomArgs& a) {
  a.cfg.validate();
  const auto truths = leuko::write_phantom_dataset(a.cfg, a.out);
  std::cout << "wrote " << truths.size() << " phantom patients to " << a.out.string() << "\n";
  return kOk;
}

int cmd_ingest(const IngestArgs& a) {
  require_directory(a.data, "data directory");
  a.select.validate();
  a.resize.validate();
  const auto dirs = leuko::find_patient_directories(a.data);
  if (dirs.empty()) leuko::fail(leuko::Errc::NoSlices, "no patient directories under " + a.data.string());
  ensure_directory(a.out);
  leuko::LabelMap labels;
  for (const auto& dir : dirs) {
    std::string id = dir.filename().string();
    try {
      const auto record = leuko::load_patient(dir);
      id = record.patient_id;
      leuko::save_unit_volume(a.out / (id + ".uvol"), leuko::prepare_volume(record, a.select, a.resize));
      labels[id] = record.label;
    } catch (const leuko::Error& e) {
      leuko::rethrow_in_stage(e, "ingest", id);
    }
  }
  leuko::save_labels(a.out / "labels.json", labels);
  std::cout << "ingested " << labels.size() << " patients into " << a.out.string() << "\n";
  return kOk;
}

int cmd_preprocess(const PreprocessArgs& a) {
  const auto variant = leuko::parse_variant(a.variant);
  const auto volumes = leuko::load_volume_directory(a.in);
  ensure_directory(a.out);
  for (const auto& [id, volume] : volumes) {
    try {
      auto processed = leuko::apply_variant(volume, variant);
      leuko::save_unit_volume(a.out / (id + ".uvol"), processed);
    } catch (const leuko::Error& e) {
      leuko::rethrow_in_stage(e, "preprocess", id);
    }
  }
  std::error_code ec;
  if (fs::exists(a.in / "labels.json", ec)) {
    fs::copy_file(a.in / "labels.json", a.out / "labels.json", fs::copy_options::overwrite_existing);
  }
  std::cout << "variant " << leuko::variant_name(variant) << " applied to " << volumes.size() << " volumes\n";
  return kOk;
}

int cmd_split(const SplitArgs& a) {
  const auto labels = leuko::load_labels(a.labels);
  std::vector<leuko::PatientLabel> roster;
  for (const auto& [id, label] : labels) roster.push_back({id, label});
  const auto split = leuko::stratified_split(roster, a.ratios, a.seed);
  leuko::save_split(a.out, split);
  std::cout << "split " << split.members(leuko::SplitPart::Train).size() << "/"
            << split.members(leuko::SplitPart::Val).size() << "/" << split.members(leuko::SplitPart::Test).size()
            << " patients\n";
  return kOk;
}

int cmd_train(const TrainArgs& a) {
  a.cfg.validate();
  const auto labels = leuko::load_labels(labels_or_default(a.labels, a.volumes));
  const auto split = leuko::load_split(a.split);
  const auto volumes = leuko::load_volume_directory(a.volumes);
  const auto n = a.cfg.input_size;
  const auto train_set = leuko::build_dataset(volumes, labels, split.members(leuko::SplitPart::Train), n);
  const auto val_set = leuko::build_dataset(volumes, labels, split.members(leuko::SplitPart::Val), n);
  std::optional<leuko::AugmentConfig> augment;
  if (a.augment) augment = leuko::AugmentConfig{10.0, 0.5, leuko::derive_seed(a.cfg.seed, 0xA06)};
  const auto result = leuko::train(train_set, val_set, a.cfg, augment);
  ensure_directory(a.out);
  leuko::save_model(a.out / "model.tcnn", result.model);
  leuko::save_history_csv(a.out / "history.csv", result.history);
  std::cout << "trained " << result.history.stopped_epoch << " epochs, best epoch " << result.history.best_epoch
            << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& a) {
  const auto model = leuko::load_model(a.model);
  const auto labels = leuko::load_labels(labels_or_default(a.labels, a.volumes));
  const auto split = leuko::load_split(a.split);
  const auto volumes = leuko::load_volume_directory(a.volumes);
  const auto n = model.architecture().input_size;
  leuko::MetricsReport report;
  std::string votes;
  for (const auto part : {leuko::SplitPart::Val, leuko::SplitPart::Test}) {
    const auto data = leuko::build_dataset(volumes, labels, split.members(part), n);
    if (data.size() == 0) continue;
    report.runs.push_back(leuko::evaluate_dataset(model, data, a.variant, "tinycnn", a.seed, part));
    if (a.vote_k > 0) {
      const auto c = leuko::vote_confusion(model, data, {a.vote_k, a.vote_t});
      votes += std::string(leuko::split_name(part)) + " patient accuracy " + std::to_string(c.accuracy()) +
               " (fn " + std::to_string(c.fn) + ")\n";
    }
  }
  const std::string csv = leuko::format_report_csv(report);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_text(a.out, csv);
  }
  std::cerr << votes;
  return kOk;
}

int cmd_gradcam(const GradcamArgs& a) {
  const auto model = leuko::load_model(a.model);
  const auto volume = leuko::load_unit_volume(a.input);
  if (a.slice >= volume.depth()) {
    leuko::fail(leuko::Errc::BadConfig, "slice " + std::to_string(a.slice) + " outside volume of depth " +
                                            std::to_string(volume.depth()));
  }
  if (!(a.alpha >= 0.0 && a.alpha <= 1.0)) leuko::fail(leuko::Errc::BadConfig, "alpha must lie in [0,1]");
  const auto input = leuko::to_model_input(volume.slices[a.slice], model.architecture().input_size);
  leuko::GradcamTarget target;
  if (a.negative) target.target = leuko::TargetClass::Negative;
  const auto heatmap = leuko::gradcam(model, input, a.layer, target);
  ensure_directory(a.out);
  leuko::save_pgm(a.out / "heatmap.pgm", heatmap.grid);
  write_text(a.out / "heatmap.csv", leuko::encode_heatmap_csv(heatmap));
  leuko::save_png(a.out / "overlay.png", leuko::overlay(input, heatmap, a.alpha));
  std::printf("p(positive) = %.6f, heatmap from %s written to %s\n", leuko::predict(model, input),
              heatmap.source_layer.c_str(), a.out.string().c_str());
  return kOk;
}

int cmd_report(const ReportArgs& a) {
  require_directory(a.runs, "runs directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(a.runs)) {
    if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) leuko::fail(leuko::Errc::NoSlices, "no metrics.csv under " + a.runs.string());
  leuko::MetricsReport report;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    for (auto& r : leuko::parse_metrics_csv(text.str())) report.runs.push_back(std::move(r));
  }
  const std::string csv = leuko::format_report_csv(report);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_text(a.out, csv);
  }
  return kOk;
}

int cmd_run(const RunArgs& a) {
  auto cfg = leuko::load_pipeline_config(a.config);
  if (!a.data.empty()) cfg.data_dir = a.data;
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (!a.seeds.empty()) cfg.seeds = a.seeds;
  if (a.epochs > 0) cfg.train.max_epochs = a.epochs;
  const auto result = leuko::run_pipeline(cfg, &std::cerr);
  std::cout << "report: " << result.report_path.string() << " (best seed " << result.best_seed << ")\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CT leukoencephalopathy pipeline"};
  app.require_subcommand(1);

  PhantomArgs phantom;
  auto* ph = app.add_subcommand("phantom-gen", "Generate a synthetic labelled DICOM dataset");
  ph->add_option("--patients", phantom.cfg.n_patients, "Number of patients")->required();
  ph->add_option("--positive-fraction", phantom.cfg.positive_fraction, "Fraction of positive patients");
  ph->add_option("--seed", phantom.cfg.seed, "Generator seed");
  ph->add_option("--slices", phantom.cfg.slices_per_patient, "Slices per patient");
  ph->add_option("--size", phantom.cfg.image_size, "Image rows and columns");
  ph->add_option("--noise", phantom.cfg.noise_sigma, "Gaussian noise sigma in HU");
  ph->add_option("--out", phantom.out, "Output directory")->required();

  IngestArgs ingest;
  auto* in = app.add_subcommand("ingest", "DICOM patients -> windowed, selected, resized volumes (.uvol)");
  in->add_option("--data", ingest.data, "Directory of patient directories")->required();
  in->add_option("--out", ingest.out, "Output directory")->required();
  in->add_option("--center", ingest.select.center_position, "Window centre as a stack fraction");
  in->add_option("--depth", ingest.select.depth, "Slices kept per patient");
  in->add_option("--size", ingest.resize.target_rows, "Output rows and columns")
      ->each([&ingest](const std::string&) { ingest.resize.target_cols = ingest.resize.target_rows; });

  PreprocessArgs pre;
  auto* pp = app.add_subcommand("preprocess", "Apply preprocessing variant A, B or C to volumes");
  pp->add_option("--in", pre.in, "Directory of .uvol files")->required();
  pp->add_option("--variant", pre.variant, "A, B or C");
  pp->add_option("--out", pre.out, "Output directory")->required();

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "Stratified patient-level train/val/test split");
  sp->add_option("--labels", split.labels, "labels.json written by ingest")->required();
  sp->add_option("--seed", split.seed, "Shuffle seed");
  sp->add_option("--train", split.ratios.train, "Training fraction");
  sp->add_option("--val", split.ratios.val, "Validation fraction");
  sp->add_option("--test", split.ratios.test, "Test fraction");
  sp->add_option("--out", split.out, "Output split.json")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the tiny CNN on a split");
  t->add_option("--volumes", tr.volumes, "Directory of .uvol files")->required();
  t->add_option("--split", tr.split, "split.json")->required();
  t->add_option("--labels", tr.labels, "labels.json (default: <volumes>/labels.json)");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--seed", tr.cfg.seed, "Initialisation and shuffle seed");
  t->add_option("--lr", tr.cfg.learning_rate, "Adam learning rate");
  t->add_option("--batch", tr.cfg.batch_size, "Mini-batch size");
  t->add_option("--epochs", tr.cfg.max_epochs, "Maximum epochs");
  t->add_option("--patience", tr.cfg.early_stop_patience, "Early stopping patience");
  t->add_option("--input-size", tr.cfg.input_size, "Model input rows and columns");
  t->add_flag("--augment", tr.augment, "Random rotation and flips on training slices");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Slice-level metrics of a model on the val and test splits");
  e->add_option("--split", ev.split, "split.json")->required();
  e->add_option("--model", ev.model, "Model file")->required();
  e->add_option("--volumes", ev.volumes, "Directory of .uvol files")->required();
  e->add_option("--labels", ev.labels, "labels.json (default: <volumes>/labels.json)");
  e->add_option("--variant", ev.variant, "Variant label for the report");
  e->add_option("--seed", ev.seed, "Run seed label for the report");
  e->add_option("--vote-k", ev.vote_k, "Slices per patient for voting (0 disables)");
  e->add_option("--vote-t", ev.vote_t, "Voting threshold");
  e->add_option("--out", ev.out, "Metrics CSV (default: stdout)");

  GradcamArgs gc;
  auto* g = app.add_subcommand("gradcam", "Grad-CAM heatmap and overlay for one slice");
  g->add_option("--model", gc.model, "Model file")->required();
  g->add_option("--input", gc.input, "Volume (.uvol)")->required();
  g->add_option("--slice", gc.slice, "Slice index")->required();
  g->add_option("--out", gc.out, "Output directory")->required();
  g->add_option("--layer", gc.layer, "Convolutional layer");
  g->add_option("--alpha", gc.alpha, "Overlay blend in [0,1]");
  g->add_flag("--negative", gc.negative, "Explain the negative class");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Merge per-run metrics.csv files into an AVG/BEST report");
  r->add_option("--runs", rp.runs, "Directory searched for metrics.csv")->required();
  r->add_option("--out", rp.out, "Report CSV (default: stdout)");

  RunArgs run;
  auto* ru = app.add_subcommand("run", "Full pipeline from a config or manifest");
  ru->add_option("--config", run.config, "Config JSON or manifest.json")->required();
  ru->add_option("--data", run.data, "Override data_dir");
  ru->add_option("--out", run.out, "Override output_dir");
  ru->add_option("--seeds", run.seeds, "Override run seeds");
  ru->add_option("--epochs", run.epochs, "Override max_epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*ph) return cmd_phantom(phantom);
    if (*in) return cmd_ingest(ingest);
    if (*pp) return cmd_preprocess(pre);
    if (*sp) return cmd_split(split);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*g) return cmd_gradcam(gc);
    if (*r) return cmd_report(rp);
    if (*ru) return cmd_run(run);
  } catch (const leuko::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err.code());
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kDataError;
  }
  return kConfigError;
}
