// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: leuko_acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <malloc.h>
#include <sys/wait.h>

#include "leuko/dicom.hpp"
#include "leuko/evaluate.hpp"
#include "leuko/gradcam.hpp"
#include "leuko/hu_window.hpp"
#include "leuko/phantom.hpp"
#include "leuko/pipeline.hpp"
#include "leuko/preprocess.hpp"
#include "leuko/augment.hpp"
#include "leuko/tinycnn.hpp"
#include "leuko/train.hpp"
#include "leuko/volume_prep.hpp"
#include "oracles.hpp"

#ifndef LEUKO_CLI_PATH
#error "LEUKO_CLI_PATH must name the leuko executable"
#endif

namespace fs = std::filesystem;
using namespace leuko;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void check(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    if (failures.size() < 5) failures.push_back(what);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1. formula fidelity ----

Outcome formula_fidelity() {
  Outcome o;
  const auto t0 = Clock::now();
  int n = 0;
  auto eq = [&](double got, double want, const std::string& what) {
    ++n;
    o.check(got == want, fmt("%s: got %.17g want %.17g", what.c_str(), got, want));
  };
  eq(window_rescale(50.0), 0.5, "window_rescale(50)");
  eq(window_rescale(150.0), 1.0, "window_rescale(150)");
  eq(window_rescale(-3.0), 0.0, "window_rescale(-3)");
  const auto one = [](double v) { return UnitSlice(1, 1, v); };
  eq(band_filter(one(0.9))(0, 0), 0.0, "band_filter(0.9)");
  eq(band_filter(one(0.1))(0, 0), 0.0, "band_filter(0.1)");
  eq(band_filter(one(0.5))(0, 0), 0.5, "band_filter(0.5)");
  eq(contrast_stretch(one(0.15))(0, 0), 0.0, "contrast_stretch(0.15)");
  eq(contrast_stretch(one(0.65))(0, 0), 1.0, "contrast_stretch(0.65)");
  eq(contrast_stretch(one(0.40))(0, 0), 0.5, "contrast_stretch(0.40)");
  eq(saturation_zero(one(1.0))(0, 0), 0.0, "saturation_zero(1.0)");
  eq(saturation_zero(one(0.99))(0, 0), 0.99, "saturation_zero(0.99)");
  ++n;
  o.check(saturation_zero(UnitSlice(5, 5, 1.0)) == UnitSlice(5, 5, 0.0), "saturation_zero(all ones)");
  eq(bce_loss(0.5, 1), std::log(2.0), "bce_loss(0.5,1)");
  eq(bce_loss(0.5, 0), std::log(2.0), "bce_loss(0.5,0)");
  // 1 - eps is not representable exactly; the loss is -ln of the nearest double.
  eq(bce_loss(1.0 - kProbabilityEpsilon, 1), -std::log(1.0 - kProbabilityEpsilon), "bce_loss(1-eps,1)");
  ++n;
  o.check(bce_loss(1.0 - kProbabilityEpsilon, 1) < 1e-11, "bce_loss(1-eps,1) ~ 0");
  eq(bce_loss(0.9, 0), -std::log(1.0 - 0.9), "bce_loss(0.9,0)");
  ++n;
  o.check(std::abs(bce_loss(0.9, 0) - std::log(10.0)) < 1e-15, "bce_loss(0.9,0) ~ ln 10");
  const std::vector<int> truth{1, 0, 1, 1};
  eq(binary_accuracy(truth, truth), 1.0, "binary_accuracy(all correct)");
  eq(binary_accuracy(std::vector<int>{0, 1, 0, 0}, truth), 0.0, "binary_accuracy(all wrong)");
  eq(binary_accuracy(std::vector<int>{1, 0, 1, 0}, truth), 0.75, "binary_accuracy(3 of 4)");
  const double t = seconds_since(t0);
  o.check(t < 1.0, fmt("runtime %.3f s exceeds 1 s", t));
  o.detail = fmt("%d tabulated values, %.4f s", n, t);
  return o;
}

// ---- 2. gradient fidelity ----

// The network from layer `first` onward, fed with the pooled output of layer
// first - 1. The loss depends on layer-`first` parameters only through that
// input, so finite differences on the tail equal those on the whole network.
struct TailNetwork {
  CnnModel model;
  Tensor4 input;
  std::size_t offset = 0;  // index of the tail's first parameter in the full model
  ForwardCache base;
};

TailNetwork tail_network(const CnnModel& full, const Tensor4& batch, const ForwardCache& cache, std::size_t first) {
  const Architecture& arch = full.architecture();
  if (first == 0) return {full, batch, 0, cache};
  const auto stages = arch.stages();
  Architecture tail;
  tail.input_size = stages[first].in_size;
  tail.input_channels = stages[first].in_channels;
  tail.convs.assign(arch.convs.begin() + static_cast<std::ptrdiff_t>(first), arch.convs.end());
  TailNetwork t{CnnModel(tail), cache.pooled[first - 1], full.slots()[2 * first].offset, {}};
  std::copy(full.parameters().begin() + static_cast<std::ptrdiff_t>(t.offset), full.parameters().end(),
            t.model.parameters().begin());
  t.base = forward(t.model, t.input);
  return t;
}

// Same max-pool winners and same ReLU state of every winner: the loss is
// smooth between two parameter values that share this pattern.
bool same_activation_pattern(const ForwardCache& a, const ForwardCache& b) {
  for (std::size_t l = 0; l < a.argmax.size(); ++l) {
    if (a.argmax[l] != b.argmax[l]) return false;
    for (std::size_t k = 0; k < a.pooled[l].data.size(); ++k) {
      if ((a.pooled[l].data[k] > 0.0) != (b.pooled[l].data[k] > 0.0)) return false;
    }
  }
  return true;
}

Outcome gradient_fidelity() {
  Outcome o;
  const auto t0 = Clock::now();
  // The 5/4/3 valid-convolution stack with 2x2 pooling needs at least 26
  // pixels; 16 is rejected, so the check runs at the smallest legal size.
  Architecture arch;
  arch.input_size = 16;
  bool rejected = false;
  try {
    arch.validate();
  } catch (const Error& e) {
    rejected = e.code() == Errc::ShapeMismatch;
  }
  o.check(rejected, "input 16 was not rejected with ShapeMismatch");
  arch.input_size = arch.min_input_size();

  const double h = 1e-5;
  std::size_t checked = 0, shrunk = 0;
  double worst = 0.0;
  Rng rng(20240601);
  for (int draw = 0; draw < 20; ++draw) {
    CnnModel model = CnnModel::glorot(arch, rng.next());
    for (const auto& slot : model.slots()) {
      if (slot.name.ends_with(".bias")) {
        for (std::size_t i = 0; i < slot.size; ++i) model.parameters()[slot.offset + i] = rng.uniform(-0.1, 0.1);
      }
    }
    std::vector<UnitSlice> slices;
    std::vector<double> labels;
    for (int i = 0; i < 2; ++i) {
      slices.push_back(testing::random_slice(rng, arch.input_size, arch.input_size));
      labels.push_back(static_cast<double>(rng.below(2)));
    }
    const Tensor4 batch = make_batch(slices, arch.input_channels);
    const ForwardCache cache = forward(model, batch);
    const auto grads = backward(model, cache, labels);
    const std::size_t layers = arch.convs.size();
    for (std::size_t l = 0; l < layers; ++l) {
      TailNetwork tail = tail_network(model, batch, cache, l);
      // Dense parameters ride on the last tail.
      const std::size_t end = l + 1 < layers ? model.slots()[2 * (l + 1)].offset : grads.size();
      for (std::size_t idx = model.slots()[2 * l].offset; idx < end; ++idx) {
        double& p = tail.model.parameters()[idx - tail.offset];
        const double saved = p;
        // Central differences are a derivative oracle only where the loss is
        // smooth across [p - step, p + step]; across a ReLU or pooling switch
        // the step shrinks until both ends keep the unperturbed pattern.
        double step = h, numeric = 0.0;
        for (;;) {
          p = saved + step;
          const ForwardCache up = forward(tail.model, tail.input);
          p = saved - step;
          const ForwardCache down = forward(tail.model, tail.input);
          p = saved;
          numeric = (mean_bce_with_logits(up.logits, labels) - mean_bce_with_logits(down.logits, labels)) / (2 * step);
          if ((same_activation_pattern(up, tail.base) && same_activation_pattern(down, tail.base)) || step < 1e-8) break;
          step /= 10.0;
        }
        shrunk += step < h ? 1 : 0;
        const double rel =
            std::abs(numeric - grads[idx]) / std::max({std::abs(numeric), std::abs(grads[idx]), 1e-8});
        worst = std::max(worst, rel);
        ++checked;
        o.check(rel <= 1e-3, fmt("draw %d param %zu: analytic %.10g numeric %.10g (step %.0e) rel %.3g", draw, idx,
                                 grads[idx], numeric, step, rel));
      }
    }
  }
  const double t = seconds_since(t0);
  o.check(t < 120.0, fmt("runtime %.1f s exceeds 2 min", t));
  o.detail = fmt("20 draws x %zu parameters at input %zu (16 rejected), step 1e-5 (%zu at a ReLU/pool switch "
                 "used a smaller step), worst rel err %.2e, %.1f s",
                 checked / 20, arch.input_size, shrunk, worst, t);
  return o;
}

// ---- 3. morphology ----

Outcome morphology() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(303);
  for (int i = 0; i < 100; ++i) {
    UnitSlice s = testing::random_slice(rng, 32, 32);
    // Quantise half the cases so plateaus and ties occur.
    if (i % 2) for (double& v : s.values()) v = std::floor(v * 4.0) / 4.0;
    const UnitSlice opened = morph_open(s);
    o.check(morph_open(opened) == opened, fmt("case %d: opening not idempotent", i));
    bool below = true;
    for (std::size_t j = 0; j < s.size(); ++j) below = below && opened.values()[j] <= s.values()[j];
    o.check(below, fmt("case %d: opening not anti-extensive", i));
    o.check(opened == testing::open_oracle(s), fmt("case %d: differs from window-scan oracle", i));
  }
  const double t = seconds_since(t0);
  o.check(t < 30.0, fmt("runtime %.1f s exceeds 30 s", t));
  o.detail = fmt("100 random 32x32 slices, %.2f s", t);
  return o;
}

// ---- 4. resampling ----

Outcome resampling() {
  Outcome o;
  Rng rng(404);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const UnitSlice src = testing::random_slice(rng, 2 + rng.below(40), 2 + rng.below(40));
    const std::size_t rows = 2 + rng.below(70), cols = 2 + rng.below(70);
    const UnitSlice out = resample_bilinear(src, rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const double err = std::abs(out(r, c) - testing::bilinear_pixel(src, rows, cols, r, c));
        worst = std::max(worst, err);
        o.check(err <= 1e-9, fmt("resize case %d pixel (%zu,%zu) err %.3g", i, r, c, err));
      }
  }
  for (int i = 0; i < 20; ++i) {
    const UnitSlice src = testing::random_slice(rng, 4 + rng.below(40), 4 + rng.below(40));
    const double angle = rng.uniform(-89.0, 89.0);
    const UnitSlice out = rotate(src, angle);
    for (std::size_t r = 0; r < src.rows(); ++r)
      for (std::size_t c = 0; c < src.cols(); ++c) {
        const double err = std::abs(out(r, c) - testing::rotation_pixel(src, angle, r, c));
        worst = std::max(worst, err);
        o.check(err <= 1e-9, fmt("rotation case %d (%.2f deg) pixel (%zu,%zu) err %.3g", i, angle, r, c, err));
      }
  }
  o.detail = fmt("20 resize + 20 rotation cases, worst abs err %.2e", worst);
  return o;
}

// ---- 5 and 6. phantom experiment and Grad-CAM localisation ----

struct PhantomExperiment {
  CnnModel model;
  Dataset test;
  /// Lesion boxes per test slice, already mapped to model input coordinates.
  std::vector<std::vector<std::array<double, 4>>> test_boxes;
  double accuracy = 0.0;
  double seconds = 0.0;
  std::size_t epochs = 0;
  std::string summary;
};

std::optional<PhantomExperiment> g_experiment;

PhantomExperiment& phantom_experiment() {
  if (g_experiment) return *g_experiment;
  const auto t0 = Clock::now();
  PhantomConfig pc;
  pc.n_patients = 200;
  pc.positive_fraction = 0.5;
  pc.seed = 2024;
  const SliceSelectConfig select;
  const ResizeConfig resize;
  TrainConfig tc;
  tc.max_epochs = 30;
  const std::size_t input = tc.input_size;

  const std::vector<int> labels = phantom_labels(pc);
  std::map<std::string, UnitVolume> volumes;
  std::map<std::string, std::vector<SliceLesions>> truths;
  LabelMap label_map;
  std::vector<PatientLabel> roster;
  for (std::size_t i = 0; i < pc.n_patients; ++i) {
    PhantomPatient p = gen_phantom_patient(pc, labels[i], i);
    UnitVolume v = apply_variant(prepare_volume(p.record, select, resize), Variant::A);
    const SliceRange window = select_slices(p.record.slices.size(), select);
    std::vector<SliceLesions> kept(p.truth.slices.begin() + static_cast<std::ptrdiff_t>(window.first),
                                   p.truth.slices.begin() + static_cast<std::ptrdiff_t>(window.first + window.count));
    for (auto& s : kept) s.mask.clear();
    const std::string id = p.record.patient_id;
    volumes[id] = std::move(v);
    truths[id] = std::move(kept);
    label_map[id] = labels[i];
    roster.push_back({id, labels[i]});
  }
  const SplitAssignment split = stratified_split(roster, {}, 7);
  const Dataset train_set = build_dataset(volumes, label_map, split.members(SplitPart::Train), input);
  const Dataset val_set = build_dataset(volumes, label_map, split.members(SplitPart::Val), input);

  PhantomExperiment e;
  e.test = build_dataset(volumes, label_map, split.members(SplitPart::Test), input);
  // Box corners map from phantom pixels to model pixels by the corner-aligned resampling ratio.
  const double ratio = static_cast<double>(input - 1) / static_cast<double>(pc.image_size - 1);
  for (const auto& id : split.members(SplitPart::Test)) {
    for (const auto& s : truths.at(id)) {
      std::vector<std::array<double, 4>> boxes;
      for (const auto& b : s.boxes) {
        boxes.push_back({static_cast<double>(b.row_min) * ratio, static_cast<double>(b.row_max) * ratio,
                         static_cast<double>(b.col_min) * ratio, static_cast<double>(b.col_max) * ratio});
      }
      e.test_boxes.push_back(std::move(boxes));
    }
  }
  const double prep_seconds = seconds_since(t0);
  TrainResult result = train(train_set, val_set, tc);
  e.model = std::move(result.model);
  e.epochs = result.history.stopped_epoch;
  e.accuracy = score_dataset(e.model, e.test).accuracy;
  e.seconds = seconds_since(t0);
  e.summary = fmt("train %zu / val %zu / test %zu slices, %zu epochs (best %zu), data %.0f s + train %.0f s",
                  train_set.size(), val_set.size(), e.test.size(), e.epochs, result.history.best_epoch, prep_seconds,
                  e.seconds - prep_seconds);
  g_experiment = std::move(e);
  return *g_experiment;
}

Outcome phantom_end_to_end() {
  Outcome o;
  const PhantomExperiment& e = phantom_experiment();
  o.check(e.accuracy >= 0.95, fmt("held-out slice accuracy %.4f < 0.95", e.accuracy));
  o.check(e.seconds <= 600.0, fmt("runtime %.0f s exceeds 10 min", e.seconds));
  o.detail = fmt("held-out slice accuracy %.4f, %.0f s total; %s", e.accuracy, e.seconds, e.summary.c_str());
  return o;
}

Outcome gradcam_localisation() {
  Outcome o;
  const PhantomExperiment& e = phantom_experiment();
  std::size_t tp = 0, hits = 0;
  for (std::size_t i = 0; i < e.test.size(); ++i) {
    if (e.test.labels[i] != 1 || classify(predict(e.model, e.test.slices[i])) != 1) continue;
    ++tp;
    const Heatmap h = gradcam(e.model, e.test.slices[i]);
    const auto values = h.grid.values();
    const auto at = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
    const double r = static_cast<double>(at / h.grid.cols());
    const double c = static_cast<double>(at % h.grid.cols());
    const bool inside = std::any_of(e.test_boxes[i].begin(), e.test_boxes[i].end(), [&](const auto& b) {
      return r >= std::floor(b[0]) && r <= std::ceil(b[1]) && c >= std::floor(b[2]) && c <= std::ceil(b[3]);
    });
    hits += inside ? 1 : 0;
  }
  const double fraction = tp ? static_cast<double>(hits) / static_cast<double>(tp) : 0.0;
  o.check(tp > 0, "no true-positive test slices");
  o.check(fraction >= 0.70, fmt("argmax inside a lesion box for %.3f of true positives < 0.70", fraction));

  CnnModel zero(e.model.architecture());
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(e.test.size(), 20); ++i) {
    const Heatmap h = gradcam(zero, e.test.slices[i]);
    nonzero += std::count_if(h.grid.values().begin(), h.grid.values().end(), [](double v) { return v != 0.0; });
  }
  o.check(nonzero == 0, fmt("zero-weight model produced %zu nonzero heatmap pixels", nonzero));
  o.detail = fmt("%zu / %zu true-positive test slices (%.3f) peak inside a lesion box; zero model heatmaps all zero",
                 hits, tp, fraction);
  return o;
}

// ---- 7. voting ----

Outcome voting() {
  Outcome o;
  std::size_t cases = 0;
  for (std::size_t k = 1; k <= 10; ++k) {
    for (std::size_t t = 1; t <= k; ++t) {
      for (std::uint32_t bits = 0; bits < (1U << k); ++bits) {
        std::vector<int> preds(k);
        for (std::size_t i = 0; i < k; ++i) preds[i] = static_cast<int>((bits >> i) & 1U);
        const int vote = patient_vote(preds, {k, t});
        ++cases;
        o.check(vote == testing::vote_by_enumeration(bits, k, t), fmt("k=%zu t=%zu bits=%x", k, t, bits));
        // Raising t never turns a negative into a positive.
        if (t < k && vote == 0) o.check(patient_vote(preds, {k, t + 1}) == 0, fmt("t-monotonicity k=%zu t=%zu", k, t));
        // Adding a positive prediction never turns a positive into a negative.
        for (std::size_t i = 0; i < k && vote == 1; ++i) {
          if (preds[i]) continue;
          auto more = preds;
          more[i] = 1;
          o.check(patient_vote(more, {k, t}) == 1, fmt("prediction monotonicity k=%zu t=%zu bits=%x", k, t, bits));
        }
      }
    }
  }
  o.detail = fmt("%zu (k, t, vector) cases", cases);
  return o;
}

// ---- 8. splitting ----

Outcome splitting() {
  Outcome o;
  Rng rng(808);
  const SplitRatios ratios;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t pos = 1 + rng.below(150), neg = 1 + rng.below(150);
    std::vector<PatientLabel> roster;
    for (std::size_t i = 0; i < pos + neg; ++i) roster.push_back({fmt("id%06llu", (unsigned long long)rng.next() % 1000000 * 1000 + i), i < pos});
    rng.shuffle(std::span<PatientLabel>(roster));
    const std::uint64_t seed = rng.next();
    const SplitAssignment split = stratified_split(roster, ratios, seed);

    std::set<std::string> seen;
    std::size_t total = 0;
    for (const SplitPart part : {SplitPart::Train, SplitPart::Val, SplitPart::Test}) {
      for (const auto& id : split.members(part)) {
        ++total;
        o.check(seen.insert(id).second, fmt("trial %d: %s in two parts", trial, id.c_str()));
      }
    }
    o.check(total == roster.size() && split.parts.size() == roster.size(), fmt("trial %d: not covering", trial));
    for (const int label : {0, 1}) {
      std::map<SplitPart, double> count;
      double n = 0;
      for (const auto& p : roster) {
        if (p.label != label) continue;
        n += 1;
        const auto it = split.parts.find(p.patient_id);
        if (it != split.parts.end()) count[it->second] += 1;
      }
      o.check(std::abs(count[SplitPart::Train] - 0.70 * n) <= 1.0 && std::abs(count[SplitPart::Val] - 0.15 * n) <= 1.0 &&
                  std::abs(count[SplitPart::Test] - 0.15 * n) <= 1.0,
              fmt("trial %d label %d: %g/%g/%g of %g", trial, label, count[SplitPart::Train], count[SplitPart::Val],
                  count[SplitPart::Test], n));
    }
    o.check(stratified_split(roster, ratios, seed) == split, fmt("trial %d: same seed differs", trial));
  }
  o.detail = "1000 random rosters";
  return o;
}

// ---- 9. DICOM round trip ----

Outcome dicom_round_trip() {
  Outcome o;
  Rng rng(909);
  std::size_t deletions = 0;
  for (int i = 0; i < 50; ++i) {
    const DicomSlice s = testing::random_dicom_slice(rng);
    const bool explicit_vr = i % 2 == 0;
    const auto syntax = explicit_vr ? TransferSyntax::ExplicitVrLittleEndian : TransferSyntax::ImplicitVrLittleEndian;
    o.check(parse_dicom(write_dicom(s, syntax)) == s, fmt("fixture %d: library writer round trip differs", i));
    const auto fixture = testing::DicomFixture::from_slice(s);
    o.check(parse_dicom(fixture.part10(explicit_vr)) == s, fmt("fixture %d: independent writer round trip differs", i));
    for (const Tag tag : kRequiredTags) {
      auto broken = fixture;
      broken.remove(tag);
      ++deletions;
      std::optional<Errc> code;
      try {
        parse_dicom(broken.part10(explicit_vr));
      } catch (const Error& e) {
        code = e.code();
      }
      o.check(code == Errc::MissingTag, fmt("fixture %d: deleting %s gave %s", i, tag.str().c_str(),
                                            code ? std::string(to_string(*code)).c_str() : "no error"));
    }
  }
  o.detail = fmt("50 fixtures, %zu required-tag deletions", deletions);
  return o;
}

// ---- 10. determinism of the CLI ----

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(LEUKO_CLI_PATH) + " " + args + " >> '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism() {
  Outcome o;
  const auto t0 = Clock::now();
  testing::TempDir tmp("leuko-accept");
  const fs::path log = tmp.path() / "cli.log";
  const fs::path data = tmp.path() / "data";
  int rc = run_cli("phantom-gen --patients 16 --seed 10 --out '" + data.string() + "'", log);
  o.check(rc == 0, fmt("phantom-gen exited %d", rc));

  PipelineConfig cfg;
  cfg.data_dir = data;
  cfg.output_dir = tmp.path() / "first";
  cfg.train.max_epochs = 3;
  cfg.seeds = {0, 1};
  cfg.vote = VoteConfig{30, 15};
  cfg.split_seed = 4;
  std::ofstream(tmp.path() / "config.json") << format_pipeline_config(cfg);

  rc = run_cli("run --config '" + (tmp.path() / "config.json").string() + "'", log);
  o.check(rc == 0, fmt("first run exited %d", rc));
  rc = run_cli("run --config '" + (tmp.path() / "first" / "manifest.json").string() + "' --out '" +
                   (tmp.path() / "second").string() + "'",
               log);
  o.check(rc == 0, fmt("second run exited %d", rc));

  const std::string a = testing::read_text(tmp.path() / "first" / "report.csv");
  const std::string b = testing::read_text(tmp.path() / "second" / "report.csv");
  o.check(!a.empty(), "first report missing");
  o.check(a == b, "report CSVs differ");
  if (!o.pass) o.failures.push_back(testing::read_text(log));
  o.detail = fmt("two runs from one manifest, %zu-byte report.csv identical, %.0f s", a.size(), seconds_since(t0));
  return o;
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  // Keep freed tensors in the heap: the many small forward passes below would
  // otherwise map and fault in fresh pages on every call.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  const std::vector<Criterion> criteria{
      {1, "formula fidelity", formula_fidelity},
      {2, "gradient fidelity", gradient_fidelity},
      {3, "morphology properties", morphology},
      {4, "resample oracles", resampling},
      {5, "phantom end-to-end", phantom_end_to_end},
      {6, "Grad-CAM localisation", gradcam_localisation},
      {7, "voting oracle", voting},
      {8, "split correctness", splitting},
      {9, "DICOM round trip", dicom_round_trip},
      {10, "determinism", cli_determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("criterion %2d %-24s %s  %s\n", c.number, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    for (const auto& f : o.failures) std::printf("    %s\n", f.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
