// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset, e.g. `acceptance 1 4 10`.

#include "helpers.hpp"

#include "cli.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace lart;
using namespace lart::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Scratch {
  fs::path path;
  explicit Scratch(const std::string& tag) {
    path = fs::temp_directory_path() / ("lart-acceptance-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lart");
  std::ostringstream sink;
  auto* out = std::cout.rdbuf(sink.rdbuf());
  auto* err = std::cerr.rdbuf(sink.rdbuf());
  const int code = cli::run_cli(args);
  std::cout.rdbuf(out);
  std::cerr.rdbuf(err);
  return code;
}

// ---------------------------------------------------------------------------
// 1. Gradients of the tiny profile against central differences. Small tensors
// are checked entry by entry and large ones on sampled entries; every tensor
// also gets whole-tensor directional derivatives, which involve every entry.

Outcome gradients() {
  GeneratorConfig g = small_config(3, 3, 16);
  g.gap_rate = 0.2;
  const Clip c = generate_clip(g);
  const TokenConfig tc = tiny_tokens(3, 16);
  LartModel<double> m(ModelConfig::tiny(), tc);
  m.init(5);
  const int sup[] = {2, 3};
  auto grid = assemble_grid<double>(c, 1, sup, tc, 0);
  Rng mr(9);
  apply_mask_tokens(grid, 0.3, m.mask_token(), mr);
  auto loss = [&](bool backward) {
    Rng rng(42);
    LartModel<double>::ForwardCache cache;
    const Mat<double> logits = m.forward(grid, Mode::Train, &rng, backward ? &cache : nullptr);
    const auto b = bce_loss<double>(logits, grid.labels, grid.loss_mask);
    if (backward) m.backward(cache, b.grad);
    return static_cast<double>(b.loss);
  };

  auto& store = m.parameters();
  const GradCheck entries = gradient_check(store, loss, 40, 256, 11);

  long directions = 0, dir_failures = 0, total = 0;
  Rng dr(17);
  std::normal_distribution<double> n(0, 1);
  const double h = 1e-6;
  for (auto& p : store.all()) {
    total += p.value.size();
    for (int k = 0; k < 2; ++k) {
      Mat<double> v(p.value.rows(), p.value.cols());
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = n(dr);
      v /= v.norm();
      const double an = (p.grad.array() * v.array()).sum();
      const Mat<double> keep = p.value;
      p.value = keep + h * v;
      const double up = loss(false);
      p.value = keep - h * v;
      const double down = loss(false);
      p.value = keep;
      const double fd = (up - down) / (2 * h);
      ++directions;
      if (std::abs(fd - an) > std::max(1e-4 * std::max(std::abs(fd), std::abs(an)), 1e-6)) ++dir_failures;
    }
  }
  return {entries.failures == 0 && dir_failures == 0,
          fmt("%ld of %ld parameters checked entrywise, %ld failures (worst %s); %ld whole-tensor directions, "
              "%ld failures",
              entries.checked, total, entries.failures, entries.worst.empty() ? "none" : entries.worst.c_str(),
              directions, dir_failures)};
}

// ---------------------------------------------------------------------------
// 2. Attention isolation over randomized grids, in the production precision.

Outcome isolation() {
  struct Arm {
    std::unique_ptr<Model> model;
    TokenConfig tokens;
  };
  std::vector<Arm> arms;
  std::uint64_t init = 100;
  for (int n_tracks = 2; n_tracks <= 5; ++n_tracks)
    for (NormPosition norm : {NormPosition::Pre, NormPosition::Post}) {
      ModelConfig mc = ModelConfig::tiny();
      mc.norm = norm;
      const TokenConfig tc = tiny_tokens(n_tracks, 16);
      auto m = std::make_unique<Model>(mc, tc);
      m->init(init++);
      arms.push_back({std::move(m), tc});
    }

  Rng rng(2025);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<Real> noise(0, 2);
  long gap_trials = 0, mask_trials = 0, present_trials = 0, violations = 0, mask_to_mask_changes = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Arm& arm = arms[static_cast<std::size_t>(trial) % arms.size()];
    GeneratorConfig g = small_config(5000 + static_cast<std::uint64_t>(trial), 2 + trial % 4, 16 + trial % 17);
    g.gap_rate = 0.1 + 0.3 * u(rng);
    const Clip c = generate_clip(g);

    std::vector<int> ids;
    for (const auto& t : c.tracklets) ids.push_back(t.track_id);
    std::shuffle(ids.begin(), ids.end(), rng);
    const int poi = ids[0];
    std::vector<int> sup(ids.begin() + 1, ids.begin() + std::min<std::ptrdiff_t>(ids.size(), arm.tokens.n_tracks));
    const int start = std::uniform_int_distribution<int>(0, c.num_frames - 16)(rng);
    auto grid = assemble_grid<Real>(c, poi, sup, arm.tokens, start);
    apply_mask_tokens(grid, 0.1 + 0.4 * u(rng), arm.model->mask_token(), rng);

    const Mat<Real> tokens = arm.model->embed(grid);
    const Mat<Real> base = arm.model->forward_tokens(tokens, grid.attention_mask, Mode::Eval, nullptr, nullptr);
    auto rows_of = [&](TokenKind k) {
      std::vector<int> out;
      for (int q = 0; q < grid.size(); ++q)
        if (grid.kinds[static_cast<std::size_t>(q)] == k) out.push_back(q);
      return out;
    };
    auto pick = [&](const std::vector<int>& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
    auto perturbed = [&](int q) {
      Mat<Real> t = tokens;
      for (Eigen::Index d = 0; d < t.cols(); ++d) t(q, d) += noise(rng);
      return arm.model->forward_tokens(t, grid.attention_mask, Mode::Eval, nullptr, nullptr);
    };
    const auto gaps = rows_of(TokenKind::Gap), masks = rows_of(TokenKind::Masked), present = rows_of(TokenKind::Present);

    if (!gaps.empty()) {
      ++gap_trials;
      const int q = pick(gaps);
      const Mat<Real> out = perturbed(q);
      for (int r = 0; r < grid.size(); ++r)
        if (r != q && !(out.row(r) == base.row(r))) ++violations;
    }
    if (!masks.empty()) {
      ++mask_trials;
      const int q = pick(masks);
      const Mat<Real> out = perturbed(q);
      for (int r = 0; r < grid.size(); ++r) {
        if (r == q) continue;
        const bool same = out.row(r) == base.row(r);
        if (grid.kinds[static_cast<std::size_t>(r)] != TokenKind::Masked) violations += !same;
        else mask_to_mask_changes += !same;
      }
    }
    if (!present.empty() && !masks.empty()) {
      ++present_trials;
      const Mat<Real> out = perturbed(pick(present));
      for (int r : masks)
        if (out.row(r) == base.row(r)) ++violations;
    }
  }
  const bool exercised = gap_trials > 500 && mask_trials > 500 && present_trials > 500;
  return {violations == 0 && exercised,
          fmt("1000 trials (%ld with gap, %ld with mask, %ld present->mask); %ld violations; "
              "mask tokens also left other mask tokens unchanged in all but %ld rows",
              gap_trials, mask_trials, present_trials, violations, mask_to_mask_changes)};
}

// ---------------------------------------------------------------------------
// 3. Evaluator against brute-force oracles.

Outcome oracles() {
  Rng rng(31337);
  long ap_checked = 0, ap_mismatch = 0, match_sets = 0, match_mismatch = 0;
  double worst = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const EvalInstance e = random_eval_instance(rng, 40, 5);
    const EvalResult r = evaluate_detections(e.detections, e.ground_truth, e.catalog);
    const auto oracle = oracle_class_aps(e);
    for (std::size_t k = 0; k < e.catalog.size(); ++k) {
      ++ap_checked;
      if (r.ap[k].has_value() != oracle[k].has_value()) {
        ++ap_mismatch;
        continue;
      }
      if (r.ap[k]) {
        const double d = std::abs(*r.ap[k] - *oracle[k]);
        worst = std::max(worst, d);
        ap_mismatch += d > 1e-12;
      }
    }
    std::set<std::pair<std::string, int>> frames;
    for (const auto& d : e.detections) frames.insert({d.clip_id, d.frame});
    for (std::size_t k = 0; k < e.catalog.size(); ++k)
      for (const auto& [clip, frame] : frames) {
        std::vector<ScoredBox> preds;
        std::vector<Box> gts;
        for (const auto& d : e.detections)
          if (d.clip_id == clip && d.frame == frame) preds.push_back({d.box, d.scores[k]});
        for (const auto& g : e.ground_truth)
          if (g.clip_id == clip && g.frame == frame && g.classes[k]) gts.push_back(g.box);
        const auto got = match_detections(preds, gts);
        const auto want = oracle_match(preds, gts, 0.5);
        const auto tp = [](const std::vector<bool>& v) { return std::count(v.begin(), v.end(), true); };
        ++match_sets;
        match_mismatch += tp(got) != tp(want) || got != want;
      }
  }
  return {ap_mismatch == 0 && match_mismatch == 0,
          fmt("500 instances: %ld class APs, %ld mismatches (max |diff| %.3g); %ld frame/class matchings, %ld "
              "disagreements",
              ap_checked, ap_mismatch, worst, match_sets, match_mismatch)};
}

// ---------------------------------------------------------------------------
// 4. Positional encoding.

Outcome positional() {
  const int d = 64;
  std::vector<Vec<double>> all;
  for (int i = 0; i < 8; ++i)
    for (int t = 0; t < 512; ++t) all.push_back(positional_encoding<double>(t, i, d));
  double closest = std::numeric_limits<double>::infinity();
  long equal = 0;
  for (std::size_t a = 0; a < all.size(); ++a)
    for (std::size_t b = a + 1; b < all.size(); ++b) {
      const double dist = (all[a] - all[b]).norm();
      closest = std::min(closest, dist);
      equal += all[a] == all[b];
    }
  const Vec<double> z = positional_encoding<double>(0, 0, d);
  bool pattern = true;
  for (int k = 0; k < d; ++k) pattern &= z[k] == (k % 2 ? 1.0 : 0.0);
  const Vec<double> p = positional_encoding<double>(3, 7, 8);
  const double e0 = std::abs(p[0] - std::sin(3.0)), e4 = std::abs(p[4] - std::sin(7.0));
  return {equal == 0 && pattern && e0 <= 1e-9 && e4 <= 1e-9,
          fmt("4096 vectors, %ld equal pairs, closest distance %.4g; zero pattern %s; |PE(3,7,8)[0]-sin 3| = %.2g, "
              "|PE(3,7,8)[4]-sin 7| = %.2g",
              equal, closest, pattern ? "exact" : "wrong", e0, e4)};
}

// ---------------------------------------------------------------------------
// 5. Memorizing four noiseless clips.

Outcome overfit() {
  GeneratorConfig g = small_config(41, 2, 24);
  g.movement_switch_p = 0;
  g.gap_rate = 0;
  const auto clips = generate_dataset(g, 4);
  Model m(ModelConfig::tiny(), tiny_tokens(2, 24));
  m.init(7);
  InferenceConfig inf;
  inf.n_tracks = 2;
  const Evaluator ev(inf);

  TrainConfig c = TrainConfig::finetune_defaults();
  c.total_epochs = 500;
  c.warmup_epochs = 5;
  c.batch_size = 4;
  c.base_lr = 2e-3;
  c.dropout = 0;
  c.drop_path = 0;
  c.layer_wise_decay = 1;
  c.eval_every = 10;
  c.seed = 3;
  AdamState<Real> opt;
  const StageOptions options{&clips, &ev};
  const TrainReport r = finetune(m, opt, clips, c, options);
  int reached = -1;
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
    if (r.epoch_loss[e] < 0.05 && r.epoch_map[e] == 1.0) {
      reached = static_cast<int>(e) + 1;
      break;
    }
  const double final_map = ev.evaluate(m, clips).map_or_nan();
  return {reached > 0 && loss_decreased(r),
          fmt("loss < 0.05 with mAP 1.0 first at epoch %d; after 500 epochs loss %.4f, mAP %.4f; loss decreased: %s",
              reached, r.epoch_loss.back(), final_map, loss_decreased(r) ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 6, 7. Trend reproduction with the ablation harness.

AblationConfig ablation_base(int train, int eval, int epochs) {
  AblationConfig a;
  a.train_clips = train;
  a.eval_clips = eval;
  a.seeds = {1, 2, 3};
  a.pretrain.total_epochs = 0;
  a.finetune = TrainConfig::finetune_defaults();
  a.finetune.total_epochs = epochs;
  a.finetune.warmup_epochs = std::max(1, epochs / 6);
  a.finetune.batch_size = 8;
  return a;
}

std::string all_losses_decreased(const AblationReport& r, bool& ok) {
  int down = 0;
  for (const auto& run : r.runs) down += run.loss_decreased;
  ok = down == static_cast<int>(r.runs.size());
  return fmt("training loss decreased on %d of %zu runs", down, r.runs.size());
}

Outcome appearance_trend() {
  AblationConfig a = ablation_base(400, 100, 15);
  a.arms = appearance_arms(5);
  const AblationReport r = ablation_suite(a);
  std::string detail;
  int ordered = 0;
  for (auto seed : a.seeds) {
    const double app = r.run("appearance", seed).eval.map_or_nan();
    const double fused = r.run("appearance+pose", seed).eval.map_or_nan();
    ordered += app < fused;
    detail += fmt("seed %llu: appearance %.4f < appearance+pose %.4f (gap %+.4f); ",
                  static_cast<unsigned long long>(seed), app, fused, fused - app);
  }
  bool losses = false;
  detail += all_losses_decreased(r, losses);
  return {ordered == 3 && losses, detail};
}

Outcome multi_person_trend() {
  AblationConfig a = ablation_base(300, 100, 40);
  a.data.pair_fraction = 1.0;
  a.arms = pose_arms(5);
  const AblationReport r = ablation_suite(a);

  std::vector<double> median, spread;
  std::string detail = "median mAP by N:";
  for (int n = 1; n <= 5; ++n) {
    const std::string arm = "pose-n" + std::to_string(n);
    std::vector<double> v;
    for (auto seed : a.seeds) v.push_back(r.run(arm, seed).eval.map_or_nan());
    std::sort(v.begin(), v.end());
    median.push_back(v[1]);
    spread.push_back(r.stats(arm, metric_map).second);
    detail += fmt(" %.4f", v[1]);
  }
  int inversions = 0;
  bool within = true;
  for (std::size_t i = 0; i + 1 < median.size(); ++i)
    if (median[i + 1] < median[i]) {
      ++inversions;
      within &= median[i] - median[i + 1] <= std::max(spread[i], spread[i + 1]);
    }
  const bool monotone = inversions == 0 || (inversions == 1 && within);
  detail += fmt(" (%d inversions); ", inversions);

  int pi_wins = 0, pi_total = 0;
  for (auto seed : a.seeds) {
    const double pi1 = metric_pi(r.run("pose-n1", seed).eval);
    for (int n = 2; n <= 5; ++n) {
      ++pi_total;
      pi_wins += metric_pi(r.run("pose-n" + std::to_string(n), seed).eval) > pi1;
    }
    detail += fmt("seed %llu PI N=1 %.4f vs N=5 %.4f; ", static_cast<unsigned long long>(seed), pi1,
                  metric_pi(r.run("pose-n5", seed).eval));
  }
  detail += fmt("PI(N>=2) > PI(1) in %d of %d; ", pi_wins, pi_total);
  bool losses = false;
  detail += all_losses_decreased(r, losses);
  return {monotone && pi_wins == pi_total && losses, detail};
}

// ---------------------------------------------------------------------------
// 8. Recipe values in manifests emitted by default stage runs.

Outcome recipe() {
  Scratch s("recipe");
  const std::string d = s.path.string();
  if (cli({"gen", "-o", d + "/data", "--train-clips", "2", "--eval-clips", "0"}) != 0 ||
      cli({"pretrain", "-d", d + "/data", "-o", d + "/pre"}) != 0 ||
      cli({"finetune", "-d", d + "/data", "-o", d + "/ft", "--checkpoint", d + "/pre/checkpoint.bin"}) != 0)
    return {false, "default pipeline failed"};
  const auto pre = nlohmann::json::parse(slurp(s.path / "pre/manifest.json"))["config"];
  const auto ft = nlohmann::json::parse(slurp(s.path / "ft/manifest.json"))["config"];
  const std::vector<std::tuple<std::string, std::string, std::string>> want = {
      {"beta1", "0.9", "0.9"},        {"beta2", "0.95", "0.95"},        {"weight_decay", "0.05", "0.05"},
      {"warmup_epochs", "5", "5"},    {"base_lr", "0.001", "0.001"},    {"batch_size", "64", "64"},
      {"total_epochs", "30", "30"},   {"mask_ratio", "0.4", "0"},       {"layer_wise_decay", "1", "0.9"},
      {"drop_path", "0", "0.1"},
  };
  std::string bad;
  for (const auto& [key, p, f] : want) {
    if (pre.value("pretrain." + key, "?") != p) bad += " pretrain." + key + "=" + pre.value("pretrain." + key, "?");
    if (ft.value("finetune." + key, "?") != f) bad += " finetune." + key + "=" + ft.value("finetune." + key, "?");
  }
  TrainConfig c = TrainConfig::pretrain_defaults();
  const bool schedule = lr_at(25, 10, c) == 5e-4 && lr_at(50, 10, c) == 1e-3 && lr_at(299, 10, c) == 0.0;
  return {bad.empty() && schedule,
          (bad.empty() ? std::string("all 20 stage values verbatim in manifests") : "mismatched:" + bad) +
              fmt("; schedule warmup-midpoint %.17g, peak %.17g, terminal %.17g", lr_at(25, 10, c), lr_at(50, 10, c),
                  lr_at(299, 10, c))};
}

// ---------------------------------------------------------------------------
// 9. Two full pipeline runs with one root seed, at different thread counts.

Outcome determinism() {
  Scratch s("determinism");
  const fs::path home = fs::current_path();
  const std::vector<std::string> quick = {"--seed", "11", "--set", "pretrain.total_epochs=3", "--set",
                                          "pretrain.warmup_epochs=1", "--set", "finetune.total_epochs=3", "--set",
                                          "finetune.warmup_epochs=1", "--set", "pretrain.batch_size=8", "--set",
                                          "finetune.batch_size=8"};
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), quick.begin(), quick.end());
    return a;
  };
  int failures = 0;
  for (const char* run : {"a", "b"}) {
    fs::create_directories(s.path / run);
    fs::current_path(s.path / run);
    ::setenv("LART_THREADS", std::string(run) == "a" ? "1" : "3", 1);
    failures += cli(with({"gen", "-o", "data", "--train-clips", "16", "--eval-clips", "8"})) != 0;
    failures += cli(with({"pretrain", "-d", "data", "-o", "pre"})) != 0;
    failures += cli(with({"finetune", "-d", "data", "-o", "ft", "--checkpoint", "pre/checkpoint.bin"})) != 0;
    failures += cli(with({"eval", "--checkpoint", "ft/checkpoint.bin", "-d", "data", "-o", "ev"})) != 0;
  }
  fs::current_path(home);
  ::unsetenv("LART_THREADS");
  long files = 0, differing = 0;
  std::string first_diff;
  for (const auto& e : fs::recursive_directory_iterator(s.path / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), s.path / "a");
    ++files;
    if (!fs::exists(s.path / "b" / rel) || slurp(e.path()) != slurp(s.path / "b" / rel)) {
      ++differing;
      if (first_diff.empty()) first_diff = rel.string();
    }
  }
  return {failures == 0 && files > 30 && differing == 0,
          fmt("%d failed commands; %ld files compared (clips, checkpoints, reports, manifests), %ld differ%s%s",
              failures, files, differing, first_diff.empty() ? "" : ", first: ", first_diff.c_str())};
}

// ---------------------------------------------------------------------------
// 10. Pooling of per-frame sigmoid outputs.

Outcome pooling() {
  long windows = 0, full = 0, centers = 0, bad = 0;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    GeneratorConfig g = small_config(seed, 3, 60);
    g.gap_rate = 0.15;
    const Clip c = generate_clip(g);
    Model m(ModelConfig::tiny(), tiny_tokens(3, 24));
    m.init(seed);
    for (const auto& t : c.tracklets) {
      for (int width : {12, 1}) {
        InferenceConfig cfg;
        cfg.n_tracks = 3;
        cfg.pooling_width = width;
        Rng rng(seed);
        const PredictionTrack p = infer_poi(c, t.track_id, m, cfg, rng);
        const int first = p.start_frame, last = first + static_cast<int>(p.per_frame.rows()) - 1;
        for (std::size_t r = 0; r < p.pooled_frames.size(); ++r) {
          const int center = p.pooled_frames[r];
          RowVec<double> sum = RowVec<double>::Zero(p.per_frame.cols());
          int count = 0;
          for (int f = center - width / 2; f < center - width / 2 + width; ++f)
            if (f >= first && f <= last) {
              sum += p.per_frame.row(f - first);
              ++count;
            }
          const double err = (p.pooled.row(static_cast<Eigen::Index>(r)) - sum / count).cwiseAbs().maxCoeff();
          worst = std::max(worst, err);
          ++windows;
          full += count == 12;
          if (width == 1) {
            ++centers;
            bad += !(p.pooled.row(static_cast<Eigen::Index>(r)) == p.per_frame.row(center - first));
          }
          bad += err > 1e-12;
        }
      }
    }
  }
  return {bad == 0 && full > 50 && centers > 50,
          fmt("%ld pooled windows (%ld with all 12 frames inside the track), max |pooled - mean| %.3g; %ld width-1 "
              "rows equal the center frame; %ld violations",
              windows, full, worst, centers, bad)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"gradient correctness", gradients},          {"masking isolation", isolation},
      {"evaluator oracle equivalence", oracles},    {"positional-encoding contract", positional},
      {"overfit sanity", overfit},                  {"appearance vs appearance+pose trend", appearance_trend},
      {"multi-person trend", multi_person_trend},   {"recipe fidelity", recipe},
      {"determinism", determinism},                 {"pooling contract", pooling},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << "criterion " << id << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << " ("
              << fmt("%.1f s", secs) << ") " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
