#include "lart/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <sstream>

namespace lart {

void InferenceConfig::validate() const {
  if (n_tracks < 1) throw ConfigError("inference n_tracks must be at least 1");
  if (pooling_width < 1) throw ConfigError("pooling width must be at least 1");
  if (!(iou_threshold > 0) || iou_threshold > 1) throw ConfigError("iou threshold must lie in (0,1]");
}

RowVec<double> pool_window(const Mat<double>& per_frame, int first_frame, int center, int width) {
  if (width < 1) throw ConfigError("pooling width must be at least 1");
  const int last_frame = first_frame + static_cast<int>(per_frame.rows()) - 1;
  if (center < first_frame || center > last_frame) throw DataError("pooling center outside the predicted frames");
  const int lo = std::max(first_frame, center - width / 2);
  const int hi = std::min(last_frame, center - width / 2 + width - 1);
  return per_frame.middleRows(lo - first_frame, hi - lo + 1).colwise().mean();
}

PredictionTrack infer_poi(const Clip& c, int track_id, const Model& model, const InferenceConfig& cfg, Rng& rng) {
  cfg.validate();
  const Tracklet* tr = c.find_track(track_id);
  if (!tr) throw DataError("unknown track " + std::to_string(track_id) + " in clip " + c.clip_id);
  const TokenConfig& tcfg = model.token_config();
  if (cfg.n_tracks > tcfg.n_tracks)
    throw ConfigError("inference N=" + std::to_string(cfg.n_tracks) + " exceeds the model's " +
                      std::to_string(tcfg.n_tracks) + " grid rows");
  if (c.num_classes() != model.model_config().num_classes)
    throw ConfigError("clip class count does not match the model");

  std::vector<int> others;
  for (const auto& t : c.tracklets)
    if (t.track_id != track_id) others.push_back(t.track_id);
  const std::size_t take = std::min(others.size(), static_cast<std::size_t>(cfg.n_tracks - 1));
  for (std::size_t k = 0; k < take; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, others.size() - 1);
    std::swap(others[k], others[pick(rng)]);
  }
  others.resize(take);

  PredictionTrack p;
  p.track_id = track_id;
  const int first = std::max(0, tr->start_frame);
  const int end = std::min(c.num_frames, tr->end_frame());
  p.start_frame = first;
  const int k_classes = c.num_classes();
  p.per_frame = Mat<double>::Zero(std::max(0, end - first), k_classes);
  const int w = tcfg.window;
  const RowVec<Real> mask = model.mask_token();
  for (int tile = first; tile < end; tile += w) {
    const int start = std::max(0, std::min(tile, c.num_frames - w));
    TokenGrid<Real> g = assemble_grid<Real>(c, track_id, others, tcfg, start);
    infill_gaps(g, mask);
    const Mat<Real> logits = model.forward(g, Mode::Eval, nullptr, nullptr);
    for (int f = tile; f < std::min(tile + w, end); ++f) {
      const int q = g.index(0, f - start);
      for (int k = 0; k < k_classes; ++k) p.per_frame(f - first, k) = sigmoid(static_cast<double>(logits(q, k)));
    }
  }
  for (int f : annotated_frames(c.num_frames, c.fps))
    if (f >= first && f < end) p.pooled_frames.push_back(f);
  p.pooled.resize(static_cast<Eigen::Index>(p.pooled_frames.size()), k_classes);
  for (std::size_t r = 0; r < p.pooled_frames.size(); ++r)
    p.pooled.row(static_cast<Eigen::Index>(r)) = pool_window(p.per_frame, first, p.pooled_frames[r], cfg.pooling_width);
  return p;
}

std::vector<bool> match_detections(const std::vector<ScoredBox>& predictions, const std::vector<Box>& ground_truth,
                                   double iou_threshold) {
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predictions[a].score > predictions[b].score; });
  std::vector<bool> taken(ground_truth.size(), false), tp(predictions.size(), false);
  for (std::size_t i : order) {
    double best = iou_threshold;
    std::ptrdiff_t best_gt = -1;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (taken[g]) continue;
      const double o = iou(predictions[i].box, ground_truth[g]);
      if (o >= best) {
        if (best_gt < 0 || o > best) best_gt = static_cast<std::ptrdiff_t>(g);
        best = o;
      }
    }
    if (best_gt >= 0) {
      taken[static_cast<std::size_t>(best_gt)] = true;
      tp[i] = true;
    }
  }
  return tp;
}

std::optional<double> average_precision(std::vector<ScoredDecision> decisions, int num_positives,
                                        std::vector<PrPoint>* curve) {
  if (curve) curve->clear();
  if (num_positives <= 0) return std::nullopt;
  for (const auto& d : decisions)
    if (!std::isfinite(d.score)) throw DataError("average_precision: non-finite score");
  std::stable_sort(decisions.begin(), decisions.end(),
                   [](const ScoredDecision& a, const ScoredDecision& b) { return a.score > b.score; });
  std::vector<PrPoint> pts;
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < decisions.size();) {
    std::size_t j = i;
    for (; j < decisions.size() && decisions[j].score == decisions[i].score; ++j) (decisions[j].true_positive ? tp : fp)++;
    i = j;
    pts.push_back({static_cast<double>(tp) / num_positives, static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  if (curve) *curve = pts;
  for (std::size_t k = pts.size(); k-- > 1;) pts[k - 1].precision = std::max(pts[k - 1].precision, pts[k].precision);
  double ap = 0, prev_recall = 0;
  for (const auto& p : pts) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

// ---------------------------------------------------------------------------

namespace {

std::optional<double> mean_of(const std::vector<std::optional<double>>& v) {
  double sum = 0;
  int n = 0;
  for (const auto& x : v)
    if (x) {
      sum += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::string fmt(std::optional<double> v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(9);
  os << *v;
  return os.str();
}

nlohmann::ordered_json jopt(std::optional<double> v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); }

}  // namespace

std::optional<double> EvalResult::category_mean(Category c) const {
  std::vector<std::optional<double>> sel;
  for (std::size_t k = 0; k < catalog.size(); ++k)
    if (catalog[k].category == c) sel.push_back(ap[k]);
  return mean_of(sel);
}

std::string EvalResult::to_csv() const {
  std::ostringstream os;
  os << "class,category,support,ap\n";
  for (std::size_t k = 0; k < catalog.size(); ++k)
    os << catalog[k].name << ',' << to_string(catalog[k].category) << ',' << support[k] << ',' << fmt(ap[k]) << '\n';
  os << "mAP,all,," << fmt(map) << '\n';
  os << "PM,PM,," << fmt(pm) << '\n';
  os << "OM,OM,," << fmt(om) << '\n';
  os << "PI,PI,," << fmt(pi) << '\n';
  return os.str();
}

std::string EvalResult::to_json() const {
  nlohmann::ordered_json j;
  j["map"] = jopt(map);
  j["PM"] = jopt(pm);
  j["OM"] = jopt(om);
  j["PI"] = jopt(pi);
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < catalog.size(); ++k)
    classes.push_back({{"name", catalog[k].name},
                       {"category", std::string(to_string(catalog[k].category))},
                       {"support", support[k]},
                       {"ap", jopt(ap[k])}});
  j["classes"] = classes;
  return j.dump(2) + "\n";
}

std::string EvalResult::summary() const {
  std::ostringstream os;
  os.precision(4);
  auto show = [&](const char* name, std::optional<double> v) {
    os << name << ' ';
    if (v)
      os << std::fixed << *v * 100;
    else
      os << "undefined";
    os << '\n';
  };
  show("mAP", map);
  show("PM ", pm);
  show("OM ", om);
  show("PI ", pi);
  for (std::size_t k = 0; k < catalog.size(); ++k) {
    os << "  " << catalog[k].name << " (" << to_string(catalog[k].category) << ", n=" << support[k] << ") ";
    if (ap[k])
      os << std::fixed << *ap[k] * 100;
    else
      os << "undefined";
    os << '\n';
  }
  return os.str();
}

std::string EvalResult::pr_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "class,recall,precision\n";
  for (std::size_t k = 0; k < curves.size(); ++k)
    for (const auto& p : curves[k]) os << catalog[k].name << ',' << p.recall << ',' << p.precision << '\n';
  return os.str();
}

EvalResult evaluate_detections(const std::vector<DetectionRecord>& detections,
                               const std::vector<GroundTruthRecord>& ground_truth, const ClassCatalog& catalog,
                               double iou_threshold) {
  const std::size_t k_classes = catalog.size();
  using FrameKey = std::pair<std::string, int>;
  std::map<FrameKey, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> frames;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].scores.size() != k_classes) throw DataError("detection score vector has the wrong width");
    frames[{detections[i].clip_id, detections[i].frame}].first.push_back(i);
  }
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    if (ground_truth[i].classes.size() != k_classes) throw DataError("ground-truth label vector has the wrong width");
    frames[{ground_truth[i].clip_id, ground_truth[i].frame}].second.push_back(i);
  }

  EvalResult r;
  r.catalog = catalog;
  r.ap.assign(k_classes, std::nullopt);
  r.support.assign(k_classes, 0);
  r.curves.assign(k_classes, {});
  for (std::size_t k = 0; k < k_classes; ++k) {
    std::vector<ScoredDecision> decisions;
    int positives = 0;
    for (const auto& [key, idx] : frames) {
      std::vector<ScoredBox> preds;
      for (std::size_t i : idx.first) preds.push_back({detections[i].box, detections[i].scores[k]});
      std::vector<Box> gts;
      for (std::size_t i : idx.second)
        if (ground_truth[i].classes[k]) gts.push_back(ground_truth[i].box);
      positives += static_cast<int>(gts.size());
      const std::vector<bool> tp = match_detections(preds, gts, iou_threshold);
      for (std::size_t i = 0; i < preds.size(); ++i) decisions.push_back({preds[i].score, tp[i]});
    }
    r.support[k] = positives;
    r.ap[k] = average_precision(std::move(decisions), positives, &r.curves[k]);
  }
  r.map = mean_of(r.ap);
  r.pm = r.category_mean(Category::PM);
  r.om = r.category_mean(Category::OM);
  r.pi = r.category_mean(Category::PI);
  return r;
}

void collect_records(const Clip& c, const std::vector<PredictionTrack>& predictions,
                     std::vector<DetectionRecord>& detections, std::vector<GroundTruthRecord>& ground_truth) {
  for (int f : annotated_frames(c.num_frames, c.fps)) {
    for (const auto& t : c.tracklets) {
      const Detection* d = t.at(f);
      const LabelEntry* l = c.label(t.track_id, f);
      if (d && l && l->evaluable) ground_truth.push_back({c.clip_id, f, d->box, l->classes});
    }
    for (const auto& p : predictions) {
      const Tracklet* t = c.find_track(p.track_id);
      const Detection* d = t ? t->at(f) : nullptr;
      if (!d) continue;
      const auto it = std::find(p.pooled_frames.begin(), p.pooled_frames.end(), f);
      if (it == p.pooled_frames.end()) continue;
      const Eigen::Index r = it - p.pooled_frames.begin();
      std::vector<double> scores(static_cast<std::size_t>(p.pooled.cols()));
      for (Eigen::Index k = 0; k < p.pooled.cols(); ++k) scores[static_cast<std::size_t>(k)] = p.pooled(r, k);
      detections.push_back({c.clip_id, f, d->box, std::move(scores)});
    }
  }
}

std::vector<PredictionTrack> Evaluator::predict_clip(const Model& model, const Clip& c, std::size_t) const {
  // Keyed by clip id so results do not depend on dataset order.
  Rng rng = substream(cfg_.seed, "eval-support", fnv1a(c.clip_id));
  std::vector<PredictionTrack> out;
  for (const auto& t : c.tracklets) out.push_back(infer_poi(c, t.track_id, model, cfg_, rng));
  return out;
}

EvalResult Evaluator::evaluate(const Model& model, const std::vector<Clip>& clips) const {
  if (clips.empty()) throw DataError("evaluation dataset is empty");
  const ClassCatalog& catalog = clips.front().catalog;
  for (const auto& c : clips)
    if (c.catalog != catalog) throw DataError("clip " + c.clip_id + " uses a different class catalog");
  std::vector<std::vector<PredictionTrack>> preds(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) { preds[i] = predict_clip(model, clips[i], i); });
  std::vector<DetectionRecord> dets;
  std::vector<GroundTruthRecord> gts;
  for (std::size_t i = 0; i < clips.size(); ++i) collect_records(clips[i], preds[i], dets, gts);
  return evaluate_detections(dets, gts, catalog, cfg_.iou_threshold);
}

// ---------------------------------------------------------------------------

void AblationConfig::validate() const {
  data.validate();
  model.validate();
  if (pretrain.total_epochs > 0) pretrain.validate();
  finetune.validate();
  inference.validate();
  if (train_clips < 1 || eval_clips < 1) throw ConfigError("ablation needs at least one train and one eval clip");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  if (window < 1) throw ConfigError("window must be at least 1");
  if (arms.empty()) throw ConfigError("ablation needs at least one arm");
  std::set<std::string> names;
  for (const auto& a : arms) {
    if (a.n_tracks < 1) throw ConfigError("arm " + a.name + " needs n_tracks >= 1");
    if (!names.insert(a.name).second) throw ConfigError("duplicate arm name " + a.name);
  }
  if (!baseline.empty() && !names.count(baseline)) throw ConfigError("baseline arm " + baseline + " is not defined");
}

std::vector<AblationArm> appearance_arms(int n_tracks) {
  return {{"appearance", TokenMode::AppearanceOnly, n_tracks}, {"appearance+pose", TokenMode::Fused, n_tracks}};
}

std::vector<AblationArm> pose_arms(int max_n) {
  std::vector<AblationArm> arms;
  for (int n = 1; n <= max_n; ++n) arms.push_back({"pose-n" + std::to_string(n), TokenMode::PoseOnly, n});
  return arms;
}

std::pair<ModelConfig, TokenConfig> arm_configs(const AblationConfig& cfg, const AblationArm& arm) {
  const int d = cfg.model.d_model;
  TokenConfig t;
  switch (arm.mode) {
    case TokenMode::PoseOnly: t = TokenConfig::pose_only(d); break;
    case TokenMode::AppearanceOnly: t = TokenConfig::appearance_only(d); break;
    case TokenMode::Fused: t = TokenConfig::fused(cfg.pose_embed, d - cfg.pose_embed); break;
  }
  t.n_tracks = arm.n_tracks;
  t.window = cfg.window;
  t.validate();
  return {cfg.model, t};
}

double metric_map(const EvalResult& r) { return r.map_or_nan(); }
double metric_pi(const EvalResult& r) { return r.pi.value_or(std::nan("")); }

const ArmResult& AblationReport::run(const std::string& arm, std::uint64_t seed) const {
  for (const auto& r : runs)
    if (r.arm == arm && r.seed == seed) return r;
  throw Error("no ablation run for arm " + arm + " seed " + std::to_string(seed));
}

std::pair<double, double> AblationReport::stats(const std::string& arm, double (*metric)(const EvalResult&)) const {
  std::vector<double> v;
  for (auto s : seeds) v.push_back(metric(run(arm, s).eval));
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
  return {mean, sd};
}

std::string AblationReport::to_csv() const {
  std::ostringstream os;
  os << "arm,seed,map,pm,om,pi,train_loss\n";
  for (const auto& a : arms)
    for (auto s : seeds) {
      const auto& r = run(a.name, s);
      os << a.name << ',' << s << ',' << fmt(r.eval.map) << ',' << fmt(r.eval.pm) << ',' << fmt(r.eval.om) << ','
         << fmt(r.eval.pi) << ',' << fmt(r.final_train_loss) << '\n';
    }
  return os.str();
}

std::string AblationReport::summary_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "arm,mode,n_tracks,map_mean,map_std,pi_mean,pi_std\n";
  for (const auto& a : arms) {
    const auto [m, ms] = stats(a.name, metric_map);
    const auto [p, ps] = stats(a.name, metric_pi);
    os << a.name << ',' << to_string(a.mode) << ',' << a.n_tracks << ',' << m << ',' << ms << ',' << p << ',' << ps
       << '\n';
  }
  return os.str();
}

std::string AblationReport::gains_csv() const {
  if (runs.empty()) return "";
  const std::string base = baseline.empty() ? arms.front().name : baseline;
  const ClassCatalog& catalog = runs.front().eval.catalog;
  // Mean AP over the seeds where the class is defined.
  auto class_mean = [&](const std::string& arm, std::size_t k) -> std::optional<double> {
    std::vector<std::optional<double>> v;
    for (auto s : seeds) v.push_back(run(arm, s).eval.ap[k]);
    return mean_of(v);
  };
  std::ostringstream os;
  os.precision(9);
  os << "class,category," << base;
  for (const auto& a : arms)
    if (a.name != base) os << ',' << a.name << "_gain";
  os << '\n';
  for (std::size_t k = 0; k < catalog.size(); ++k) {
    const auto b = class_mean(base, k);
    os << catalog[k].name << ',' << to_string(catalog[k].category) << ',' << fmt(b);
    for (const auto& a : arms) {
      if (a.name == base) continue;
      const auto v = class_mean(a.name, k);
      os << ',';
      if (b && v) os << *v - *b;
    }
    os << '\n';
  }
  return os.str();
}

std::string AblationReport::to_json() const {
  nlohmann::ordered_json j;
  j["baseline"] = baseline;
  j["seeds"] = seeds;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& a : arms) {
    nlohmann::ordered_json aj;
    aj["name"] = a.name;
    aj["mode"] = std::string(to_string(a.mode));
    aj["n_tracks"] = a.n_tracks;
    const auto [m, ms] = stats(a.name, metric_map);
    const auto [p, ps] = stats(a.name, metric_pi);
    aj["map_mean"] = m;
    aj["map_std"] = ms;
    aj["pi_mean"] = p;
    aj["pi_std"] = ps;
    nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
    for (auto s : seeds) {
      const auto& r = run(a.name, s);
      per_seed.push_back({{"seed", s}, {"map", jopt(r.eval.map)}, {"PM", jopt(r.eval.pm)}, {"OM", jopt(r.eval.om)},
                          {"PI", jopt(r.eval.pi)}, {"train_loss", r.final_train_loss},
                          {"loss_decreased", r.loss_decreased}});
    }
    aj["runs"] = per_seed;
    arr.push_back(aj);
  }
  j["arms"] = arr;
  return j.dump(2) + "\n";
}

AblationReport ablation_suite(const AblationConfig& cfg) {
  cfg.validate();
  AblationReport report;
  report.arms = cfg.arms;
  report.seeds = cfg.seeds;
  report.baseline = cfg.baseline.empty() ? cfg.arms.front().name : cfg.baseline;
  bool need_appearance = false;
  for (const auto& a : cfg.arms) need_appearance |= a.mode != TokenMode::PoseOnly;

  for (std::uint64_t seed : cfg.seeds) {
    GeneratorConfig data = cfg.data;
    data.seed = seed;
    data.with_appearance = data.with_appearance || need_appearance;
    const std::vector<Clip> train = generate_dataset(data, cfg.train_clips, 0);
    const std::vector<Clip> eval = generate_dataset(data, cfg.eval_clips, cfg.train_clips);
    std::vector<Clip> pseudo;
    if (cfg.pretrain.total_epochs > 0) {
      for (std::size_t i = 0; i < train.size(); ++i)
        pseudo.push_back(with_pseudo_labels(train[i], teacher_pseudo_label(train[i], data.teacher_flip_p,
                                                                             seed * 1000003ULL + i)));
    }
    for (const auto& arm : cfg.arms) {
      const auto [mc, tc] = arm_configs(cfg, arm);
      Model model(mc, tc);
      model.init(seed);
      TrainReport last;
      if (cfg.pretrain.total_epochs > 0) {
        AdamState<Real> opt;
        TrainConfig p = cfg.pretrain;
        p.seed = seed;
        last = pretrain(model, opt, pseudo, p);
      }
      AdamState<Real> opt;
      TrainConfig f = cfg.finetune;
      f.seed = seed;
      last = finetune(model, opt, train, f);
      InferenceConfig inf = cfg.inference;
      inf.n_tracks = arm.n_tracks;
      inf.seed = seed;
      ArmResult r;
      r.arm = arm.name;
      r.seed = seed;
      r.eval = Evaluator(inf).evaluate(model, eval);
      r.final_train_loss = last.epoch_loss.empty() ? std::nan("") : last.epoch_loss.back();
      r.loss_decreased = loss_decreased(last);
      report.runs.push_back(std::move(r));
    }
  }
  return report;
}

}  // namespace lart
