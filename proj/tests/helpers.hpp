#pragma once

#include "lart/eval.hpp"

#include <functional>
#include <numeric>
#include <set>
#include <sstream>

namespace lart::testing {

// Rotation from a unit quaternion (w, x, y, z), written out explicitly so the
// tests do not lean on the code under test.
inline Eigen::Matrix3d quaternion_matrix(double w, double x, double y, double z) {
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
       2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
       2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return r;
}

inline Rotation random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return quaternion_matrix(q[0], q[1], q[2], q[3]).cast<float>();
}

inline PersonPose random_pose(Rng& rng) {
  std::normal_distribution<float> n(0, 1);
  PersonPose p;
  for (auto& r : p.theta) r = random_rotation(rng);
  p.psi = random_rotation(rng);
  for (int i = 0; i < kShapeDims; ++i) p.beta[i] = n(rng);
  p.location = Eigen::Vector3f(n(rng), n(rng), 5 + n(rng));
  return p;
}

inline GeneratorConfig small_config(std::uint64_t seed, int people = 3, int frames = 24) {
  GeneratorConfig g;
  g.seed = seed;
  g.n_people = people;
  g.num_frames = frames;
  return g;
}

inline std::string clip_text(const Clip& c) {
  std::ostringstream os;
  write_clip(c, os);
  return os.str();
}

inline Clip clip_from_text(const std::string& text) {
  std::istringstream is(text);
  return read_clip(is);
}

// Model and grid for the tiny profile.
template <typename Scalar>
struct TinySetup {
  LartModel<Scalar> model;
  TokenGrid<Scalar> grid;
};

inline TokenConfig tiny_tokens(int n_tracks, int window, TokenMode mode = TokenMode::PoseOnly) {
  TokenConfig t;
  switch (mode) {
    case TokenMode::PoseOnly: t = TokenConfig::pose_only(64); break;
    case TokenMode::AppearanceOnly: t = TokenConfig::appearance_only(64); break;
    case TokenMode::Fused: t = TokenConfig::fused(32, 32); break;
  }
  t.n_tracks = n_tracks;
  t.window = window;
  return t;
}

struct GradCheck {
  long checked = 0;
  long failures = 0;
  double worst_excess = 0;  // largest |fd - an| / tolerance seen
  std::string worst;
};

// Central differences against the gradient buffers of `store`. `loss(true)`
// must zero nothing, run forward + backward and return the loss; `loss(false)`
// only evaluates. Tensors with at most `exhaustive` entries are checked
// entirely, larger ones at `samples` random entries.
template <typename LossFn>
GradCheck gradient_check(nn::ParameterStore<double>& store, LossFn&& loss, int samples, long exhaustive,
                         std::uint64_t seed, double h = 1e-6) {
  store.zero_grad();
  loss(true);
  GradCheck r;
  Rng pick(seed);
  for (auto& p : store.all()) {
    std::vector<Eigen::Index> idx;
    if (p.value.size() <= exhaustive) {
      for (Eigen::Index i = 0; i < p.value.size(); ++i) idx.push_back(i);
    } else {
      std::uniform_int_distribution<Eigen::Index> u(0, p.value.size() - 1);
      for (int s = 0; s < samples; ++s) idx.push_back(u(pick));
    }
    for (Eigen::Index i : idx) {
      double& x = p.value.data()[i];
      const double keep = x;
      x = keep + h;
      const double up = loss(false);
      x = keep - h;
      const double down = loss(false);
      x = keep;
      const double fd = (up - down) / (2 * h);
      const double an = p.grad.data()[i];
      const double tol = std::max(1e-4 * std::max(std::abs(fd), std::abs(an)), 1e-6);
      const double excess = std::abs(fd - an) / tol;
      ++r.checked;
      if (excess > 1) ++r.failures;
      if (excess > r.worst_excess) {
        r.worst_excess = excess;
        r.worst = p.name + "[" + std::to_string(i) + "] fd=" + std::to_string(fd) + " an=" + std::to_string(an);
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation oracles.

// AP by brute force over every distinct score threshold: precision and recall
// of "score >= tau", interpolated as the best precision at any threshold with
// at least that recall.
inline std::optional<double> oracle_ap(const std::vector<ScoredDecision>& d, int positives) {
  if (positives <= 0) return std::nullopt;
  std::vector<double> taus;
  for (const auto& x : d) taus.push_back(x.score);
  std::sort(taus.begin(), taus.end(), std::greater<>());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  std::vector<double> rec, prec;
  for (double tau : taus) {
    int tp = 0, n = 0;
    for (const auto& x : d)
      if (x.score >= tau) {
        ++n;
        tp += x.true_positive;
      }
    rec.push_back(static_cast<double>(tp) / positives);
    prec.push_back(static_cast<double>(tp) / n);
  }
  double ap = 0, prev = 0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    double best = 0;
    for (std::size_t j = 0; j < taus.size(); ++j)
      if (rec[j] >= rec[i]) best = std::max(best, prec[j]);
    ap += (rec[i] - prev) * best;
    prev = rec[i];
  }
  return ap;
}

// Matching by exhaustive enumeration of injective prediction -> ground-truth
// assignments with IoU >= threshold. Among all of them it keeps the one whose
// IoU sequence, read in descending score order (ties by input order), is
// lexicographically largest: the highest-scored prediction takes its best
// box first, and so on down the list.
inline std::vector<bool> oracle_match(const std::vector<ScoredBox>& preds, const std::vector<Box>& gts,
                                      double threshold) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return preds[a].score > preds[b].score; });
  std::vector<int> current(preds.size(), -1), best_assign(preds.size(), -1);
  std::vector<double> best_key;
  std::vector<bool> used(gts.size(), false);
  std::function<void(std::size_t)> search = [&](std::size_t depth) {
    if (depth == order.size()) {
      std::vector<double> key;
      for (std::size_t i : order) key.push_back(current[i] < 0 ? -1.0 : iou(preds[i].box, gts[static_cast<std::size_t>(current[i])]));
      if (best_key.empty() || key > best_key) {
        best_key = key;
        best_assign = current;
      }
      return;
    }
    const std::size_t i = order[depth];
    current[i] = -1;
    search(depth + 1);
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || iou(preds[i].box, gts[g]) < threshold) continue;
      used[g] = true;
      current[i] = static_cast<int>(g);
      search(depth + 1);
      current[i] = -1;
      used[g] = false;
    }
  };
  search(0);
  std::vector<bool> tp(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) tp[i] = best_assign[i] >= 0;
  return tp;
}

// Random evaluation instance: a few frames with overlapping boxes, up to
// `max_detections` detections and `max_classes` classes. Scores are drawn
// from a coarse grid half of the time so ties occur.
struct EvalInstance {
  ClassCatalog catalog;
  std::vector<DetectionRecord> detections;
  std::vector<GroundTruthRecord> ground_truth;
};

inline EvalInstance random_eval_instance(Rng& rng, int max_detections = 40, int max_classes = 5) {
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> classes(1, max_classes), frames(1, 6), dets(0, max_detections);
  EvalInstance e;
  const int k = classes(rng);
  for (int i = 0; i < k; ++i) e.catalog.push_back({"c" + std::to_string(i), static_cast<Category>(i % 3)});
  const int n_dets = dets(rng);
  // About eight detections per frame keeps the exhaustive oracle cheap.
  const int n_frames = std::max(frames(rng), (n_dets + 7) / 8);
  const bool coarse = u(rng) < 0.5;
  auto jitter = [&](const Box& b) {
    const float s = static_cast<float>(u(rng) * 30);
    return Box{b.x0 + s * static_cast<float>(u(rng) - 0.5), b.y0 + s * static_cast<float>(u(rng) - 0.5),
               b.x1 + s * static_cast<float>(u(rng) - 0.5), b.y1 + s * static_cast<float>(u(rng) - 0.5)};
  };
  std::vector<std::vector<Box>> anchors(static_cast<std::size_t>(n_frames));
  for (int f = 0; f < n_frames; ++f) {
    const int people = 1 + static_cast<int>(u(rng) * 4);
    for (int p = 0; p < people; ++p) {
      const float x = static_cast<float>(u(rng) * 200), y = static_cast<float>(u(rng) * 200);
      const Box b{x, y, x + 40, y + 80};
      anchors[static_cast<std::size_t>(f)].push_back(b);
      MultiHot cls(static_cast<std::size_t>(k));
      for (auto& c : cls) c = u(rng) < 0.4;
      e.ground_truth.push_back({"clip", f, b, cls});
    }
  }
  for (int i = 0; i < n_dets; ++i) {
    const int f = static_cast<int>(u(rng) * n_frames);
    const auto& a = anchors[static_cast<std::size_t>(f)];
    const Box b = jitter(a[static_cast<std::size_t>(u(rng) * static_cast<double>(a.size()))]);
    std::vector<double> scores(static_cast<std::size_t>(k));
    for (auto& sc : scores) sc = coarse ? std::round(u(rng) * 5) / 5 : u(rng);
    e.detections.push_back({"clip", f, b, scores});
  }
  return e;
}

// Per-class APs of an instance computed with the oracles only.
inline std::vector<std::optional<double>> oracle_class_aps(const EvalInstance& e, double threshold = 0.5) {
  std::vector<std::optional<double>> out;
  for (std::size_t k = 0; k < e.catalog.size(); ++k) {
    std::vector<ScoredDecision> decisions;
    int positives = 0;
    std::set<int> frames;
    for (const auto& g : e.ground_truth) frames.insert(g.frame);
    for (const auto& d : e.detections) frames.insert(d.frame);
    for (int f : frames) {
      std::vector<ScoredBox> preds;
      std::vector<Box> gts;
      for (const auto& d : e.detections)
        if (d.frame == f) preds.push_back({d.box, d.scores[k]});
      for (const auto& g : e.ground_truth)
        if (g.frame == f && g.classes[k]) gts.push_back(g.box);
      positives += static_cast<int>(gts.size());
      const auto tp = oracle_match(preds, gts, threshold);
      for (std::size_t i = 0; i < preds.size(); ++i) decisions.push_back({preds[i].score, tp[i]});
    }
    out.push_back(oracle_ap(decisions, positives));
  }
  return out;
}

}  // namespace lart::testing
