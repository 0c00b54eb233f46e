#pragma once

#include "lart/scene.hpp"
#include "lart/trainer.hpp"

#include <optional>

namespace lart {

struct InferenceConfig {
  int n_tracks = 5;          // person of interest + N-1 supporting tracks
  int pooling_width = 12;    // frames averaged around each annotated frame
  double iou_threshold = 0.5;
  std::uint64_t seed = 0;    // supporting-track sampling

  void validate() const;
};

/// Per-frame class probabilities of one track, plus the pooled scores at the
/// annotated frames inside its lifetime.
struct PredictionTrack {
  int track_id = 0;
  int start_frame = 0;
  Mat<double> per_frame;           // lifetime frames x K, sigmoid outputs
  std::vector<int> pooled_frames;  // annotated frames
  Mat<double> pooled;              // pooled_frames.size() x K

  int end_frame() const { return start_frame + static_cast<int>(per_frame.rows()); }
};

/// Mean of the rows of `per_frame` (row r = frame first_frame + r) over the
/// window [center - width/2, center - width/2 + width), clamped to the rows
/// that exist. Width 1 is the center frame alone.
RowVec<double> pool_window(const Mat<double>& per_frame, int first_frame, int center, int width);

/// Runs the model over the track's lifetime in window-sized tiles with the
/// track at slot 0, gaps infilled by the mask token, and up to N-1 supporting
/// tracks drawn uniformly without replacement from `rng`.
PredictionTrack infer_poi(const Clip& c, int track_id, const Model& model, const InferenceConfig& cfg, Rng& rng);

struct ScoredBox {
  Box box;
  double score = 0;
};

/// Greedy matching in descending score order (ties keep input order). Entry k
/// is true when prediction k is a true positive.
std::vector<bool> match_detections(const std::vector<ScoredBox>& predictions, const std::vector<Box>& ground_truth,
                                   double iou_threshold = 0.5);

struct ScoredDecision {
  double score = 0;
  bool true_positive = false;
};

struct PrPoint {
  double recall = 0;
  double precision = 0;
};

/// All-point interpolated AP. Decisions with equal scores enter the curve
/// together, so the result depends only on the score order. Empty when there
/// are no positives.
std::optional<double> average_precision(std::vector<ScoredDecision> decisions, int num_positives,
                                        std::vector<PrPoint>* curve = nullptr);

// Flattened evaluation inputs: one record per (clip, frame, person).
struct DetectionRecord {
  std::string clip_id;
  int frame = 0;
  Box box;
  std::vector<double> scores;  // K
};

struct GroundTruthRecord {
  std::string clip_id;
  int frame = 0;
  Box box;
  MultiHot classes;  // K
};

struct EvalResult {
  ClassCatalog catalog;
  std::vector<std::optional<double>> ap;  // empty where a class has no positives
  std::vector<int> support;               // ground-truth positives per class
  std::vector<std::vector<PrPoint>> curves;
  std::optional<double> map;
  std::optional<double> pm, om, pi;       // category means over defined classes

  double map_or_nan() const { return map.value_or(std::nan("")); }
  std::optional<double> category_mean(Category c) const;
  std::string to_csv() const;
  std::string to_json() const;
  std::string summary() const;
  std::string pr_csv() const;  // class,recall,precision
};

EvalResult evaluate_detections(const std::vector<DetectionRecord>& detections,
                               const std::vector<GroundTruthRecord>& ground_truth, const ClassCatalog& catalog,
                               double iou_threshold = 0.5);

/// Scoring records at the annotated frames of `c`: every detected track with
/// an evaluable label contributes ground truth, every prediction a detection.
void collect_records(const Clip& c, const std::vector<PredictionTrack>& predictions,
                     std::vector<DetectionRecord>& detections, std::vector<GroundTruthRecord>& ground_truth);

class Evaluator {
 public:
  explicit Evaluator(InferenceConfig cfg) : cfg_(cfg) { cfg_.validate(); }
  const InferenceConfig& config() const { return cfg_; }

  std::vector<PredictionTrack> predict_clip(const Model& model, const Clip& c, std::size_t clip_index) const;
  EvalResult evaluate(const Model& model, const std::vector<Clip>& clips) const;

 private:
  InferenceConfig cfg_;
};

// ---------------------------------------------------------------------------
// Ablations

struct AblationArm {
  std::string name;
  TokenMode mode = TokenMode::PoseOnly;
  int n_tracks = 5;
};

struct AblationConfig {
  GeneratorConfig data;           // base generator config; seed is replaced per run
  int train_clips = 64;
  int eval_clips = 32;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  ModelConfig model = ModelConfig::tiny();
  int window = 24;
  int pose_embed = 32;            // fused split; pose-only and appearance-only use d_model
  TrainConfig pretrain;           // total_epochs 0 skips pretraining
  TrainConfig finetune;
  InferenceConfig inference;
  std::vector<AblationArm> arms;
  std::string baseline;           // arm whose APs the gains are measured against

  void validate() const;
};

/// appearance-only and fused arms over N tracks (the tracking/pose ablation).
std::vector<AblationArm> appearance_arms(int n_tracks);
/// pose-only arms N = 1..max_n (the multi-person ablation).
std::vector<AblationArm> pose_arms(int max_n);

struct ArmResult {
  std::string arm;
  std::uint64_t seed = 0;
  EvalResult eval;
  double final_train_loss = 0;
  bool loss_decreased = false;  // finetune stage, see loss_decreased()
};

struct AblationReport {
  std::vector<AblationArm> arms;
  std::vector<std::uint64_t> seeds;
  std::vector<ArmResult> runs;  // arm-major
  std::string baseline;

  const ArmResult& run(const std::string& arm, std::uint64_t seed) const;
  // Mean and sample standard deviation over seeds of an arm's metric.
  std::pair<double, double> stats(const std::string& arm, double (*metric)(const EvalResult&)) const;

  std::string to_csv() const;        // arm,seed,map,pm,om,pi
  std::string summary_csv() const;   // arm,map_mean,map_std,...
  std::string gains_csv() const;     // class rows: per-arm AP gain over the baseline
  std::string to_json() const;
};

double metric_map(const EvalResult& r);
double metric_pi(const EvalResult& r);

/// Model + token configs for one arm.
std::pair<ModelConfig, TokenConfig> arm_configs(const AblationConfig& cfg, const AblationArm& arm);

/// Trains and evaluates every arm on identical data for every seed.
AblationReport ablation_suite(const AblationConfig& cfg);

}  // namespace lart
