#pragma once

#include "lart/transformer.hpp"

#include <filesystem>
#include <limits>
#include <map>

namespace lart {

using Model = LartModel<Real>;

enum class Stage { Pretrain, Finetune };

std::string_view to_string(Stage s);

/// Optimizer and schedule recipe. Defaults follow the two-stage recipe:
/// pretrain uses mask ratio 0.4 without layer-wise decay or drop path;
/// finetune uses mask ratio 0, layer-wise decay 0.9 and drop path 0.1.
struct TrainConfig {
  Stage stage = Stage::Pretrain;
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  int warmup_epochs = 5;
  int total_epochs = 30;
  int batch_size = 64;
  double mask_ratio = 0.4;
  double layer_wise_decay = 1.0;  // 1.0 = none
  double dropout = 0.1;
  double drop_path = 0.0;
  double grad_clip = 1.0;  // global-norm clip; 0 disables
  int eval_every = 0;      // epochs between evaluations; 0 = final epoch only
  std::uint64_t seed = 0;

  static TrainConfig pretrain_defaults();
  static TrainConfig finetune_defaults();

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  std::uint64_t hash() const;
};

/// Linear warmup from 0 to base_lr, then cosine decay reaching 0 at the last
/// step of the last epoch.
double lr_at(long step, long steps_per_epoch, const TrainConfig& cfg);

/// decay^(total_layers - layer_index), capped at 1 for the head.
double layerwise_lr(int layer_index, int total_layers, double decay);

template <typename Scalar>
struct AdamState {
  std::vector<Mat<Scalar>> m, v;
  long step = 0;     // applied updates
  long skipped = 0;  // updates skipped for non-finite gradients

  void reset(const nn::ParameterStore<Scalar>& store) {
    m.clear();
    v.clear();
    for (const auto& p : store.all()) {
      m.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
      v.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
    }
    step = 0;
    skipped = 0;
  }
};

/// Decoupled-weight-decay Adam update over every parameter of `store`, using
/// the gradient buffers. `lr_multiplier` maps a parameter depth to a factor.
/// Norm gains/biases, biases and the mask token are exempt from decay.
/// Returns false (and leaves parameters untouched) when a gradient is not finite.
template <typename Scalar, typename Multiplier>
bool optimizer_step(nn::ParameterStore<Scalar>& store, AdamState<Scalar>& state, double lr,
                    const TrainConfig& cfg, Multiplier&& lr_multiplier) {
  if (state.m.size() != store.size()) state.reset(store);
  for (const auto& p : store.all())
    if (!p.grad.allFinite()) {
      ++state.skipped;
      return false;
    }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto& params = store.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = Scalar(cfg.beta1) * m + Scalar(1 - cfg.beta1) * p.grad;
    v = Scalar(cfg.beta2) * v + Scalar(1 - cfg.beta2) * p.grad.cwiseAbs2();
    const Scalar step_lr = static_cast<Scalar>(lr * lr_multiplier(p.depth));
    const Scalar wd = p.group == nn::DecayGroup::Decay ? Scalar(cfg.weight_decay) : Scalar(0);
    const auto m_hat = m.array() / Scalar(c1);
    const auto v_hat = v.array() / Scalar(c2);
    p.value.array() -= step_lr * (m_hat / (v_hat.sqrt() + Scalar(cfg.eps)) + wd * p.value.array());
  }
  return true;
}

template <typename Scalar>
bool optimizer_step(nn::ParameterStore<Scalar>& store, AdamState<Scalar>& state, double lr,
                    const TrainConfig& cfg) {
  return optimizer_step(store, state, lr, cfg, [](int) { return 1.0; });
}

struct TrainReport {
  std::string stage;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_map;  // NaN where not evaluated
  std::vector<double> step_loss;
  std::map<int, double> layer_multipliers;  // depth -> lr multiplier
  double wall_clock_seconds = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  long steps = 0;
  long skipped_steps = 0;
  double mask_ratio = 0;
  double layer_wise_decay = 1;
  double drop_path = 0;
  TrainConfig config;

  // Deterministic JSON; wall-clock is excluded so repeated runs compare equal.
  std::string to_json() const;
  std::string to_csv() const;
};

/// Median step loss over the last 10% of steps is below the median over the
/// first 10%. Needs at least 10 steps.
bool loss_decreased(const TrainReport& r);

struct Checkpoint {
  ModelConfig model_config;
  TokenConfig token_config;
  std::unique_ptr<Model> model;
  AdamState<Real> optimizer;
  long step = 0;
  std::string manifest_hash;
};

inline constexpr std::string_view kCheckpointVersion = "lart-ckpt/1";

void save_checkpoint(const std::filesystem::path& path, const Model& model, const AdamState<Real>& optimizer,
                     long step, const std::string& manifest_hash);
/// Rejects files whose architecture differs from `expected` when given.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

class Evaluator;  // eval.hpp

/// Picks the grid window for a clip: trims the person of interest to the
/// model window (random start) and spans every track over those frames.
int choose_window_start(const Clip& c, int poi_track, int window, Rng& rng);

/// Training grid for one clip: random person of interest, uniformly sampled
/// supporting tracks, random trim, mask tokens at cfg.mask_ratio.
TokenGrid<Real> make_training_grid(const Clip& c, const Model& model, double mask_ratio, Rng& rng);

struct StageOptions {
  const std::vector<Clip>* eval_clips = nullptr;
  const Evaluator* evaluator = nullptr;
};

/// One training stage over `clips` (pseudo labels for pretraining, ground
/// truth for finetuning). Mutates model and optimizer state.
TrainReport train_stage(Model& model, AdamState<Real>& opt, const std::vector<Clip>& clips,
                        const TrainConfig& cfg, const StageOptions& options = {});

TrainReport pretrain(Model& model, AdamState<Real>& opt, const std::vector<Clip>& clips, TrainConfig cfg,
                     const StageOptions& options = {});
TrainReport finetune(Model& model, AdamState<Real>& opt, const std::vector<Clip>& clips, TrainConfig cfg,
                     const StageOptions& options = {});

}  // namespace lart
