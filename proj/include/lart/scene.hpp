#pragma once

#include "lart/tracklet.hpp"

#include <string>
#include <vector>

namespace lart {

// Synthetic action catalog: 4 PM, 2 OM, 6 PI classes.
enum ActionId : int {
  kStand = 0,
  kSit,
  kWalk,
  kRun,
  kCarryObject,
  kAnswerPhone,
  kHug,
  kHandshake,
  kFight,
  kDance,
  kListen,
  kTalk,
  kNumActions
};

const ClassCatalog& action_catalog();

// What an actor's body is scripted to do in an interaction. Only matching
// programs within the interaction radius produce PI labels.
enum class InteractionProgram { None, Hug, Handshake, Fight, Dance, Talk, Listen };

struct ScriptedActor {
  Eigen::Vector2f position = Eigen::Vector2f(0, 6);  // ground plane (x, z), meters
  Eigen::Vector2f velocity = Eigen::Vector2f::Zero();  // drift, m/s
  ActionId movement = kStand;                          // PM class
  // Optional change of PM class at `switch_time` seconds.
  ActionId movement_after = kStand;
  double switch_time = -1;
  bool answer_phone = false;
  bool carry_object = false;  // invisible to the body pose
  InteractionProgram program = InteractionProgram::None;
  int partner = -1;
  float facing = 0;  // yaw, radians; walking/running heads along it
  float amplitude_scale = 1;
  float phase = 0;
  ShapeCoeffs beta = ShapeCoeffs::Zero();
};

struct SceneScript {
  std::vector<ScriptedActor> actors;
};

struct GeneratorConfig {
  int n_people = 4;
  int num_frames = 24;
  int fps = 10;
  double gap_rate = 0.0;       // expected fraction of removed detections
  double mean_gap_length = 4;  // frames
  double interaction_radius = 1.0;
  double pair_fraction = 0.5;  // fraction of actors scripted into pairs
  double teacher_flip_p = 0.02;
  double appearance_fs = 1.0;  // Hz
  double appearance_sigma = 2.0;
  int appearance_half_window = 5;  // M, frames
  bool with_appearance = false;
  double movement_switch_p = 0.5;  // solo actors changing PM class mid-clip
  std::uint64_t appearance_seed = 7;  // fixes the provider map for a dataset
  std::uint64_t seed = 0;

  void validate() const;
};

/// Fixed random linear map from the 48-dim synthetic backbone input to the
/// 1152-dim appearance feature. The map factors through a rank-kBottleneck
/// space, so the noise dims corrupt the signal instead of sitting beside it.
struct AppearanceProviderSpec {
  static constexpr int kPoseSummary = 32;
  static constexpr int kContext = 8;
  static constexpr int kNoise = 8;
  static constexpr int kInputDims = kPoseSummary + kContext + kNoise;
  static constexpr int kBottleneck = 16;

  Eigen::MatrixXf weights;  // kAppearanceDims x kInputDims
  int half_window = 5;
};

AppearanceProviderSpec make_appearance_provider(std::uint64_t seed, int half_window);

SceneScript sample_script(const GeneratorConfig& cfg, Rng& rng);

/// Renders poses, boxes and labels of a script. Pure in (script, cfg).
Clip render_clip(const SceneScript& script, const GeneratorConfig& cfg, std::string clip_id);

/// Script sampling + rendering + occlusions (+ appearance when enabled).
Clip generate_clip(const GeneratorConfig& cfg);

/// Removes detections in contiguous gap episodes. Labels of removed frames
/// stay in the clip flagged unevaluable. Every track keeps >= 1 detection.
Clip apply_occlusions(const Clip& c, const GeneratorConfig& cfg);

/// Noisy 1 Hz teacher: flips each class bit of each anchor-frame label with
/// probability flip_p, then broadcasts it to every detection of that second.
LabelTable teacher_pseudo_label(const Clip& c, double flip_p, std::uint64_t seed);

/// Copy of `c` labeled by `labels` (pseudo source).
Clip with_pseudo_labels(const Clip& c, LabelTable labels);

/// Fills appearance features. Each sample time gets one vector, shared by
/// every frame nearer to it than to any other sample time.
Clip synth_appearance(const Clip& c, const AppearanceProviderSpec& spec, const GeneratorConfig& cfg);

// Sample frames (absolute) of a track spanning [start, end).
std::vector<int> appearance_sample_frames(int start, int end, int fps, double fs);

// Per-clip dataset helpers used by the CLI and the ablation harness.
GeneratorConfig clip_config(const GeneratorConfig& base, int index);
std::vector<Clip> generate_dataset(const GeneratorConfig& base, int count, int first_index = 0);

}  // namespace lart
