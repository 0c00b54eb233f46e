#include "lart/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lart {
namespace {

constexpr float kTwoPi = 2.0f * std::numbers::pi_v<float>;

// SMPL body joint order (pelvis excluded).
enum Joint : int {
  kLeftHip = 0, kRightHip, kSpine1, kLeftKnee, kRightKnee, kSpine2, kLeftAnkle, kRightAnkle,
  kSpine3, kLeftFoot, kRightFoot, kNeck, kLeftCollar, kRightCollar, kHead, kLeftShoulder,
  kRightShoulder, kLeftElbow, kRightElbow, kLeftWrist, kRightWrist, kLeftHand, kRightHand
};

// Joints whose mean rotation feeds the appearance provider's pose summary.
constexpr std::array<int, 10> kSummaryJoints = {kLeftHip,      kRightHip,      kLeftKnee,
                                                kRightKnee,    kSpine1,        kHead,
                                                kLeftShoulder, kRightShoulder, kLeftElbow,
                                                kRightElbow};

using RotVecs = std::array<Eigen::Vector3f, kNumJoints>;

// Sinusoidal joint program: rotvec[joint] += axis * (base + amp * sin(2 pi f t + phase)).
struct Oscillator {
  Joint joint;
  int axis;
  float base;
  float amp;
  float freq;
  float phase_offset = 0;
};

void apply(RotVecs& rv, std::initializer_list<Oscillator> program, float t, float scale,
           float phase) {
  for (const auto& o : program) {
    const float angle =
        o.base + scale * o.amp * std::sin(kTwoPi * o.freq * t + phase + o.phase_offset);
    rv[o.joint][o.axis] += angle;
  }
}

constexpr float kPi = std::numbers::pi_v<float>;

void movement_program(RotVecs& rv, ActionId movement, float t, float s, float ph) {
  switch (movement) {
    case kStand:
      apply(rv, {{kLeftShoulder, 2, -0.15f, 0, 0}, {kRightShoulder, 2, 0.15f, 0, 0}}, t, s, ph);
      break;
    case kSit:
      apply(rv, {{kLeftHip, 0, -1.5f, 0, 0}, {kRightHip, 0, -1.5f, 0, 0},
                 {kLeftKnee, 0, 1.6f, 0, 0}, {kRightKnee, 0, 1.6f, 0, 0},
                 {kSpine1, 0, 0.1f, 0, 0}},
            t, s, ph);
      break;
    case kWalk:
      apply(rv, {{kLeftHip, 0, 0, 0.45f, 1.0f}, {kRightHip, 0, 0, 0.45f, 1.0f, kPi},
                 {kLeftKnee, 0, 0.3f, 0.3f, 1.0f}, {kRightKnee, 0, 0.3f, 0.3f, 1.0f, kPi},
                 {kLeftShoulder, 0, 0, 0.35f, 1.0f, kPi}, {kRightShoulder, 0, 0, 0.35f, 1.0f},
                 {kLeftElbow, 0, 0.3f, 0, 0}, {kRightElbow, 0, 0.3f, 0, 0}},
            t, s, ph);
      break;
    case kRun:
      apply(rv, {{kLeftHip, 0, -0.2f, 0.9f, 2.4f}, {kRightHip, 0, -0.2f, 0.9f, 2.4f, kPi},
                 {kLeftKnee, 0, 0.8f, 0.6f, 2.4f}, {kRightKnee, 0, 0.8f, 0.6f, 2.4f, kPi},
                 {kLeftShoulder, 0, 0, 0.7f, 2.4f, kPi}, {kRightShoulder, 0, 0, 0.7f, 2.4f},
                 {kLeftElbow, 0, 1.4f, 0, 0}, {kRightElbow, 0, 1.4f, 0, 0},
                 {kSpine1, 0, 0.25f, 0, 0}},
            t, s, ph);
      break;
    default:
      break;
  }
}

void interaction_program(RotVecs& rv, InteractionProgram p, float t, float s, float ph) {
  switch (p) {
    case InteractionProgram::Hug:
      apply(rv, {{kLeftShoulder, 0, -1.3f, 0, 0}, {kRightShoulder, 0, -1.3f, 0, 0},
                 {kLeftElbow, 1, 1.0f, 0, 0}, {kRightElbow, 1, -1.0f, 0, 0},
                 {kSpine1, 0, 0.2f, 0, 0}},
            t, s, ph);
      break;
    case InteractionProgram::Handshake:
      apply(rv, {{kRightShoulder, 0, -0.7f, 0, 0}, {kRightElbow, 0, 0.5f, 0.15f, 2.0f}}, t, s,
            ph);
      break;
    case InteractionProgram::Fight:
      apply(rv, {{kLeftShoulder, 0, -0.9f, 0.6f, 3.0f}, {kRightShoulder, 0, -0.9f, 0.6f, 3.0f, kPi},
                 {kLeftElbow, 0, 1.2f, 0.6f, 3.0f}, {kRightElbow, 0, 1.2f, 0.6f, 3.0f, kPi},
                 {kSpine2, 1, 0, 0.2f, 3.0f}},
            t, s, ph);
      break;
    case InteractionProgram::Dance:
      apply(rv, {{kLeftShoulder, 2, -1.2f, 0.4f, 1.5f}, {kRightShoulder, 2, 1.2f, 0.4f, 1.5f},
                 {kLeftHip, 2, 0, 0.25f, 1.5f}, {kSpine1, 2, 0, 0.3f, 1.5f}},
            t, s, ph);
      break;
    case InteractionProgram::Talk:
      apply(rv, {{kHead, 0, 0, 0.15f, 2.0f}, {kRightShoulder, 0, -0.3f, 0, 0},
                 {kRightElbow, 0, 0.8f, 0.3f, 1.2f}},
            t, s, ph);
      break;
    case InteractionProgram::Listen:
    case InteractionProgram::None:
      break;
  }
}

Rotation rotation_from_rotvec(const Eigen::Vector3f& rv) {
  const float angle = rv.norm();
  if (angle == 0.0f) return Rotation::Identity();
  return Eigen::AngleAxisf(angle, rv / angle).toRotationMatrix();
}

Eigen::Vector3f rotvec_from_rotation(const Rotation& r) {
  const Eigen::AngleAxisf aa(r);
  return aa.axis() * aa.angle();
}

float movement_speed(ActionId m) {
  switch (m) {
    case kWalk: return 1.2f;
    case kRun: return 3.0f;
    default: return 0.0f;
  }
}

ActionId movement_at(const ScriptedActor& a, double t) {
  return (a.switch_time >= 0 && t >= a.switch_time) ? a.movement_after : a.movement;
}

Eigen::Vector2f position_at(const ScriptedActor& a, double t) {
  const Eigen::Vector2f heading(std::cos(a.facing), std::sin(a.facing));
  Eigen::Vector2f p = a.position + a.velocity * static_cast<float>(t);
  if (a.switch_time >= 0 && t > a.switch_time) {
    p += heading * movement_speed(a.movement) * static_cast<float>(a.switch_time);
    p += heading * movement_speed(a.movement_after) * static_cast<float>(t - a.switch_time);
  } else {
    p += heading * movement_speed(a.movement) * static_cast<float>(t);
  }
  return p;
}

bool programs_match(InteractionProgram a, InteractionProgram b) {
  using P = InteractionProgram;
  if (a == P::None || b == P::None) return false;
  if (a == P::Talk) return b == P::Listen;
  if (a == P::Listen) return b == P::Talk;
  return a == b;
}

ActionId program_action(InteractionProgram p) {
  switch (p) {
    case InteractionProgram::Hug: return kHug;
    case InteractionProgram::Handshake: return kHandshake;
    case InteractionProgram::Fight: return kFight;
    case InteractionProgram::Dance: return kDance;
    case InteractionProgram::Talk: return kTalk;
    case InteractionProgram::Listen: return kListen;
    case InteractionProgram::None: break;
  }
  return kNumActions;
}

// Pinhole camera used for boxes.
constexpr float kFocal = 700.0f;
constexpr float kCx = 640.0f;
constexpr float kCy = 360.0f;

PersonPose pose_at(const ScriptedActor& a, double t) {
  const float tf = static_cast<float>(t);
  RotVecs rv;
  rv.fill(Eigen::Vector3f::Zero());
  const ActionId movement = movement_at(a, t);
  // Idle sway common to everybody.
  apply(rv, {{kSpine1, 0, 0, 0.03f, 0.3f}}, tf, a.amplitude_scale, a.phase);
  movement_program(rv, movement, tf, a.amplitude_scale, a.phase);
  interaction_program(rv, a.program, tf, a.amplitude_scale, a.phase);
  if (a.answer_phone)
    apply(rv, {{kRightShoulder, 0, -0.6f, 0, 0}, {kRightShoulder, 2, 0.4f, 0, 0},
               {kRightElbow, 0, 2.2f, 0, 0}, {kHead, 2, 0.15f, 0, 0}},
          tf, a.amplitude_scale, a.phase);

  PersonPose p;
  for (int j = 0; j < kNumJoints; ++j) p.theta[j] = rotation_from_rotvec(rv[j]);
  p.psi = Eigen::AngleAxisf(-a.facing, Eigen::Vector3f::UnitY()).toRotationMatrix();
  p.beta = a.beta;
  const Eigen::Vector2f g = position_at(a, t);
  p.location = Eigen::Vector3f(g.x(), movement == kSit ? 0.45f : 0.0f, g.y());
  return p;
}

Box box_for(const PersonPose& p, ActionId movement) {
  const float z = std::max(p.location.z(), 0.5f);
  const float height = kFocal * (movement == kSit ? 1.25f : 1.7f) / z;
  const float width = 0.4f * height;
  const float u = kCx + kFocal * p.location.x() / z;
  const float v = kCy + kFocal * p.location.y() / z;
  return {u - 0.5f * width, v - 0.5f * height, u + 0.5f * width, v + 0.5f * height};
}

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

const ClassCatalog& action_catalog() {
  static const ClassCatalog catalog = {
      {"stand", Category::PM},        {"sit", Category::PM},
      {"walk", Category::PM},         {"run", Category::PM},
      {"carry_object", Category::OM}, {"answer_phone", Category::OM},
      {"hug", Category::PI},          {"handshake", Category::PI},
      {"fight", Category::PI},        {"dance", Category::PI},
      {"listen", Category::PI},       {"talk", Category::PI},
  };
  return catalog;
}

void GeneratorConfig::validate() const {
  require(n_people >= 1, "n_people must be at least 1");
  require(num_frames >= 2, "num_frames must be at least 2");
  require(fps >= 1, "fps must be positive");
  require(gap_rate >= 0 && gap_rate <= 1, "gap_rate must lie in [0,1]");
  require(mean_gap_length >= 1, "mean_gap_length must be at least 1 frame");
  require(interaction_radius > 0, "interaction_radius must be positive");
  require(pair_fraction >= 0 && pair_fraction <= 1, "pair_fraction must lie in [0,1]");
  require(teacher_flip_p >= 0 && teacher_flip_p <= 1, "teacher_flip_p must lie in [0,1]");
  require(movement_switch_p >= 0 && movement_switch_p <= 1,
          "movement_switch_p must lie in [0,1]");
  require(appearance_fs > 0, "appearance_fs must be positive");
  require(appearance_fs <= fps, "appearance_fs must not exceed fps (f_s <= f_FPS)");
  require(appearance_sigma >= 0, "appearance_sigma must be non-negative");
  require(appearance_half_window >= 1, "appearance_half_window must be at least 1");
}

AppearanceProviderSpec make_appearance_provider(std::uint64_t seed, int half_window) {
  if (half_window < 1) throw ConfigError("appearance half window must be at least 1");
  Rng rng = substream(seed, "appearance-provider");
  std::normal_distribution<float> normal(0.0f, 1.0f);
  constexpr int r = AppearanceProviderSpec::kBottleneck;
  constexpr int in = AppearanceProviderSpec::kInputDims;
  Eigen::MatrixXf down(r, in), up(kAppearanceDims, r);
  for (Eigen::Index i = 0; i < down.size(); ++i) down.data()[i] = normal(rng) / std::sqrt(float(in));
  for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = normal(rng) / std::sqrt(float(r));
  AppearanceProviderSpec spec;
  spec.weights = up * down;
  spec.half_window = half_window;
  return spec;
}

SceneScript sample_script(const GeneratorConfig& cfg, Rng& rng) {
  cfg.validate();
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  auto uniform = [&](float lo, float hi) { return lo + (hi - lo) * unit(rng); };
  auto coin = [&](double p) { return unit(rng) < p; };
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const double duration = static_cast<double>(cfg.num_frames) / cfg.fps;

  SceneScript script;
  script.actors.resize(static_cast<std::size_t>(cfg.n_people));
  for (auto& a : script.actors) {
    a.amplitude_scale = uniform(0.85f, 1.15f);
    a.phase = uniform(0.0f, kTwoPi);
    for (int i = 0; i < kShapeDims; ++i) a.beta[i] = 0.5f * normal(rng);
    a.carry_object = coin(0.3);
  }

  const int n_pairs = static_cast<int>(std::floor(cfg.n_people * cfg.pair_fraction / 2.0));
  int next = 0;
  for (int p = 0; p < n_pairs; ++p, next += 2) {
    auto& a = script.actors[static_cast<std::size_t>(next)];
    auto& b = script.actors[static_cast<std::size_t>(next + 1)];
    a.partner = next + 1;
    b.partner = next;
    using P = InteractionProgram;
    static constexpr P kPrograms[] = {P::Hug, P::Handshake, P::Fight, P::Dance, P::Talk};
    const P program = kPrograms[std::uniform_int_distribution<int>(0, 4)(rng)];
    a.program = program;
    b.program = program == P::Talk ? P::Listen : program;
    if (program == P::Talk && coin(0.5)) std::swap(a.program, b.program);
    // Occasionally only one side runs the program: pose without a label.
    if (coin(0.15)) (coin(0.5) ? a : b).program = P::None;
    // Posture is independent of the program so it says nothing about the
    // partner's role.
    const ActionId movement = coin(0.3) ? kSit : kStand;
    a.movement = a.movement_after = movement;
    b.movement = b.movement_after = movement;

    // Separation stays well inside the radius, well outside it, or crosses it.
    const float r = static_cast<float>(cfg.interaction_radius);
    auto near = [&] { return uniform(0.3f, 0.8f) * r; };
    auto far = [&] { return uniform(1.5f, 3.0f) * r; };
    const float mode = unit(rng);
    float d0, d1;
    if (mode < 0.4f) {
      d0 = near();
      d1 = near();
    } else if (mode < 0.7f) {
      d0 = far();
      d1 = far();
    } else {
      d0 = near();
      d1 = far();
      if (coin(0.5)) std::swap(d0, d1);
    }
    const float cx = uniform(-3.0f, 3.0f);
    const float cz = uniform(5.0f, 9.0f);
    const float approach = (d1 - d0) / static_cast<float>(duration);
    a.position = Eigen::Vector2f(cx - 0.5f * d0, cz);
    b.position = Eigen::Vector2f(cx + 0.5f * d0, cz);
    a.velocity = Eigen::Vector2f(-0.5f * approach, 0);
    b.velocity = Eigen::Vector2f(0.5f * approach, 0);
    a.facing = 0.0f;  // facing +x, toward the partner
    b.facing = kPi;
    // Hands are busy in hugs and handshakes.
    if (program == P::Hug || program == P::Handshake) a.answer_phone = b.answer_phone = false;
  }
  for (std::size_t i = static_cast<std::size_t>(next); i < script.actors.size(); ++i) {
    auto& a = script.actors[i];
    static constexpr ActionId kMoves[] = {kStand, kSit, kWalk, kRun};
    a.movement = kMoves[std::uniform_int_distribution<int>(0, 3)(rng)];
    a.movement_after = a.movement;
    if (coin(cfg.movement_switch_p)) {
      a.movement_after = kMoves[std::uniform_int_distribution<int>(0, 3)(rng)];
      a.switch_time = uniform(0.25f, 0.75f) * duration;
    }
    a.position = Eigen::Vector2f(uniform(-4.0f, 4.0f), uniform(4.0f, 10.0f));
    a.facing = uniform(0.0f, kTwoPi);
    a.answer_phone = a.movement != kRun && a.movement_after != kRun && coin(0.2);
    // A lone talker: talking pose with nobody listening.
    if (coin(0.1)) a.program = InteractionProgram::Talk;
  }
  return script;
}

Clip render_clip(const SceneScript& script, const GeneratorConfig& cfg, std::string clip_id) {
  cfg.validate();
  Clip c;
  c.clip_id = std::move(clip_id);
  c.fps = cfg.fps;
  c.num_frames = cfg.num_frames;
  c.catalog = action_catalog();
  const int n = static_cast<int>(script.actors.size());
  for (int i = 0; i < n; ++i) {
    Tracklet t;
    t.track_id = i + 1;
    t.start_frame = 0;
    c.tracklets.push_back(std::move(t));
  }
  const float radius = static_cast<float>(cfg.interaction_radius);
  for (int f = 0; f < cfg.num_frames; ++f) {
    const double time = static_cast<double>(f) / cfg.fps;
    for (int i = 0; i < n; ++i) {
      const auto& a = script.actors[static_cast<std::size_t>(i)];
      Detection d;
      d.person.pose = pose_at(a, time);
      const ActionId movement = movement_at(a, time);
      d.box = box_for(d.person.pose, movement);
      c.tracklets[static_cast<std::size_t>(i)].entries.emplace_back(std::move(d));

      LabelEntry label;
      label.classes.assign(kNumActions, 0);
      label.classes[movement] = 1;
      if (a.carry_object) label.classes[kCarryObject] = 1;
      if (a.answer_phone) label.classes[kAnswerPhone] = 1;
      if (a.partner >= 0 && a.partner < n) {
        const auto& b = script.actors[static_cast<std::size_t>(a.partner)];
        const float dist = (position_at(a, time) - position_at(b, time)).norm();
        if (programs_match(a.program, b.program) && dist <= radius)
          label.classes[program_action(a.program)] = 1;
      }
      c.labels.emplace(LabelKey{i + 1, f}, std::move(label));
    }
  }
  return c;
}

Clip generate_clip(const GeneratorConfig& cfg) {
  cfg.validate();
  Rng rng = substream(cfg.seed, "gen");
  const SceneScript script = sample_script(cfg, rng);
  Clip c = render_clip(script, cfg, "clip-" + hex64(cfg.seed));
  c = apply_occlusions(c, cfg);
  if (cfg.with_appearance) {
    const auto spec = make_appearance_provider(cfg.appearance_seed, cfg.appearance_half_window);
    c = synth_appearance(c, spec, cfg);
  }
  return c;
}

Clip apply_occlusions(const Clip& c, const GeneratorConfig& cfg) {
  if (cfg.gap_rate <= 0) return c;
  Clip out = c;
  const double rate = cfg.gap_rate;
  const double p_exit = 1.0 / cfg.mean_gap_length;
  // Two-state chain whose stationary gap fraction is `rate`.
  const double p_enter = rate >= 1 ? 1.0 : std::min(1.0, rate / (cfg.mean_gap_length * (1 - rate)));
  for (auto& t : out.tracklets) {
    Rng rng = substream(cfg.seed, "occlusion", static_cast<std::uint64_t>(t.track_id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    bool in_gap = unit(rng) < rate;
    std::vector<int> removed;
    for (int k = 0; k < t.length(); ++k) {
      if (k > 0) in_gap = in_gap ? (rate >= 1 || unit(rng) >= p_exit) : unit(rng) < p_enter;
      if (in_gap && t.entries[static_cast<std::size_t>(k)]) removed.push_back(k);
    }
    if (static_cast<int>(removed.size()) == t.num_present()) {
      // Keep one detection so the track survives.
      const std::size_t keep = std::uniform_int_distribution<std::size_t>(0, removed.size() - 1)(rng);
      removed.erase(removed.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    for (int k : removed) {
      t.entries[static_cast<std::size_t>(k)].reset();
      auto it = out.labels.find({t.track_id, t.start_frame + k});
      if (it != out.labels.end()) it->second.evaluable = false;
    }
  }
  return out;
}

LabelTable teacher_pseudo_label(const Clip& c, double flip_p, std::uint64_t seed) {
  if (flip_p < 0 || flip_p > 1) throw ConfigError("flip probability must lie in [0,1]");
  Rng rng = substream(seed, "teacher");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabelTable out;
  for (const auto& t : c.tracklets) {
    for (int sec_begin = 0; sec_begin < c.num_frames; sec_begin += c.fps) {
      const int sec_end = std::min(sec_begin + c.fps, c.num_frames);
      const int anchor =
          sec_begin + c.fps / 2 < sec_end ? sec_begin + c.fps / 2 : (sec_begin + sec_end - 1) / 2;
      const LabelEntry* src = nullptr;
      int best = c.num_frames + 1;
      for (int f = sec_begin; f < sec_end; ++f) {
        const LabelEntry* e = c.label(t.track_id, f);
        if (e && std::abs(f - anchor) < best) {
          best = std::abs(f - anchor);
          src = e;
        }
      }
      if (!src) continue;
      MultiHot bits = src->classes;
      for (auto& b : bits)
        if (unit(rng) < flip_p) b = static_cast<std::uint8_t>(1 - b);
      for (int f = sec_begin; f < sec_end; ++f)
        if (t.at(f)) out[{t.track_id, f}] = LabelEntry{bits, true};
    }
  }
  return out;
}

Clip with_pseudo_labels(const Clip& c, LabelTable labels) {
  Clip out = c;
  out.labels = std::move(labels);
  out.label_source = LabelSource::Pseudo;
  return out;
}

std::vector<int> appearance_sample_frames(int start, int end, int fps, double fs) {
  if (fs <= 0 || fs > fps) throw ConfigError("appearance_fs must lie in (0, fps]");
  const double step = fps / fs;
  std::vector<int> frames;
  for (int k = 0;; ++k) {
    const int f = start + static_cast<int>(std::lround(k * step));
    if (f >= end) break;
    if (frames.empty() || frames.back() != f) frames.push_back(f);
  }
  return frames;
}

Clip synth_appearance(const Clip& c, const AppearanceProviderSpec& spec,
                      const GeneratorConfig& cfg) {
  if (cfg.appearance_fs > c.fps) throw ConfigError("appearance_fs must not exceed fps (f_s <= f_FPS)");
  if (spec.weights.rows() != kAppearanceDims ||
      spec.weights.cols() != AppearanceProviderSpec::kInputDims)
    throw ConfigError("appearance provider map has the wrong shape");
  Clip out = c;
  const int m = spec.half_window;
  const float radius = static_cast<float>(cfg.interaction_radius);

  // Scene descriptor shared by every person of the clip.
  Rng scene_rng = substream(fnv1a(c.clip_id), "scene-descriptor");
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Eigen::Vector4f scene;
  for (int i = 0; i < 4; ++i) scene[i] = normal(scene_rng);

  auto nearest_present = [](const Tracklet& t, int frame) -> const Detection* {
    for (int d = 0; d < t.length(); ++d) {
      if (const auto* det = t.at(frame - d)) return det;
      if (const auto* det = t.at(frame + d)) return det;
    }
    return nullptr;
  };

  for (std::size_t ti = 0; ti < out.tracklets.size(); ++ti) {
    Tracklet& t = out.tracklets[ti];
    const auto samples = appearance_sample_frames(t.start_frame, t.end_frame(), c.fps, cfg.appearance_fs);
    std::vector<AppearanceRef> features(samples.size());
    for (int k = 0; k < t.length(); ++k) {
      auto& entry = t.entries[static_cast<std::size_t>(k)];
      if (!entry) continue;
      const int frame = t.start_frame + k;
      // Nearest sample time; ties go to the earlier sample.
      std::size_t best = 0;
      for (std::size_t s = 1; s < samples.size(); ++s)
        if (std::abs(samples[s] - frame) < std::abs(samples[best] - frame)) best = s;
      if (!features[best]) {
        const int s_frame = samples[best];
        Eigen::VectorXf x = Eigen::VectorXf::Zero(AppearanceProviderSpec::kInputDims);
        // Pose summary: mean joint rotvecs, height and first shape coefficient over the window.
        int count = 0;
        for (int f = s_frame - m; f <= s_frame + m; ++f) {
          const Detection* d = t.at(f);
          if (!d) continue;
          const auto& pose = d->person.pose;
          for (std::size_t j = 0; j < kSummaryJoints.size(); ++j)
            x.segment<3>(static_cast<Eigen::Index>(3 * j)) +=
                rotvec_from_rotation(pose.theta[static_cast<std::size_t>(kSummaryJoints[j])]);
          x[30] += pose.location.y();
          x[31] += pose.beta[0];
          ++count;
        }
        if (count == 0) {
          const auto& pose = entry->person.pose;
          for (std::size_t j = 0; j < kSummaryJoints.size(); ++j)
            x.segment<3>(static_cast<Eigen::Index>(3 * j)) =
                rotvec_from_rotation(pose.theta[static_cast<std::size_t>(kSummaryJoints[j])]);
          x[30] = pose.location.y();
          x[31] = pose.beta[0];
        } else {
          x.head<32>() /= static_cast<float>(count);
        }
        // Scene context.
        const Detection* self = t.at(s_frame) ? t.at(s_frame) : &*entry;
        const Eigen::Vector3f loc = self->person.pose.location;
        int carry = 0;
        for (int d = 0; d < c.num_frames && carry == 0; ++d) {
          const LabelEntry* e = c.label(t.track_id, s_frame - d);
          if (!e) e = c.label(t.track_id, s_frame + d);
          if (e) {
            carry = e->classes.size() > kCarryObject ? e->classes[kCarryObject] : 0;
            break;
          }
        }
        int neighbours = 0;
        for (std::size_t oi = 0; oi < c.tracklets.size(); ++oi) {
          if (oi == ti) continue;
          const Detection* od = nearest_present(c.tracklets[oi], s_frame);
          if (!od || !c.tracklets[oi].covers(s_frame)) continue;
          const Eigen::Vector3f ol = od->person.pose.location;
          if (Eigen::Vector2f(ol.x() - loc.x(), ol.z() - loc.z()).norm() <= radius) ++neighbours;
        }
        Eigen::VectorXf context(AppearanceProviderSpec::kContext);
        context << static_cast<float>(carry), static_cast<float>(neighbours),
            static_cast<float>(c.tracklets.size()) / 10.0f, scene[0], scene[1], scene[2], scene[3],
            1.0f;
        x.segment<AppearanceProviderSpec::kContext>(AppearanceProviderSpec::kPoseSummary) = context;
        Rng noise_rng = substream(cfg.seed ^ fnv1a(c.clip_id), "appearance-noise",
                                  static_cast<std::uint64_t>(t.track_id) * 100003ULL +
                                      static_cast<std::uint64_t>(s_frame));
        std::normal_distribution<float> noise(0.0f, 1.0f);
        for (int i = 0; i < AppearanceProviderSpec::kNoise; ++i)
          x[AppearanceProviderSpec::kPoseSummary + AppearanceProviderSpec::kContext + i] =
              static_cast<float>(cfg.appearance_sigma) * noise(noise_rng);
        auto feature = std::make_shared<AppearanceFeature>();
        feature->u = spec.weights * x;
        feature->source_frame = s_frame;
        features[best] = std::move(feature);
      }
      entry->person.appearance = features[best];
    }
  }
  return out;
}

GeneratorConfig clip_config(const GeneratorConfig& base, int index) {
  GeneratorConfig cfg = base;
  cfg.seed = fnv1a(std::to_string(index), base.seed * 0x9E3779B97F4A7C15ULL + 1);
  return cfg;
}

std::vector<Clip> generate_dataset(const GeneratorConfig& base, int count, int first_index) {
  std::vector<Clip> clips;
  clips.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) clips.push_back(generate_clip(clip_config(base, first_index + i)));
  return clips;
}

}  // namespace lart
