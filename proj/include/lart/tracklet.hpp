#pragma once

#include "lart/common.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lart {

inline constexpr int kNumJoints = 23;
inline constexpr int kShapeDims = 10;
inline constexpr int kPoseVectorSize = kNumJoints * 9 + 9 + kShapeDims + 3;  // 229
inline constexpr int kAppearanceDims = 1152;
inline constexpr double kRotationTolerance = 1e-5;

static_assert(kPoseVectorSize == 229);

using Rotation = Eigen::Matrix3f;
using ShapeCoeffs = Eigen::Matrix<float, kShapeDims, 1>;
using PoseVector = Eigen::Matrix<float, kPoseVectorSize, 1>;

/// True iff `m` is a proper rotation: orthonormal and det = +1 within
/// kRotationTolerance. Throws DataError when `m` has a non-finite entry, so
/// callers can tell corrupt data from a valid matrix that is not a rotation.
template <typename Derived>
bool validate_rotation(const Eigen::MatrixBase<Derived>& m) {
  static_assert(Derived::RowsAtCompileTime == 3 && Derived::ColsAtCompileTime == 3,
                "validate_rotation expects a 3x3 matrix");
  if (!m.allFinite()) throw DataError("rotation matrix has non-finite entries");
  using S = typename Derived::Scalar;
  const Eigen::Matrix<S, 3, 3> r = m;
  const double ortho =
      (r.transpose() * r - Eigen::Matrix<S, 3, 3>::Identity()).cwiseAbs().maxCoeff();
  const double det = r.determinant();
  return ortho <= kRotationTolerance && std::abs(det - 1.0) <= kRotationTolerance;
}

/// Amodal 3D body state of one person at one frame.
struct PersonPose {
  std::array<Rotation, kNumJoints> theta;  // body joint rotations
  Rotation psi = Rotation::Identity();      // global orientation
  ShapeCoeffs beta = ShapeCoeffs::Zero();
  Eigen::Vector3f location = Eigen::Vector3f::Zero();  // meters, camera frame

  PersonPose() { theta.fill(Rotation::Identity()); }

  bool operator==(const PersonPose& o) const;
};

/// Layout: theta row-major (207), psi row-major (9), beta (10), location (3).
PoseVector flatten_person_pose(const PersonPose& p);
PersonPose unflatten_person_pose(const PoseVector& v);

/// Throws DataError naming the offending block when a rotation is invalid.
void validate_pose(const PersonPose& p);

struct AppearanceFeature {
  Eigen::VectorXf u;  // kAppearanceDims wide
  int source_frame = 0;

  bool operator==(const AppearanceFeature& o) const {
    return source_frame == o.source_frame && u.size() == o.u.size() && u == o.u;
  }
};

using AppearanceRef = std::shared_ptr<const AppearanceFeature>;

struct PersonVector {
  PersonPose pose;
  AppearanceRef appearance;  // shared by all frames of one sample window
};

struct Box {
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  float area() const { return (x1 - x0) * (y1 - y0); }
  bool valid() const { return x0 < x1 && y0 < y1; }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

struct Detection {
  PersonVector person;
  Box box;
};

/// One person's action tube. `entries[k]` describes frame start_frame + k; an
/// empty entry is an occlusion or missed detection.
struct Tracklet {
  int track_id = 0;
  int start_frame = 0;
  std::vector<std::optional<Detection>> entries;

  int length() const { return static_cast<int>(entries.size()); }
  int end_frame() const { return start_frame + length(); }  // exclusive
  bool covers(int frame) const { return frame >= start_frame && frame < end_frame(); }
  const Detection* at(int frame) const {
    if (!covers(frame)) return nullptr;
    const auto& e = entries[static_cast<std::size_t>(frame - start_frame)];
    return e ? &*e : nullptr;
  }
  int num_present() const;
  bool has_appearance() const;
};

enum class Category { PM, OM, PI };

std::string_view to_string(Category c);
Category category_from_string(std::string_view s);

struct ActionClass {
  std::string name;
  Category category;
  bool operator==(const ActionClass&) const = default;
};

using ClassCatalog = std::vector<ActionClass>;
using MultiHot = std::vector<std::uint8_t>;

struct LabelEntry {
  MultiHot classes;
  // False for labels whose frame has no detection (occluded). Such labels are
  // kept for reference but never scored.
  bool evaluable = true;
  bool operator==(const LabelEntry&) const = default;
};

using LabelKey = std::pair<int, int>;  // (track_id, frame)
using LabelTable = std::map<LabelKey, LabelEntry>;

enum class LabelSource { GroundTruth, Pseudo };

struct Clip {
  std::string clip_id;
  int fps = 30;
  int num_frames = 0;
  std::vector<Tracklet> tracklets;
  LabelTable labels;
  ClassCatalog catalog;
  LabelSource label_source = LabelSource::GroundTruth;

  int num_classes() const { return static_cast<int>(catalog.size()); }
  const Tracklet* find_track(int track_id) const;
  const LabelEntry* label(int track_id, int frame) const {
    auto it = labels.find({track_id, frame});
    return it == labels.end() ? nullptr : &it->second;
  }
  bool has_appearance() const;
};

bool operator==(const Tracklet& a, const Tracklet& b);
bool operator==(const Clip& a, const Clip& b);

/// Checks every structural invariant; throws DataError with a description of
/// the first violation found.
void validate_clip(const Clip& c);

/// Enforces 1 PM, <= 3 OM, <= 3 PI on a label vector.
void validate_label_structure(const MultiHot& v, const ClassCatalog& catalog);

/// Keeps at most `window` consecutive frames. The start is drawn uniformly
/// from the starts whose window holds at least one detection.
Tracklet trim_tracklet(const Tracklet& t, int window, std::uint64_t seed);

// Frames carrying evaluation annotations: the center frame of every second.
std::vector<int> annotated_frames(int num_frames, int fps);

inline constexpr std::string_view kClipFormatVersion = "lart-clip/1";

void save_clip(const Clip& c, const std::filesystem::path& path);
Clip load_clip(const std::filesystem::path& path);
void write_clip(const Clip& c, std::ostream& os);
Clip read_clip(std::istream& is);

}  // namespace lart
