#include "lart/tracklet.hpp"

#include <algorithm>
#include <set>

namespace lart {

bool PersonPose::operator==(const PersonPose& o) const {
  for (int j = 0; j < kNumJoints; ++j)
    if (theta[j] != o.theta[j]) return false;
  return psi == o.psi && beta == o.beta && location == o.location;
}

PoseVector flatten_person_pose(const PersonPose& p) {
  PoseVector v;
  int k = 0;
  auto put_rotation = [&](const Rotation& r) {
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) v[k++] = r(row, col);
  };
  for (const auto& r : p.theta) put_rotation(r);
  put_rotation(p.psi);
  for (int i = 0; i < kShapeDims; ++i) v[k++] = p.beta[i];
  for (int i = 0; i < 3; ++i) v[k++] = p.location[i];
  return v;
}

PersonPose unflatten_person_pose(const PoseVector& v) {
  PersonPose p;
  int k = 0;
  auto take_rotation = [&](Rotation& r) {
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) r(row, col) = v[k++];
  };
  for (auto& r : p.theta) take_rotation(r);
  take_rotation(p.psi);
  for (int i = 0; i < kShapeDims; ++i) p.beta[i] = v[k++];
  for (int i = 0; i < 3; ++i) p.location[i] = v[k++];
  return p;
}

void validate_pose(const PersonPose& p) {
  for (int j = 0; j < kNumJoints; ++j)
    if (!validate_rotation(p.theta[j]))
      throw DataError("joint rotation " + std::to_string(j) + " is not a rotation matrix");
  if (!validate_rotation(p.psi)) throw DataError("global orientation is not a rotation matrix");
  if (!p.beta.allFinite() || !p.location.allFinite())
    throw DataError("pose shape/location has non-finite entries");
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, static_cast<double>(std::min(a.x1, b.x1)) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, static_cast<double>(std::min(a.y1, b.y1)) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = static_cast<double>(a.area()) + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

int Tracklet::num_present() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [](const auto& e) { return e.has_value(); }));
}

bool Tracklet::has_appearance() const {
  for (const auto& e : entries)
    if (e && e->person.appearance) return true;
  return false;
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::PM: return "PM";
    case Category::OM: return "OM";
    case Category::PI: return "PI";
  }
  return "?";
}

Category category_from_string(std::string_view s) {
  if (s == "PM") return Category::PM;
  if (s == "OM") return Category::OM;
  if (s == "PI") return Category::PI;
  throw DataError("unknown action category '" + std::string(s) + "'");
}

const Tracklet* Clip::find_track(int track_id) const {
  for (const auto& t : tracklets)
    if (t.track_id == track_id) return &t;
  return nullptr;
}

bool Clip::has_appearance() const {
  return std::any_of(tracklets.begin(), tracklets.end(),
                     [](const Tracklet& t) { return t.has_appearance(); });
}

bool operator==(const Tracklet& a, const Tracklet& b) {
  if (a.track_id != b.track_id || a.start_frame != b.start_frame ||
      a.entries.size() != b.entries.size())
    return false;
  for (std::size_t k = 0; k < a.entries.size(); ++k) {
    const auto& ea = a.entries[k];
    const auto& eb = b.entries[k];
    if (ea.has_value() != eb.has_value()) return false;
    if (!ea) continue;
    if (!(ea->box == eb->box) || !(ea->person.pose == eb->person.pose)) return false;
    const auto& ua = ea->person.appearance;
    const auto& ub = eb->person.appearance;
    if (static_cast<bool>(ua) != static_cast<bool>(ub)) return false;
    if (ua && !(*ua == *ub)) return false;
  }
  return true;
}

bool operator==(const Clip& a, const Clip& b) {
  return a.clip_id == b.clip_id && a.fps == b.fps && a.num_frames == b.num_frames &&
         a.label_source == b.label_source && a.catalog == b.catalog && a.labels == b.labels &&
         a.tracklets == b.tracklets;
}

void validate_label_structure(const MultiHot& v, const ClassCatalog& catalog) {
  if (v.size() != catalog.size()) throw DataError("label vector width does not match catalog");
  int pm = 0, om = 0, pi = 0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (v[k] > 1) throw DataError("label vector entries must be 0 or 1");
    if (!v[k]) continue;
    switch (catalog[k].category) {
      case Category::PM: ++pm; break;
      case Category::OM: ++om; break;
      case Category::PI: ++pi; break;
    }
  }
  if (pm != 1) throw DataError("label must set exactly one PM class, found " + std::to_string(pm));
  if (om > 3) throw DataError("label sets more than 3 OM classes");
  if (pi > 3) throw DataError("label sets more than 3 PI classes");
}

void validate_clip(const Clip& c) {
  if (c.fps < 1) throw DataError("fps must be positive");
  if (c.num_frames < 1) throw DataError("clip has no frames");
  if (c.clip_id.empty() ||
      c.clip_id.find_first_of(" \t\r\n") != std::string::npos)
    throw DataError("clip id must be non-empty and free of whitespace");

  std::set<std::string> names;
  for (const auto& cls : c.catalog) {
    if (cls.name.empty() || cls.name.find_first_of(" \t\r\n") != std::string::npos)
      throw DataError("class names must be non-empty and free of whitespace");
    if (!names.insert(cls.name).second) throw DataError("duplicate class name " + cls.name);
  }

  std::set<int> ids;
  bool any_appearance = false, any_missing_appearance = false;
  for (const auto& t : c.tracklets) {
    if (!ids.insert(t.track_id).second)
      throw DataError("duplicate track id " + std::to_string(t.track_id));
    if (t.start_frame < 0 || t.end_frame() > c.num_frames)
      throw DataError("track " + std::to_string(t.track_id) + " extends outside the clip");
    if (t.num_present() == 0) throw DataError("tracklet has no present entries");
    for (const auto& e : t.entries) {
      if (!e) continue;
      if (!e->box.valid())
        throw DataError("track " + std::to_string(t.track_id) + " has a degenerate box");
      validate_pose(e->person.pose);
      if (e->person.appearance) {
        any_appearance = true;
        if (e->person.appearance->u.size() != kAppearanceDims)
          throw DataError("appearance feature must have 1152 entries");
        if (!e->person.appearance->u.allFinite())
          throw DataError("appearance feature has non-finite entries");
      } else {
        any_missing_appearance = true;
      }
    }
  }
  if (any_appearance && any_missing_appearance)
    throw DataError("clip mixes frames with and without appearance features");

  for (const auto& [key, entry] : c.labels) {
    const auto [track_id, frame] = key;
    const Tracklet* t = c.find_track(track_id);
    if (!t) throw DataError("label refers to unknown track " + std::to_string(track_id));
    if (frame < 0 || frame >= c.num_frames) throw DataError("label frame outside the clip");
    const bool present = t->at(frame) != nullptr;
    if (entry.evaluable && !present)
      throw DataError("label on frame " + std::to_string(frame) + " of track " +
                      std::to_string(track_id) + " has no present detection");
    if (!entry.evaluable && present)
      throw DataError("unevaluable label on a frame with a detection");
    if (c.label_source == LabelSource::GroundTruth) {
      validate_label_structure(entry.classes, c.catalog);
    } else if (entry.classes.size() != c.catalog.size()) {
      throw DataError("label vector width does not match catalog");
    }
  }
}

Tracklet trim_tracklet(const Tracklet& t, int window, std::uint64_t seed) {
  if (window < 1) throw ConfigError("trim window must be at least 1");
  if (t.length() <= window) return t;
  std::vector<int> starts;
  // Prefix counts make each window's occupancy an O(1) query.
  std::vector<int> prefix(t.entries.size() + 1, 0);
  for (std::size_t k = 0; k < t.entries.size(); ++k)
    prefix[k + 1] = prefix[k] + (t.entries[k] ? 1 : 0);
  for (int s = 0; s + window <= t.length(); ++s)
    if (prefix[s + window] - prefix[s] > 0) starts.push_back(s);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
  const int s = starts[pick(rng)];
  Tracklet out;
  out.track_id = t.track_id;
  out.start_frame = t.start_frame + s;
  out.entries.assign(t.entries.begin() + s, t.entries.begin() + s + window);
  return out;
}

std::vector<int> annotated_frames(int num_frames, int fps) {
  std::vector<int> frames;
  for (int f = fps / 2; f < num_frames; f += fps) frames.push_back(f);
  return frames;
}

}  // namespace lart
