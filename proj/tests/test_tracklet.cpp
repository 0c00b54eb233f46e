#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

#include <filesystem>
#include <regex>

using namespace lart;
using namespace lart::testing;

TEST_CASE("validate_rotation") {
  CHECK(validate_rotation(Eigen::Matrix3d::Identity()));
  CHECK_FALSE(validate_rotation(Eigen::Vector3d(1, 1, -1).asDiagonal().toDenseMatrix()));
  Eigen::Vector4d q(0.1, 0.2, 0.3, 0.4);
  q.normalize();
  const Eigen::Matrix3d r = quaternion_matrix(q[0], q[1], q[2], q[3]);
  CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(validate_rotation(r));
  CHECK_FALSE(validate_rotation(Eigen::Matrix3d(2 * r)));

  Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
  bad(1, 2) = std::nan("");
  CHECK_THROWS_AS(validate_rotation(bad), DataError);
}

TEST_CASE("flatten_person_pose layout") {
  const PersonPose p;
  const PoseVector v = flatten_person_pose(p);
  CHECK(v.size() == 229);
  for (int i = 0; i < 229; ++i) {
    const bool diag = i < 216 && (i % 9 == 0 || i % 9 == 4 || i % 9 == 8);
    CHECK(v[i] == (diag ? 1.0f : 0.0f));
  }

  PersonPose q;
  q.beta[3] = 7;
  q.location = Eigen::Vector3f(1, 2, 3);
  q.theta[0](0, 1) = 0.5f;  // row-major: offset 1
  q.psi(2, 0) = 0.25f;      // offset 207 + 6
  const PoseVector w = flatten_person_pose(q);
  CHECK(w[1] == 0.5f);
  CHECK(w[213] == 0.25f);
  CHECK(w[216 + 3] == 7);
  CHECK(w[226] == 1);
  CHECK(w[228] == 3);
}

TEST_CASE("flatten/unflatten is a bijection on random poses") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const PersonPose p = random_pose(rng);
    CHECK_NOTHROW(validate_pose(p));
    const PersonPose back = unflatten_person_pose(flatten_person_pose(p));
    CHECK(back == p);
    CHECK(flatten_person_pose(back) == flatten_person_pose(p));
  }
}

TEST_CASE("validate_pose names the bad block") {
  PersonPose p;
  p.theta[4] = Eigen::Vector3f(1, 1, -1).asDiagonal();
  CHECK_THROWS_AS(validate_pose(p), DataError);
}

TEST_CASE("clip round trip: 2 tracks, 64 frames") {
  GeneratorConfig g = small_config(5, 2, 64);
  g.gap_rate = 0.2;
  g.with_appearance = true;
  const Clip c = generate_clip(g);
  REQUIRE(c.tracklets.size() == 2);
  const Clip back = clip_from_text(clip_text(c));
  CHECK(back == c);
  CHECK(clip_text(back) == clip_text(c));

  const auto path = std::filesystem::temp_directory_path() / "lart_roundtrip.clip";
  save_clip(c, path);
  CHECK(load_clip(path) == c);
  std::filesystem::remove(path);
}

TEST_CASE("round trip property on random clips") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    GeneratorConfig g = small_config(100 + seed, 1 + static_cast<int>(seed % 5), 10 + static_cast<int>(seed % 30));
    g.gap_rate = (seed % 4) * 0.2;
    g.with_appearance = seed % 2 == 0;
    g.appearance_fs = 1 + static_cast<double>(seed % 3);
    Clip c = generate_clip(g);
    if (seed % 3 == 0) c = with_pseudo_labels(c, teacher_pseudo_label(c, 0.3, seed));
    const Clip back = clip_from_text(clip_text(c));
    CHECK(back == c);
    // Appearance sharing survives: frames of one sample still share one object.
    for (std::size_t t = 0; t < c.tracklets.size(); ++t)
      for (int f = 1; f < c.num_frames; ++f) {
        const Detection* a = c.tracklets[t].at(f - 1);
        const Detection* b = c.tracklets[t].at(f);
        const Detection* a2 = back.tracklets[t].at(f - 1);
        const Detection* b2 = back.tracklets[t].at(f);
        if (a && b && a->person.appearance)
          CHECK((a->person.appearance == b->person.appearance) == (a2->person.appearance == b2->person.appearance));
      }
  }
}

TEST_CASE("load rejects bad files") {
  GeneratorConfig g = small_config(9, 2, 30);
  g.gap_rate = 0.4;
  const Clip c = generate_clip(g);
  const std::string text = clip_text(c);

  SUBCASE("version mismatch") {
    std::string t = text;
    t.replace(0, std::string(kClipFormatVersion).size(), "lart-clip/9");
    CHECK_THROWS_AS(clip_from_text(t), DataError);
  }
  SUBCASE("label on an absent frame marked evaluable") {
    const auto pos = text.find(" hidden ");
    REQUIRE(pos != std::string::npos);
    std::string t = text;
    t.replace(pos, 8, " eval ");
    CHECK_THROWS_AS(clip_from_text(t), DataError);
  }
  SUBCASE("malformed number") {
    std::string t = std::regex_replace(text, std::regex(" box [-0-9.e]+"), " box x", std::regex_constants::format_first_only);
    CHECK_THROWS_AS(clip_from_text(t), DataError);
  }
  SUBCASE("truncated") { CHECK_THROWS_AS(clip_from_text(text.substr(0, text.size() / 2)), DataError); }
  SUBCASE("empty tracklet") {
    const std::string t =
        "lart-clip/1\n"
        "clip empty fps 10 frames 2 source gt\n"
        "catalog 1\n"
        "class stand PM\n"
        "tracks 1\n"
        "track 1 start 0 length 2 samples 0\n"
        "frame 0 absent\n"
        "frame 1 absent\n"
        "labels 0\n"
        "end\n";
    try {
      clip_from_text(t);
      FAIL("expected an error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("tracklet has no present entries") != std::string::npos);
    }
  }
}

TEST_CASE("label structure constraint") {
  const ClassCatalog& cat = action_catalog();
  MultiHot v(kNumActions, 0);
  CHECK_THROWS_AS(validate_label_structure(v, cat), DataError);  // no PM
  v[kStand] = 1;
  CHECK_NOTHROW(validate_label_structure(v, cat));
  v[kSit] = 1;
  CHECK_THROWS_AS(validate_label_structure(v, cat), DataError);  // two PM
  v[kSit] = 0;
  v[kHug] = v[kFight] = v[kDance] = 1;
  CHECK_NOTHROW(validate_label_structure(v, cat));
  v[kTalk] = 1;
  CHECK_THROWS_AS(validate_label_structure(v, cat), DataError);  // four PI

  Clip c = generate_clip(small_config(3, 2, 10));
  auto& entry = c.labels.begin()->second;
  entry.classes.assign(kNumActions, 0);
  entry.classes[kStand] = entry.classes[kSit] = 1;
  CHECK_THROWS_AS(validate_clip(c), DataError);
}

TEST_CASE("appearance is all-or-none within a clip") {
  GeneratorConfig g = small_config(4, 2, 20);
  g.with_appearance = true;
  Clip c = generate_clip(g);
  CHECK_NOTHROW(validate_clip(c));
  c.tracklets[1].entries[3]->person.appearance.reset();
  CHECK_THROWS_AS(validate_clip(c), DataError);
}

TEST_CASE("trim_tracklet") {
  Tracklet t;
  t.track_id = 1;
  t.start_frame = 10;
  for (int i = 0; i < 200; ++i) t.entries.emplace_back(Detection{{}, {0, 0, 1, 1}});
  Tracklet full = t;
  full.entries.resize(128);
  CHECK(trim_tracklet(full, 128, 1) == full);

  const Tracklet a = trim_tracklet(t, 128, 42);
  const Tracklet b = trim_tracklet(t, 128, 42);
  CHECK(a.length() == 128);
  CHECK(a.start_frame >= 10);
  CHECK(a.end_frame() <= 210);
  CHECK(a == b);

  // Starts cover the valid range over many seeds.
  std::set<int> starts;
  for (std::uint64_t s = 0; s < 2000; ++s) starts.insert(trim_tracklet(t, 128, s).start_frame);
  CHECK(*starts.begin() == 10);
  CHECK(*starts.rbegin() == 10 + 72);
  CHECK(starts.size() == 73);

  // Windows with no detection are never chosen.
  Tracklet sparse = t;
  for (int i = 0; i < 200; ++i)
    if (i != 150) sparse.entries[static_cast<std::size_t>(i)].reset();
  for (std::uint64_t s = 0; s < 50; ++s) CHECK(trim_tracklet(sparse, 20, s).num_present() == 1);
}

TEST_CASE("annotated frames sit at the center of each second") {
  CHECK(annotated_frames(90, 30) == std::vector<int>{15, 45, 75});
  CHECK(annotated_frames(24, 10) == std::vector<int>{5, 15});
  CHECK(annotated_frames(4, 10).empty());
}

TEST_CASE("iou") {
  const Box a{0, 0, 1, 1};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, Box{0.5f, 0, 1.5f, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(a, Box{2, 2, 3, 3}) == 0.0);
}
