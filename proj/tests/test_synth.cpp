#include <map>

#include "doctest.h"
#include "handseg/synth.hpp"
#include "support.hpp"

using namespace handseg;
using handseg::test::error_kind_of;

namespace {

GestureTemplate make_template(const std::string& name, GestureCategory cat, TrajectoryShape shape,
                              const std::string& pose = "point") {
  GestureTemplate t;
  t.name = name;
  t.category = cat;
  t.shape = shape;
  t.pose = hand_pose_preset(pose);
  return t;
}

SynthConfig five_class_config() {
  SynthConfig cfg;
  cfg.templates = {
      make_template("fist", GestureCategory::static_pose, TrajectoryShape::none, "fist"),
      make_template("circle", GestureCategory::dynamic_coarse, TrajectoryShape::circle),
      make_template("caret", GestureCategory::dynamic_fine, TrajectoryShape::caret),
      make_template("x_mark", GestureCategory::dynamic_fine, TrajectoryShape::x_mark),
      make_template("wave", GestureCategory::periodic, TrajectoryShape::line, "open"),
  };
  for (int i = 0; i < 5; ++i) cfg.templates[i].label = i + 1;
  cfg.seed = 21;
  return cfg;
}

Vec3 centroid(const PoseFrame& f) {
  Vec3 c;
  for (const auto& j : f.joints) {
    c.x += j.x;
    c.y += j.y;
    c.z += j.z;
  }
  const double n = static_cast<double>(f.joints.size());
  return {c.x / n, c.y / n, c.z / n};
}

// Algebraic least-squares circle: x^2 + y^2 = a x + b y + c.
double fit_circle_radius(const std::vector<std::array<double, 2>>& pts) {
  double m[3][4] = {};
  for (auto [x, y] : pts) {
    const double row[3] = {x, y, 1.0};
    const double rhs = x * x + y * y;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) m[i][j] += row[i] * row[j];
      m[i][3] += row[i] * rhs;
    }
  }
  for (int i = 0; i < 3; ++i) {
    for (int k = i + 1; k < 3; ++k) {
      const double f = m[k][i] / m[i][i];
      for (int j = i; j < 4; ++j) m[k][j] -= f * m[i][j];
    }
  }
  double sol[3];
  for (int i = 2; i >= 0; --i) {
    double v = m[i][3];
    for (int j = i + 1; j < 3; ++j) v -= m[i][j] * sol[j];
    sol[i] = v / m[i][i];
  }
  const double cx = sol[0] / 2, cy = sol[1] / 2;
  return std::sqrt(sol[2] + cx * cx + cy * cy);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("single static template") {
  SynthConfig cfg;
  cfg.templates = {make_template("fist", GestureCategory::static_pose, TrajectoryShape::none, "fist")};
  cfg.min_length = cfg.max_length = 200;
  cfg.min_gestures = cfg.max_gestures = 2;
  cfg.templates[0].min_duration = 30;
  cfg.templates[0].max_duration = 50;
  auto seq = generate_sequence(cfg, 0);
  CHECK(seq.size() == 200);
  CHECK(seq.joint_count() == 26);
  REQUIRE(seq.annotations.size() == 2);
  for (const auto& a : seq.annotations) {
    CHECK(a.label == 1);
    CHECK(a.category == GestureCategory::static_pose);
    CHECK(a.length() >= 30);
    CHECK(a.length() <= 50);
    CHECK(a.start_frame >= cfg.margin);
    CHECK(a.end_frame < 200 - cfg.margin);
  }
  CHECK(seq.annotations[1].start_frame - seq.annotations[0].end_frame - 1 >= cfg.min_gap);
  CHECK_NOTHROW(validate(seq));
}

TEST_CASE("generation is a pure function of seed and index") {
  auto cfg = five_class_config();
  auto a = generate_sequence(cfg, 7);
  auto b = generate_sequence(cfg, 7);
  CHECK(a == b);
  CHECK_FALSE(generate_sequence(cfg, 8) == a);
  auto corpus = generate_corpus(cfg, 9);
  CHECK(corpus[7] == a);
  cfg.seed = 22;
  CHECK_FALSE(generate_sequence(cfg, 7) == a);
}

TEST_CASE("circle trajectory has the configured radius") {
  SynthConfig cfg;
  cfg.templates = {make_template("circle", GestureCategory::dynamic_coarse, TrajectoryShape::circle)};
  cfg.templates[0].amplitude = 0.1;
  cfg.min_gestures = cfg.max_gestures = 1;
  for (int index = 0; index < 5; ++index) {
    auto seq = generate_sequence(cfg, index);
    REQUIRE(seq.annotations.size() == 1);
    const auto& a = seq.annotations[0];
    const int blend = std::min<int>(cfg.blend_frames, static_cast<int>(a.length() / 4));
    std::vector<std::array<double, 2>> pts;
    for (auto f = a.start_frame + blend; f <= a.end_frame - blend; ++f) {
      auto c = centroid(seq.frames[static_cast<std::size_t>(f)]);
      pts.push_back({c.x, c.y});
    }
    // Centroid jitter is jitter_std / sqrt(26) per axis.
    CHECK(fit_circle_radius(pts) == doctest::Approx(0.1).epsilon(0.01));
  }
}

TEST_CASE("static gestures move less than non-gesture motion") {
  auto cfg = five_class_config();
  std::vector<double> still, background;
  for (const auto& seq : generate_corpus(cfg, 30)) {
    std::vector<int> cls(static_cast<std::size_t>(seq.size()), 0);
    for (const auto& a : seq.annotations) {
      // Skip the pose blend at both ends.
      for (auto f = a.start_frame + 6; f <= a.end_frame - 6; ++f) {
        cls[static_cast<std::size_t>(f)] = a.category == GestureCategory::static_pose ? 1 : 2;
      }
      for (auto f = a.start_frame; f <= a.end_frame; ++f) {
        if (cls[static_cast<std::size_t>(f)] == 0) cls[static_cast<std::size_t>(f)] = 3;
      }
    }
    for (std::size_t f = 1; f < cls.size(); ++f) {
      if (cls[f] != cls[f - 1]) continue;
      auto a = centroid(seq.frames[f - 1]);
      auto b = centroid(seq.frames[f]);
      const double d = std::hypot(b.x - a.x, b.y - a.y, b.z - a.z);
      if (cls[f] == 1) still.push_back(d);
      if (cls[f] == 0) background.push_back(d);
    }
  }
  REQUIRE(still.size() >= 1000);
  REQUIRE(background.size() >= 1000);
  CHECK(median(still) < median(background));
}

TEST_CASE("corpus is class balanced") {
  SUBCASE("5 classes, 60 sequences, 3 gestures") {
    auto cfg = five_class_config();
    std::map<int, int> count;
    for (const auto& s : generate_corpus(cfg, 60)) {
      CHECK(s.annotations.size() == 3);
      for (const auto& a : s.annotations) ++count[a.label];
    }
    REQUIRE(count.size() == 5);
    for (auto [label, n] : count) CHECK(n == 36);
  }
  SUBCASE("16 classes, 144 sequences, 4 gestures") {
    SynthConfig cfg;
    const TrajectoryShape shapes[] = {TrajectoryShape::circle, TrajectoryShape::square, TrajectoryShape::v_mark,
                                      TrajectoryShape::caret};
    for (int i = 0; i < 16; ++i) {
      auto t = i < 4 ? make_template("s" + std::to_string(i), GestureCategory::static_pose, TrajectoryShape::none)
                     : make_template("d" + std::to_string(i), GestureCategory::dynamic_coarse, shapes[i % 4]);
      t.label = i + 1;
      t.min_duration = 40;
      t.max_duration = 60;
      cfg.templates.push_back(t);
    }
    cfg.min_gestures = cfg.max_gestures = 4;
    cfg.min_length = 400;
    cfg.max_length = 420;
    std::map<int, int> count;
    for (const auto& s : generate_corpus(cfg, 144)) {
      for (const auto& a : s.annotations) ++count[a.label];
    }
    REQUIRE(count.size() == 16);
    for (auto [label, n] : count) CHECK(n == 36);
  }
  SUBCASE("prefixes stay within one occurrence") {
    auto cfg = five_class_config();
    cfg.min_gestures = 1;
    cfg.max_gestures = 3;
    std::map<int, int> count;
    for (int i = 0; i < 40; ++i) {
      for (const auto& a : generate_sequence(cfg, i).annotations) ++count[a.label];
      int lo = 1 << 30, hi = 0;
      for (int l = 1; l <= 5; ++l) {
        lo = std::min(lo, count[l]);
        hi = std::max(hi, count[l]);
      }
      CHECK(hi - lo <= 1);
    }
  }
}

TEST_CASE("single-sequence corpus") {
  auto corpus = generate_corpus(five_class_config(), 1);
  REQUIRE(corpus.size() == 1);
  CHECK_NOTHROW(validate(corpus[0]));
}

TEST_CASE("generated sequences satisfy every invariant") {
  auto cfg = five_class_config();
  cfg.min_gestures = 0;
  cfg.max_gestures = 3;
  for (const auto& s : generate_corpus(cfg, 40)) {
    CHECK_NOTHROW(validate(s));
    CHECK(s.size() >= cfg.min_length);
    CHECK(s.size() <= cfg.max_length);
    for (const auto& a : s.annotations) {
      CHECK(a.start_frame >= cfg.margin);
      CHECK(a.end_frame < s.size() - cfg.margin);
      CHECK(a.category == cfg.templates[static_cast<std::size_t>(a.label - 1)].category);
    }
  }
}

TEST_CASE("invalid configurations") {
  auto cfg = five_class_config();
  cfg.min_length = cfg.max_length = 200;
  CHECK(error_kind_of([&] { generate_sequence(cfg, 0); }) == ErrorKind::Config);
  cfg = five_class_config();
  cfg.templates[0].shape = TrajectoryShape::circle;
  CHECK(error_kind_of([&] { validate(cfg); }) == ErrorKind::Config);
  cfg = five_class_config();
  cfg.templates[1].shape = TrajectoryShape::none;
  CHECK(error_kind_of([&] { validate(cfg); }) == ErrorKind::Config);
  CHECK(error_kind_of([] { hand_pose_preset("claw"); }) == ErrorKind::Config);
  CHECK(error_kind_of([] { generate_corpus(five_class_config(), 0); }) == ErrorKind::Config);
}

TEST_CASE("config text and dictionary") {
  auto kv = KeyValueConfig::parse(
      "seed = 3\nsequences = 4\nsequence_length = 300 320\ngestures_per_sequence = 2 2\n"
      "gesture = fist static pose=fist duration=40:60\n"
      "gesture = sq dynamic_coarse shape=square amplitude=0.05 duration=40:60\n"
      "gesture = wave periodic pose=open axis=y amplitude=0.03 cycles=2 duration=40:60\n");
  auto cfg = synth_config_from(kv);
  CHECK(cfg.seed == 3);
  CHECK(cfg.num_sequences == 4);
  REQUIRE(cfg.templates.size() == 3);
  CHECK(cfg.templates[1].label == 2);
  CHECK(cfg.templates[1].shape == TrajectoryShape::square);
  CHECK(cfg.templates[2].axis == 1);
  CHECK(cfg.templates[2].shape == TrajectoryShape::line);
  auto dict = dictionary_of(cfg);
  REQUIRE(dict.num_classes() == 4);
  CHECK(dict.classes[3].name == "wave");
  CHECK(dict.classes[3].category == GestureCategory::periodic);
  CHECK(error_kind_of([] { synth_config_from(KeyValueConfig::parse("gesture = a static bogus=1\n")); }) ==
        ErrorKind::Config);
}

TEST_CASE("synthetic hand geometry") {
  auto open = hand_joints(hand_pose_preset("open"), 26);
  REQUIRE(open.size() == 26);
  CHECK(open[0] == Vec3{});
  // Fingers point along +y.
  for (int j = 1; j < 26; ++j) CHECK(open[static_cast<std::size_t>(j)].y > 0.0);
  CHECK(hand_joints(hand_pose_preset("fist"), 3).size() == 3);
}
