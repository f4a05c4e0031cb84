#include <cmath>
#include <random>

#include "doctest.h"
#include "handseg/features.hpp"
#include "geometry.hpp"
#include "support.hpp"

using namespace handseg;
using handseg::test::error_kind_of;
using handseg::test::mapped;
using handseg::test::random_rigid;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

PoseSequence still_sequence(int frames, int joints) {
  std::mt19937_64 rng(1);
  auto seq = handseg::test::random_sequence(rng, 1, joints, 6, 0);
  while (seq.size() < frames) {
    auto f = seq.frames.back();
    ++f.timestamp_index;
    seq.frames.push_back(f);
  }
  return seq;
}

PoseSequence with_annotations(int frames, std::vector<GestureAnnotation> ann) {
  auto seq = still_sequence(frames, 3);
  seq.annotations = std::move(ann);
  validate(seq);
  return seq;
}

}  // namespace

TEST_CASE("jcd of a right triangle") {
  PoseSequence seq;
  seq.num_classes = 2;
  for (int f = 0; f < 4; ++f) seq.frames.push_back({{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, f});
  auto m = jcd(make_window(seq, 3, 4));
  REQUIRE(m.rows == 3);
  REQUIRE(m.cols == 4);
  for (int c = 0; c < 4; ++c) {
    CHECK(m(0, c) == 1.0);
    CHECK(m(1, c) == 1.0);
    CHECK(m(2, c) == std::sqrt(2.0));
  }
}

TEST_CASE("view shapes") {
  auto seq = still_sequence(40, 26);
  auto v = compute_views(make_window(seq, 39, 16));
  CHECK(v.jcd.rows == 325);
  CHECK(v.jcd.cols == 16);
  CHECK(v.m_slow.rows == 78);
  CHECK(v.m_slow.cols == 15);
  CHECK(v.m_fast.rows == 78);
  CHECK(v.m_fast.cols == 7);
  auto mag = compute_views(make_window(seq, 39, 16), {MotionVariant::magnitude, 1.0});
  CHECK(mag.m_slow.rows == 26);
  CHECK(mag.m_fast.cols == 7);
}

TEST_CASE("window preconditions") {
  auto seq = still_sequence(20, 3);
  CHECK(error_kind_of([&] { make_window(seq, 14, 16); }) == ErrorKind::OutOfRange);
  CHECK(error_kind_of([&] { make_window(seq, 20, 16); }) == ErrorKind::OutOfRange);
  CHECK(error_kind_of([&] { make_window(seq, 10, 7); }) == ErrorKind::Shape);
  CHECK(error_kind_of([&] { make_window(seq, 10, 2); }) == ErrorKind::Shape);
  CHECK(make_window(seq, 15, 16).frames.data() == seq.frames.data());
}

TEST_CASE("stationary hand has zero motion") {
  auto seq = still_sequence(16, 5);
  auto v = compute_views(make_window(seq, 15, 16));
  for (double x : v.m_slow.data) CHECK(x == 0.0);
  for (double x : v.m_fast.data) CHECK(x == 0.0);
}

TEST_CASE("uniform translation gives constant velocity") {
  const double delta = 0.25;  // exact in binary
  auto seq = mapped(still_sequence(16, 4), [&](Vec3 p, std::int64_t t) {
    return Vec3{std::round(p.x * 64) / 64 + delta * static_cast<double>(t), p.y, p.z};
  });
  auto v = compute_views(make_window(seq, 15, 16));
  for (int r = 0; r < v.m_slow.rows; ++r) {
    for (int c = 0; c < v.m_slow.cols; ++c) CHECK(v.m_slow(r, c) == (r % 3 == 0 ? delta : 0.0));
    for (int c = 0; c < v.m_fast.cols; ++c) CHECK(v.m_fast(r, c) == (r % 3 == 0 ? 2 * delta : 0.0));
  }
}

TEST_CASE("motion column layout") {
  std::mt19937_64 rng(2);
  auto seq = handseg::test::random_sequence(rng, 12, 4, 3, 0);
  auto w = make_window(seq, 11, 8);
  auto slow = m_slow(w);
  auto fast = m_fast(w);
  for (int f = 0; f < 7; ++f) {
    for (int j = 0; j < 4; ++j) {
      const auto& a = w.frames[static_cast<std::size_t>(f)].joints[static_cast<std::size_t>(j)];
      const auto& b = w.frames[static_cast<std::size_t>(f + 1)].joints[static_cast<std::size_t>(j)];
      CHECK(slow(3 * j + 0, f) == b.x - a.x);
      CHECK(slow(3 * j + 1, f) == b.y - a.y);
      CHECK(slow(3 * j + 2, f) == b.z - a.z);
    }
  }
  for (int k = 0; k < 3; ++k) {
    const auto& a = w.frames[static_cast<std::size_t>(2 * k)].joints[2];
    const auto& b = w.frames[static_cast<std::size_t>(2 * k + 2)].joints[2];
    CHECK(fast(7, k) == b.y - a.y);
  }
  auto mag = m_slow(w, {MotionVariant::magnitude, 1.0});
  const auto& a = w.frames[3].joints[1];
  const auto& b = w.frames[4].joints[1];
  CHECK(mag(1, 3) == doctest::Approx(std::hypot(b.x - a.x, b.y - a.y, b.z - a.z)).epsilon(1e-15));
}

TEST_CASE("jcd is invariant under rigid transforms") {
  std::mt19937_64 rng(3);
  auto seq = handseg::test::random_sequence(rng, 16, 26, 3, 0);
  auto base = jcd(make_window(seq, 15, 16));
  for (int trial = 0; trial < 100; ++trial) {
    auto rigid = random_rigid(rng);
    auto moved = mapped(seq, [&](Vec3 p, std::int64_t) { return rigid(p); });
    CHECK(max_abs_diff(base, jcd(make_window(moved, 15, 16))) < 1e-9);
  }
}

TEST_CASE("motion views are invariant under a constant translation") {
  // Coordinates on a 2^-10 grid with a power-of-two offset keep every
  // subtraction exact.
  std::mt19937_64 rng(4);
  auto seq = mapped(handseg::test::random_sequence(rng, 16, 26, 3, 0),
                    [](Vec3 p, std::int64_t) { return Vec3{std::round(p.x * 1024) / 1024, std::round(p.y * 1024) / 1024, std::round(p.z * 1024) / 1024}; });
  auto shifted = mapped(seq, [](Vec3 p, std::int64_t) { return Vec3{p.x + 4.0, p.y - 2.0, p.z + 0.5}; });
  auto a = compute_views(make_window(seq, 15, 16));
  auto b = compute_views(make_window(shifted, 15, 16));
  CHECK(max_abs_diff(a.m_slow, b.m_slow) == 0.0);
  CHECK(max_abs_diff(a.m_fast, b.m_fast) == 0.0);
}

TEST_CASE("fast motion telescopes into slow motion") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto seq = handseg::test::random_sequence(rng, 20, 5, 3, 0);
    auto w = make_window(seq, 19, 16);
    auto slow = m_slow(w);
    auto fast = m_fast(w);
    double worst = 0.0;
    for (int r = 0; r < fast.rows; ++r) {
      for (int k = 0; k < fast.cols; ++k) {
        worst = std::max(worst, std::abs(fast(r, k) - (slow(r, 2 * k) + slow(r, 2 * k + 1))));
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("labels: gesture start inside the window") {
  auto seq = with_annotations(200, {{4, 90, 130, GestureCategory::dynamic_fine}});
  auto s = make_sample(seq, 100, 16, 0.5);
  CHECK(s.labels.fine == 4);
  CHECK(s.labels.sdn == Sdn::D);
  CHECK(s.labels.start_index == 5);
  CHECK_FALSE(s.labels.end_index.has_value());
  CHECK(s.mask == TaskMask{true, true, true, false});
}

TEST_CASE("labels: pure non-gesture window") {
  auto seq = with_annotations(200, {{4, 90, 130, GestureCategory::static_pose}});
  auto s = make_sample(seq, 60, 16, 0.5);
  CHECK(s.labels.fine == 0);
  CHECK(s.labels.sdn == Sdn::N);
  CHECK(s.mask == TaskMask{true, true, false, false});
}

TEST_CASE("labels: two boundaries, no majority") {
  // Window [85, 100]: A ends at 87 (3 frames), B starts at 99 (2 frames).
  auto seq = with_annotations(200, {{1, 50, 87, GestureCategory::static_pose},
                                    {2, 99, 150, GestureCategory::periodic}});
  auto s = make_sample(seq, 100, 16, 0.5);
  CHECK(s.labels.fine == 0);
  CHECK(s.labels.end_index == 2);
  CHECK(s.labels.start_index == 14);
  CHECK(s.mask == TaskMask{true, true, true, true});
}

TEST_CASE("labels: equal overlaps go to the later gesture") {
  auto seq = with_annotations(200, {{1, 50, 92, GestureCategory::static_pose},
                                    {2, 93, 150, GestureCategory::dynamic_coarse}});
  auto s = make_sample(seq, 100, 16, 0.5);
  CHECK(s.labels.fine == 2);
  CHECK(s.labels.sdn == Sdn::D);
  auto t = make_sample(seq, 100, 16, 0.25);
  CHECK(t.labels.fine == 2);
}

TEST_CASE("labels agree with a brute-force count") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    auto seq = handseg::test::random_sequence(rng, 80, 2, 5, static_cast<int>(rng() % 6));
    const int w = 4 + 2 * static_cast<int>(rng() % 7);
    const double thr = (rng() % 5) / 4.0;
    const std::int64_t t = w - 1 + static_cast<std::int64_t>(rng() % (80 - w + 1));
    std::vector<int> cover(80, -1);
    for (std::size_t i = 0; i < seq.annotations.size(); ++i) {
      for (auto f = seq.annotations[i].start_frame; f <= seq.annotations[i].end_frame; ++f) cover[f] = static_cast<int>(i);
    }
    int best = -1, best_n = 0;
    for (std::size_t i = 0; i < seq.annotations.size(); ++i) {
      int n = 0;
      for (auto f = t - w + 1; f <= t; ++f) n += cover[f] == static_cast<int>(i);
      if (n > 0 && n >= best_n) best = static_cast<int>(i), best_n = n;
    }
    const bool passes = best >= 0 && best_n >= thr * w;
    auto labels = label_window(seq, t, w, thr);
    CHECK(labels.fine == (passes ? seq.annotations[best].label : 0));
    CHECK((labels.sdn == Sdn::N) == (labels.fine == 0));
    bool has_start = false, has_end = false;
    for (const auto& a : seq.annotations) {
      has_start |= a.start_frame > t - w && a.start_frame <= t;
      has_end |= a.end_frame > t - w && a.end_frame <= t;
    }
    CHECK(labels.start_index.has_value() == has_start);
    CHECK(labels.end_index.has_value() == has_end);
    auto mask = mask_for(labels);
    CHECK(mask[kTaskStart] == labels.start_index.has_value());
    CHECK(mask[kTaskEnd] == labels.end_index.has_value());
  }
}

TEST_CASE("sequence feature columns reproduce the window views") {
  std::mt19937_64 rng(7);
  auto seq = handseg::test::random_sequence(rng, 40, 6, 3, 0);
  for (auto variant : {MotionVariant::per_axis, MotionVariant::magnitude}) {
    FeatureOptions opts{variant, 0.5};
    SequenceFeatures sf(seq, opts);
    for (std::int64_t t : {15, 16, 27, 39}) {
      auto v = compute_views(make_window(seq, t, 16), opts);
      std::vector<double> j(v.jcd.data.size()), s(v.m_slow.data.size()), f(v.m_fast.data.size());
      sf.gather<double>(t, 16, j, s, f);
      for (std::size_t i = 0; i < j.size(); ++i) CHECK(j[i] == doctest::Approx(v.jcd.data[i]).epsilon(1e-14));
      for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == doctest::Approx(v.m_slow.data[i]).epsilon(1e-14));
      for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == doctest::Approx(v.m_fast.data[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("feature scale converts units") {
  std::mt19937_64 rng(8);
  auto seq = handseg::test::random_sequence(rng, 8, 3, 3, 0);
  auto w = make_window(seq, 7, 8);
  auto a = jcd(w, 1.0);
  auto b = jcd(w, 0.001);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(b.data[i] == doctest::Approx(a.data[i] * 0.001));
}
