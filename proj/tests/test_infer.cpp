#include <sstream>

#include "doctest.h"
#include "handseg/infer.hpp"
#include "support.hpp"

using namespace handseg;
using handseg::test::error_kind_of;

namespace {

// Mode of the last W labels by direct counting; ties go to the label seen
// most recently.
int brute_mode(const std::vector<int>& labels, std::size_t end, int window) {
  const std::size_t begin = end + 1 - static_cast<std::size_t>(window);
  int best = -1, best_count = -1;
  std::size_t best_last = 0;
  for (std::size_t i = begin; i <= end; ++i) {
    int count = 0;
    std::size_t last = 0;
    for (std::size_t k = begin; k <= end; ++k) {
      if (labels[k] == labels[i]) ++count, last = k;
    }
    if (count > best_count || (count == best_count && last > best_last)) {
      best = labels[i];
      best_count = count;
      best_last = last;
    }
  }
  return best;
}

struct Simulated {
  std::vector<int> voted;  // -1 while warming up
  std::vector<DetectionEvent> detections;
};

// Vote and tracker over a preliminary label stream, frame t = index.
Simulated simulate(const std::vector<int>& prelim, int window, int labels) {
  MajorityVote vote(window, labels);
  DetectionTracker tracker(window);
  Simulated s;
  for (std::size_t t = 0; t < prelim.size(); ++t) {
    vote.push(prelim[t]);
    if (!vote.full()) {
      s.voted.push_back(-1);
      continue;
    }
    s.voted.push_back(vote.mode());
    if (auto e = tracker.push(static_cast<std::int64_t>(t), s.voted.back())) s.detections.push_back(*e);
  }
  if (auto e = tracker.finish()) s.detections.push_back(*e);
  return s;
}

ModelSpec small_spec(int joints = 5, int classes = 4) {
  ModelSpec spec;
  spec.window = 8;
  spec.joints = joints;
  spec.num_classes = classes;
  spec.encoder_convs = {{6, 3}};
  spec.head_convs = {{6, 3}};
  return spec;
}

// Random model whose fine head is pushed towards varied predictions.
ModelParams random_model(std::uint64_t seed, int joints = 5) {
  auto p = init_params<float>(small_spec(joints), seed);
  for (std::size_t g = 0; g < p.groups.size(); ++g) {
    if (p.groups[g].name == "head.fine.fc.w") {
      for (float& v : p.group(g)) v *= 8.0f;
    }
  }
  return p;
}

std::vector<int> argmax_per_frame(const PoseSequence& seq, const ModelParams& params) {
  const int w = params.spec.window;
  Network<float> net(params.spec);
  std::vector<int> out(static_cast<std::size_t>(seq.size()), -1);
  for (std::int64_t t = w - 1; t < seq.size(); ++t) {
    auto views = compute_views(make_window(seq, t, w), params.spec.feature_options());
    auto vt = ViewTensors<double>::from(views);
    ViewTensors<float> vf;
    vf.jcd.assign(vt.jcd.begin(), vt.jcd.end());
    vf.slow.assign(vt.slow.begin(), vt.slow.end());
    vf.fast.assign(vt.fast.begin(), vt.fast.end());
    const auto& logits = net.forward(params, vf, kFineOnly).fine_logits;
    out[static_cast<std::size_t>(t)] =
        static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  return out;
}

PoseSequence smooth_sequence(std::uint64_t seed, int frames, int joints = 5) {
  std::mt19937_64 rng(seed);
  auto seq = handseg::test::random_sequence(rng, frames, joints, 4, 0);
  // Random walk so consecutive frames are related.
  std::normal_distribution<double> n(0.0, 0.05);
  for (std::size_t f = 1; f < seq.frames.size(); ++f) {
    for (std::size_t j = 0; j < seq.frames[f].joints.size(); ++j) {
      const auto& p = seq.frames[f - 1].joints[j];
      seq.frames[f].joints[j] = {p.x + n(rng), p.y + n(rng), p.z + n(rng)};
    }
  }
  return seq;
}

}  // namespace

TEST_CASE("mode of the vote buffer") {
  MajorityVote v(5, 3);
  for (int l : {1, 1, 2, 0, 1}) v.push(l);
  CHECK(v.full());
  CHECK(v.mode() == 1);
  MajorityVote tie(2, 3);
  tie.push(1);
  tie.push(2);
  CHECK(tie.mode() == 2);
  CHECK(error_kind_of([&] { tie.push(3); }) == ErrorKind::OutOfRange);
}

TEST_CASE("vote matches brute-force counting on every step") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 12);
    const int labels = 2 + static_cast<int>(rng() % 4);
    std::vector<int> stream(60);
    for (int& l : stream) l = static_cast<int>(rng() % static_cast<unsigned>(labels));
    auto s = simulate(stream, w, labels);
    for (std::size_t t = static_cast<std::size_t>(w) - 1; t < stream.size(); ++t) {
      CHECK(s.voted[t] == brute_mode(stream, t, w));
    }
  }
}

TEST_CASE("vote hysteresis on a clean gesture") {
  // 0^8 A^16 0^16 with W = 8.
  std::vector<int> stream(40, 0);
  for (int t = 8; t < 24; ++t) stream[static_cast<std::size_t>(t)] = 1;
  auto s = simulate(stream, 8, 2);
  REQUIRE(s.detections.size() == 1);
  const auto& d = s.detections[0];
  CHECK(d.label == 1);
  std::vector<std::size_t> on;
  for (std::size_t t = 0; t < s.voted.size(); ++t) {
    if (s.voted[t] == 1) on.push_back(t);
  }
  // A takes the vote at its 4th frame (4-4 tie, A most recent) and loses it
  // once the zeros outnumber it.
  CHECK(on.front() == 11);
  CHECK(on.back() == 26);
  CHECK(on.size() == 16);
  CHECK(d.first_emit == 11);
  const auto duration = d.pred_end - d.pred_start + 1;
  CHECK(duration >= 9);
  CHECK(duration <= 23);
}

TEST_CASE("a single flipped label changes at most W outputs") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 2 + static_cast<int>(rng() % 10);
    std::vector<int> stream(80);
    int current = 0;
    for (int& l : stream) {
      if (rng() % 10 == 0) current = static_cast<int>(rng() % 3);
      l = current;
    }
    auto flipped = stream;
    const std::size_t at = rng() % flipped.size();
    flipped[at] = (flipped[at] + 1 + static_cast<int>(rng() % 2)) % 3;
    auto a = simulate(stream, w, 3).voted;
    auto b = simulate(flipped, w, 3).voted;
    std::size_t first = a.size(), last = 0;
    for (std::size_t t = 0; t < a.size(); ++t) {
      if (a[t] != b[t]) first = std::min(first, t), last = t;
    }
    if (first < a.size()) CHECK(last - first + 1 <= static_cast<std::size_t>(w));
  }
}

TEST_CASE("tracker transitions") {
  DetectionTracker tr(4, SpanAttribution::emit_frame);
  CHECK_FALSE(tr.push(10, 0).has_value());
  CHECK_FALSE(tr.push(11, 2).has_value());
  CHECK(tr.open());
  CHECK_FALSE(tr.push(12, 2).has_value());
  auto switched = tr.push(13, 3);
  REQUIRE(switched.has_value());
  CHECK(*switched == DetectionEvent{2, 11, 12, 11});
  auto closed = tr.push(14, 0);
  REQUIRE(closed.has_value());
  CHECK(*closed == DetectionEvent{3, 13, 13, 13});
  CHECK_FALSE(tr.open());
  CHECK_FALSE(tr.finish().has_value());
  tr.push(15, 1);
  tr.push(16, 1);
  auto tail = tr.finish();
  REQUIRE(tail.has_value());
  CHECK(*tail == DetectionEvent{1, 15, 16, 15});
}

TEST_CASE("predicted span attribution") {
  auto [s16, e16] = assign_predicted_span(108, 130, 16, SpanAttribution::center, 1000);
  CHECK(s16 == 100);
  CHECK(e16 == 122);
  CHECK(108 - s16 == 8);
  auto [s40, e40] = assign_predicted_span(108, 130, 40, SpanAttribution::center, 1000);
  CHECK(108 - s40 == 20);
  CHECK(e40 == 110);
  CHECK(assign_predicted_span(5, 30, 16, SpanAttribution::center, 1000).first == 0);
  CHECK(assign_predicted_span(108, 130, 16, SpanAttribution::window_start, 1000).first == 93);
  CHECK(assign_predicted_span(108, 130, 16, SpanAttribution::emit_frame, 1000) == std::pair<std::int64_t, std::int64_t>{108, 130});
  CHECK(parse_span_attribution("window_start") == SpanAttribution::window_start);
  CHECK_FALSE(parse_span_attribution("middle").has_value());
}

TEST_CASE("streaming labels equal per-window evaluation") {
  auto params = random_model(3);
  auto seq = smooth_sequence(3, 60);
  auto expected = argmax_per_frame(seq, params);
  auto r = run_offline(seq, params);
  REQUIRE(r.preliminary.size() == 60);
  CHECK(r.preliminary == expected);
  bool varied = false;
  for (int l : r.preliminary) varied |= l > 0;
  CHECK(varied);
  for (std::size_t t = 0; t < 60; ++t) {
    if (t < 7) CHECK(r.preliminary[t] == -1);
    if (t < 14) CHECK(r.labels[t] == -1);
    if (t >= 14) CHECK(r.labels[t] == brute_mode(r.preliminary, t, 8));
  }
}

TEST_CASE("offline run is the fold of step") {
  auto params = random_model(4);
  auto seq = smooth_sequence(4, 120);
  auto offline = run_offline(seq, params);
  OnlineRecognizer rec(params);
  std::vector<DetectionEvent> events;
  std::vector<int> labels;
  for (const auto& f : seq.frames) {
    auto s = rec.step(f);
    labels.push_back(s.label.value_or(-1));
    if (s.closed) events.push_back(*s.closed);
  }
  if (auto e = rec.finish()) events.push_back(*e);
  CHECK(labels == offline.labels);
  CHECK(events == offline.detections);
  CHECK(rec.frames_seen() == 120);
}

TEST_CASE("outputs never depend on later frames") {
  auto params = random_model(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto seq = smooth_sequence(100 + static_cast<std::uint64_t>(trial), 90);
    auto full = run_offline(seq, params);
    const int cut = 15 + 7 * trial;
    auto prefix = seq;
    prefix.frames.resize(static_cast<std::size_t>(cut));
    auto part = run_offline(prefix, params);
    for (int t = 0; t < cut; ++t) {
      CHECK(part.preliminary[static_cast<std::size_t>(t)] == full.preliminary[static_cast<std::size_t>(t)]);
      CHECK(part.labels[static_cast<std::size_t>(t)] == full.labels[static_cast<std::size_t>(t)]);
    }
    // Detections closed before the cut are identical.
    auto closed_by_step = [&](std::size_t frames) {
      OnlineRecognizer rec(params);
      std::vector<std::pair<std::int64_t, DetectionEvent>> out;
      for (std::size_t f = 0; f < frames; ++f) {
        auto s = rec.step(seq.frames[f]);
        if (s.closed) out.emplace_back(s.frame, *s.closed);
      }
      return out;
    };
    auto early = closed_by_step(static_cast<std::size_t>(cut));
    auto late = closed_by_step(seq.frames.size());
    std::erase_if(late, [&](const auto& e) { return e.first >= cut; });
    CHECK(early == late);
  }
}

TEST_CASE("a confident non-gesture model never detects") {
  auto params = init_params<float>(small_spec(), 6, true);
  const auto* b = params.find("head.fine.fc.b");
  REQUIRE(b != nullptr);
  params.values[b->offset] = 5.0f;
  auto seq = smooth_sequence(6, 100);
  auto r = run_offline(seq, params);
  CHECK(r.detections.empty());
  for (std::size_t t = 14; t < 100; ++t) CHECK(r.labels[t] == 0);
}

TEST_CASE("recognizer errors and reset") {
  auto params = random_model(7);
  OnlineRecognizer rec(params);
  PoseFrame wrong;
  wrong.joints.resize(4);
  CHECK(error_kind_of([&] { rec.step(wrong); }) == ErrorKind::Shape);
  auto seq = smooth_sequence(7, 40);
  std::vector<int> first, second;
  for (const auto& f : seq.frames) first.push_back(rec.step(f).label.value_or(-1));
  rec.reset();
  CHECK(rec.frames_seen() == 0);
  for (const auto& f : seq.frames) second.push_back(rec.step(f).label.value_or(-1));
  CHECK(first == second);
  auto short_seq = seq;
  short_seq.frames.resize(14);
  CHECK(error_kind_of([&] { run_offline(short_seq, params); }) == ErrorKind::SequenceTooShort);
  short_seq.frames.assign(seq.frames.begin(), seq.frames.begin() + 15);
  CHECK_NOTHROW(run_offline(short_seq, params));
}

TEST_CASE("detection file round trip") {
  std::vector<SequenceDetections> all{{"s01/seq0000", {{3, 10, 40, 18}, {1, 60, 61, 68}}}, {"b", {}}, {"c", {{2, 0, 5, 8}}}};
  std::stringstream io;
  write_detections(all, io);
  CHECK(io.str() == "s01/seq0000 3 10 40 18\ns01/seq0000 1 60 61 68\nc 2 0 5 8\n");
  auto back = read_detections(io);
  REQUIRE(back.size() == 2);
  CHECK(back[0].sequence_id == "s01/seq0000");
  CHECK(back[0].detections == all[0].detections);
  CHECK(back[1].detections == all[2].detections);
  std::istringstream bad("a 1 5 4 6\n");
  CHECK(error_kind_of([&] { read_detections(bad); }) == ErrorKind::Parse);
  std::istringstream zero("a 0 1 4 6\n");
  CHECK(error_kind_of([&] { read_detections(zero); }) == ErrorKind::Parse);
  std::istringstream fields("a 1 2 4\n");
  CHECK(error_kind_of([&] { read_detections(fields); }) == ErrorKind::Parse);
}
