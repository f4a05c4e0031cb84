#include "handseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "handseg/error.hpp"
#include "handseg/rng.hpp"

namespace handseg {

namespace {

constexpr std::uint64_t kTagSequence = 0x5e9ULL;
constexpr std::uint64_t kTagCount = 0xc0ULL;
constexpr std::uint64_t kTagRound = 0x40dULL;

struct FingerGeometry {
  double base_x, base_y, angle;  // angle from +y, radians, before spread
  std::array<double, 4> segments;
};

constexpr double kDeg = std::numbers::pi / 180.0;

const std::array<FingerGeometry, 5> kFingers{{
    {-0.025, 0.010, -50.0 * kDeg, {0.030, 0.030, 0.025, 0.020}},
    {-0.020, 0.020, -10.0 * kDeg, {0.060, 0.040, 0.025, 0.020}},
    {0.000, 0.020, 0.0, {0.065, 0.045, 0.028, 0.022}},
    {0.020, 0.020, 10.0 * kDeg, {0.060, 0.040, 0.026, 0.020}},
    {0.035, 0.015, 20.0 * kDeg, {0.055, 0.030, 0.020, 0.018}},
}};

constexpr double kMaxBend = 1.4;  // per finger joint at curl 1

Vec3 add(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }

std::array<double, 2> unit_trajectory(TrajectoryShape shape, double s) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  switch (shape) {
    case TrajectoryShape::circle:
      return {std::cos(two_pi * s) - 1.0, std::sin(two_pi * s)};
    case TrajectoryShape::square:
      if (s < 0.25) return {4.0 * s, 0.0};
      if (s < 0.5) return {1.0, -4.0 * (s - 0.25)};
      if (s < 0.75) return {1.0 - 4.0 * (s - 0.5), -1.0};
      return {0.0, -1.0 + 4.0 * (s - 0.75)};
    case TrajectoryShape::v_mark:
      return {s, s < 0.5 ? -2.0 * s : -2.0 * (1.0 - s)};
    case TrajectoryShape::caret:
      return {s, s < 0.5 ? 2.0 * s : 2.0 * (1.0 - s)};
    case TrajectoryShape::x_mark:
      if (s < 0.4) return {s / 0.4, -s / 0.4};
      if (s < 0.6) return {1.0, -1.0 + (s - 0.4) / 0.2};
      return {1.0 - (s - 0.6) / 0.4, -(s - 0.6) / 0.4};
    case TrajectoryShape::line:
      return {s, 0.0};
    case TrajectoryShape::none:
      break;
  }
  return {0.0, 0.0};
}

HandPose lerp(const HandPose& a, const HandPose& b, double t) {
  HandPose out;
  for (std::size_t f = 0; f < 5; ++f) out.curl[f] = a.curl[f] + t * (b.curl[f] - a.curl[f]);
  out.spread = a.spread + t * (b.spread - a.spread);
  return out;
}

int gesture_count(const SynthConfig& cfg, int index) {
  auto rng = make_rng(cfg.seed, {kTagCount, static_cast<std::uint64_t>(index)});
  return std::uniform_int_distribution<int>(cfg.min_gestures, cfg.max_gestures)(rng);
}

int scheduled_label(const SynthConfig& cfg, long long occurrence) {
  const long long classes = static_cast<long long>(cfg.templates.size());
  const long long round = occurrence / classes;
  std::vector<int> perm(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i) + 1;
  auto rng = make_rng(cfg.seed, {kTagRound, static_cast<std::uint64_t>(round)});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm[static_cast<std::size_t>(occurrence % classes)];
}

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::pair<long long, long long> parse_range(const std::string& text, const std::string& what) {
  auto toks = split_ws(text);
  if (toks.size() == 1) toks = split_on(text, ':');
  if (toks.size() == 1) toks.push_back(toks[0]);
  if (toks.size() != 2) fail(ErrorKind::Config, what + ": expected '<min> <max>'");
  return {parse_int(toks[0], what), parse_int(toks[1], what)};
}

TrajectoryShape parse_shape(const std::string& text) {
  if (text == "none") return TrajectoryShape::none;
  if (text == "circle") return TrajectoryShape::circle;
  if (text == "square") return TrajectoryShape::square;
  if (text == "v_mark") return TrajectoryShape::v_mark;
  if (text == "x_mark") return TrajectoryShape::x_mark;
  if (text == "caret") return TrajectoryShape::caret;
  if (text == "line") return TrajectoryShape::line;
  fail(ErrorKind::Config, "unknown trajectory shape '" + text + "'");
}

GestureTemplate parse_template(const std::string& text, int label) {
  auto toks = split_ws(text);
  if (toks.size() < 2) fail(ErrorKind::Config, "gesture: expected '<name> <category> [key=value...]'");
  GestureTemplate t;
  t.name = toks[0];
  t.label = label;
  auto cat = parse_category(toks[1]);
  if (!cat) fail(ErrorKind::Config, "gesture " + t.name + ": unknown category '" + toks[1] + "'");
  t.category = *cat;
  if (t.category == GestureCategory::periodic) t.shape = TrajectoryShape::line;
  const std::string what = "gesture " + t.name;
  for (std::size_t i = 2; i < toks.size(); ++i) {
    auto eq = toks[i].find('=');
    if (eq == std::string::npos) fail(ErrorKind::Config, what + ": expected key=value, got " + toks[i]);
    const std::string key = toks[i].substr(0, eq);
    const std::string value = toks[i].substr(eq + 1);
    if (key == "pose") {
      t.pose = hand_pose_preset(value);
    } else if (key == "shape") {
      t.shape = parse_shape(value);
    } else if (key == "amplitude") {
      t.amplitude = parse_double(value, what + " amplitude");
    } else if (key == "duration") {
      auto [lo, hi] = parse_range(value, what + " duration");
      t.min_duration = static_cast<int>(lo);
      t.max_duration = static_cast<int>(hi);
    } else if (key == "jitter") {
      t.jitter_std = parse_double(value, what + " jitter");
    } else if (key == "cycles") {
      t.cycles = parse_double(value, what + " cycles");
    } else if (key == "axis") {
      if (value == "x") t.axis = 0;
      else if (value == "y") t.axis = 1;
      else if (value == "z") t.axis = 2;
      else fail(ErrorKind::Config, what + ": axis must be x, y or z");
    } else {
      fail(ErrorKind::Config, what + ": unknown key '" + key + "'");
    }
  }
  return t;
}

}  // namespace

const char* to_string(TrajectoryShape shape) {
  switch (shape) {
    case TrajectoryShape::none: return "none";
    case TrajectoryShape::circle: return "circle";
    case TrajectoryShape::square: return "square";
    case TrajectoryShape::v_mark: return "v_mark";
    case TrajectoryShape::x_mark: return "x_mark";
    case TrajectoryShape::caret: return "caret";
    case TrajectoryShape::line: return "line";
  }
  return "none";
}

HandPose hand_pose_preset(const std::string& name) {
  if (name == "rest") return {{0.30, 0.25, 0.25, 0.25, 0.30}, 1.0};
  if (name == "fist") return {{0.80, 0.95, 0.95, 0.95, 0.95}, 0.8};
  if (name == "point") return {{0.70, 0.00, 0.95, 0.95, 0.95}, 1.0};
  if (name == "pinch") return {{0.45, 0.55, 0.20, 0.20, 0.20}, 1.0};
  if (name == "open") return {{0.00, 0.00, 0.00, 0.00, 0.00}, 1.6};
  if (name == "victory") return {{0.80, 0.00, 0.00, 0.95, 0.95}, 1.4};
  if (name == "thumb_up") return {{0.00, 0.95, 0.95, 0.95, 0.95}, 1.0};
  if (name == "three") return {{0.00, 0.00, 0.00, 0.95, 0.95}, 1.2};
  fail(ErrorKind::Config, "unknown hand pose preset '" + name + "'");
}

std::vector<Vec3> hand_joints(const HandPose& pose, int joints) {
  std::vector<Vec3> out;
  out.reserve(26);
  out.push_back({0.0, 0.0, 0.0});
  for (std::size_t f = 0; f < 5; ++f) {
    const auto& g = kFingers[f];
    const double angle = g.angle * pose.spread;
    const double dx = std::sin(angle);
    const double dy = std::cos(angle);
    Vec3 p{g.base_x * pose.spread, g.base_y, 0.0};
    out.push_back(p);
    double bend = 0.0;
    for (std::size_t s = 0; s < 4; ++s) {
      if (s > 0 || f == 0) bend += kMaxBend * pose.curl[f];
      const double along = std::cos(bend) * g.segments[s];
      p = add(p, {dx * along, dy * along, -std::sin(bend) * g.segments[s]});
      out.push_back(p);
    }
  }
  out.resize(static_cast<std::size_t>(joints));
  return out;
}

void validate(const SynthConfig& cfg) {
  auto bad = [](const std::string& what) { fail(ErrorKind::Config, what); };
  if (cfg.templates.empty()) bad("synth config needs at least one gesture template");
  if (cfg.joints < 2 || cfg.joints > 26) bad("synthetic hand supports 2..26 joints");
  if (!(cfg.fps > 0.0)) bad("fps must be positive");
  if (cfg.min_length < 1 || cfg.min_length > cfg.max_length) bad("sequence_length range is empty");
  if (cfg.min_gestures < 0 || cfg.min_gestures > cfg.max_gestures) {
    bad("gestures_per_sequence range is empty");
  }
  if (cfg.margin < 0 || cfg.min_gap < 0 || cfg.blend_frames < 0) bad("negative margin/gap/blend");
  if (cfg.walk_step_std < 0 || cfg.finger_noise_std < 0 || cfg.background_jitter_std < 0) {
    bad("noise standard deviations must be >= 0");
  }
  if (cfg.pause_probability < 0 || cfg.pause_probability > 1) bad("pause_probability outside [0,1]");
  if (cfg.min_pause < 0 || cfg.min_pause > cfg.max_pause) bad("pause range is empty");
  if (cfg.subjects < 1) bad("subjects must be >= 1");
  int longest = 0;
  for (const auto& t : cfg.templates) {
    const std::string what = "gesture " + t.name + ": ";
    if (t.min_duration < 1 || t.min_duration > t.max_duration) bad(what + "duration range is empty");
    if (t.jitter_std < 0) bad(what + "jitter must be >= 0");
    const bool needs_shape = t.category != GestureCategory::static_pose;
    if (needs_shape != (t.shape != TrajectoryShape::none)) {
      bad(what + "a trajectory shape is required exactly for non-static gestures");
    }
    if (t.category == GestureCategory::periodic && t.shape != TrajectoryShape::line) {
      bad(what + "periodic gestures oscillate along a line");
    }
    longest = std::max(longest, t.max_duration);
  }
  const long long worst = 2LL * cfg.margin +
                          static_cast<long long>(std::max(cfg.max_gestures - 1, 0)) * cfg.min_gap +
                          static_cast<long long>(cfg.max_gestures) * longest;
  if (worst > cfg.min_length) {
    bad("gesture durations exceed sequence length: up to " + std::to_string(worst) +
        " frames needed but min sequence length is " + std::to_string(cfg.min_length));
  }
}

SynthConfig synth_config_from(const KeyValueConfig& kv) {
  SynthConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  cfg.num_sequences = static_cast<int>(kv.get_int("sequences", cfg.num_sequences));
  cfg.joints = static_cast<int>(kv.get_int("joints", cfg.joints));
  cfg.fps = kv.get_double("fps", cfg.fps);
  if (auto r = kv.get("sequence_length")) {
    auto [lo, hi] = parse_range(*r, "sequence_length");
    cfg.min_length = static_cast<int>(lo);
    cfg.max_length = static_cast<int>(hi);
  }
  if (auto r = kv.get("gestures_per_sequence")) {
    auto [lo, hi] = parse_range(*r, "gestures_per_sequence");
    cfg.min_gestures = static_cast<int>(lo);
    cfg.max_gestures = static_cast<int>(hi);
  }
  if (auto r = kv.get("pause_length")) {
    auto [lo, hi] = parse_range(*r, "pause_length");
    cfg.min_pause = static_cast<int>(lo);
    cfg.max_pause = static_cast<int>(hi);
  }
  cfg.margin = static_cast<int>(kv.get_int("margin", cfg.margin));
  cfg.min_gap = static_cast<int>(kv.get_int("min_gap", cfg.min_gap));
  cfg.blend_frames = static_cast<int>(kv.get_int("blend_frames", cfg.blend_frames));
  cfg.walk_step_std = kv.get_double("walk_step_std", cfg.walk_step_std);
  cfg.walk_damping = kv.get_double("walk_damping", cfg.walk_damping);
  cfg.pause_probability = kv.get_double("pause_probability", cfg.pause_probability);
  cfg.finger_noise_std = kv.get_double("finger_noise_std", cfg.finger_noise_std);
  cfg.background_jitter_std = kv.get_double("background_jitter_std", cfg.background_jitter_std);
  cfg.subjects = static_cast<int>(kv.get_int("subjects", cfg.subjects));
  int label = 1;
  for (const auto& g : kv.get_all("gesture")) cfg.templates.push_back(parse_template(g, label++));
  validate(cfg);
  return cfg;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  return synth_config_from(KeyValueConfig::load(path));
}

Dictionary dictionary_of(const SynthConfig& cfg) {
  Dictionary dict;
  dict.joint_count = cfg.joints;
  dict.classes.push_back({"non_gesture", GestureCategory::static_pose});
  for (const auto& t : cfg.templates) dict.classes.push_back({t.name, t.category});
  return dict;
}

PoseSequence generate_sequence(const SynthConfig& cfg, int index) {
  validate(cfg);
  if (index < 0) fail(ErrorKind::Config, "sequence index must be >= 0");

  long long occurrence = 0;
  for (int j = 0; j < index; ++j) occurrence += gesture_count(cfg, j);
  const int n = gesture_count(cfg, index);

  auto rng = make_rng(cfg.seed, {kTagSequence, static_cast<std::uint64_t>(index)});
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<const GestureTemplate*> plan;
  std::vector<int> durations;
  int gesture_frames = 0;
  for (int k = 0; k < n; ++k) {
    const auto* t = &cfg.templates[static_cast<std::size_t>(scheduled_label(cfg, occurrence + k) - 1)];
    plan.push_back(t);
    durations.push_back(std::uniform_int_distribution<int>(t->min_duration, t->max_duration)(rng));
    gesture_frames += durations.back();
  }
  const int length = std::uniform_int_distribution<int>(cfg.min_length, cfg.max_length)(rng);
  const int fixed = 2 * cfg.margin + std::max(n - 1, 0) * cfg.min_gap + gesture_frames;
  const int slack = length - fixed;  // >= 0 by validate()

  std::vector<double> weights(static_cast<std::size_t>(n) + 1);
  double total = 0.0;
  for (auto& w : weights) total += (w = unit(rng) + 1e-9);
  std::vector<int> gaps(weights.size());
  int used = 0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const int extra = static_cast<int>(std::floor(slack * weights[i] / total));
    const bool edge = i == 0 || i + 1 == gaps.size();
    gaps[i] = (edge ? cfg.margin : cfg.min_gap) + extra;
    used += extra;
  }
  gaps.back() += slack - used;
  if (n == 0) gaps[0] = length;

  PoseSequence seq;
  seq.fps = cfg.fps;
  seq.num_classes = cfg.num_classes();
  {
    char id[64];
    std::snprintf(id, sizeof id, "s%02d/seq%04d", index % cfg.subjects + 1, index);
    seq.source_id = id;
  }
  seq.frames.reserve(static_cast<std::size_t>(length));

  const HandPose rest = hand_pose_preset("rest");
  const Vec3 home{0.0, 1.2, 0.4};
  Vec3 pos = home;
  Vec3 vel{};
  int pause_left = 0;
  std::array<double, 5> drift{};
  HandPose current = rest;

  auto emit = [&](const HandPose& pose, Vec3 at, double jitter) {
    PoseFrame frame;
    frame.timestamp_index = static_cast<std::int64_t>(seq.frames.size());
    frame.joints = hand_joints(pose, cfg.joints);
    for (auto& j : frame.joints) {
      j = add(j, at);
      if (jitter > 0.0) {
        j.x += jitter * gauss(rng);
        j.y += jitter * gauss(rng);
        j.z += jitter * gauss(rng);
      }
    }
    seq.frames.push_back(std::move(frame));
  };

  auto non_gesture = [&](int frames) {
    for (int f = 0; f < frames; ++f) {
      if (pause_left > 0) {
        --pause_left;
        vel = {vel.x * 0.5, vel.y * 0.5, vel.z * 0.5};
      } else {
        if (unit(rng) < cfg.pause_probability) {
          pause_left = std::uniform_int_distribution<int>(cfg.min_pause, cfg.max_pause)(rng);
        }
        const double d = cfg.walk_damping;
        const double pull = 0.002;
        vel.x = d * vel.x + cfg.walk_step_std * gauss(rng) - pull * (pos.x - home.x);
        vel.y = d * vel.y + cfg.walk_step_std * gauss(rng) - pull * (pos.y - home.y);
        vel.z = d * vel.z + cfg.walk_step_std * gauss(rng) - pull * (pos.z - home.z);
      }
      pos = add(pos, vel);
      for (std::size_t i = 0; i < 5; ++i) {
        drift[i] = 0.95 * drift[i] + cfg.finger_noise_std * gauss(rng);
        current.curl[i] = std::clamp(rest.curl[i] + drift[i], 0.0, 1.0);
      }
      current.spread = rest.spread;
      emit(current, pos, cfg.background_jitter_std);
    }
  };

  auto gesture = [&](const GestureTemplate& t, int duration) {
    const int blend = std::min(cfg.blend_frames, duration / 4);
    const HandPose from = current;
    const Vec3 origin = pos;
    const int body = duration - 2 * blend;
    Vec3 at = origin;
    for (int k = 0; k < duration; ++k) {
      HandPose pose = t.pose;
      if (k < blend) {
        pose = lerp(from, t.pose, static_cast<double>(k + 1) / (blend + 1));
      } else if (k >= duration - blend) {
        pose = lerp(t.pose, rest, static_cast<double>(k - (duration - blend) + 1) / (blend + 1));
      } else {
        const double s = body > 1 ? static_cast<double>(k - blend) / (body - 1) : 0.0;
        at = origin;
        if (t.category == GestureCategory::periodic) {
          const double off = t.amplitude * std::sin(2.0 * std::numbers::pi * t.cycles * s);
          (t.axis == 0 ? at.x : t.axis == 1 ? at.y : at.z) += off;
        } else if (t.category != GestureCategory::static_pose) {
          auto xy = unit_trajectory(t.shape, s);
          at.x += t.amplitude * xy[0];
          at.y += t.amplitude * xy[1];
        }
      }
      emit(pose, at, t.jitter_std);
    }
    pos = at;
    vel = {};
    pause_left = 0;
    drift = {};
    current = rest;
  };

  non_gesture(gaps[0]);
  for (int k = 0; k < n; ++k) {
    GestureAnnotation a;
    a.label = plan[static_cast<std::size_t>(k)]->label;
    a.category = plan[static_cast<std::size_t>(k)]->category;
    a.start_frame = seq.size();
    gesture(*plan[static_cast<std::size_t>(k)], durations[static_cast<std::size_t>(k)]);
    a.end_frame = seq.size() - 1;
    seq.annotations.push_back(a);
    non_gesture(gaps[static_cast<std::size_t>(k) + 1]);
  }
  validate(seq);
  return seq;
}

std::vector<PoseSequence> generate_corpus(const SynthConfig& cfg, int n_sequences) {
  if (n_sequences < 1) fail(ErrorKind::Config, "corpus needs at least one sequence");
  validate(cfg);
  std::vector<PoseSequence> out;
  out.reserve(static_cast<std::size_t>(n_sequences));
  for (int i = 0; i < n_sequences; ++i) out.push_back(generate_sequence(cfg, i));
  return out;
}

}  // namespace handseg
