#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "handseg/kvconfig.hpp"
#include "handseg/pose_io.hpp"

namespace handseg {

enum class TrajectoryShape { none, circle, square, v_mark, x_mark, caret, line };

const char* to_string(TrajectoryShape shape);

// Finger configuration of the 26-joint synthetic hand: curl in [0, 1] per
// finger (thumb first) plus a lateral spread multiplier.
struct HandPose {
  std::array<double, 5> curl{0.2, 0.2, 0.2, 0.2, 0.2};
  double spread = 1.0;
};

// Named presets: rest, fist, point, pinch, open, victory, thumb_up, three.
HandPose hand_pose_preset(const std::string& name);

struct GestureTemplate {
  std::string name;
  int label = 1;
  GestureCategory category = GestureCategory::static_pose;
  int min_duration = 60;
  int max_duration = 100;
  HandPose pose;
  TrajectoryShape shape = TrajectoryShape::none;
  double amplitude = 0.1;   // meters
  double jitter_std = 0.001;
  double cycles = 3.0;      // periodic only
  int axis = 0;             // periodic oscillation axis (0=x, 1=y, 2=z)
};

struct SynthConfig {
  std::vector<GestureTemplate> templates;  // template i has label i + 1
  int min_length = 400;
  int max_length = 600;
  int min_gestures = 3;
  int max_gestures = 3;
  int margin = 20;       // non-gesture frames kept at both sequence ends
  int min_gap = 30;      // non-gesture frames between consecutive gestures
  int blend_frames = 6;  // pose transition frames at each gesture boundary
  double walk_step_std = 0.0015;
  double walk_damping = 0.85;
  double pause_probability = 0.01;
  int min_pause = 15;
  int max_pause = 40;
  double finger_noise_std = 0.02;
  double background_jitter_std = 0.001;
  int subjects = 4;
  std::uint64_t seed = 0;
  int joints = 26;
  double fps = 60.0;
  int num_sequences = 1;

  int num_classes() const { return static_cast<int>(templates.size()) + 1; }
};

// Throws Error(Config) when the configuration cannot produce valid sequences.
void validate(const SynthConfig& cfg);

SynthConfig synth_config_from(const KeyValueConfig& kv);
SynthConfig load_synth_config(const std::filesystem::path& path);

Dictionary dictionary_of(const SynthConfig& cfg);

// Pure function of (cfg, index). Gesture labels are drawn from a corpus-wide
// balanced schedule, so any prefix of indices is class-balanced within +-1.
PoseSequence generate_sequence(const SynthConfig& cfg, int index);

std::vector<PoseSequence> generate_corpus(const SynthConfig& cfg, int n_sequences);

// Joint positions of the synthetic hand in its local frame (wrist at the
// origin, fingers along +y, palm facing -z), truncated to `joints` joints.
std::vector<Vec3> hand_joints(const HandPose& pose, int joints);

}  // namespace handseg
