#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "handseg/error.hpp"
#include "handseg/pose_io.hpp"

namespace handseg::test {

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("handseg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Valid sequence with arbitrary coordinates (including awkward doubles) and
// `gestures` disjoint sorted annotations.
inline PoseSequence random_sequence(std::mt19937_64& rng, int frames, int joints, int num_classes,
                                    int gestures) {
  std::normal_distribution<double> coord(0.0, 0.3);
  std::uniform_int_distribution<int> pick(0, 9);
  PoseSequence seq;
  seq.num_classes = num_classes;
  seq.fps = std::uniform_real_distribution<double>(10.0, 120.0)(rng);
  seq.source_id = "subj" + std::to_string(rng() % 5) + "/take" + std::to_string(rng() % 1000);
  for (int f = 0; f < frames; ++f) {
    PoseFrame frame;
    frame.timestamp_index = f;
    for (int j = 0; j < joints; ++j) {
      Vec3 p{coord(rng), coord(rng), coord(rng)};
      if (pick(rng) == 0) p.x = std::nextafter(p.x, 1.0);
      if (pick(rng) == 0) p.y = 1e-300 * p.y;
      if (pick(rng) == 0) p.z = -0.0;
      frame.joints.push_back(p);
    }
    seq.frames.push_back(std::move(frame));
  }
  // Cut [0, frames) into 2 * gestures + 1 pieces and annotate the odd ones.
  if (gestures > 0 && frames >= 2 * gestures + 1) {
    std::vector<int> cuts;
    std::uniform_int_distribution<int> at(1, frames - 1);
    while (static_cast<int>(cuts.size()) < 2 * gestures) {
      int c = at(rng);
      if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    std::uniform_int_distribution<int> label(1, num_classes - 1);
    std::uniform_int_distribution<int> cat(0, 3);
    for (int g = 0; g < gestures; ++g) {
      GestureAnnotation a;
      a.label = label(rng);
      a.start_frame = cuts[2 * g];
      a.end_frame = cuts[2 * g + 1] - 1;
      a.category = static_cast<GestureCategory>(cat(rng));
      seq.annotations.push_back(a);
    }
  }
  return seq;
}

// Kind of the Error thrown by f, or nullopt if it returns normally.
template <class F>
std::optional<ErrorKind> error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace handseg::test
