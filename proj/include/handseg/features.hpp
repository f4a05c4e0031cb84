#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "handseg/pose_io.hpp"

namespace handseg {

// Dense row-major matrix; rows are feature channels, columns are frames.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// The W frames [end_frame - W + 1, end_frame] of a sequence.
struct Window {
  std::span<const PoseFrame> frames;
  std::int64_t end_frame = 0;

  int length() const { return static_cast<int>(frames.size()); }
  int joints() const { return frames.empty() ? 0 : static_cast<int>(frames[0].joints.size()); }
};

// Throws Error(OutOfRange) if the window does not fit, Error(Shape) if W is
// odd or below 4.
Window make_window(const PoseSequence& seq, std::int64_t end_frame, int window);

void check_window_length(int window);

// per_axis: 3J rows of signed displacements (joint-major, axis-minor).
// magnitude: J rows of displacement norms.
enum class MotionVariant { per_axis, magnitude };

const char* to_string(MotionVariant variant);
std::optional<MotionVariant> parse_motion_variant(const std::string& text);

struct FeatureOptions {
  MotionVariant motion = MotionVariant::per_axis;
  double scale = 1.0;  // device units -> meters
};

inline int pair_count(int joints) { return joints * (joints - 1) / 2; }
inline int motion_rows(int joints, MotionVariant v) {
  return v == MotionVariant::per_axis ? 3 * joints : joints;
}

// Pairwise joint distances; row order is lexicographic over pairs (i < j).
Matrix jcd(const Window& window, double scale = 1.0);
// Column f: frame f+1 minus frame f.
Matrix m_slow(const Window& window, const FeatureOptions& opts = {});
// Column k: frame 2k+2 minus frame 2k.
Matrix m_fast(const Window& window, const FeatureOptions& opts = {});

// Single-frame columns shared by the batch and streaming paths. `out` holds
// pair_count(J) distances, or motion_rows(J, opts.motion) values of to - from.
void jcd_column(const PoseFrame& frame, double scale, std::span<double> out);
void displacement_column(const PoseFrame& from, const PoseFrame& to, const FeatureOptions& opts,
                         std::span<double> out);

struct ViewSet {
  Matrix jcd;
  Matrix m_slow;
  Matrix m_fast;
};

ViewSet compute_views(const Window& window, const FeatureOptions& opts = {});

enum class Sdn { S = 0, D = 1, N = 2 };

inline Sdn sdn_of(GestureCategory c) {
  return c == GestureCategory::static_pose ? Sdn::S : Sdn::D;
}

struct TaskLabels {
  Sdn sdn = Sdn::N;
  int fine = 0;
  std::optional<int> start_index;
  std::optional<int> end_index;

  friend bool operator==(const TaskLabels&, const TaskLabels&) = default;
};

// Task order: SDN, fine-grained, gesture start, gesture end.
enum Task : int { kTaskSdn = 0, kTaskFine = 1, kTaskStart = 2, kTaskEnd = 3 };
using TaskMask = std::array<bool, 4>;

inline TaskMask mask_for(const TaskLabels& labels) {
  return {true, true, labels.start_index.has_value(), labels.end_index.has_value()};
}

struct WindowSample {
  ViewSet views;
  TaskLabels labels;
  TaskMask mask{true, true, false, false};
};

TaskLabels label_window(const PoseSequence& seq, std::int64_t end_frame, int window,
                        double overlap_threshold = 0.5);

WindowSample make_sample(const PoseSequence& seq, std::int64_t end_frame, int window,
                         double overlap_threshold = 0.5, const FeatureOptions& opts = {});

// Per-frame feature columns for a whole sequence, so every window's views are
// contiguous slices: jcd column f, first differences x[f] - x[f-1] and second
// differences x[f] - x[f-2] (zero where undefined).
class SequenceFeatures {
 public:
  SequenceFeatures() = default;
  SequenceFeatures(const PoseSequence& seq, const FeatureOptions& opts);

  int joints() const { return joints_; }
  std::int64_t frames() const { return frames_; }
  int jcd_rows() const { return jcd_rows_; }
  int motion_rows() const { return motion_rows_; }

  // Writes the three views of the window ending at `end_frame` as
  // channel-major arrays: jcd (jcd_rows x W), slow (motion_rows x W-1),
  // fast (motion_rows x W/2-1).
  template <class T>
  void gather(std::int64_t end_frame, int window, std::span<T> jcd_out, std::span<T> slow_out,
              std::span<T> fast_out) const;

 private:
  int joints_ = 0;
  std::int64_t frames_ = 0;
  int jcd_rows_ = 0;
  int motion_rows_ = 0;
  std::vector<double> jcd_;   // frames x jcd_rows
  std::vector<double> diff1_; // frames x motion_rows
  std::vector<double> diff2_; // frames x motion_rows
};

}  // namespace handseg
