#include "handseg/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "handseg/error.hpp"

namespace handseg {

const char* to_string(MotionVariant variant) {
  return variant == MotionVariant::per_axis ? "per_axis" : "magnitude";
}

std::optional<MotionVariant> parse_motion_variant(const std::string& text) {
  if (text == "per_axis") return MotionVariant::per_axis;
  if (text == "magnitude") return MotionVariant::magnitude;
  return std::nullopt;
}

void check_window_length(int window) {
  if (window < 4 || window % 2 != 0) {
    fail(ErrorKind::Shape, "window length must be even and >= 4, got " + std::to_string(window));
  }
}

Window make_window(const PoseSequence& seq, std::int64_t end_frame, int window) {
  check_window_length(window);
  const std::int64_t first = end_frame - window + 1;
  if (first < 0 || end_frame >= seq.size()) {
    fail(ErrorKind::OutOfRange, "window ending at frame " + std::to_string(end_frame) +
                                    " does not fit in a sequence of " +
                                    std::to_string(seq.size()) + " frames");
  }
  return Window{std::span<const PoseFrame>(seq.frames).subspan(static_cast<std::size_t>(first),
                                                              static_cast<std::size_t>(window)),
                end_frame};
}

namespace {

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Writes the displacement b - a of every joint into `out` (stride `stride`).
void displacement(const PoseFrame& a, const PoseFrame& b, const FeatureOptions& opts, double* out,
                  std::size_t stride) {
  const std::size_t joints = a.joints.size();
  for (std::size_t j = 0; j < joints; ++j) {
    const double dx = opts.scale * (b.joints[j].x - a.joints[j].x);
    const double dy = opts.scale * (b.joints[j].y - a.joints[j].y);
    const double dz = opts.scale * (b.joints[j].z - a.joints[j].z);
    if (opts.motion == MotionVariant::per_axis) {
      out[(3 * j) * stride] = dx;
      out[(3 * j + 1) * stride] = dy;
      out[(3 * j + 2) * stride] = dz;
    } else {
      out[j * stride] = std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  }
}

void jcd_column(const PoseFrame& frame, double scale, double* out, std::size_t stride) {
  const std::size_t joints = frame.joints.size();
  std::size_t row = 0;
  for (std::size_t i = 0; i < joints; ++i) {
    for (std::size_t j = i + 1; j < joints; ++j) {
      out[row++ * stride] = scale * distance(frame.joints[i], frame.joints[j]);
    }
  }
}

}  // namespace

void jcd_column(const PoseFrame& frame, double scale, std::span<double> out) {
  if (out.size() != static_cast<std::size_t>(pair_count(static_cast<int>(frame.joints.size())))) {
    fail(ErrorKind::Shape, "jcd column size mismatch");
  }
  jcd_column(frame, scale, out.data(), 1);
}

void displacement_column(const PoseFrame& from, const PoseFrame& to, const FeatureOptions& opts,
                         std::span<double> out) {
  const int joints = static_cast<int>(from.joints.size());
  if (to.joints.size() != from.joints.size() ||
      out.size() != static_cast<std::size_t>(motion_rows(joints, opts.motion))) {
    fail(ErrorKind::Shape, "displacement column size mismatch");
  }
  displacement(from, to, opts, out.data(), 1);
}

Matrix jcd(const Window& window, double scale) {
  Matrix out(pair_count(window.joints()), window.length());
  for (int f = 0; f < window.length(); ++f) {
    jcd_column(window.frames[static_cast<std::size_t>(f)], scale, &out.data[static_cast<std::size_t>(f)],
               static_cast<std::size_t>(out.cols));
  }
  return out;
}

Matrix m_slow(const Window& window, const FeatureOptions& opts) {
  Matrix out(motion_rows(window.joints(), opts.motion), window.length() - 1);
  for (int f = 0; f + 1 < window.length(); ++f) {
    displacement(window.frames[static_cast<std::size_t>(f)], window.frames[static_cast<std::size_t>(f) + 1],
                 opts, &out.data[static_cast<std::size_t>(f)], static_cast<std::size_t>(out.cols));
  }
  return out;
}

Matrix m_fast(const Window& window, const FeatureOptions& opts) {
  check_window_length(window.length());
  Matrix out(motion_rows(window.joints(), opts.motion), window.length() / 2 - 1);
  for (int k = 0; k < out.cols; ++k) {
    displacement(window.frames[static_cast<std::size_t>(2 * k)],
                 window.frames[static_cast<std::size_t>(2 * k + 2)], opts,
                 &out.data[static_cast<std::size_t>(k)], static_cast<std::size_t>(out.cols));
  }
  return out;
}

ViewSet compute_views(const Window& window, const FeatureOptions& opts) {
  return {jcd(window, opts.scale), m_slow(window, opts), m_fast(window, opts)};
}

TaskLabels label_window(const PoseSequence& seq, std::int64_t end_frame, int window,
                        double overlap_threshold) {
  check_window_length(window);
  const std::int64_t first = end_frame - window + 1;
  if (first < 0 || end_frame >= seq.size()) {
    fail(ErrorKind::OutOfRange, "window ending at frame " + std::to_string(end_frame) +
                                    " does not fit in the sequence");
  }
  TaskLabels labels;
  std::int64_t best_overlap = 0;
  std::int64_t best_end = -1;
  const GestureAnnotation* best = nullptr;
  for (const auto& a : seq.annotations) {
    const std::int64_t lo = std::max(first, a.start_frame);
    const std::int64_t hi = std::min(end_frame, a.end_frame);
    if (hi >= lo) {
      const std::int64_t overlap = hi - lo + 1;
      if (overlap > best_overlap || (overlap == best_overlap && hi > best_end)) {
        best_overlap = overlap;
        best_end = hi;
        best = &a;
      }
    }
    if (a.start_frame >= first && a.start_frame <= end_frame) {
      labels.start_index = static_cast<int>(a.start_frame - first);
    }
    if (a.end_frame >= first && a.end_frame <= end_frame) {
      labels.end_index = static_cast<int>(a.end_frame - first);
    }
  }
  if (best != nullptr && static_cast<double>(best_overlap) >= overlap_threshold * window) {
    labels.fine = best->label;
    labels.sdn = sdn_of(best->category);
  }
  return labels;
}

WindowSample make_sample(const PoseSequence& seq, std::int64_t end_frame, int window,
                         double overlap_threshold, const FeatureOptions& opts) {
  WindowSample sample;
  sample.labels = label_window(seq, end_frame, window, overlap_threshold);
  sample.views = compute_views(make_window(seq, end_frame, window), opts);
  sample.mask = mask_for(sample.labels);
  return sample;
}

SequenceFeatures::SequenceFeatures(const PoseSequence& seq, const FeatureOptions& opts)
    : joints_(seq.joint_count()),
      frames_(seq.size()),
      jcd_rows_(pair_count(seq.joint_count())),
      motion_rows_(handseg::motion_rows(seq.joint_count(), opts.motion)) {
  const auto n = static_cast<std::size_t>(frames_);
  jcd_.assign(n * static_cast<std::size_t>(jcd_rows_), 0.0);
  diff1_.assign(n * static_cast<std::size_t>(motion_rows_), 0.0);
  diff2_.assign(n * static_cast<std::size_t>(motion_rows_), 0.0);
  for (std::size_t f = 0; f < n; ++f) {
    jcd_column(seq.frames[f], opts.scale, &jcd_[f * static_cast<std::size_t>(jcd_rows_)], 1);
    if (f >= 1) {
      displacement(seq.frames[f - 1], seq.frames[f], opts,
                   &diff1_[f * static_cast<std::size_t>(motion_rows_)], 1);
    }
    if (f >= 2) {
      displacement(seq.frames[f - 2], seq.frames[f], opts,
                   &diff2_[f * static_cast<std::size_t>(motion_rows_)], 1);
    }
  }
}

template <class T>
void SequenceFeatures::gather(std::int64_t end_frame, int window, std::span<T> jcd_out,
                              std::span<T> slow_out, std::span<T> fast_out) const {
  const std::int64_t first = end_frame - window + 1;
  if (first < 0 || end_frame >= frames_) {
    fail(ErrorKind::OutOfRange, "window ending at frame " + std::to_string(end_frame) +
                                    " does not fit in the sequence");
  }
  const auto W = static_cast<std::size_t>(window);
  const auto jr = static_cast<std::size_t>(jcd_rows_);
  const auto mr = static_cast<std::size_t>(motion_rows_);
  const auto s = static_cast<std::size_t>(first);
  for (std::size_t f = 0; f < W; ++f) {
    const double* col = &jcd_[(s + f) * jr];
    for (std::size_t r = 0; r < jr; ++r) jcd_out[r * W + f] = static_cast<T>(col[r]);
  }
  for (std::size_t f = 0; f + 1 < W; ++f) {
    const double* col = &diff1_[(s + f + 1) * mr];
    for (std::size_t r = 0; r < mr; ++r) slow_out[r * (W - 1) + f] = static_cast<T>(col[r]);
  }
  const std::size_t fast_cols = W / 2 - 1;
  for (std::size_t k = 0; k < fast_cols; ++k) {
    const double* col = &diff2_[(s + 2 * k + 2) * mr];
    for (std::size_t r = 0; r < mr; ++r) fast_out[r * fast_cols + k] = static_cast<T>(col[r]);
  }
}

template void SequenceFeatures::gather<float>(std::int64_t, int, std::span<float>,
                                              std::span<float>, std::span<float>) const;
template void SequenceFeatures::gather<double>(std::int64_t, int, std::span<double>,
                                               std::span<double>, std::span<double>) const;

}  // namespace handseg
