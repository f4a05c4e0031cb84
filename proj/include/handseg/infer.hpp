#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "handseg/features.hpp"
#include "handseg/model.hpp"
#include "handseg/pose_io.hpp"

namespace handseg {

// Frame a prediction is attributed to, relative to the last input frame of
// its window: center = emit - W/2, window_start = emit - (W-1), emit_frame = emit.
enum class SpanAttribution { center, window_start, emit_frame };

const char* to_string(SpanAttribution a);
std::optional<SpanAttribution> parse_span_attribution(const std::string& text);

int attribution_offset(SpanAttribution a, int window);

struct DetectionEvent {
  int label = 0;
  std::int64_t pred_start = 0;
  std::int64_t pred_end = 0;
  std::int64_t first_emit = 0;  // last input frame used when the detection first appeared

  friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

// Span of a detection whose final label held from first_emit to last_emit
// (inclusive), clamped to [0, last_frame].
std::pair<std::int64_t, std::int64_t> assign_predicted_span(std::int64_t first_emit, std::int64_t last_emit,
                                                            int window, SpanAttribution a,
                                                            std::int64_t last_frame);

// Mode of the last W labels. Ties go to the most recently seen candidate.
class MajorityVote {
 public:
  MajorityVote(int window, int num_labels);

  void push(int label);
  bool full() const { return size_ == window_; }
  int size() const { return size_; }
  int mode() const;
  void reset();

 private:
  int window_;
  int size_ = 0;
  int head_ = 0;  // next write position
  std::vector<int> ring_;
  std::vector<int> counts_;
};

// Turns the final label stream into detection events: 0 -> l opens, l -> x closes.
class DetectionTracker {
 public:
  explicit DetectionTracker(int window, SpanAttribution a = SpanAttribution::center);

  // Final label y emitted at input frame `frame`. Returns the event it closed.
  std::optional<DetectionEvent> push(std::int64_t frame, int label);
  // Closes any open detection at the last pushed frame.
  std::optional<DetectionEvent> finish();
  bool open() const { return label_ != 0; }

 private:
  DetectionEvent close(std::int64_t last_emit);

  int window_;
  SpanAttribution attribution_;
  int label_ = 0;
  std::int64_t first_emit_ = 0;
  std::int64_t last_frame_ = -1;
};

struct InferOptions {
  SpanAttribution attribution = SpanAttribution::center;
};

struct StepResult {
  std::int64_t frame = 0;
  std::optional<int> preliminary;  // after W frames
  std::optional<int> label;        // after 2W - 1 frames
  std::optional<DetectionEvent> closed;
};

// Online recognizer for one stream. Keeps ring buffers of the last W frames'
// feature columns and the last W preliminary labels, so each step costs one
// window evaluation regardless of stream length. `params` must outlive it.
class OnlineRecognizer {
 public:
  explicit OnlineRecognizer(const ModelParams& params, InferOptions opts = {});

  // Throws Error(Shape) if the frame has the wrong joint count.
  StepResult step(const PoseFrame& frame);
  std::optional<DetectionEvent> finish();
  void reset();

  std::int64_t frames_seen() const { return frames_seen_; }
  int window() const { return window_; }

 private:
  const ModelParams& params_;
  InferOptions opts_;
  int window_;
  int joints_;
  int jcd_rows_;
  int motion_rows_;
  FeatureOptions features_;
  Network<float> net_;
  ViewTensors<float> views_;
  std::vector<PoseFrame> frames_;        // ring, W
  std::vector<double> jcd_, d1_, d2_;    // rings of per-frame columns
  MajorityVote vote_;
  DetectionTracker tracker_;
  std::int64_t frames_seen_ = 0;
};

struct OfflineResult {
  std::vector<DetectionEvent> detections;
  std::vector<int> preliminary;  // per frame; -1 before the first full window
  std::vector<int> labels;       // per frame; -1 during warm-up
};

// Feeds the sequence through an OnlineRecognizer frame by frame.
// Throws Error(SequenceTooShort) below 2W - 1 frames.
OfflineResult run_offline(const PoseSequence& seq, const ModelParams& params, InferOptions opts = {});

struct SequenceDetections {
  std::string sequence_id;
  std::vector<DetectionEvent> detections;
};

// One line per event: `sequence_id label pred_start pred_end first_emit`.
void write_detections(const std::vector<SequenceDetections>& all, std::ostream& out);
void write_detections(const std::vector<SequenceDetections>& all, const std::filesystem::path& path);
// Groups lines by sequence id in order of first appearance.
std::vector<SequenceDetections> read_detections(std::istream& in, const std::string& origin = "<stream>");
std::vector<SequenceDetections> read_detections(const std::filesystem::path& path);

}  // namespace handseg
