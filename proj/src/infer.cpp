#include "handseg/infer.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "handseg/error.hpp"
#include "handseg/fileio.hpp"
#include "handseg/kvconfig.hpp"

namespace handseg {

const char* to_string(SpanAttribution a) {
  switch (a) {
    case SpanAttribution::center: return "center";
    case SpanAttribution::window_start: return "window_start";
    case SpanAttribution::emit_frame: return "emit_frame";
  }
  return "center";
}

std::optional<SpanAttribution> parse_span_attribution(const std::string& text) {
  if (text == "center") return SpanAttribution::center;
  if (text == "window_start") return SpanAttribution::window_start;
  if (text == "emit_frame") return SpanAttribution::emit_frame;
  return std::nullopt;
}

int attribution_offset(SpanAttribution a, int window) {
  switch (a) {
    case SpanAttribution::center: return window / 2;
    case SpanAttribution::window_start: return window - 1;
    case SpanAttribution::emit_frame: return 0;
  }
  return window / 2;
}

std::pair<std::int64_t, std::int64_t> assign_predicted_span(std::int64_t first_emit, std::int64_t last_emit,
                                                            int window, SpanAttribution a,
                                                            std::int64_t last_frame) {
  const int off = attribution_offset(a, window);
  auto clamp = [&](std::int64_t f) { return std::clamp<std::int64_t>(f, 0, std::max<std::int64_t>(last_frame, 0)); };
  return {clamp(first_emit - off), clamp(last_emit - off)};
}

MajorityVote::MajorityVote(int window, int num_labels)
    : window_(window), ring_(static_cast<std::size_t>(window), 0), counts_(static_cast<std::size_t>(num_labels), 0) {
  if (window < 1) fail(ErrorKind::Shape, "vote window must be positive");
  if (num_labels < 1) fail(ErrorKind::Shape, "vote needs at least one label");
}

void MajorityVote::push(int label) {
  if (label < 0 || label >= static_cast<int>(counts_.size())) {
    fail(ErrorKind::OutOfRange, "label " + std::to_string(label) + " outside the dictionary");
  }
  if (size_ == window_) --counts_[static_cast<std::size_t>(ring_[static_cast<std::size_t>(head_)])];
  else ++size_;
  ring_[static_cast<std::size_t>(head_)] = label;
  ++counts_[static_cast<std::size_t>(label)];
  head_ = (head_ + 1) % window_;
}

int MajorityVote::mode() const {
  if (size_ == 0) fail(ErrorKind::Internal, "mode of an empty vote");
  const int best = *std::max_element(counts_.begin(), counts_.end());
  for (int k = 1; k <= size_; ++k) {
    const int label = ring_[static_cast<std::size_t>((head_ - k + window_) % window_)];
    if (counts_[static_cast<std::size_t>(label)] == best) return label;
  }
  return 0;
}

void MajorityVote::reset() {
  size_ = 0;
  head_ = 0;
  std::fill(counts_.begin(), counts_.end(), 0);
}

DetectionTracker::DetectionTracker(int window, SpanAttribution a) : window_(window), attribution_(a) {}

DetectionEvent DetectionTracker::close(std::int64_t last_emit) {
  DetectionEvent e;
  e.label = label_;
  e.first_emit = first_emit_;
  std::tie(e.pred_start, e.pred_end) = assign_predicted_span(first_emit_, last_emit, window_, attribution_, last_emit);
  label_ = 0;
  return e;
}

std::optional<DetectionEvent> DetectionTracker::push(std::int64_t frame, int label) {
  std::optional<DetectionEvent> closed;
  if (label != label_) {
    if (label_ != 0) closed = close(last_frame_);
    if (label != 0) {
      label_ = label;
      first_emit_ = frame;
    }
  }
  last_frame_ = frame;
  return closed;
}

std::optional<DetectionEvent> DetectionTracker::finish() {
  if (label_ == 0) return std::nullopt;
  return close(last_frame_);
}

OnlineRecognizer::OnlineRecognizer(const ModelParams& params, InferOptions opts)
    : params_(params),
      opts_(opts),
      window_(params.spec.window),
      joints_(params.spec.joints),
      jcd_rows_(pair_count(params.spec.joints)),
      motion_rows_(motion_rows(params.spec.joints, params.spec.motion)),
      features_(params.spec.feature_options()),
      net_(params.spec),
      views_(ViewTensors<float>::allocate(params.spec)),
      frames_(static_cast<std::size_t>(params.spec.window)),
      jcd_(static_cast<std::size_t>(window_) * jcd_rows_),
      d1_(static_cast<std::size_t>(window_) * motion_rows_),
      d2_(static_cast<std::size_t>(window_) * motion_rows_),
      vote_(params.spec.window, params.spec.num_classes),
      tracker_(params.spec.window, opts.attribution) {
  validate(params.spec);
}

StepResult OnlineRecognizer::step(const PoseFrame& frame) {
  if (static_cast<int>(frame.joints.size()) != joints_) {
    fail(ErrorKind::Shape, "frame has " + std::to_string(frame.joints.size()) + " joints, model expects " +
                               std::to_string(joints_));
  }
  const std::int64_t t = frames_seen_++;
  const auto W = static_cast<std::size_t>(window_);
  const auto slot = static_cast<std::size_t>(t % window_);
  const auto jr = static_cast<std::size_t>(jcd_rows_);
  const auto mr = static_cast<std::size_t>(motion_rows_);
  frames_[slot] = frame;
  jcd_column(frame, features_.scale, std::span<double>(jcd_).subspan(slot * jr, jr));
  auto d1 = std::span<double>(d1_).subspan(slot * mr, mr);
  auto d2 = std::span<double>(d2_).subspan(slot * mr, mr);
  if (t >= 1) displacement_column(frames_[static_cast<std::size_t>((t - 1) % window_)], frame, features_, d1);
  else std::fill(d1.begin(), d1.end(), 0.0);
  if (t >= 2) displacement_column(frames_[static_cast<std::size_t>((t - 2) % window_)], frame, features_, d2);
  else std::fill(d2.begin(), d2.end(), 0.0);

  StepResult r;
  r.frame = t;
  if (t + 1 < window_) return r;

  // Same layout as SequenceFeatures::gather.
  const std::int64_t first = t - window_ + 1;
  auto at = [&](std::size_t f) { return static_cast<std::size_t>((first + static_cast<std::int64_t>(f)) % window_); };
  for (std::size_t f = 0; f < W; ++f) {
    const double* col = &jcd_[at(f) * jr];
    for (std::size_t r2 = 0; r2 < jr; ++r2) views_.jcd[r2 * W + f] = static_cast<float>(col[r2]);
  }
  for (std::size_t f = 0; f + 1 < W; ++f) {
    const double* col = &d1_[at(f + 1) * mr];
    for (std::size_t r2 = 0; r2 < mr; ++r2) views_.slow[r2 * (W - 1) + f] = static_cast<float>(col[r2]);
  }
  const std::size_t fast_cols = W / 2 - 1;
  for (std::size_t k = 0; k < fast_cols; ++k) {
    const double* col = &d2_[at(2 * k + 2) * mr];
    for (std::size_t r2 = 0; r2 < mr; ++r2) views_.fast[r2 * fast_cols + k] = static_cast<float>(col[r2]);
  }

  const auto& out = net_.forward(params_, views_, kFineOnly);
  const int prelim = static_cast<int>(std::max_element(out.fine_logits.begin(), out.fine_logits.end()) -
                                      out.fine_logits.begin());
  r.preliminary = prelim;
  vote_.push(prelim);
  if (!vote_.full()) return r;
  r.label = vote_.mode();
  r.closed = tracker_.push(t, *r.label);
  return r;
}

std::optional<DetectionEvent> OnlineRecognizer::finish() { return tracker_.finish(); }

void OnlineRecognizer::reset() {
  frames_seen_ = 0;
  vote_.reset();
  tracker_ = DetectionTracker(window_, opts_.attribution);
}

OfflineResult run_offline(const PoseSequence& seq, const ModelParams& params, InferOptions opts) {
  const int W = params.spec.window;
  if (seq.size() < 2 * W - 1) {
    fail(ErrorKind::SequenceTooShort, "sequence " + seq.source_id + " has " + std::to_string(seq.size()) +
                                          " frames; online inference needs at least " +
                                          std::to_string(2 * W - 1));
  }
  OnlineRecognizer rec(params, opts);
  OfflineResult out;
  out.preliminary.assign(static_cast<std::size_t>(seq.size()), -1);
  out.labels.assign(static_cast<std::size_t>(seq.size()), -1);
  for (const auto& f : seq.frames) {
    auto r = rec.step(f);
    if (r.preliminary) out.preliminary[static_cast<std::size_t>(r.frame)] = *r.preliminary;
    if (r.label) out.labels[static_cast<std::size_t>(r.frame)] = *r.label;
    if (r.closed) out.detections.push_back(*r.closed);
  }
  if (auto last = rec.finish()) out.detections.push_back(*last);
  return out;
}

void write_detections(const std::vector<SequenceDetections>& all, std::ostream& out) {
  for (const auto& s : all) {
    for (const auto& d : s.detections) {
      out << s.sequence_id << ' ' << d.label << ' ' << d.pred_start << ' ' << d.pred_end << ' ' << d.first_emit
          << '\n';
    }
  }
}

void write_detections(const std::vector<SequenceDetections>& all, const std::filesystem::path& path) {
  std::ostringstream out;
  write_detections(all, out);
  write_file_atomically(path, out.str());
}

std::vector<SequenceDetections> read_detections(std::istream& in, const std::string& origin) {
  std::vector<SequenceDetections> all;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto bad = [&](const std::string& why) { throw ParseError(line_no, origin + ": " + why); };
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks.size() != 5) bad("expected 'sequence_id label pred_start pred_end first_emit'");
    DetectionEvent d;
    try {
      d.label = static_cast<int>(parse_int(toks[1], "label"));
      d.pred_start = parse_int(toks[2], "pred_start");
      d.pred_end = parse_int(toks[3], "pred_end");
      d.first_emit = parse_int(toks[4], "first_emit");
    } catch (const Error& e) {
      bad(e.what());
    }
    if (d.label < 1) bad("detection label must be >= 1");
    if (d.pred_start < 0 || d.pred_end < d.pred_start) bad("invalid detection span");
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& s) { return s.sequence_id == toks[0]; });
    if (it == all.end()) {
      all.push_back({toks[0], {}});
      it = all.end() - 1;
    }
    it->detections.push_back(d);
  }
  return all;
}

std::vector<SequenceDetections> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::FileNotFound, "cannot open detections file " + path.string());
  return read_detections(in, path.string());
}

}  // namespace handseg
