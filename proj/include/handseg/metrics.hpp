#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "handseg/infer.hpp"
#include "handseg/pose_io.hpp"

namespace handseg {

// greedy: ground truth in temporal order, earliest qualifying free detection
// wins. max_cardinality: the greedy matching extended by augmenting paths
// until no further pair can be added (so it is a maximum matching).
enum class MatchStrategy { greedy, max_cardinality };

const char* to_string(MatchStrategy s);
std::optional<MatchStrategy> parse_match_strategy(const std::string& text);

struct MatchedPair {
  int gt = -1;
  int det = -1;
  std::int64_t intersection = 0;  // frames
  double overlap_ratio = 0.0;     // intersection / |gt|
  double jaccard = 0.0;
  std::int64_t delay = 0;         // first_emit - pred_start
};

struct MatchResult {
  std::vector<int> gt_match;   // detection index or -1
  std::vector<int> det_match;  // ground-truth index or -1
  std::vector<MatchedPair> pairs;

  int matched() const { return static_cast<int>(pairs.size()); }
  int false_positives() const { return static_cast<int>(det_match.size()) - matched(); }
};

using MatchPredicate = std::function<bool(const GestureAnnotation&, const DetectionEvent&)>;

std::int64_t span_length(std::int64_t start, std::int64_t end);
std::int64_t intersection(const GestureAnnotation& g, const DetectionEvent& d);
// Distance between the nearest boundaries, 0 if the spans intersect.
std::int64_t boundary_gap(const GestureAnnotation& g, const DetectionEvent& d);
double jaccard(const GestureAnnotation& g, const DetectionEvent& d);

// Same label, |g ∩ d| >= mor |g| and |d| <= 2 |g|.
bool mor_match(const GestureAnnotation& g, const DetectionEvent& d, double mor);
// Same label and boundary gap <= 2.5 s.
bool shrec19_match(const GestureAnnotation& g, const DetectionEvent& d, double fps);

MatchResult match_with(const std::vector<GestureAnnotation>& gt, const std::vector<DetectionEvent>& det,
                       const MatchPredicate& qualifies, MatchStrategy strategy = MatchStrategy::max_cardinality);

// Throws Error(InvalidMor) unless 0 < mor <= 1.
MatchResult match_detections(const std::vector<GestureAnnotation>& gt, const std::vector<DetectionEvent>& det,
                             double mor, MatchStrategy strategy = MatchStrategy::max_cardinality);

// Throws Error(InvalidFps) unless fps > 0.
MatchResult match_shrec19(const std::vector<GestureAnnotation>& gt, const std::vector<DetectionEvent>& det,
                          double fps, MatchStrategy strategy = MatchStrategy::max_cardinality);

// Matching behind the JI-vs-MOR curve: any positive overlap plus the duration
// rule, each gesture (in temporal order) taking the free detection with the
// largest intersection. Filtering its pairs by overlap ratio gives a curve
// that can only decrease.
MatchResult match_for_overlap_sweep(const std::vector<GestureAnnotation>& gt,
                                    const std::vector<DetectionEvent>& det);

// Throw Error(NoGroundTruth) when total_gt == 0.
double detection_rate(std::int64_t matched, std::int64_t total_gt);
double false_positive_score(std::int64_t false_positives, std::int64_t total_gt);

// Mean per-gesture Jaccard of one sequence; unmatched gestures count 0, and
// pairs below `mor_filter` are ignored. NaN without ground truth.
double sequence_jaccard(const MatchResult& m, std::size_t gt_count, std::optional<double> mor_filter = {});

struct SequenceInput {
  std::string id;
  std::vector<GestureAnnotation> gt;
  std::vector<DetectionEvent> det;
};

// Mean over gestures, then over sequences with ground truth. Without a filter
// the default match at `mor` is used; with one, the overlap-sweep matching.
double jaccard_index(const std::vector<SequenceInput>& seqs, std::optional<double> mor_filter, double mor = 0.5);

struct DelayStats {
  double mean = 0.0;
  double median = 0.0;
  std::int64_t count = 0;
};

// Throws Error(NoMatches) without matched pairs.
DelayStats delay_stats(const std::vector<MatchedPair>& pairs);

enum class Protocol { shrec22, shrec19 };
const char* to_string(Protocol p);
std::optional<Protocol> parse_protocol(const std::string& text);

struct EvalOptions {
  Protocol protocol = Protocol::shrec22;
  double mor = 0.5;
  double fps = 60.0;
  MatchStrategy strategy = MatchStrategy::max_cardinality;
  std::vector<double> mor_sweep;  // empty: 0.05, 0.10, ..., 1.00
};

std::vector<double> default_mor_sweep();

struct SequenceScore {
  std::string id;
  std::int64_t gestures = 0;
  std::int64_t matched = 0;
  std::int64_t false_positives = 0;
  double dr = 0.0;  // NaN without ground truth
  double fp = 0.0;
  double ji = 0.0;
};

struct ClassScore {
  int label = 0;
  std::string name;
  std::int64_t gestures = 0;
  std::int64_t matched = 0;
  std::int64_t false_positives = 0;
  double dr = 0.0;  // NaN without ground truth of this class
};

struct CategoryFp {
  std::string category;
  std::int64_t false_positives = 0;
  double fp = 0.0;  // over all ground-truth gestures
};

struct CurvePoint {
  double mor = 0.0;
  double ji = 0.0;
  double dr = 0.0;
  double fp = 0.0;
};

struct EvalReport {
  Protocol protocol = Protocol::shrec22;
  double mor = 0.5;
  std::int64_t gestures = 0;
  std::int64_t matched = 0;
  std::int64_t false_positives = 0;
  double dr = 0.0, dr_std = 0.0;
  double fp = 0.0, fp_std = 0.0;
  double ji = 0.0, ji_std = 0.0;
  std::optional<DelayStats> delay;
  std::vector<SequenceScore> sequences;
  std::vector<ClassScore> per_class;
  std::vector<CategoryFp> per_category;
  std::vector<CurvePoint> ji_curve;  // shrec22 only
};

// DR and FP are pooled over the corpus; JI is averaged per sequence. Standard
// deviations are population deviations across sequences with ground truth.
// `dict` supplies class names and the categories of false positives.
// Throws Error(NoGroundTruth) if no sequence has ground truth.
EvalReport evaluate(const std::vector<SequenceInput>& seqs, const EvalOptions& opts,
                    const Dictionary* dict = nullptr);

void write_aggregate_csv(const EvalReport& r, const std::filesystem::path& path);
void write_per_sequence_csv(const EvalReport& r, const std::filesystem::path& path);
void write_per_class_csv(const EvalReport& r, const std::filesystem::path& path);
void write_per_category_csv(const EvalReport& r, const std::filesystem::path& path);
void write_ji_curve_csv(const EvalReport& r, const std::filesystem::path& path);

}  // namespace handseg
