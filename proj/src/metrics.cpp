#include "handseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "handseg/error.hpp"
#include "handseg/fileio.hpp"

namespace handseg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> temporal_order_gt(const std::vector<GestureAnnotation>& gt) {
  std::vector<int> order(gt.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return gt[static_cast<std::size_t>(a)].start_frame < gt[static_cast<std::size_t>(b)].start_frame;
  });
  return order;
}

std::vector<int> temporal_order_det(const std::vector<DetectionEvent>& det) {
  std::vector<int> order(det.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& x = det[static_cast<std::size_t>(a)];
    const auto& y = det[static_cast<std::size_t>(b)];
    return std::tie(x.pred_start, x.first_emit) < std::tie(y.pred_start, y.first_emit);
  });
  return order;
}

MatchResult finish_match(const std::vector<GestureAnnotation>& gt, const std::vector<DetectionEvent>& det,
                         std::vector<int> gt_match) {
  MatchResult m;
  m.det_match.assign(det.size(), -1);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    const int d = gt_match[g];
    if (d < 0) continue;
    m.det_match[static_cast<std::size_t>(d)] = static_cast<int>(g);
    const auto& a = gt[g];
    const auto& e = det[static_cast<std::size_t>(d)];
    MatchedPair p;
    p.gt = static_cast<int>(g);
    p.det = d;
    p.intersection = intersection(a, e);
    p.overlap_ratio = static_cast<double>(p.intersection) / static_cast<double>(a.length());
    p.jaccard = jaccard(a, e);
    p.delay = e.first_emit - e.pred_start;
    m.pairs.push_back(p);
  }
  m.gt_match = std::move(gt_match);
  return m;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

const char* to_string(MatchStrategy s) {
  return s == MatchStrategy::greedy ? "greedy" : "max_cardinality";
}

std::optional<MatchStrategy> parse_match_strategy(const std::string& text) {
  if (text == "greedy") return MatchStrategy::greedy;
  if (text == "max_cardinality") return MatchStrategy::max_cardinality;
  return std::nullopt;
}

const char* to_string(Protocol p) { return p == Protocol::shrec22 ? "shrec22" : "shrec19"; }

std::optional<Protocol> parse_protocol(const std::string& text) {
  if (text == "shrec22") return Protocol::shrec22;
  if (text == "shrec19") return Protocol::shrec19;
  return std::nullopt;
}

std::int64_t span_length(std::int64_t start, std::int64_t end) { return std::max<std::int64_t>(0, end - start + 1); }

std::int64_t intersection(const GestureAnnotation& g, const DetectionEvent& d) {
  return span_length(std::max(g.start_frame, d.pred_start), std::min(g.end_frame, d.pred_end));
}

std::int64_t boundary_gap(const GestureAnnotation& g, const DetectionEvent& d) {
  return std::max<std::int64_t>({0, d.pred_start - g.end_frame, g.start_frame - d.pred_end});
}

double jaccard(const GestureAnnotation& g, const DetectionEvent& d) {
  const auto inter = intersection(g, d);
  const auto uni = g.length() + span_length(d.pred_start, d.pred_end) - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

bool mor_match(const GestureAnnotation& g, const DetectionEvent& d, double mor) {
  if (g.label != d.label) return false;
  const auto len = g.length();
  return static_cast<double>(intersection(g, d)) >= mor * static_cast<double>(len) &&
         span_length(d.pred_start, d.pred_end) <= 2 * len;
}

bool shrec19_match(const GestureAnnotation& g, const DetectionEvent& d, double fps) {
  return g.label == d.label && static_cast<double>(boundary_gap(g, d)) <= 2.5 * fps;
}

MatchResult match_with(const std::vector<GestureAnnotation>& gt, const std::vector<DetectionEvent>& det,
                       const MatchPredicate& qualifies, MatchStrategy strategy) {
  const auto gorder = temporal_order_gt(gt);
  const auto dorder = temporal_order_det(det);
  std::vector<std::vector<int>> candidates(gt.size());
  for (int g : gorder) {
    for (int d : dorder) {
      if (qualifies(gt[static_cast<std::size_t>(g)], det[static_cast<std::size_t>(d)])) {
        candidates[static_cast<std::size_t>(g)].push_back(d);
      }
    }
  }
  std::vector<int> gt_match(gt.size(), -1);
  std::vector<int> det_owner(det.size(), -1);
  for (int g : gorder) {
    for (int d : candidates[static_cast<std::size_t>(g)]) {
      if (det_owner[static_cast<std::size_t>(d)] < 0) {
        det_owner[static_cast<std::size_t>(d)] = g;
        gt_match[static_cast<std::size_t>(g)] = d;
        break;
      }
    }
  }
  if (strategy == MatchStrategy::max_cardinality) {
    std::vector<char> seen;
    std::function<bool(int)> augment = [&](int g) {
      for (int d : candidates[static_cast<std::size_t>(g)]) {
        if (seen[static_cast<std::size_t>(d)]) continue;
        seen[static_cast<std::size_t>(d)] = 1;
        const int owner = det_owner[static_cast<std::size_t>(d)];
        if (owner < 0 || augment(owner)) {
          det_owner[static_cast<std::size_t>(d)] = g;
          gt_match[static_cast<std::size_t>(g)] = d;
          return true;
        }
      }
      return false;
    };
    for (int g : gorder) {
      if (gt_match[static_cast<std::size_t>(g)] >= 0) continue;
      seen.assign(det.size(), 0);
      augment(g);
    }
  }
  return finish_match(gt, det, std::move(gt_match));
}

MatchResult match_detections(const std::vector<GestureAnnotation>& gt, const std::vector<DetectionEvent>& det,
                             double mor, MatchStrategy strategy) {
  if (!(mor > 0.0 && mor <= 1.0)) fail(ErrorKind::InvalidMor, "mor must lie in (0, 1], got " + format_double(mor));
  return match_with(gt, det, [mor](const auto& g, const auto& d) { return mor_match(g, d, mor); }, strategy);
}

MatchResult match_shrec19(const std::vector<GestureAnnotation>& gt, const std::vector<DetectionEvent>& det,
                          double fps, MatchStrategy strategy) {
  if (!(fps > 0.0) || !std::isfinite(fps)) fail(ErrorKind::InvalidFps, "fps must be positive");
  return match_with(gt, det, [fps](const auto& g, const auto& d) { return shrec19_match(g, d, fps); }, strategy);
}

MatchResult match_for_overlap_sweep(const std::vector<GestureAnnotation>& gt,
                                    const std::vector<DetectionEvent>& det) {
  const auto dorder = temporal_order_det(det);
  std::vector<int> gt_match(gt.size(), -1);
  std::vector<char> taken(det.size(), 0);
  for (int g : temporal_order_gt(gt)) {
    const auto& a = gt[static_cast<std::size_t>(g)];
    int best = -1;
    std::int64_t best_inter = 0;
    for (int d : dorder) {
      const auto& e = det[static_cast<std::size_t>(d)];
      if (taken[static_cast<std::size_t>(d)] || e.label != a.label) continue;
      if (span_length(e.pred_start, e.pred_end) > 2 * a.length()) continue;
      const auto inter = intersection(a, e);
      if (inter > best_inter) {
        best = d;
        best_inter = inter;
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = 1;
      gt_match[static_cast<std::size_t>(g)] = best;
    }
  }
  return finish_match(gt, det, std::move(gt_match));
}

double detection_rate(std::int64_t matched, std::int64_t total_gt) {
  if (total_gt <= 0) fail(ErrorKind::NoGroundTruth, "detection rate needs at least one ground-truth gesture");
  return static_cast<double>(matched) / static_cast<double>(total_gt);
}

double false_positive_score(std::int64_t false_positives, std::int64_t total_gt) {
  if (total_gt <= 0) fail(ErrorKind::NoGroundTruth, "false-positive score needs at least one ground-truth gesture");
  return static_cast<double>(false_positives) / static_cast<double>(total_gt);
}

double sequence_jaccard(const MatchResult& m, std::size_t gt_count, std::optional<double> mor_filter) {
  if (gt_count == 0) return kNaN;
  double sum = 0.0;
  for (const auto& p : m.pairs) {
    if (mor_filter && p.overlap_ratio < *mor_filter) continue;
    sum += p.jaccard;
  }
  return sum / static_cast<double>(gt_count);
}

double jaccard_index(const std::vector<SequenceInput>& seqs, std::optional<double> mor_filter, double mor) {
  std::vector<double> per_seq;
  for (const auto& s : seqs) {
    if (s.gt.empty()) continue;
    const auto m = mor_filter ? match_for_overlap_sweep(s.gt, s.det) : match_detections(s.gt, s.det, mor);
    per_seq.push_back(sequence_jaccard(m, s.gt.size(), mor_filter));
  }
  if (per_seq.empty()) fail(ErrorKind::NoGroundTruth, "Jaccard index needs at least one ground-truth gesture");
  return mean_of(per_seq);
}

DelayStats delay_stats(const std::vector<MatchedPair>& pairs) {
  if (pairs.empty()) fail(ErrorKind::NoMatches, "delay statistics need at least one matched detection");
  std::vector<double> d;
  for (const auto& p : pairs) d.push_back(static_cast<double>(p.delay));
  std::sort(d.begin(), d.end());
  DelayStats s;
  s.count = static_cast<std::int64_t>(d.size());
  s.mean = mean_of(d);
  const std::size_t n = d.size();
  s.median = n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  return s;
}

std::vector<double> default_mor_sweep() {
  std::vector<double> v;
  for (int i = 1; i <= 20; ++i) v.push_back(i / 20.0);
  return v;
}

EvalReport evaluate(const std::vector<SequenceInput>& seqs, const EvalOptions& opts, const Dictionary* dict) {
  if (opts.protocol == Protocol::shrec22 && !(opts.mor > 0.0 && opts.mor <= 1.0)) {
    fail(ErrorKind::InvalidMor, "mor must lie in (0, 1], got " + format_double(opts.mor));
  }
  EvalReport r;
  r.protocol = opts.protocol;
  r.mor = opts.mor;

  std::map<int, ClassScore> classes;
  std::map<int, GestureCategory> category_of;
  if (dict) {
    for (int l = 1; l < dict->num_classes(); ++l) {
      classes[l] = ClassScore{l, dict->classes[static_cast<std::size_t>(l)].name, 0, 0, 0, kNaN};
      category_of[l] = dict->classes[static_cast<std::size_t>(l)].category;
    }
  }
  for (const auto& s : seqs) {
    for (const auto& g : s.gt) category_of.emplace(g.label, g.category);
  }
  auto class_entry = [&](int label) -> ClassScore& {
    auto it = classes.find(label);
    if (it == classes.end()) it = classes.emplace(label, ClassScore{label, "class_" + std::to_string(label), 0, 0, 0, kNaN}).first;
    return it->second;
  };

  std::map<std::string, std::int64_t> fp_by_category;
  std::vector<MatchedPair> all_pairs;
  std::vector<double> dr_seq, fp_seq, ji_seq;
  for (const auto& s : seqs) {
    const auto m = opts.protocol == Protocol::shrec22 ? match_detections(s.gt, s.det, opts.mor, opts.strategy)
                                                      : match_shrec19(s.gt, s.det, opts.fps, opts.strategy);
    SequenceScore sc;
    sc.id = s.id;
    sc.gestures = static_cast<std::int64_t>(s.gt.size());
    sc.matched = m.matched();
    sc.false_positives = m.false_positives();
    sc.dr = sc.gestures ? static_cast<double>(sc.matched) / static_cast<double>(sc.gestures) : kNaN;
    sc.fp = sc.gestures ? static_cast<double>(sc.false_positives) / static_cast<double>(sc.gestures) : kNaN;
    sc.ji = sequence_jaccard(m, s.gt.size());
    if (sc.gestures) {
      dr_seq.push_back(sc.dr);
      fp_seq.push_back(sc.fp);
      ji_seq.push_back(sc.ji);
    }
    r.gestures += sc.gestures;
    r.matched += sc.matched;
    r.false_positives += sc.false_positives;
    for (std::size_t g = 0; g < s.gt.size(); ++g) {
      auto& c = class_entry(s.gt[g].label);
      ++c.gestures;
      if (m.gt_match[g] >= 0) ++c.matched;
    }
    for (std::size_t d = 0; d < s.det.size(); ++d) {
      if (m.det_match[d] >= 0) continue;
      const int label = s.det[d].label;
      ++class_entry(label).false_positives;
      auto it = category_of.find(label);
      ++fp_by_category[it == category_of.end() ? "unknown" : to_string(it->second)];
    }
    all_pairs.insert(all_pairs.end(), m.pairs.begin(), m.pairs.end());
    r.sequences.push_back(sc);
  }
  if (r.gestures == 0) fail(ErrorKind::NoGroundTruth, "evaluation needs at least one ground-truth gesture");

  r.dr = detection_rate(r.matched, r.gestures);
  r.fp = false_positive_score(r.false_positives, r.gestures);
  r.ji = mean_of(ji_seq);
  r.dr_std = population_std(dr_seq);
  r.fp_std = population_std(fp_seq);
  r.ji_std = population_std(ji_seq);
  if (!all_pairs.empty()) r.delay = delay_stats(all_pairs);

  for (auto& [label, c] : classes) {
    if (c.gestures) c.dr = static_cast<double>(c.matched) / static_cast<double>(c.gestures);
    r.per_class.push_back(c);
  }
  for (auto cat : {GestureCategory::static_pose, GestureCategory::dynamic_coarse, GestureCategory::dynamic_fine,
                   GestureCategory::periodic}) {
    fp_by_category.emplace(to_string(cat), 0);
  }
  for (const auto& [cat, n] : fp_by_category) {
    r.per_category.push_back({cat, n, static_cast<double>(n) / static_cast<double>(r.gestures)});
  }

  if (opts.protocol == Protocol::shrec22) {
    std::vector<MatchResult> sweep_matches;
    for (const auto& s : seqs) sweep_matches.push_back(match_for_overlap_sweep(s.gt, s.det));
    for (double mor : opts.mor_sweep.empty() ? default_mor_sweep() : opts.mor_sweep) {
      CurvePoint p;
      p.mor = mor;
      std::vector<double> ji;
      std::int64_t matched = 0, fps = 0;
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        if (!seqs[i].gt.empty()) ji.push_back(sequence_jaccard(sweep_matches[i], seqs[i].gt.size(), mor));
        const auto m = match_detections(seqs[i].gt, seqs[i].det, mor, opts.strategy);
        matched += m.matched();
        fps += m.false_positives();
      }
      p.ji = mean_of(ji);
      p.dr = detection_rate(matched, r.gestures);
      p.fp = false_positive_score(fps, r.gestures);
      r.ji_curve.push_back(p);
    }
  }
  return r;
}

namespace {

std::string num(double v) { return std::isnan(v) ? "nan" : format_double(v); }

}  // namespace

void write_aggregate_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "protocol,mor,gestures,matched,false_positives,dr,dr_std,fp,fp_std,ji,ji_std,delay_mean,delay_median\n";
  out << to_string(r.protocol) << ',' << num(r.mor) << ',' << r.gestures << ',' << r.matched << ','
      << r.false_positives << ',' << num(r.dr) << ',' << num(r.dr_std) << ',' << num(r.fp) << ','
      << num(r.fp_std) << ',' << num(r.ji) << ',' << num(r.ji_std) << ','
      << (r.delay ? num(r.delay->mean) : "nan") << ',' << (r.delay ? num(r.delay->median) : "nan") << '\n';
  write_file_atomically(path, out.str());
}

void write_per_sequence_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "sequence,gestures,matched,false_positives,dr,fp,ji\n";
  for (const auto& s : r.sequences) {
    out << s.id << ',' << s.gestures << ',' << s.matched << ',' << s.false_positives << ',' << num(s.dr) << ','
        << num(s.fp) << ',' << num(s.ji) << '\n';
  }
  write_file_atomically(path, out.str());
}

void write_per_class_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "label,name,gestures,matched,dr,false_positives\n";
  for (const auto& c : r.per_class) {
    out << c.label << ',' << c.name << ',' << c.gestures << ',' << c.matched << ',' << num(c.dr) << ','
        << c.false_positives << '\n';
  }
  write_file_atomically(path, out.str());
}

void write_per_category_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "category,false_positives,fp\n";
  for (const auto& c : r.per_category) out << c.category << ',' << c.false_positives << ',' << num(c.fp) << '\n';
  write_file_atomically(path, out.str());
}

void write_ji_curve_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "mor,ji,dr,fp\n";
  for (const auto& p : r.ji_curve) out << num(p.mor) << ',' << num(p.ji) << ',' << num(p.dr) << ',' << num(p.fp) << '\n';
  write_file_atomically(path, out.str());
}

}  // namespace handseg
