#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "handseg/infer.hpp"
#include "handseg/pose_io.hpp"

namespace handseg::test {

struct MetricInstance {
  std::vector<GestureAnnotation> gt;
  std::vector<DetectionEvent> det;
};

// Up to 6 disjoint sorted gestures and 8 detections in a 300-frame sequence,
// with few labels so that overlaps and label clashes are frequent.
inline MetricInstance random_instance(std::mt19937_64& rng) {
  MetricInstance m;
  const int n_gt = static_cast<int>(rng() % 7);
  const int n_det = static_cast<int>(rng() % 9);
  std::vector<int> cuts;
  while (static_cast<int>(cuts.size()) < 2 * n_gt) {
    int c = static_cast<int>(rng() % 300);
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  for (int g = 0; g < n_gt; ++g) {
    m.gt.push_back({1 + static_cast<int>(rng() % 2), cuts[2 * g], cuts[2 * g + 1],
                    static_cast<GestureCategory>(rng() % 4)});
  }
  for (int d = 0; d < n_det; ++d) {
    DetectionEvent e;
    e.label = 1 + static_cast<int>(rng() % 2);
    if (!m.gt.empty() && rng() % 3 != 0) {
      // Jittered copy of a gesture.
      const auto& g = m.gt[rng() % m.gt.size()];
      const auto len = g.end_frame - g.start_frame + 1;
      std::uniform_int_distribution<std::int64_t> jitter(-len / 2 - 3, len / 2 + 3);
      e.pred_start = std::max<std::int64_t>(0, g.start_frame + jitter(rng));
      e.pred_end = std::max(e.pred_start, g.end_frame + jitter(rng));
    } else {
      e.pred_start = static_cast<std::int64_t>(rng() % 300);
      e.pred_end = std::min<std::int64_t>(299, e.pred_start + static_cast<std::int64_t>(rng() % 80));
    }
    e.first_emit = e.pred_start + static_cast<std::int64_t>(rng() % 10);
    m.det.push_back(e);
  }
  return m;
}

// Size of a maximum one-to-one matching by exhaustive search.
template <class Pred>
int exhaustive_max_matching(const std::vector<GestureAnnotation>& gt, const std::vector<DetectionEvent>& det,
                            Pred&& qualifies) {
  std::vector<bool> used(det.size(), false);
  int best = 0;
  auto rec = [&](auto&& self, std::size_t g, int count) -> void {
    if (g == gt.size()) {
      best = std::max(best, count);
      return;
    }
    self(self, g + 1, count);
    for (std::size_t d = 0; d < det.size(); ++d) {
      if (!used[d] && qualifies(gt[g], det[d])) {
        used[d] = true;
        self(self, g + 1, count + 1);
        used[d] = false;
      }
    }
  };
  rec(rec, 0, 0);
  return best;
}

// Matching criterion written out from the definitions: same label, covered
// fraction of the gesture at least `mor`, and at most twice its length.
inline bool oracle_qualifies(const GestureAnnotation& g, const DetectionEvent& d, double mor) {
  if (g.label != d.label) return false;
  const auto glen = g.end_frame - g.start_frame + 1;
  const auto dlen = d.pred_end - d.pred_start + 1;
  std::int64_t inter = 0;
  for (auto f = g.start_frame; f <= g.end_frame; ++f) inter += f >= d.pred_start && f <= d.pred_end;
  return static_cast<double>(inter) >= mor * static_cast<double>(glen) && dlen <= 2 * glen;
}

inline std::vector<DetectionEvent> as_detections(const std::vector<GestureAnnotation>& gt) {
  std::vector<DetectionEvent> out;
  for (const auto& g : gt) out.push_back({g.label, g.start_frame, g.end_frame, g.start_frame});
  return out;
}

}  // namespace handseg::test
