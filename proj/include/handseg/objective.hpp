#pragma once

#include <array>
#include <span>

#include "handseg/features.hpp"
#include "handseg/model.hpp"

namespace handseg {

struct LossWeights {
  std::array<double, kNumHeads> weight{1.0, 1.0, 1.0, 1.0, 1.0};
};

template <class T>
struct LossTerms {
  T total{};
  std::array<T, kNumHeads> per_head{};  // unweighted; zero for inactive heads
  HeadFlags active{};
};

// Heads that contribute for one window: the task selector c(k) for SDN,
// fine, start and end, plus the GC head when the model has one (always on).
inline HeadFlags objective_heads(const TaskMask& mask, const ModelSpec& spec) {
  return {mask[kTaskSdn], mask[kTaskFine], mask[kTaskStart], mask[kTaskEnd], spec.with_gc};
}

// Regression targets are start/end indices normalized by W - 1.
template <class T>
T normalized_index(int index, int window) {
  return static_cast<T>(index) / static_cast<T>(window - 1);
}

// Gated multi-task loss: sum over active heads of weight * loss, with
// cross-entropy for SDN/fine, squared error for start/end and binary
// cross-entropy (window contains a start or an end) for GC. If `grads` is
// given it receives dLoss/dOutput for every active head.
template <class T>
LossTerms<T> loss(const ForwardOutput<T>& out, const TaskLabels& labels, const HeadFlags& active,
                  const LossWeights& weights, int window, OutputGrads<T>* grads = nullptr);

// Forward + loss + backward for one window. Accumulates into `grad`.
template <class T>
LossTerms<T> backward(Network<T>& net, const ModelParamsT<T>& params, const ViewTensors<T>& views,
                      const TaskLabels& labels, const HeadFlags& active, const LossWeights& weights,
                      std::span<T> grad);

}  // namespace handseg
