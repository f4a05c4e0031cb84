#include "handseg/objective.hpp"

#include <algorithm>
#include <cmath>

#include "handseg/error.hpp"

namespace handseg {

namespace {

// Stable log-softmax cross-entropy; writes softmax - onehot into `d`.
template <class T>
T cross_entropy(std::span<const T> logits, int target, T* d) {
  const T peak = *std::max_element(logits.begin(), logits.end());
  T sum = 0;
  for (T z : logits) sum += std::exp(z - peak);
  const T log_norm = peak + std::log(sum);
  if (d) {
    for (std::size_t i = 0; i < logits.size(); ++i) {
      d[i] = std::exp(logits[i] - log_norm) - (static_cast<int>(i) == target ? T(1) : T(0));
    }
  }
  return log_norm - logits[static_cast<std::size_t>(target)];
}

}  // namespace

template <class T>
LossTerms<T> loss(const ForwardOutput<T>& out, const TaskLabels& labels, const HeadFlags& active,
                  const LossWeights& weights, int window, OutputGrads<T>* grads) {
  LossTerms<T> terms;
  terms.active = active;
  if (grads) {
    grads->active = active;
    grads->fine.assign(out.fine_logits.size(), T(0));
    grads->sdn = {};
    grads->start = grads->end = grads->gc = T(0);
  }
  auto w = [&](Head h) { return static_cast<T>(weights.weight[static_cast<std::size_t>(h)]); };

  if (active[static_cast<std::size_t>(Head::sdn)]) {
    T* d = grads ? grads->sdn.data() : nullptr;
    const T l = cross_entropy<T>(out.sdn_logits, static_cast<int>(labels.sdn), d);
    if (d) for (auto& v : grads->sdn) v *= w(Head::sdn);
    terms.per_head[0] = l;
  }
  if (active[static_cast<std::size_t>(Head::fine)]) {
    if (labels.fine < 0 || labels.fine >= static_cast<int>(out.fine_logits.size())) {
      fail(ErrorKind::Shape, "fine label outside the classifier's range");
    }
    T* d = grads ? grads->fine.data() : nullptr;
    const T l = cross_entropy<T>(out.fine_logits, labels.fine, d);
    if (d) for (auto& v : grads->fine) v *= w(Head::fine);
    terms.per_head[1] = l;
  }
  auto regression = [&](Head h, const std::optional<int>& index, T pred, T* d) {
    if (!index) fail(ErrorKind::Internal, std::string(to_string(h)) + " head active without an index");
    const T diff = pred - normalized_index<T>(*index, window);
    if (d) *d = w(h) * T(2) * diff;
    return diff * diff;
  };
  if (active[static_cast<std::size_t>(Head::start)]) {
    terms.per_head[2] = regression(Head::start, labels.start_index, out.start_pred, grads ? &grads->start : nullptr);
  }
  if (active[static_cast<std::size_t>(Head::end)]) {
    terms.per_head[3] = regression(Head::end, labels.end_index, out.end_pred, grads ? &grads->end : nullptr);
  }
  if (active[static_cast<std::size_t>(Head::gc)]) {
    const T y = (labels.start_index || labels.end_index) ? T(1) : T(0);
    const T z = out.gc_logit;
    // log(1 + exp(-|z|)) + max(z, 0) - y z
    terms.per_head[4] = std::log1p(std::exp(-std::abs(z))) + std::max(z, T(0)) - y * z;
    if (grads) grads->gc = w(Head::gc) * (T(1) / (T(1) + std::exp(-z)) - y);
  }
  for (int h = 0; h < kNumHeads; ++h) {
    if (active[static_cast<std::size_t>(h)]) {
      terms.total += w(static_cast<Head>(h)) * terms.per_head[static_cast<std::size_t>(h)];
    }
  }
  return terms;
}

template <class T>
LossTerms<T> backward(Network<T>& net, const ModelParamsT<T>& params, const ViewTensors<T>& views,
                      const TaskLabels& labels, const HeadFlags& active, const LossWeights& weights,
                      std::span<T> grad) {
  const auto& out = net.forward(params, views, active);
  OutputGrads<T> d;
  auto terms = loss(out, labels, active, weights, net.spec().window, &d);
  net.backward(params, d, grad);
  return terms;
}

template LossTerms<float> loss<float>(const ForwardOutput<float>&, const TaskLabels&, const HeadFlags&,
                                      const LossWeights&, int, OutputGrads<float>*);
template LossTerms<double> loss<double>(const ForwardOutput<double>&, const TaskLabels&, const HeadFlags&,
                                        const LossWeights&, int, OutputGrads<double>*);
template LossTerms<float> backward<float>(Network<float>&, const ModelParamsT<float>&, const ViewTensors<float>&,
                                          const TaskLabels&, const HeadFlags&, const LossWeights&,
                                          std::span<float>);
template LossTerms<double> backward<double>(Network<double>&, const ModelParamsT<double>&,
                                            const ViewTensors<double>&, const TaskLabels&, const HeadFlags&,
                                            const LossWeights&, std::span<double>);

}  // namespace handseg
