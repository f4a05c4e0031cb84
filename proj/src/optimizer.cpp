#include "handseg/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "handseg/error.hpp"

namespace handseg {

const char* to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adafactor ? "adafactor" : "adam";
}

void Adafactor::step(std::vector<float>& params, std::span<const float> grad,
                     const std::vector<ParamGroup>& groups, const std::vector<bool>& frozen) {
  if (grad.size() != params.size()) fail(ErrorKind::Shape, "gradient size mismatch");
  if (state_.empty()) state_.resize(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    if (frozen[gi]) continue;
    const auto& g = groups[gi];
    auto& st = state_[gi];
    const long long t = ++st.steps;
    const double beta2 = 1.0 - std::pow(static_cast<double>(t), opts_.beta2_decay);
    const bool factored = g.shape.size() >= 2;
    const std::size_t rows = factored ? static_cast<std::size_t>(g.shape[0]) : 0;
    const std::size_t cols = factored ? g.size / rows : 0;
    const float* gr = grad.data() + g.offset;
    float* x = params.data() + g.offset;

    std::vector<double> update(g.size);
    if (factored) {
      if (st.row.empty()) {
        st.row.assign(rows, 0.0);
        st.col.assign(cols, 0.0);
      }
      std::vector<double> row_mean(rows, 0.0), col_mean(cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double sq = static_cast<double>(gr[r * cols + c]) * gr[r * cols + c] + opts_.epsilon1;
          row_mean[r] += sq / static_cast<double>(cols);
          col_mean[c] += sq / static_cast<double>(rows);
        }
      }
      for (std::size_t r = 0; r < rows; ++r) st.row[r] = beta2 * st.row[r] + (1.0 - beta2) * row_mean[r];
      for (std::size_t c = 0; c < cols; ++c) st.col[c] = beta2 * st.col[c] + (1.0 - beta2) * col_mean[c];
      const double row_avg = std::accumulate(st.row.begin(), st.row.end(), 0.0) / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double v = st.row[r] * st.col[c] / row_avg;
          update[r * cols + c] = gr[r * cols + c] / std::sqrt(v);
        }
      }
    } else {
      if (st.full.empty()) st.full.assign(g.size, 0.0);
      for (std::size_t i = 0; i < g.size; ++i) {
        const double sq = static_cast<double>(gr[i]) * gr[i] + opts_.epsilon1;
        st.full[i] = beta2 * st.full[i] + (1.0 - beta2) * sq;
        update[i] = gr[i] / std::sqrt(st.full[i]);
      }
    }
    double sq_sum = 0.0;
    for (double u : update) sq_sum += u * u;
    const double rms = std::sqrt(sq_sum / static_cast<double>(g.size));
    const double clip = std::max(1.0, rms / opts_.clip_threshold);

    double lr = opts_.learning_rate;
    if (opts_.relative_step) lr = std::min(lr, 1.0 / std::sqrt(static_cast<double>(t)));
    if (opts_.scale_parameter) {
      double p_sq = 0.0;
      for (std::size_t i = 0; i < g.size; ++i) p_sq += static_cast<double>(x[i]) * x[i];
      lr *= std::max(opts_.epsilon2, std::sqrt(p_sq / static_cast<double>(g.size)));
    }
    for (std::size_t i = 0; i < g.size; ++i) {
      x[i] = static_cast<float>(x[i] - lr * update[i] / clip);
    }
  }
}

void Adam::step(std::vector<float>& params, std::span<const float> grad,
                const std::vector<ParamGroup>& groups, const std::vector<bool>& frozen) {
  if (grad.size() != params.size()) fail(ErrorKind::Shape, "gradient size mismatch");
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
    steps_.assign(groups.size(), 0);
  }
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    if (frozen[gi]) continue;
    const auto& g = groups[gi];
    const long long t = ++steps_[gi];
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t));
    for (std::size_t i = g.offset; i < g.offset + g.size; ++i) {
      const double gi_v = grad[i];
      m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * gi_v;
      v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * gi_v * gi_v;
      const double step = opts_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + opts_.epsilon);
      params[i] = static_cast<float>(params[i] - step);
    }
  }
}

}  // namespace handseg
