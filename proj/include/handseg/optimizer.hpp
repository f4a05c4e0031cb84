#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "handseg/model.hpp"

namespace handseg {

enum class OptimizerKind { adafactor, adam };

const char* to_string(OptimizerKind kind);

// Updates params in place from a gradient. Groups with frozen[i] set are
// skipped entirely (no state change, no parameter change).
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::vector<float>& params, std::span<const float> grad,
                    const std::vector<ParamGroup>& groups, const std::vector<bool>& frozen) = 0;
};

struct AdafactorOptions {
  double learning_rate = 0.004;
  double beta2_decay = -0.8;     // beta2_t = 1 - t^decay
  double epsilon1 = 1e-30;       // added to squared gradients
  double epsilon2 = 1e-3;        // floor for the parameter-scale factor
  double clip_threshold = 1.0;   // update RMS clipping
  bool relative_step = true;     // lr_t = min(lr, 1/sqrt(t))
  bool scale_parameter = true;   // multiply by max(eps2, RMS(param))
};

// Factored second-moment estimator: matrices (and convolution kernels viewed
// as out_channels x fan_in) keep only row and column statistics; vectors keep
// a full second moment. No first moment.
class Adafactor final : public Optimizer {
 public:
  explicit Adafactor(AdafactorOptions opts) : opts_(opts) {}
  void step(std::vector<float>& params, std::span<const float> grad,
            const std::vector<ParamGroup>& groups, const std::vector<bool>& frozen) override;

 private:
  struct State {
    std::vector<double> row, col, full;
    long long steps = 0;
  };
  AdafactorOptions opts_;
  std::vector<State> state_;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(AdamOptions opts) : opts_(opts) {}
  void step(std::vector<float>& params, std::span<const float> grad,
            const std::vector<ParamGroup>& groups, const std::vector<bool>& frozen) override;

 private:
  AdamOptions opts_;
  std::vector<double> m_, v_;
  std::vector<long long> steps_;
};

}  // namespace handseg
