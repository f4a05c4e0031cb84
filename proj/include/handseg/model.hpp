#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "handseg/features.hpp"

namespace handseg {

struct ConvSpec {
  int channels = 16;
  int kernel = 3;  // odd; 'same' zero padding, stride 1

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

enum class View : int { jcd = 0, slow = 1, fast = 2 };
inline constexpr int kNumViews = 3;

enum class Head : int { sdn = 0, fine = 1, start = 2, end = 3, gc = 4 };
inline constexpr int kNumHeads = 5;
using HeadFlags = std::array<bool, kNumHeads>;

const char* to_string(View view);
const char* to_string(Head head);

// Network architecture plus the feature settings it was trained with, so a
// checkpoint is self-describing.
//
// Each view encoder is a stack of ELU convolutions over time, an adaptive
// average pool to W/2 steps, and a linear 1x1 projection to
// `embed_channels`. The three embeddings are concatenated along channels into
// g (3 * embed_channels x W/2). Each head is an ELU convolution trunk over g,
// a temporal mean, and a fully-connected output layer.
struct ModelSpec {
  int window = 16;
  int joints = 26;
  int num_classes = 2;
  MotionVariant motion = MotionVariant::per_axis;
  double feature_scale = 1.0;
  double overlap_threshold = 0.5;
  std::vector<ConvSpec> encoder_convs{{16, 3}, {16, 3}};
  int embed_channels = 8;
  std::vector<ConvSpec> head_convs{{16, 3}, {16, 3}};
  bool with_gc = false;

  int view_rows(View v) const;
  int view_cols(View v) const;
  int embed_steps() const { return window / 2; }
  int embedding_channels() const { return kNumViews * embed_channels; }
  int head_outputs(Head h) const;
  FeatureOptions feature_options() const { return {motion, feature_scale}; }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline constexpr int kRequiredEmbedChannels = 8;

// Throws Error(Spec) for an architecture that violates the view/embedding
// shape contract (embedding width other than 8, even kernels, ...).
void validate(const ModelSpec& spec);

// A named, shaped slice of the flat parameter vector. `owner` is -1 for the
// shared encoder weights and the head index otherwise.
struct ParamGroup {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  int owner = -1;

  friend bool operator==(const ParamGroup&, const ParamGroup&) = default;
};

std::vector<ParamGroup> parameter_layout(const ModelSpec& spec);

template <class T>
struct ModelParamsT {
  ModelSpec spec;
  std::vector<ParamGroup> groups;
  std::vector<T> values;

  std::size_t count() const { return values.size(); }
  std::span<T> group(std::size_t i) { return std::span<T>(values).subspan(groups[i].offset, groups[i].size); }
  std::span<const T> group(std::size_t i) const {
    return std::span<const T>(values).subspan(groups[i].offset, groups[i].size);
  }
  const ParamGroup* find(const std::string& name) const;
};

using ModelParams = ModelParamsT<float>;

// Fan-in scaled normal weights (std 1/sqrt(fan_in)) and zero biases.
// `zero_final_layers` also zeroes every head's fully-connected layer.
template <class T>
ModelParamsT<T> init_params(const ModelSpec& spec, std::uint64_t seed, bool zero_final_layers = false);

template <class To, class From>
ModelParamsT<To> cast_params(const ModelParamsT<From>& in) {
  ModelParamsT<To> out{in.spec, in.groups, {}};
  out.values.assign(in.values.begin(), in.values.end());
  return out;
}

// Channel-major view inputs (rows x cols, row-major) for one window.
template <class T>
struct ViewTensors {
  std::vector<T> jcd;
  std::vector<T> slow;
  std::vector<T> fast;

  static ViewTensors allocate(const ModelSpec& spec);
  static ViewTensors from(const ViewSet& views);
  std::vector<T>& view(View v) { return v == View::jcd ? jcd : v == View::slow ? slow : fast; }
  const std::vector<T>& view(View v) const {
    return v == View::jcd ? jcd : v == View::slow ? slow : fast;
  }
};

template <class T>
struct ForwardOutput {
  int steps = 0;      // W/2
  int channels = 0;   // 24
  std::vector<T> g;   // channel-major: g[c * steps + t]
  std::array<T, 3> sdn_logits{};
  std::vector<T> fine_logits;
  T start_pred{};
  T end_pred{};
  T gc_logit{};

  T g_at(int time, int channel) const { return g[static_cast<std::size_t>(channel) * steps + time]; }
};

// Loss derivatives with respect to the head outputs. Heads with
// active[h] == false are not back-propagated at all.
template <class T>
struct OutputGrads {
  HeadFlags active{};
  std::array<T, 3> sdn{};
  std::vector<T> fine;
  T start{};
  T end{};
  T gc{};
};

inline constexpr HeadFlags kAllHeads{true, true, true, true, true};
inline constexpr HeadFlags kFineOnly{false, true, false, false, false};

// Forward/backward engine. Holds the activation workspace for one window, so
// use one Network per thread; parameters are only ever read.
template <class T>
class Network {
 public:
  explicit Network(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }

  // Evaluates the encoders and the requested heads (heads the spec does not
  // have are skipped). Throws Error(Shape) on mismatched inputs.
  const ForwardOutput<T>& forward(const ModelParamsT<T>& params, const ViewTensors<T>& views,
                                  HeadFlags heads = kAllHeads);

  // Accumulates parameter gradients into `grad` (same layout as
  // params.values) for the most recent forward() call.
  void backward(const ModelParamsT<T>& params, const OutputGrads<T>& d, std::span<T> grad);

  // Result of the most recent forward().
  const ForwardOutput<T>& output() const { return out_; }

  // Per-view encoder output (embed_channels x W/2) from the last forward().
  std::span<const T> encoder_output(View v) const;

 private:
  struct Conv {
    int in_ch, out_ch, kernel, steps;
    std::size_t w_group, b_group;
  };
  struct EncoderState {
    std::vector<Conv> convs;
    std::vector<std::vector<T>> pre, post;  // per conv layer
    std::vector<std::vector<T>> dpost;
    int in_rows, in_steps;
    std::vector<T> pooled, dpooled;
    std::vector<std::pair<int, int>> bins;
    std::size_t proj_w, proj_b;
    std::vector<T> out;
  };
  struct HeadState {
    bool present = false;
    std::vector<Conv> convs;
    std::vector<std::vector<T>> pre, post, dpost;
    std::vector<T> mean, dmean;
    std::size_t fc_w, fc_b;
    int outputs;
    std::vector<T> logits;
  };

  ModelSpec spec_;
  std::array<EncoderState, kNumViews> enc_;
  std::array<HeadState, kNumHeads> heads_;
  std::vector<T> dg_;
  std::vector<T> scratch_;
  const ViewTensors<T>* last_views_ = nullptr;
  ForwardOutput<T> out_;
};

// Parameter checkpoint: a text header (format tag, spec, group table) ending
// with a "data" line, followed by every parameter as little-endian float32 in
// group order.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

std::string describe(const ModelSpec& spec);

}  // namespace handseg
