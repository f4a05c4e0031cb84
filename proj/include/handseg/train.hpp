#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "handseg/features.hpp"
#include "handseg/kvconfig.hpp"
#include "handseg/model.hpp"
#include "handseg/objective.hpp"
#include "handseg/optimizer.hpp"
#include "handseg/rng.hpp"

namespace handseg {

// Which task heads are trained. Removed heads never receive updates.
enum class HeadSet { fg, fg_gsge, fg_sdn, fg_sdn_gc, full };

const char* to_string(HeadSet set);
std::optional<HeadSet> parse_head_set(const std::string& text);

// Heads of `set` (GC only in fg_sdn_gc).
HeadFlags heads_in(HeadSet set);

struct OnOffPolicy {
  enum class Kind { exact, window_error, index_error };
  Kind kind = Kind::exact;
  double probability = 0.5;  // window_error only
};

std::string to_string(const OnOffPolicy& policy);
// "exact", "index_error", "window_error" or "window_error:<p>".
std::optional<OnOffPolicy> parse_on_off_policy(const std::string& text);

struct TrainConfig {
  int window = 16;
  double overlap_threshold = 0.5;
  int stride = 1;
  int batch_size = 32;
  int epochs = 100;
  double learning_rate = 0.004;
  OptimizerKind optimizer = OptimizerKind::adafactor;
  LossWeights weights;
  HeadSet head_set = HeadSet::full;
  OnOffPolicy policy;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  int threads = 1;  // 0 = hardware concurrency
  int chunk_size = 8;
  FeatureOptions features;
  std::vector<ConvSpec> encoder_convs{{16, 3}, {16, 3}};
  std::vector<ConvSpec> head_convs{{16, 3}, {16, 3}};
};

void validate(const TrainConfig& cfg);
TrainConfig train_config_from(const KeyValueConfig& kv);
KeyValueConfig to_key_values(const TrainConfig& cfg);

// Architecture implied by a training configuration and dictionary.
ModelSpec model_spec_for(const TrainConfig& cfg, int joints, int num_classes);

struct WindowEntry {
  int sequence = 0;
  std::int64_t end_frame = 0;
  TaskLabels labels;
  TaskMask mask{true, true, false, false};
};

// Every training window of a corpus. Views are not stored; they are gathered
// on demand from per-frame feature columns.
class WindowDataset {
 public:
  int window() const { return window_; }
  int joints() const { return joints_; }
  int num_classes() const { return num_classes_; }
  std::size_t size() const { return entries_.size(); }
  const WindowEntry& entry(std::size_t i) const { return entries_[i]; }
  const std::vector<std::int64_t>& class_counts() const { return class_counts_; }

  template <class T>
  void gather(std::size_t i, ViewTensors<T>& out) const;
  WindowSample sample(std::size_t i) const;

 private:
  friend WindowDataset build_window_dataset(const std::vector<PoseSequence>&, const TrainConfig&);
  int window_ = 0;
  int joints_ = 0;
  int num_classes_ = 0;
  std::vector<SequenceFeatures> features_;
  std::vector<WindowEntry> entries_;
  std::vector<std::int64_t> class_counts_;
};

// Windows end at t = W-1, W-1+stride, ... in each sequence, in corpus order.
// Throws Error(SequenceTooShort) if a sequence is shorter than W.
WindowDataset build_window_dataset(const std::vector<PoseSequence>& corpus, const TrainConfig& cfg);

// Corrupts the task selector / regression targets for the ablation policies.
// exact is the identity; index_error redraws present indices uniformly in
// [0, W-1]; window_error redraws c(start) and c(end) as Bernoulli(p), giving
// a newly switched-on head a uniform random index.
void apply_on_off_policy(TaskLabels& labels, TaskMask& mask, const OnOffPolicy& policy, int window,
                         Rng& rng);
WindowSample apply_on_off_policy(WindowSample sample, const OnOffPolicy& policy, Rng& rng);

struct EpochLog {
  int epoch = 0;
  double total_loss = 0.0;
  std::array<double, kNumHeads> head_loss{};  // mean over windows where the head was active
  double window_accuracy = 0.0;               // fine head, training windows
  double val_accuracy = -1.0;                 // -1 without a validation split
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams final_params;
  ModelParams best_params;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_accuracy = -1.0;
  double seconds = 0.0;
  std::vector<std::int64_t> class_counts;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Mini-batch training of the gated objective. Results are bitwise identical
// for any thread count: per-window gradients are summed in fixed chunks of
// `chunk_size` windows and the chunks are reduced in order.
TrainResult train(const std::vector<PoseSequence>& corpus, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Fraction of windows whose fine-head argmax equals the fine label.
double window_accuracy(const ModelParams& params, const WindowDataset& data);

void write_epoch_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace handseg
