#include "handseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "handseg/error.hpp"
#include "handseg/fileio.hpp"

namespace handseg {

namespace {

constexpr std::uint64_t kTagInit = 0x1417;
constexpr std::uint64_t kTagShuffle = 0x5bf1;
constexpr std::uint64_t kTagPolicy = 0x9011;

std::vector<ConvSpec> parse_conv_list(const std::string& text, const std::string& what) {
  std::vector<ConvSpec> out;
  for (const auto& tok : split_ws(text)) {
    if (tok == "-") continue;
    auto colon = tok.find(':');
    if (colon == std::string::npos) fail(ErrorKind::Config, what + ": expected <channels>:<kernel>");
    out.push_back({static_cast<int>(parse_int(tok.substr(0, colon), what)),
                   static_cast<int>(parse_int(tok.substr(colon + 1), what))});
  }
  return out;
}

std::string conv_list(const std::vector<ConvSpec>& convs) {
  std::string s;
  for (const auto& c : convs) {
    if (!s.empty()) s += ' ';
    s += std::to_string(c.channels) + ":" + std::to_string(c.kernel);
  }
  return s.empty() ? "-" : s;
}

int argmax(const std::vector<float>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

const char* to_string(HeadSet set) {
  switch (set) {
    case HeadSet::fg: return "FG";
    case HeadSet::fg_gsge: return "FG+GS/GE";
    case HeadSet::fg_sdn: return "FG+SDN";
    case HeadSet::fg_sdn_gc: return "FG+SDN+GC";
    case HeadSet::full: return "full";
  }
  return "full";
}

std::optional<HeadSet> parse_head_set(const std::string& text) {
  std::string t;
  for (char c : text) t += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (t == "FG") return HeadSet::fg;
  if (t == "FG+GS/GE" || t == "FG+GSGE" || t == "FG_GSGE") return HeadSet::fg_gsge;
  if (t == "FG+SDN" || t == "FG_SDN") return HeadSet::fg_sdn;
  if (t == "FG+SDN+GC" || t == "FG_SDN_GC") return HeadSet::fg_sdn_gc;
  if (t == "FULL" || t == "FG+SDN+GS/GE") return HeadSet::full;
  return std::nullopt;
}

HeadFlags heads_in(HeadSet set) {
  switch (set) {
    case HeadSet::fg: return {false, true, false, false, false};
    case HeadSet::fg_gsge: return {false, true, true, true, false};
    case HeadSet::fg_sdn: return {true, true, false, false, false};
    case HeadSet::fg_sdn_gc: return {true, true, false, false, true};
    case HeadSet::full: return {true, true, true, true, false};
  }
  return {true, true, true, true, false};
}

std::string to_string(const OnOffPolicy& policy) {
  switch (policy.kind) {
    case OnOffPolicy::Kind::exact: return "exact";
    case OnOffPolicy::Kind::index_error: return "index_error";
    case OnOffPolicy::Kind::window_error: return "window_error:" + format_double(policy.probability);
  }
  return "exact";
}

std::optional<OnOffPolicy> parse_on_off_policy(const std::string& text) {
  OnOffPolicy p;
  if (text == "exact") return p;
  if (text == "index_error") {
    p.kind = OnOffPolicy::Kind::index_error;
    return p;
  }
  if (text.rfind("window_error", 0) == 0) {
    p.kind = OnOffPolicy::Kind::window_error;
    const std::string rest = text.substr(std::string("window_error").size());
    if (rest.empty()) return p;
    if (rest.front() != ':') return std::nullopt;
    try {
      p.probability = parse_double(rest.substr(1), "window_error probability");
    } catch (const Error&) {
      return std::nullopt;
    }
    if (p.probability < 0.0 || p.probability > 1.0) return std::nullopt;
    return p;
  }
  return std::nullopt;
}

void validate(const TrainConfig& cfg) {
  auto bad = [](const std::string& what) { fail(ErrorKind::Config, what); };
  if (cfg.window < 4 || cfg.window % 2 != 0) bad("window must be even and >= 4");
  if (cfg.epochs < 1) bad("epochs must be >= 1");
  if (cfg.batch_size < 1) bad("batch_size must be >= 1");
  if (cfg.stride < 1) bad("stride must be >= 1");
  if (cfg.chunk_size < 1) bad("chunk_size must be >= 1");
  if (cfg.threads < 0) bad("threads must be >= 0");
  if (!(cfg.learning_rate >= 0.0)) bad("learning_rate must be >= 0");
  if (!(cfg.overlap_threshold > 0.0 && cfg.overlap_threshold <= 1.0)) bad("overlap_threshold must lie in (0, 1]");
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0)) bad("val_fraction must lie in [0, 1)");
  for (double w : cfg.weights.weight) {
    if (!(w >= 0.0)) bad("loss weights must be >= 0");
  }
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
  TrainConfig cfg;
  cfg.window = static_cast<int>(kv.get_int("window", cfg.window));
  cfg.overlap_threshold = kv.get_double("overlap_threshold", cfg.overlap_threshold);
  cfg.stride = static_cast<int>(kv.get_int("stride", cfg.stride));
  cfg.batch_size = static_cast<int>(kv.get_int("batch_size", cfg.batch_size));
  cfg.epochs = static_cast<int>(kv.get_int("epochs", cfg.epochs));
  cfg.learning_rate = kv.get_double("learning_rate", cfg.learning_rate);
  if (auto o = kv.get("optimizer")) {
    if (*o == "adafactor") cfg.optimizer = OptimizerKind::adafactor;
    else if (*o == "adam") cfg.optimizer = OptimizerKind::adam;
    else fail(ErrorKind::Config, "optimizer must be adafactor or adam");
  }
  for (int h = 0; h < kNumHeads; ++h) {
    const std::string key = std::string("weight.") + to_string(static_cast<Head>(h));
    cfg.weights.weight[static_cast<std::size_t>(h)] = kv.get_double(key, 1.0);
  }
  if (auto hs = kv.get("head_set")) {
    auto parsed = parse_head_set(*hs);
    if (!parsed) fail(ErrorKind::Config, "unknown head_set '" + *hs + "'");
    cfg.head_set = *parsed;
  }
  if (auto p = kv.get("on_off_policy")) {
    auto parsed = parse_on_off_policy(*p);
    if (!parsed) fail(ErrorKind::Config, "unknown on_off_policy '" + *p + "'");
    cfg.policy = *parsed;
  }
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  cfg.val_fraction = kv.get_double("val_fraction", cfg.val_fraction);
  cfg.threads = static_cast<int>(kv.get_int("threads", cfg.threads));
  cfg.chunk_size = static_cast<int>(kv.get_int("chunk_size", cfg.chunk_size));
  if (auto m = kv.get("motion_variant")) {
    auto parsed = parse_motion_variant(*m);
    if (!parsed) fail(ErrorKind::Config, "motion_variant must be per_axis or magnitude");
    cfg.features.motion = *parsed;
  }
  cfg.features.scale = kv.get_double("feature_scale", cfg.features.scale);
  if (auto e = kv.get("encoder_convs")) cfg.encoder_convs = parse_conv_list(*e, "encoder_convs");
  if (auto h = kv.get("head_convs")) cfg.head_convs = parse_conv_list(*h, "head_convs");
  validate(cfg);
  return cfg;
}

KeyValueConfig to_key_values(const TrainConfig& cfg) {
  KeyValueConfig kv;
  kv.set("window", std::to_string(cfg.window));
  kv.set("overlap_threshold", format_double(cfg.overlap_threshold));
  kv.set("stride", std::to_string(cfg.stride));
  kv.set("batch_size", std::to_string(cfg.batch_size));
  kv.set("epochs", std::to_string(cfg.epochs));
  kv.set("learning_rate", format_double(cfg.learning_rate));
  kv.set("optimizer", to_string(cfg.optimizer));
  for (int h = 0; h < kNumHeads; ++h) {
    kv.set(std::string("weight.") + to_string(static_cast<Head>(h)),
           format_double(cfg.weights.weight[static_cast<std::size_t>(h)]));
  }
  kv.set("head_set", to_string(cfg.head_set));
  kv.set("on_off_policy", to_string(cfg.policy));
  kv.set("seed", std::to_string(cfg.seed));
  kv.set("val_fraction", format_double(cfg.val_fraction));
  kv.set("threads", std::to_string(cfg.threads));
  kv.set("chunk_size", std::to_string(cfg.chunk_size));
  kv.set("motion_variant", to_string(cfg.features.motion));
  kv.set("feature_scale", format_double(cfg.features.scale));
  kv.set("encoder_convs", conv_list(cfg.encoder_convs));
  kv.set("head_convs", conv_list(cfg.head_convs));
  return kv;
}

ModelSpec model_spec_for(const TrainConfig& cfg, int joints, int num_classes) {
  ModelSpec spec;
  spec.window = cfg.window;
  spec.joints = joints;
  spec.num_classes = num_classes;
  spec.motion = cfg.features.motion;
  spec.feature_scale = cfg.features.scale;
  spec.overlap_threshold = cfg.overlap_threshold;
  spec.encoder_convs = cfg.encoder_convs;
  spec.head_convs = cfg.head_convs;
  spec.with_gc = cfg.head_set == HeadSet::fg_sdn_gc;
  validate(spec);
  return spec;
}

WindowDataset build_window_dataset(const std::vector<PoseSequence>& corpus, const TrainConfig& cfg) {
  validate(cfg);
  WindowDataset data;
  data.window_ = cfg.window;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& seq = corpus[s];
    if (seq.size() < cfg.window) {
      fail(ErrorKind::SequenceTooShort, "sequence " + seq.source_id + " has " + std::to_string(seq.size()) +
                                            " frames, fewer than the window length " +
                                            std::to_string(cfg.window));
    }
    if (s == 0) {
      data.joints_ = seq.joint_count();
    } else if (seq.joint_count() != data.joints_) {
      fail(ErrorKind::InvariantViolation, "sequences in a corpus must share the joint count");
    }
    data.num_classes_ = std::max(data.num_classes_, seq.num_classes);
    data.features_.emplace_back(seq, cfg.features);
    for (std::int64_t t = cfg.window - 1; t < seq.size(); t += cfg.stride) {
      WindowEntry e;
      e.sequence = static_cast<int>(s);
      e.end_frame = t;
      e.labels = label_window(seq, t, cfg.window, cfg.overlap_threshold);
      e.mask = mask_for(e.labels);
      data.entries_.push_back(e);
    }
  }
  data.class_counts_.assign(static_cast<std::size_t>(std::max(data.num_classes_, 1)), 0);
  for (const auto& e : data.entries_) ++data.class_counts_[static_cast<std::size_t>(e.labels.fine)];
  return data;
}

template <class T>
void WindowDataset::gather(std::size_t i, ViewTensors<T>& out) const {
  const auto& e = entries_[i];
  features_[static_cast<std::size_t>(e.sequence)].gather<T>(e.end_frame, window_, out.jcd, out.slow, out.fast);
}

template void WindowDataset::gather<float>(std::size_t, ViewTensors<float>&) const;
template void WindowDataset::gather<double>(std::size_t, ViewTensors<double>&) const;

WindowSample WindowDataset::sample(std::size_t i) const {
  const auto& e = entries_[i];
  const auto& f = features_[static_cast<std::size_t>(e.sequence)];
  WindowSample s;
  s.labels = e.labels;
  s.mask = e.mask;
  s.views.jcd = Matrix(f.jcd_rows(), window_);
  s.views.m_slow = Matrix(f.motion_rows(), window_ - 1);
  s.views.m_fast = Matrix(f.motion_rows(), window_ / 2 - 1);
  f.gather<double>(e.end_frame, window_, s.views.jcd.data, s.views.m_slow.data, s.views.m_fast.data);
  return s;
}

void apply_on_off_policy(TaskLabels& labels, TaskMask& mask, const OnOffPolicy& policy, int window, Rng& rng) {
  std::uniform_int_distribution<int> index(0, window - 1);
  switch (policy.kind) {
    case OnOffPolicy::Kind::exact:
      return;
    case OnOffPolicy::Kind::index_error:
      if (labels.start_index) labels.start_index = index(rng);
      if (labels.end_index) labels.end_index = index(rng);
      return;
    case OnOffPolicy::Kind::window_error: {
      std::bernoulli_distribution on(policy.probability);
      for (int task : {kTaskStart, kTaskEnd}) {
        auto& slot = task == kTaskStart ? labels.start_index : labels.end_index;
        const bool active = on(rng);
        mask[static_cast<std::size_t>(task)] = active;
        if (active && !slot) slot = index(rng);
        if (!active) slot.reset();
      }
      return;
    }
  }
}

WindowSample apply_on_off_policy(WindowSample sample, const OnOffPolicy& policy, Rng& rng) {
  const int window = sample.views.jcd.cols;
  apply_on_off_policy(sample.labels, sample.mask, policy, window, rng);
  return sample;
}

double window_accuracy(const ModelParams& params, const WindowDataset& data) {
  if (data.size() == 0) return 0.0;
  Network<float> net(params.spec);
  auto views = ViewTensors<float>::allocate(params.spec);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data.gather(i, views);
    const auto& out = net.forward(params, views, kFineOnly);
    if (argmax(out.fine_logits) == data.entry(i).labels.fine) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

struct ChunkStats {
  double total = 0.0;
  std::array<double, kNumHeads> head_sum{};
  std::array<std::int64_t, kNumHeads> head_count{};
  std::int64_t correct = 0;
};

struct Worker {
  explicit Worker(const ModelSpec& spec) : net(spec), views(ViewTensors<float>::allocate(spec)) {}
  Network<float> net;
  ViewTensors<float> views;
};

}  // namespace

TrainResult train(const std::vector<PoseSequence>& corpus, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  if (corpus.empty()) fail(ErrorKind::EmptyCorpus, "training corpus is empty");
  const auto start_time = std::chrono::steady_clock::now();

  const std::size_t n = corpus.size();
  std::size_t n_val = 0;
  if (n >= 2 && cfg.val_fraction > 0.0) {
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.val_fraction)),
                                    1, n - 1);
  }
  const std::vector<PoseSequence> train_seqs(corpus.begin(), corpus.end() - static_cast<std::ptrdiff_t>(n_val));
  const std::vector<PoseSequence> val_seqs(corpus.end() - static_cast<std::ptrdiff_t>(n_val), corpus.end());

  const WindowDataset data = build_window_dataset(train_seqs, cfg);
  const WindowDataset val = n_val ? build_window_dataset(val_seqs, cfg) : WindowDataset{};
  int classes = data.num_classes();
  for (const auto& s : val_seqs) classes = std::max(classes, s.num_classes);
  const ModelSpec spec = model_spec_for(cfg, data.joints(), classes);

  TrainResult result;
  result.class_counts = data.class_counts();
  ModelParams params = init_params<float>(spec, derive_seed(cfg.seed, {kTagInit}));
  const HeadFlags enabled = heads_in(cfg.head_set);
  std::vector<bool> frozen(params.groups.size());
  for (std::size_t g = 0; g < params.groups.size(); ++g) {
    const int owner = params.groups[g].owner;
    frozen[g] = owner >= 0 && !enabled[static_cast<std::size_t>(owner)];
  }

  std::unique_ptr<Optimizer> opt;
  if (cfg.optimizer == OptimizerKind::adafactor) {
    AdafactorOptions o;
    o.learning_rate = cfg.learning_rate;
    opt = std::make_unique<Adafactor>(o);
  } else {
    AdamOptions o;
    o.learning_rate = cfg.learning_rate;
    opt = std::make_unique<Adam>(o);
  }

  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int threads = cfg.threads == 0 ? hw : cfg.threads;
  const std::size_t chunk = static_cast<std::size_t>(cfg.chunk_size);
  const std::size_t max_chunks = (static_cast<std::size_t>(cfg.batch_size) + chunk - 1) / chunk;
  std::vector<std::vector<float>> chunk_grads(max_chunks, std::vector<float>(params.count()));
  std::vector<ChunkStats> chunk_stats(max_chunks);
  std::vector<Worker> workers;
  for (int w = 0; w < std::max(1, threads); ++w) workers.emplace_back(spec);
  std::vector<float> grad(params.count());

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  result.best_params = params;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    auto shuffle_rng = make_rng(cfg.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    ChunkStats epoch_stats;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t n_chunks = (b1 - b0 + chunk - 1) / chunk;

      auto run_chunk = [&](Worker& w, std::size_t c) {
        auto& g = chunk_grads[c];
        std::fill(g.begin(), g.end(), 0.0f);
        ChunkStats st;
        const std::size_t lo = b0 + c * chunk;
        const std::size_t hi = std::min(b1, lo + chunk);
        for (std::size_t k = lo; k < hi; ++k) {
          const std::size_t idx = order[k];
          const auto& e = data.entry(idx);
          TaskLabels labels = e.labels;
          TaskMask mask = e.mask;
          auto rng = make_rng(cfg.seed, {kTagPolicy, static_cast<std::uint64_t>(epoch), idx});
          apply_on_off_policy(labels, mask, cfg.policy, cfg.window, rng);
          HeadFlags active = objective_heads(mask, spec);
          for (int h = 0; h < kNumHeads; ++h) active[static_cast<std::size_t>(h)] &= enabled[static_cast<std::size_t>(h)];
          data.gather(idx, w.views);
          const auto terms = backward(w.net, params, w.views, labels, active, cfg.weights, std::span<float>(g));
          st.total += terms.total;
          for (int h = 0; h < kNumHeads; ++h) {
            if (active[static_cast<std::size_t>(h)]) {
              st.head_sum[static_cast<std::size_t>(h)] += terms.per_head[static_cast<std::size_t>(h)];
              ++st.head_count[static_cast<std::size_t>(h)];
            }
          }
          if (argmax(w.net.output().fine_logits) == e.labels.fine) ++st.correct;
        }
        chunk_stats[c] = st;
      };

      if (threads <= 1 || n_chunks == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(workers[0], c);
      } else {
        std::vector<std::jthread> pool;
        const std::size_t t_count = std::min<std::size_t>(static_cast<std::size_t>(threads), n_chunks);
        for (std::size_t t = 0; t < t_count; ++t) {
          pool.emplace_back([&, t] {
            for (std::size_t c = t; c < n_chunks; c += t_count) run_chunk(workers[t], c);
          });
        }
      }

      std::fill(grad.begin(), grad.end(), 0.0f);
      for (std::size_t c = 0; c < n_chunks; ++c) {
        const auto& g = chunk_grads[c];
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        epoch_stats.total += chunk_stats[c].total;
        for (int h = 0; h < kNumHeads; ++h) {
          epoch_stats.head_sum[static_cast<std::size_t>(h)] += chunk_stats[c].head_sum[static_cast<std::size_t>(h)];
          epoch_stats.head_count[static_cast<std::size_t>(h)] += chunk_stats[c].head_count[static_cast<std::size_t>(h)];
        }
        epoch_stats.correct += chunk_stats[c].correct;
      }
      const float scale = 1.0f / static_cast<float>(b1 - b0);
      for (auto& v : grad) v *= scale;
      opt->step(params.values, grad, params.groups, frozen);
    }

    EpochLog log;
    log.epoch = epoch;
    const double count = static_cast<double>(std::max<std::size_t>(1, data.size()));
    log.total_loss = epoch_stats.total / count;
    for (int h = 0; h < kNumHeads; ++h) {
      const auto c = epoch_stats.head_count[static_cast<std::size_t>(h)];
      log.head_loss[static_cast<std::size_t>(h)] = c ? epoch_stats.head_sum[static_cast<std::size_t>(h)] / static_cast<double>(c) : 0.0;
    }
    log.window_accuracy = static_cast<double>(epoch_stats.correct) / count;
    if (n_val) {
      log.val_accuracy = window_accuracy(params, val);
      if (log.val_accuracy > result.best_val_accuracy) {
        result.best_val_accuracy = log.val_accuracy;
        result.best_epoch = epoch;
        result.best_params = params;
      }
    } else {
      result.best_epoch = epoch;
      result.best_params = params;
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  result.final_params = std::move(params);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

void write_epoch_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,total_loss,sdn_loss,fine_loss,start_loss,end_loss,gc_loss,window_accuracy,val_accuracy,seconds\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << format_double(e.total_loss);
    for (double l : e.head_loss) out << ',' << format_double(l);
    out << ',' << format_double(e.window_accuracy) << ',' << format_double(e.val_accuracy) << ','
        << format_double(e.seconds) << '\n';
  }
  write_file_atomically(path, out.str());
}

}  // namespace handseg
