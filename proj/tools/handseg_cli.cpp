// handseg command-line tool. Uses only the C interface.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "handseg/handseg.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kInternal = 4 };

struct CliError {
  int code;
  std::string message;
};

int exit_code_for(hs_status s) {
  switch (s) {
    case HS_OK: return kOk;
    case HS_ERR_FILE_NOT_FOUND:
    case HS_ERR_CONFIG:
    case HS_ERR_SPEC:
    case HS_ERR_INVALID_MOR:
    case HS_ERR_INVALID_FPS:
    case HS_ERR_INVALID_ARGUMENT:
      return kUsage;
    case HS_ERR_INTERNAL:
      return kInternal;
    default:
      return kData;
  }
}

void check(hs_status s) {
  if (s != HS_OK) throw CliError{exit_code_for(s), std::string(hs_status_string(s)) + ": " + hs_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Config = std::unique_ptr<hs_config, Deleter<hs_config, hs_config_free>>;
using Corpus = std::unique_ptr<hs_corpus, Deleter<hs_corpus, hs_corpus_free>>;
using Model = std::unique_ptr<hs_model, Deleter<hs_model, hs_model_free>>;
using Stream = std::unique_ptr<hs_stream, Deleter<hs_stream, hs_stream_free>>;
using Detections = std::unique_ptr<hs_detections, Deleter<hs_detections, hs_detections_free>>;
using Report = std::unique_ptr<hs_report, Deleter<hs_report, hs_report_free>>;

Config load_config(const std::string& path) {
  if (!fs::exists(path)) throw CliError{kUsage, "config file not found: " + path};
  hs_config* c = nullptr;
  check(hs_config_load(path.c_str(), &c));
  return Config(c);
}

json config_json(const hs_config* cfg) {
  json j = json::array();
  for (size_t i = 0; i < hs_config_size(cfg); ++i) {
    const char* k = nullptr;
    const char* v = nullptr;
    check(hs_config_entry(cfg, i, &k, &v));
    j.push_back({k, v});
  }
  return j;
}

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw CliError{kData, "cannot write " + path.string()};
  }
  fs::rename(tmp, path);
}

struct Manifest {
  json j;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Manifest(const std::string& command, const std::vector<std::string>& argv) {
    j["command"] = command;
    j["argv"] = argv;
    j["version"] = hs_version();
    j["started_at"] = now_utc();
    j["seeds"] = json::object();
    j["inputs"] = json::object();
    j["outputs"] = json::object();
    j["timings"] = json::object();
  }

  void write(const fs::path& path) {
    j["timings"]["total_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text(path, j.dump(2) + "\n");
  }
};

std::string manifest_path(const std::string& override_path, const fs::path& fallback) {
  return override_path.empty() ? fallback.string() : override_path;
}

std::optional<std::uint64_t> seed_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CliError{kUsage, "seed must be a non-negative integer, got '" + s + "'"};
  }
}

std::string config_value(const hs_config* cfg, const std::string& key, const std::string& fallback) {
  std::string out = fallback;
  for (size_t i = 0; i < hs_config_size(cfg); ++i) {
    const char* k = nullptr;
    const char* v = nullptr;
    check(hs_config_entry(cfg, i, &k, &v));
    if (key == k) out = v;
  }
  return out;
}

// ---- generate

struct GenerateArgs {
  std::string config, out, seed, manifest;
  int sequences = -1;
};

int cmd_generate(const GenerateArgs& a, const std::vector<std::string>& argv) {
  Manifest m("generate", argv);
  auto cfg = load_config(a.config);
  if (auto s = seed_opt(a.seed)) check(hs_config_set(cfg.get(), "seed", std::to_string(*s).c_str()));
  if (a.sequences >= 0) check(hs_config_set(cfg.get(), "sequences", std::to_string(a.sequences).c_str()));
  hs_corpus* c = nullptr;
  check(hs_corpus_generate(cfg.get(), -1, &c));
  Corpus corpus(c);
  check(hs_corpus_write_dir(corpus.get(), a.out.c_str()));
  const fs::path dict = fs::path(a.out) / "dictionary.txt";
  check(hs_synth_write_dictionary(cfg.get(), dict.string().c_str()));
  m.j["config"] = config_json(cfg.get());
  m.j["seeds"]["synth"] = config_value(cfg.get(), "seed", "0");
  m.j["inputs"]["config"] = a.config;
  m.j["outputs"]["data_dir"] = a.out;
  m.j["outputs"]["dictionary"] = dict.string();
  m.j["outputs"]["sequences"] = hs_corpus_size(corpus.get());
  m.write(manifest_path(a.manifest, fs::path(a.out) / "manifest.json"));
  std::cout << "wrote " << hs_corpus_size(corpus.get()) << " sequences to " << a.out << "\n";
  return kOk;
}

// ---- split

struct SplitArgs {
  std::string data, out, policy = "by_index", seed = "0", manifest;
  double train_fraction = 0.75;
};

int cmd_split(const SplitArgs& a, const std::vector<std::string>& argv) {
  Manifest m("split", argv);
  hs_corpus* c = nullptr;
  check(hs_corpus_load_dir(a.data.c_str(), &c));
  Corpus corpus(c);
  hs_corpus* tr = nullptr;
  hs_corpus* te = nullptr;
  const auto seed = seed_opt(a.seed).value_or(0);
  check(hs_corpus_split(corpus.get(), a.policy.c_str(), seed, a.train_fraction, &tr, &te));
  Corpus train(tr), test(te);
  const fs::path train_dir = fs::path(a.out) / "train";
  const fs::path test_dir = fs::path(a.out) / "test";
  check(hs_corpus_write_dir(train.get(), train_dir.string().c_str()));
  check(hs_corpus_write_dir(test.get(), test_dir.string().c_str()));
  if (fs::exists(fs::path(a.data) / "dictionary.txt")) {
    for (const auto& dir : {train_dir, test_dir}) {
      fs::copy_file(fs::path(a.data) / "dictionary.txt", dir / "dictionary.txt", fs::copy_options::overwrite_existing);
    }
  }
  m.j["config"] = {{"policy", a.policy}, {"train_fraction", a.train_fraction}};
  m.j["seeds"]["split"] = seed;
  m.j["inputs"]["data_dir"] = a.data;
  m.j["outputs"]["train_dir"] = train_dir.string();
  m.j["outputs"]["test_dir"] = test_dir.string();
  m.j["outputs"]["train_sequences"] = hs_corpus_size(train.get());
  m.j["outputs"]["test_sequences"] = hs_corpus_size(test.get());
  m.write(manifest_path(a.manifest, fs::path(a.out) / "manifest.json"));
  std::cout << "train " << hs_corpus_size(train.get()) << ", test " << hs_corpus_size(test.get()) << "\n";
  return kOk;
}

// ---- train

struct TrainArgs {
  std::string data, config, out, head_set, policy, seed, manifest;
  std::optional<int> epochs, window;
  int threads = -1;
  bool quiet = false;
};

void print_epoch(const hs_epoch_info* e, void* user) {
  if (*static_cast<bool*>(user)) return;
  std::printf("epoch %3d  loss %.4f  acc %.3f  val %.3f  %.1fs\n", e->epoch, e->total_loss, e->window_accuracy,
              e->val_accuracy, e->seconds);
  std::fflush(stdout);
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  Manifest m("train", argv);
  Config cfg;
  if (a.config.empty()) {
    hs_config* c = nullptr;
    check(hs_config_create(&c));
    cfg.reset(c);
  } else {
    cfg = load_config(a.config);
  }
  auto set = [&](const char* key, const std::string& value) { check(hs_config_set(cfg.get(), key, value.c_str())); };
  if (!a.head_set.empty()) set("head_set", a.head_set);
  if (!a.policy.empty()) set("on_off_policy", a.policy);
  if (auto s = seed_opt(a.seed)) set("seed", std::to_string(*s));
  if (a.epochs) set("epochs", std::to_string(*a.epochs));
  if (a.window) set("window", std::to_string(*a.window));
  if (a.threads >= 0) set("threads", std::to_string(a.threads));
  hs_config* r = nullptr;
  check(hs_train_config_resolve(cfg.get(), &r));
  Config resolved(r);

  hs_corpus* c = nullptr;
  check(hs_corpus_load_dir(a.data.c_str(), &c));
  Corpus corpus(c);
  if (hs_corpus_size(corpus.get()) == 0) throw CliError{kData, "no *.seq files in " + a.data};

  fs::create_directories(a.out);
  const fs::path ckpt = fs::path(a.out) / "model.ckpt";
  const fs::path log = fs::path(a.out) / "epoch_log.csv";
  hs_model* model = nullptr;
  hs_train_summary summary{};
  bool quiet = a.quiet;
  check(hs_train(corpus.get(), resolved.get(), print_epoch, &quiet, log.string().c_str(), &model, &summary));
  Model owned(model);
  check(hs_model_save(owned.get(), ckpt.string().c_str()));

  m.j["config"] = config_json(resolved.get());
  m.j["seeds"]["train"] = config_value(resolved.get(), "seed", "0");
  m.j["inputs"]["data_dir"] = a.data;
  m.j["inputs"]["config"] = a.config;
  m.j["inputs"]["sequences"] = hs_corpus_size(corpus.get());
  m.j["outputs"]["checkpoint"] = ckpt.string();
  m.j["outputs"]["epoch_log"] = log.string();
  m.j["timings"]["train_seconds"] = summary.seconds;
  m.j["result"] = {{"epochs", summary.epochs},
                   {"best_epoch", summary.best_epoch},
                   {"best_val_accuracy", summary.best_val_accuracy},
                   {"parameters", hs_model_parameter_count(owned.get())}};
  m.write(manifest_path(a.manifest, fs::path(a.out) / "manifest.json"));
  std::cout << "checkpoint " << ckpt.string() << " (best epoch " << summary.best_epoch << ")\n";
  return kOk;
}

// ---- infer

struct InferArgs {
  std::string checkpoint, out, attribution = "center", format = "canonical", adapter, manifest;
  std::vector<std::string> inputs;
  int window = -1;
};

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto i = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1) + 0.5);
  return v[std::min(i, v.size() - 1)];
}

Corpus load_inputs(const std::vector<std::string>& inputs, const std::string& format, const std::string& adapter) {
  Config ad;
  if (!adapter.empty()) ad = load_config(adapter);
  if (inputs.size() == 1 && fs::is_directory(inputs[0]) && format == "canonical") {
    hs_corpus* c = nullptr;
    check(hs_corpus_load_dir(inputs[0].c_str(), &c));
    return Corpus(c);
  }
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file()) found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  std::vector<const char*> ptrs;
  for (const auto& f : files) ptrs.push_back(f.c_str());
  hs_corpus* c = nullptr;
  check(hs_corpus_load_files(ptrs.data(), ptrs.size(), format.c_str(), ad.get(), &c));
  return Corpus(c);
}

int cmd_infer(const InferArgs& a, const std::vector<std::string>& argv) {
  Manifest m("infer", argv);
  if (!fs::exists(a.checkpoint)) throw CliError{kUsage, "checkpoint not found: " + a.checkpoint};
  hs_model* mp = nullptr;
  check(hs_model_load(a.checkpoint.c_str(), &mp));
  Model model(mp);
  const int W = hs_model_window(model.get());
  if (a.window > 0 && a.window != W) {
    throw CliError{kUsage, "--w " + std::to_string(a.window) + " does not match the checkpoint window " +
                               std::to_string(W)};
  }
  auto corpus = load_inputs(a.inputs, a.format, a.adapter);
  hs_detections* dp = nullptr;
  check(hs_detections_create(&dp));
  Detections dets(dp);

  std::vector<double> latency_ms;
  std::vector<double> frame(3 * static_cast<std::size_t>(hs_model_joints(model.get())));
  for (size_t i = 0; i < hs_corpus_size(corpus.get()); ++i) {
    const hs_sequence* seq = hs_corpus_sequence(corpus.get(), i);
    if (hs_sequence_joints(seq) != hs_model_joints(model.get())) {
      throw CliError{kData, std::string("sequence ") + hs_sequence_id(seq) + " has " +
                                std::to_string(hs_sequence_joints(seq)) + " joints, the model expects " +
                                std::to_string(hs_model_joints(model.get()))};
    }
    if (hs_sequence_frames(seq) < 2 * W - 1) {
      throw CliError{kData, std::string("sequence ") + hs_sequence_id(seq) + " is shorter than 2W - 1 frames"};
    }
    hs_stream* sp = nullptr;
    check(hs_stream_create(model.get(), a.attribution.c_str(), &sp));
    Stream stream(sp);
    for (int64_t f = 0; f < hs_sequence_frames(seq); ++f) {
      check(hs_sequence_frame(seq, f, frame.data(), frame.size()));
      hs_step_result r{};
      const auto t0 = std::chrono::steady_clock::now();
      check(hs_stream_step(stream.get(), frame.data(), frame.size(), &r));
      latency_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      if (r.closed) check(hs_detections_add(dets.get(), hs_sequence_id(seq), &r.detection));
    }
    int closed = 0;
    hs_detection last{};
    check(hs_stream_finish(stream.get(), &closed, &last));
    if (closed) check(hs_detections_add(dets.get(), hs_sequence_id(seq), &last));
  }
  check(hs_detections_write(dets.get(), a.out.c_str()));

  double mean = 0.0;
  for (double v : latency_ms) mean += v;
  if (!latency_ms.empty()) mean /= static_cast<double>(latency_ms.size());
  m.j["config"] = {{"attribution", a.attribution}, {"window", W}, {"format", a.format}};
  m.j["inputs"]["checkpoint"] = a.checkpoint;
  m.j["inputs"]["sequences"] = a.inputs;
  m.j["inputs"]["adapter"] = a.adapter;
  m.j["outputs"]["detections"] = a.out;
  m.j["outputs"]["detection_count"] = hs_detections_count(dets.get());
  m.j["timings"]["frames"] = latency_ms.size();
  m.j["timings"]["per_frame_ms"] = {{"mean", mean},
                                    {"p50", percentile(latency_ms, 0.50)},
                                    {"p95", percentile(latency_ms, 0.95)},
                                    {"max", latency_ms.empty() ? 0.0 : *std::max_element(latency_ms.begin(), latency_ms.end())}};
  m.write(manifest_path(a.manifest, a.out + ".manifest.json"));
  std::printf("%zu detections over %zu sequences; per-frame p50 %.3f ms, p95 %.3f ms\n",
              hs_detections_count(dets.get()), hs_corpus_size(corpus.get()), percentile(latency_ms, 0.5),
              percentile(latency_ms, 0.95));
  return kOk;
}

// ---- eval

struct EvalArgs {
  std::string gt, detections, out, protocol = "shrec22", strategy = "max_cardinality", sweep, dictionary, manifest;
  double mor = 0.5;
  double fps = 0.0;
  bool per_class = false, fp_by_category = false, per_sequence = false;
};

std::vector<double> parse_sweep(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    try {
      parts.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw CliError{kUsage, "--ji-mor-sweep expects start:stop:step"};
    }
  }
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
    throw CliError{kUsage, "--ji-mor-sweep expects start:stop:step with step > 0"};
  }
  std::vector<double> out;
  const auto n = static_cast<int>((parts[1] - parts[0]) / parts[2] + 1e-9);
  for (int i = 0; i <= n; ++i) out.push_back(std::round((parts[0] + i * parts[2]) * 1e9) / 1e9);
  return out;
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  Manifest m("eval", argv);
  hs_corpus* c = nullptr;
  check(hs_corpus_load_dir(a.gt.c_str(), &c));
  Corpus gt(c);
  if (hs_corpus_size(gt.get()) == 0) throw CliError{kData, "no *.seq files in " + a.gt};
  hs_detections* dp = nullptr;
  check(hs_detections_create(&dp));
  Detections dets(dp);
  if (!fs::exists(a.detections)) throw CliError{kUsage, "detections not found: " + a.detections};
  check(hs_detections_read(dets.get(), a.detections.c_str()));

  std::vector<double> sweep;
  if (!a.sweep.empty()) sweep = parse_sweep(a.sweep);
  hs_eval_options opts;
  hs_eval_options_default(&opts);
  opts.protocol = a.protocol.c_str();
  opts.strategy = a.strategy.c_str();
  opts.mor = a.mor;
  opts.fps = a.fps > 0.0 ? a.fps : hs_sequence_fps(hs_corpus_sequence(gt.get(), 0));
  opts.mor_sweep = sweep.empty() ? nullptr : sweep.data();
  opts.mor_sweep_count = sweep.size();
  std::string dictionary = a.dictionary;
  if (dictionary.empty() && fs::exists(fs::path(a.gt) / "dictionary.txt")) {
    dictionary = (fs::path(a.gt) / "dictionary.txt").string();
  }
  opts.dictionary = dictionary.empty() ? nullptr : dictionary.c_str();

  hs_report* rp = nullptr;
  check(hs_evaluate(gt.get(), dets.get(), &opts, &rp));
  Report report(rp);
  fs::create_directories(a.out);
  json outputs;
  auto emit = [&](const char* kind, const char* file) {
    const fs::path p = fs::path(a.out) / file;
    check(hs_report_write_csv(report.get(), kind, p.string().c_str()));
    outputs[kind] = p.string();
  };
  emit("aggregate", "aggregate.csv");
  if (a.per_sequence) emit("per_sequence", "per_sequence.csv");
  if (a.per_class) emit("per_class", "per_class.csv");
  if (a.fp_by_category) emit("per_category", "fp_by_category.csv");
  if (!sweep.empty() && a.protocol == "shrec22") emit("ji_curve", "ji_mor.csv");

  hs_report_summary s{};
  check(hs_report_summary_get(report.get(), &s));
  m.j["config"] = {{"protocol", a.protocol}, {"mor", a.mor}, {"fps", opts.fps}, {"strategy", a.strategy},
                   {"ji_mor_sweep", a.sweep}, {"dictionary", dictionary}};
  m.j["inputs"]["ground_truth"] = a.gt;
  m.j["inputs"]["detections"] = a.detections;
  m.j["outputs"] = outputs;
  m.j["result"] = {{"gestures", s.gestures}, {"matched", s.matched}, {"false_positives", s.false_positives},
                   {"dr", s.dr}, {"fp", s.fp}, {"ji", s.ji}};
  if (s.has_delay) m.j["result"]["delay_mean"] = s.delay_mean;
  m.write(manifest_path(a.manifest, fs::path(a.out) / "manifest.json"));
  std::printf("DR %.4f (%.4f)  FP %.4f (%.4f)  JI %.4f (%.4f)", s.dr, s.dr_std, s.fp, s.fp_std, s.ji, s.ji_std);
  if (s.has_delay) std::printf("  delay %.2f fr", s.delay_mean);
  std::printf("  [%lld/%lld matched, %lld false positives]\n", static_cast<long long>(s.matched),
              static_cast<long long>(s.gestures), static_cast<long long>(s.false_positives));
  return kOk;
}

int run(const std::vector<std::string>& args);

// ---- replay

int cmd_replay(const std::string& manifest) {
  std::ifstream in(manifest);
  if (!in) throw CliError{kUsage, "manifest not found: " + manifest};
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CliError{kData, std::string("invalid manifest: ") + e.what()};
  }
  if (!j.contains("argv") || !j["argv"].is_array()) throw CliError{kData, "manifest has no argv"};
  const auto argv = j["argv"].get<std::vector<std::string>>();
  if (argv.size() >= 2 && argv[1] == "replay") throw CliError{kData, "refusing to replay a replay"};
  return run(argv);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"handseg: online hand-gesture segmentation and recognition"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hs_version()));

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic corpus");
  gen->add_option("--config", ga.config, "Generator config")->required();
  gen->add_option("--out", ga.out, "Output directory")->required();
  gen->add_option("--seed", ga.seed, "Override the config seed");
  gen->add_option("--sequences", ga.sequences, "Override the number of sequences");
  gen->add_option("--manifest", ga.manifest, "Manifest path (default <out>/manifest.json)");

  SplitArgs sa;
  auto* split = app.add_subcommand("split", "Split a corpus into train/ and test/");
  split->add_option("--data", sa.data, "Corpus directory")->required();
  split->add_option("--out", sa.out, "Output directory")->required();
  split->add_option("--policy", sa.policy, "by_index or by_subject")->capture_default_str();
  split->add_option("--train-fraction", sa.train_fraction)->capture_default_str();
  split->add_option("--seed", sa.seed)->capture_default_str();
  split->add_option("--manifest", sa.manifest);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", ta.data, "Directory of canonical sequences")->required();
  tr->add_option("--config", ta.config, "Training config");
  tr->add_option("--out", ta.out, "Output directory")->required();
  tr->add_option("--head-set", ta.head_set, "FG, FG+GS/GE, FG+SDN, FG+SDN+GC or full");
  tr->add_option("--on-off-policy", ta.policy, "exact, index_error or window_error[:p]");
  tr->add_option("--seed", ta.seed);
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--w", ta.window, "Window length");
  tr->add_option("--threads", ta.threads, "Worker threads (0 = all cores)");
  tr->add_flag("--quiet", ta.quiet);
  tr->add_option("--manifest", ta.manifest);

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Run online recognition over sequences");
  inf->add_option("--checkpoint", ia.checkpoint)->required();
  inf->add_option("--data", ia.inputs, "Sequence files or directories")->required();
  inf->add_option("--out", ia.out, "Detections file")->required();
  inf->add_option("--attribution", ia.attribution, "center, window_start or emit_frame")->capture_default_str();
  inf->add_option("--format", ia.format, "canonical, shrec22 or shrec19")->capture_default_str();
  inf->add_option("--adapter", ia.adapter, "Adapter config for benchmark formats");
  inf->add_option("--w", ia.window, "Expected window length");
  inf->add_option("--manifest", ia.manifest, "Manifest path (default <out>.manifest.json)");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score detections against ground truth");
  ev->add_option("--gt", ea.gt, "Directory of annotated sequences")->required();
  ev->add_option("--detections", ea.detections, "Detections file or directory")->required();
  ev->add_option("--out", ea.out, "Report directory")->required();
  ev->add_option("--protocol", ea.protocol, "shrec22 or shrec19")->capture_default_str();
  ev->add_option("--mor", ea.mor, "Minimum overlap ratio")->capture_default_str();
  ev->add_option("--fps", ea.fps, "Frame rate for the 2.5 s rule (default: from the data)");
  ev->add_option("--strategy", ea.strategy, "max_cardinality or greedy")->capture_default_str();
  ev->add_option("--ji-mor-sweep", ea.sweep, "start:stop:step, writes ji_mor.csv");
  ev->add_option("--dictionary", ea.dictionary, "Class dictionary (default <gt>/dictionary.txt)");
  ev->add_flag("--per-class", ea.per_class, "Write per_class.csv");
  ev->add_flag("--fp-by-category", ea.fp_by_category, "Write fp_by_category.csv");
  ev->add_flag("--per-sequence", ea.per_sequence, "Write per_sequence.csv");
  ev->add_option("--manifest", ea.manifest);

  std::string replay_manifest;
  auto* rep = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  rep->add_option("manifest", replay_manifest)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*gen) return cmd_generate(ga, args);
  if (*split) return cmd_split(sa, args);
  if (*tr) return cmd_train(ta, args);
  if (*inf) return cmd_infer(ia, args);
  if (*ev) return cmd_eval(ea, args);
  if (*rep) return cmd_replay(replay_manifest);
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    return run(args);
  } catch (const CliError& e) {
    std::cerr << "handseg: " << e.message << "\n";
    return e.code;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "handseg: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "handseg: internal error: " << e.what() << "\n";
    return kInternal;
  }
}
