#include "handseg/handseg.h"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "handseg/error.hpp"
#include "handseg/infer.hpp"
#include "handseg/kvconfig.hpp"
#include "handseg/metrics.hpp"
#include "handseg/model.hpp"
#include "handseg/pose_io.hpp"
#include "handseg/synth.hpp"
#include "handseg/train.hpp"

using namespace handseg;

struct hs_config {
  KeyValueConfig kv;
};

struct hs_sequence {
  PoseSequence seq;
};

struct hs_corpus {
  std::vector<hs_sequence> items;
};

struct hs_model {
  ModelParams params;
};

struct hs_stream {
  explicit hs_stream(const ModelParams& p, InferOptions o) : rec(p, o) {}
  OnlineRecognizer rec;
};

struct hs_detections {
  std::vector<SequenceDetections> groups;
};

struct hs_report {
  EvalReport report;
};

namespace {

#ifndef HANDSEG_VERSION
#define HANDSEG_VERSION "0.1.0"
#endif

thread_local std::string g_last_error;

hs_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::FileNotFound: return HS_ERR_FILE_NOT_FOUND;
    case ErrorKind::Parse: return HS_ERR_PARSE;
    case ErrorKind::InvariantViolation: return HS_ERR_INVARIANT;
    case ErrorKind::Io: return HS_ERR_IO;
    case ErrorKind::Config: return HS_ERR_CONFIG;
    case ErrorKind::Shape: return HS_ERR_SHAPE;
    case ErrorKind::Spec: return HS_ERR_SPEC;
    case ErrorKind::OutOfRange: return HS_ERR_OUT_OF_RANGE;
    case ErrorKind::SequenceTooShort: return HS_ERR_SEQUENCE_TOO_SHORT;
    case ErrorKind::EmptyCorpus: return HS_ERR_EMPTY_CORPUS;
    case ErrorKind::SingleSubject: return HS_ERR_SINGLE_SUBJECT;
    case ErrorKind::InvalidMor: return HS_ERR_INVALID_MOR;
    case ErrorKind::InvalidFps: return HS_ERR_INVALID_FPS;
    case ErrorKind::NoGroundTruth: return HS_ERR_NO_GROUND_TRUTH;
    case ErrorKind::NoMatches: return HS_ERR_NO_MATCHES;
    case ErrorKind::Internal: return HS_ERR_INTERNAL;
  }
  return HS_ERR_INTERNAL;
}

hs_status fail_with(hs_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs `body`, translating exceptions into status codes.
template <class F>
hs_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return HS_OK;
  } catch (const Error& e) {
    return fail_with(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail_with(HS_ERR_INTERNAL, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail_with(HS_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail_with(HS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail_with(HS_ERR_INTERNAL, "unknown error");
  }
}

#define HS_REQUIRE(cond, what)                                       \
  do {                                                               \
    if (!(cond)) return fail_with(HS_ERR_INVALID_ARGUMENT, (what)); \
  } while (0)

SequenceFormat format_of(const char* format) {
  if (!format) return SequenceFormat::canonical;
  auto f = parse_sequence_format(format);
  if (!f) fail(ErrorKind::Config, std::string("unknown sequence format '") + format + "'");
  return *f;
}

std::vector<PoseSequence> sequences_of(const hs_corpus* c) {
  std::vector<PoseSequence> out;
  out.reserve(c->items.size());
  for (const auto& s : c->items) out.push_back(s.seq);
  return out;
}

hs_corpus* corpus_of(std::vector<PoseSequence> seqs) {
  auto c = std::make_unique<hs_corpus>();
  c->items.reserve(seqs.size());
  for (auto& s : seqs) c->items.push_back({std::move(s)});
  return c.release();
}

// Index prefix keeps directory listings in corpus order.
std::string file_name_for(const std::string& id, std::size_t index) {
  char prefix[32];
  std::snprintf(prefix, sizeof prefix, "%04zu", index);
  std::string name = prefix;
  if (!id.empty()) name += '_';
  for (char ch : id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    name += ok ? ch : '_';
  }
  return name + ".seq";
}

hs_detection to_c(const DetectionEvent& d) { return {d.label, d.pred_start, d.pred_end, d.first_emit}; }

}  // namespace

extern "C" {

const char* hs_version(void) { return HANDSEG_VERSION; }

const char* hs_status_string(hs_status status) {
  switch (status) {
    case HS_OK: return "ok";
    case HS_ERR_FILE_NOT_FOUND: return "file not found";
    case HS_ERR_PARSE: return "parse error";
    case HS_ERR_INVARIANT: return "invariant violation";
    case HS_ERR_IO: return "i/o error";
    case HS_ERR_CONFIG: return "configuration error";
    case HS_ERR_SHAPE: return "shape error";
    case HS_ERR_SPEC: return "model specification error";
    case HS_ERR_OUT_OF_RANGE: return "out of range";
    case HS_ERR_SEQUENCE_TOO_SHORT: return "sequence too short";
    case HS_ERR_EMPTY_CORPUS: return "empty corpus";
    case HS_ERR_SINGLE_SUBJECT: return "single subject";
    case HS_ERR_INVALID_MOR: return "invalid minimum overlap ratio";
    case HS_ERR_INVALID_FPS: return "invalid frame rate";
    case HS_ERR_NO_GROUND_TRUTH: return "no ground truth";
    case HS_ERR_NO_MATCHES: return "no matches";
    case HS_ERR_INTERNAL: return "internal error";
    case HS_ERR_INVALID_ARGUMENT: return "invalid argument";
  }
  return "unknown status";
}

const char* hs_last_error(void) { return g_last_error.c_str(); }

// ---- configuration

hs_status hs_config_create(hs_config** out) {
  HS_REQUIRE(out, "out is null");
  return guarded([&] { *out = new hs_config{}; });
}

hs_status hs_config_load(const char* path, hs_config** out) {
  HS_REQUIRE(path && out, "null argument");
  return guarded([&] { *out = new hs_config{KeyValueConfig::load(path)}; });
}

hs_status hs_config_parse(const char* text, hs_config** out) {
  HS_REQUIRE(text && out, "null argument");
  return guarded([&] { *out = new hs_config{KeyValueConfig::parse(text)}; });
}

hs_status hs_config_set(hs_config* cfg, const char* key, const char* value) {
  HS_REQUIRE(cfg && key && value, "null argument");
  return guarded([&] { cfg->kv.set(key, value); });
}

size_t hs_config_size(const hs_config* cfg) { return cfg ? cfg->kv.entries().size() : 0; }

hs_status hs_config_entry(const hs_config* cfg, size_t index, const char** key, const char** value) {
  HS_REQUIRE(cfg && key && value, "null argument");
  if (index >= cfg->kv.entries().size()) return fail_with(HS_ERR_OUT_OF_RANGE, "config entry index out of range");
  const auto& e = cfg->kv.entries()[index];
  *key = e.first.c_str();
  *value = e.second.c_str();
  return HS_OK;
}

void hs_config_free(hs_config* cfg) { delete cfg; }

hs_status hs_train_config_resolve(const hs_config* train, hs_config** out) {
  HS_REQUIRE(train && out, "null argument");
  return guarded([&] { *out = new hs_config{to_key_values(train_config_from(train->kv))}; });
}

// ---- sequences

hs_status hs_sequence_load(const char* path, const char* format, const hs_config* adapter, hs_sequence** out) {
  HS_REQUIRE(path && out, "null argument");
  return guarded([&] {
    const auto f = format_of(format);
    std::optional<AdapterConfig> ad;
    if (f != SequenceFormat::canonical) {
      if (!adapter) fail(ErrorKind::Config, "benchmark formats need an adapter config");
      ad = AdapterConfig::from_config(adapter->kv, f);
    }
    *out = new hs_sequence{parse_sequence(path, f, ad ? &*ad : nullptr)};
  });
}

hs_status hs_sequence_save(const hs_sequence* seq, const char* path) {
  HS_REQUIRE(seq && path, "null argument");
  return guarded([&] { write_sequence(seq->seq, path); });
}

int64_t hs_sequence_frames(const hs_sequence* seq) { return seq ? seq->seq.size() : 0; }
int hs_sequence_joints(const hs_sequence* seq) { return seq ? seq->seq.joint_count() : 0; }
double hs_sequence_fps(const hs_sequence* seq) { return seq ? seq->seq.fps : 0.0; }
const char* hs_sequence_id(const hs_sequence* seq) { return seq ? seq->seq.source_id.c_str() : ""; }

hs_status hs_sequence_frame(const hs_sequence* seq, int64_t index, double* xyz, size_t n) {
  HS_REQUIRE(seq && xyz, "null argument");
  if (index < 0 || index >= seq->seq.size()) return fail_with(HS_ERR_OUT_OF_RANGE, "frame index out of range");
  const auto& joints = seq->seq.frames[static_cast<std::size_t>(index)].joints;
  if (n < 3 * joints.size()) return fail_with(HS_ERR_SHAPE, "frame buffer too small");
  for (std::size_t j = 0; j < joints.size(); ++j) {
    xyz[3 * j] = joints[j].x;
    xyz[3 * j + 1] = joints[j].y;
    xyz[3 * j + 2] = joints[j].z;
  }
  return HS_OK;
}

size_t hs_sequence_annotation_count(const hs_sequence* seq) { return seq ? seq->seq.annotations.size() : 0; }

hs_status hs_sequence_annotation(const hs_sequence* seq, size_t index, hs_annotation* out) {
  HS_REQUIRE(seq && out, "null argument");
  if (index >= seq->seq.annotations.size()) return fail_with(HS_ERR_OUT_OF_RANGE, "annotation index out of range");
  const auto& a = seq->seq.annotations[index];
  *out = {a.label, a.start_frame, a.end_frame, to_string(a.category)};
  return HS_OK;
}

void hs_sequence_free(hs_sequence* seq) { delete seq; }

// ---- corpora

hs_status hs_corpus_generate(const hs_config* synth, int n, hs_corpus** out) {
  HS_REQUIRE(synth && out, "null argument");
  return guarded([&] {
    const auto cfg = synth_config_from(synth->kv);
    *out = corpus_of(generate_corpus(cfg, n < 0 ? cfg.num_sequences : n));
  });
}

hs_status hs_synth_write_dictionary(const hs_config* synth, const char* path) {
  HS_REQUIRE(synth && path, "null argument");
  return guarded([&] { write_dictionary(dictionary_of(synth_config_from(synth->kv)), path); });
}

hs_status hs_corpus_load_dir(const char* dir, hs_corpus** out) {
  HS_REQUIRE(dir && out, "null argument");
  return guarded([&] {
    std::vector<PoseSequence> seqs;
    for (const auto& p : list_sequence_files(dir)) seqs.push_back(parse_sequence(p));
    *out = corpus_of(std::move(seqs));
  });
}

hs_status hs_corpus_load_files(const char* const* paths, size_t n, const char* format, const hs_config* adapter,
                               hs_corpus** out) {
  HS_REQUIRE((paths || n == 0) && out, "null argument");
  return guarded([&] {
    const auto f = format_of(format);
    std::optional<AdapterConfig> ad;
    if (f != SequenceFormat::canonical) {
      if (!adapter) fail(ErrorKind::Config, "benchmark formats need an adapter config");
      ad = AdapterConfig::from_config(adapter->kv, f);
    }
    std::vector<PoseSequence> seqs;
    for (size_t i = 0; i < n; ++i) seqs.push_back(parse_sequence(paths[i], f, ad ? &*ad : nullptr));
    *out = corpus_of(std::move(seqs));
  });
}

hs_status hs_corpus_write_dir(const hs_corpus* corpus, const char* dir) {
  HS_REQUIRE(corpus && dir, "null argument");
  return guarded([&] {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < corpus->items.size(); ++i) {
      const auto& s = corpus->items[i].seq;
      write_sequence(s, std::filesystem::path(dir) / file_name_for(s.source_id, i));
    }
  });
}

size_t hs_corpus_size(const hs_corpus* corpus) { return corpus ? corpus->items.size() : 0; }

const hs_sequence* hs_corpus_sequence(const hs_corpus* corpus, size_t index) {
  if (!corpus || index >= corpus->items.size()) return nullptr;
  return &corpus->items[index];
}

hs_status hs_corpus_split(const hs_corpus* corpus, const char* policy, uint64_t seed, double train_fraction,
                          hs_corpus** train, hs_corpus** test) {
  HS_REQUIRE(corpus && policy && train && test, "null argument");
  return guarded([&] {
    SplitPolicy p;
    if (std::string(policy) == "by_index") p = SplitPolicy::by_index;
    else if (std::string(policy) == "by_subject") p = SplitPolicy::by_subject;
    else fail(ErrorKind::Config, std::string("unknown split policy '") + policy + "'");
    auto [a, b] = split_train_test(sequences_of(corpus), p, seed, train_fraction);
    std::unique_ptr<hs_corpus> tr(corpus_of(std::move(a)));
    *test = corpus_of(std::move(b));
    *train = tr.release();
  });
}

void hs_corpus_free(hs_corpus* corpus) { delete corpus; }

// ---- training and models

hs_status hs_train(const hs_corpus* corpus, const hs_config* train_cfg, hs_epoch_callback on_epoch, void* user,
                   const char* log_csv, hs_model** out, hs_train_summary* summary) {
  HS_REQUIRE(corpus && train_cfg && out, "null argument");
  return guarded([&] {
    const auto cfg = train_config_from(train_cfg->kv);
    EpochCallback cb;
    if (on_epoch) {
      cb = [&](const EpochLog& e) {
        hs_epoch_info info{e.epoch, e.total_loss, {}, e.window_accuracy, e.val_accuracy, e.seconds};
        std::copy(e.head_loss.begin(), e.head_loss.end(), info.head_loss);
        on_epoch(&info, user);
      };
    }
    auto result = train(sequences_of(corpus), cfg, cb);
    if (log_csv) write_epoch_log_csv(result.log, log_csv);
    if (summary) {
      *summary = {static_cast<int>(result.log.size()), result.best_epoch, result.best_val_accuracy, result.seconds};
    }
    *out = new hs_model{std::move(result.best_params)};
  });
}

hs_status hs_model_load(const char* path, hs_model** out) {
  HS_REQUIRE(path && out, "null argument");
  return guarded([&] { *out = new hs_model{load_checkpoint(path)}; });
}

hs_status hs_model_save(const hs_model* model, const char* path) {
  HS_REQUIRE(model && path, "null argument");
  return guarded([&] { save_checkpoint(model->params, path); });
}

int hs_model_window(const hs_model* model) { return model ? model->params.spec.window : 0; }
int hs_model_joints(const hs_model* model) { return model ? model->params.spec.joints : 0; }
int hs_model_classes(const hs_model* model) { return model ? model->params.spec.num_classes : 0; }
size_t hs_model_parameter_count(const hs_model* model) { return model ? model->params.count() : 0; }
void hs_model_free(hs_model* model) { delete model; }

// ---- streaming

hs_status hs_stream_create(const hs_model* model, const char* attribution, hs_stream** out) {
  HS_REQUIRE(model && out, "null argument");
  return guarded([&] {
    InferOptions opts;
    if (attribution) {
      auto a = parse_span_attribution(attribution);
      if (!a) fail(ErrorKind::Config, std::string("unknown attribution '") + attribution + "'");
      opts.attribution = *a;
    }
    *out = new hs_stream(model->params, opts);
  });
}

hs_status hs_stream_step(hs_stream* stream, const double* xyz, size_t n, hs_step_result* out) {
  HS_REQUIRE(stream && xyz && out, "null argument");
  return guarded([&] {
    if (n % 3 != 0) fail(ErrorKind::Shape, "frame values must be x, y, z triples");
    PoseFrame frame;
    frame.timestamp_index = stream->rec.frames_seen();
    frame.joints.resize(n / 3);
    for (std::size_t j = 0; j < n / 3; ++j) frame.joints[j] = {xyz[3 * j], xyz[3 * j + 1], xyz[3 * j + 2]};
    const auto r = stream->rec.step(frame);
    out->frame = r.frame;
    out->preliminary = r.preliminary.value_or(-1);
    out->label = r.label.value_or(-1);
    out->closed = r.closed ? 1 : 0;
    out->detection = r.closed ? to_c(*r.closed) : hs_detection{0, 0, 0, 0};
  });
}

hs_status hs_stream_finish(hs_stream* stream, int* closed, hs_detection* out) {
  HS_REQUIRE(stream && closed && out, "null argument");
  return guarded([&] {
    const auto d = stream->rec.finish();
    *closed = d ? 1 : 0;
    *out = d ? to_c(*d) : hs_detection{0, 0, 0, 0};
  });
}

void hs_stream_free(hs_stream* stream) { delete stream; }

// ---- detections

hs_status hs_detections_create(hs_detections** out) {
  HS_REQUIRE(out, "out is null");
  return guarded([&] { *out = new hs_detections{}; });
}

hs_status hs_detections_add(hs_detections* set, const char* sequence_id, const hs_detection* det) {
  HS_REQUIRE(set && sequence_id && det, "null argument");
  return guarded([&] {
    auto it = std::find_if(set->groups.begin(), set->groups.end(),
                           [&](const auto& g) { return g.sequence_id == sequence_id; });
    if (it == set->groups.end()) {
      set->groups.push_back({sequence_id, {}});
      it = set->groups.end() - 1;
    }
    it->detections.push_back({det->label, det->pred_start, det->pred_end, det->first_emit});
  });
}

hs_status hs_detections_read(hs_detections* set, const char* path) {
  HS_REQUIRE(set && path, "null argument");
  return guarded([&] {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path)) {
      for (const auto& e : std::filesystem::directory_iterator(path)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(path);
    }
    for (const auto& f : files) {
      for (auto& g : read_detections(f)) {
        auto it = std::find_if(set->groups.begin(), set->groups.end(),
                               [&](const auto& x) { return x.sequence_id == g.sequence_id; });
        if (it == set->groups.end()) set->groups.push_back(std::move(g));
        else it->detections.insert(it->detections.end(), g.detections.begin(), g.detections.end());
      }
    }
  });
}

hs_status hs_detections_write(const hs_detections* set, const char* path) {
  HS_REQUIRE(set && path, "null argument");
  return guarded([&] { write_detections(set->groups, std::filesystem::path(path)); });
}

size_t hs_detections_count(const hs_detections* set) {
  if (!set) return 0;
  size_t n = 0;
  for (const auto& g : set->groups) n += g.detections.size();
  return n;
}

void hs_detections_free(hs_detections* set) { delete set; }

// ---- evaluation

void hs_eval_options_default(hs_eval_options* opts) {
  if (!opts) return;
  *opts = {"shrec22", 0.5, 60.0, "max_cardinality", nullptr, 0, nullptr};
}

hs_status hs_evaluate(const hs_corpus* ground_truth, const hs_detections* detections, const hs_eval_options* opts,
                      hs_report** out) {
  HS_REQUIRE(ground_truth && detections && out, "null argument");
  return guarded([&] {
    hs_eval_options o;
    hs_eval_options_default(&o);
    if (opts) o = *opts;
    EvalOptions eo;
    if (o.protocol) {
      auto p = parse_protocol(o.protocol);
      if (!p) fail(ErrorKind::Config, std::string("unknown protocol '") + o.protocol + "'");
      eo.protocol = *p;
    }
    if (o.strategy) {
      auto s = parse_match_strategy(o.strategy);
      if (!s) fail(ErrorKind::Config, std::string("unknown matching strategy '") + o.strategy + "'");
      eo.strategy = *s;
    }
    eo.mor = o.mor;
    eo.fps = o.fps;
    if (o.mor_sweep) eo.mor_sweep.assign(o.mor_sweep, o.mor_sweep + o.mor_sweep_count);
    std::optional<Dictionary> dict;
    if (o.dictionary) dict = read_dictionary(o.dictionary);

    std::vector<SequenceInput> inputs;
    for (const auto& item : ground_truth->items) {
      SequenceInput in{item.seq.source_id, item.seq.annotations, {}};
      for (const auto& g : detections->groups) {
        if (g.sequence_id == in.id) in.det.insert(in.det.end(), g.detections.begin(), g.detections.end());
      }
      inputs.push_back(std::move(in));
    }
    for (const auto& g : detections->groups) {
      const bool known = std::any_of(ground_truth->items.begin(), ground_truth->items.end(),
                                     [&](const auto& s) { return s.seq.source_id == g.sequence_id; });
      if (!known) fail(ErrorKind::NoGroundTruth, "detections for unknown sequence '" + g.sequence_id + "'");
    }
    *out = new hs_report{evaluate(inputs, eo, dict ? &*dict : nullptr)};
  });
}

hs_status hs_report_summary_get(const hs_report* report, hs_report_summary* out) {
  HS_REQUIRE(report && out, "null argument");
  const auto& r = report->report;
  *out = {r.gestures, r.matched, r.false_positives, r.dr, r.dr_std, r.fp, r.fp_std, r.ji, r.ji_std,
          r.delay ? 1 : 0, r.delay ? r.delay->mean : 0.0, r.delay ? r.delay->median : 0.0};
  return HS_OK;
}

hs_status hs_report_write_csv(const hs_report* report, const char* kind, const char* path) {
  HS_REQUIRE(report && kind && path, "null argument");
  return guarded([&] {
    const std::string k = kind;
    if (k == "aggregate") write_aggregate_csv(report->report, path);
    else if (k == "per_sequence") write_per_sequence_csv(report->report, path);
    else if (k == "per_class") write_per_class_csv(report->report, path);
    else if (k == "per_category") write_per_category_csv(report->report, path);
    else if (k == "ji_curve") write_ji_curve_csv(report->report, path);
    else fail(ErrorKind::Config, "unknown report kind '" + k + "'");
  });
}

void hs_report_free(hs_report* report) { delete report; }

}  // extern "C"
