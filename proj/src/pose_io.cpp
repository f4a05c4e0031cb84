#include "handseg/pose_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "handseg/error.hpp"
#include "handseg/fileio.hpp"
#include "handseg/rng.hpp"

namespace handseg {

namespace fs = std::filesystem;

const char* to_string(GestureCategory category) {
  switch (category) {
    case GestureCategory::static_pose: return "static";
    case GestureCategory::dynamic_coarse: return "dynamic_coarse";
    case GestureCategory::dynamic_fine: return "dynamic_fine";
    case GestureCategory::periodic: return "periodic";
  }
  return "static";
}

std::optional<GestureCategory> parse_category(const std::string& text) {
  if (text == "static") return GestureCategory::static_pose;
  if (text == "dynamic_coarse" || text == "dynamic") return GestureCategory::dynamic_coarse;
  if (text == "dynamic_fine") return GestureCategory::dynamic_fine;
  if (text == "periodic") return GestureCategory::periodic;
  return std::nullopt;
}

std::optional<SequenceFormat> parse_sequence_format(const std::string& text) {
  if (text == "canonical") return SequenceFormat::canonical;
  if (text == "shrec22") return SequenceFormat::shrec22;
  if (text == "shrec19") return SequenceFormat::shrec19;
  return std::nullopt;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) fail(ErrorKind::Internal, "to_chars failed");
  return std::string(buf, ptr);
}

void validate(const Dictionary& dict) {
  if (dict.num_classes() < 2) {
    fail(ErrorKind::InvariantViolation, "dictionary needs at least 2 classes");
  }
  if (dict.joint_count < 2) {
    fail(ErrorKind::InvariantViolation, "dictionary joint count must be >= 2");
  }
}

void validate(const PoseSequence& seq) {
  auto violation = [&](const std::string& what) {
    fail(ErrorKind::InvariantViolation,
         (seq.source_id.empty() ? std::string("sequence") : seq.source_id) + ": " + what);
  };
  if (!(seq.fps > 0.0) || !std::isfinite(seq.fps)) violation("fps must be positive");
  if (seq.num_classes < 2) violation("num_classes must be >= 2");
  if (seq.frames.empty()) violation("sequence has no frames");
  const std::size_t joints = seq.frames.front().joints.size();
  if (joints < 2) violation("at least 2 joints are required");
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const auto& frame = seq.frames[f];
    if (frame.joints.size() != joints) {
      violation("frame " + std::to_string(f) + " has " + std::to_string(frame.joints.size()) +
                " joints, expected " + std::to_string(joints));
    }
    for (const auto& j : frame.joints) {
      if (!std::isfinite(j.x) || !std::isfinite(j.y) || !std::isfinite(j.z)) {
        violation("frame " + std::to_string(f) + " has a non-finite coordinate");
      }
    }
    if (f > 0 && frame.timestamp_index <= seq.frames[f - 1].timestamp_index) {
      violation("frame timestamps must be strictly increasing (frame " + std::to_string(f) + ")");
    }
  }
  const std::int64_t n = seq.size();
  for (std::size_t i = 0; i < seq.annotations.size(); ++i) {
    const auto& a = seq.annotations[i];
    const std::string tag = "annotation " + std::to_string(i);
    if (a.label < 1 || a.label >= seq.num_classes) {
      violation(tag + " label " + std::to_string(a.label) + " outside [1, " +
                std::to_string(seq.num_classes - 1) + "]");
    }
    if (a.start_frame < 0 || a.start_frame > a.end_frame || a.end_frame >= n) {
      violation(tag + " span [" + std::to_string(a.start_frame) + ", " +
                std::to_string(a.end_frame) + "] outside [0, " + std::to_string(n - 1) + "]");
    }
    if (i > 0 && a.start_frame <= seq.annotations[i - 1].end_frame) {
      violation(tag + " overlaps or precedes the previous annotation");
    }
  }
}

namespace {

std::vector<std::string_view> tokenize(std::string_view line, std::string_view delimiters) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && delimiters.find(line[i]) != std::string_view::npos) ++i;
    std::size_t j = i;
    while (j < line.size() && delimiters.find(line[j]) == std::string_view::npos) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

double to_double(std::string_view tok, std::size_t lineno, const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(lineno, std::string("invalid ") + what + " '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) {
    throw ParseError(lineno, std::string("non-finite ") + what + " '" + std::string(tok) + "'");
  }
  return v;
}

long long to_int(std::string_view tok, std::size_t lineno, const char* what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(lineno, std::string("invalid ") + what + " '" + std::string(tok) + "'");
  }
  return v;
}

constexpr std::string_view kWs = " \t";
constexpr const char* kAnnotationsMarker = "#ANNOTATIONS";
constexpr const char* kSourceMarker = "#SOURCE";

}  // namespace

PoseSequence parse_canonical(std::istream& in, const std::string& origin) {
  PoseSequence seq;
  std::string line;
  std::size_t lineno = 0;

  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      strip_cr(line);
      if (!blank(line)) return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError(0, origin + ": empty input");
  auto header = tokenize(line, kWs);
  if (header.size() != 3) throw ParseError(lineno, "header must be 'J L fps'");
  const long long joints = to_int(header[0], lineno, "joint count");
  const long long classes = to_int(header[1], lineno, "class count");
  seq.fps = to_double(header[2], lineno, "fps");
  if (joints < 2) throw ParseError(lineno, "joint count must be >= 2");
  if (classes < 2) throw ParseError(lineno, "class count must be >= 2");
  if (!(seq.fps > 0.0)) throw ParseError(lineno, "fps must be positive");
  seq.num_classes = static_cast<int>(classes);

  bool saw_annotations = false;
  const std::size_t values = static_cast<std::size_t>(joints) * 3;
  while (next_line()) {
    if (line.rfind(kSourceMarker, 0) == 0 && seq.frames.empty()) {
      seq.source_id = trim(line.substr(std::string_view(kSourceMarker).size()));
      continue;
    }
    if (trim(line) == kAnnotationsMarker) {
      saw_annotations = true;
      break;
    }
    auto toks = tokenize(line, kWs);
    if (toks.size() != values) {
      throw ParseError(lineno, "frame has " + std::to_string(toks.size()) + " values, expected " +
                                   std::to_string(values));
    }
    PoseFrame frame;
    frame.timestamp_index = static_cast<std::int64_t>(seq.frames.size());
    frame.joints.resize(static_cast<std::size_t>(joints));
    for (std::size_t j = 0; j < frame.joints.size(); ++j) {
      frame.joints[j] = {to_double(toks[3 * j], lineno, "coordinate"),
                         to_double(toks[3 * j + 1], lineno, "coordinate"),
                         to_double(toks[3 * j + 2], lineno, "coordinate")};
    }
    seq.frames.push_back(std::move(frame));
  }
  if (!saw_annotations) {
    throw ParseError(lineno, "missing " + std::string(kAnnotationsMarker) + " block (truncated file?)");
  }
  while (next_line()) {
    auto toks = tokenize(line, kWs);
    if (toks.size() != 4) throw ParseError(lineno, "annotation must be 'label start end category'");
    GestureAnnotation a;
    a.label = static_cast<int>(to_int(toks[0], lineno, "label"));
    a.start_frame = to_int(toks[1], lineno, "start frame");
    a.end_frame = to_int(toks[2], lineno, "end frame");
    auto cat = parse_category(std::string(toks[3]));
    if (!cat) throw ParseError(lineno, "unknown category '" + std::string(toks[3]) + "'");
    a.category = *cat;
    seq.annotations.push_back(a);
  }
  validate(seq);
  return seq;
}

void write_canonical(const PoseSequence& seq, std::ostream& out) {
  out << seq.joint_count() << ' ' << seq.num_classes << ' ' << format_double(seq.fps) << '\n';
  if (!seq.source_id.empty()) out << kSourceMarker << ' ' << seq.source_id << '\n';
  std::string row;
  for (const auto& frame : seq.frames) {
    row.clear();
    for (std::size_t j = 0; j < frame.joints.size(); ++j) {
      const auto& p = frame.joints[j];
      if (j) row += ' ';
      row += format_double(p.x);
      row += ' ';
      row += format_double(p.y);
      row += ' ';
      row += format_double(p.z);
    }
    row += '\n';
    out << row;
  }
  out << kAnnotationsMarker << '\n';
  for (const auto& a : seq.annotations) {
    out << a.label << ' ' << a.start_frame << ' ' << a.end_frame << ' ' << to_string(a.category)
        << '\n';
  }
}

void write_sequence(const PoseSequence& seq, const fs::path& path) {
  std::ostringstream out;
  write_canonical(seq, out);
  write_file_atomically(path, out.str());
}

AdapterConfig AdapterConfig::from_config(const KeyValueConfig& cfg, SequenceFormat format) {
  AdapterConfig a;
  a.fps = format == SequenceFormat::shrec19 ? 50.0 : 60.0;
  a.joints = static_cast<int>(cfg.get_int("joints", a.joints));
  a.fps = cfg.get_double("fps", a.fps);
  a.num_classes = static_cast<int>(cfg.get_int("num_classes", 0));
  a.leading_columns = static_cast<int>(cfg.get_int("leading_columns", a.leading_columns));
  a.values_per_joint = static_cast<int>(cfg.get_int("values_per_joint", a.values_per_joint));
  a.scale = cfg.get_double("scale", a.scale);
  if (auto d = cfg.get("delimiter")) a.delimiters = *d == "whitespace" ? " \t" : *d + " \t";
  if (auto ann = cfg.get("annotations")) {
    fs::path p(*ann);
    a.annotations = p.is_absolute() ? p : cfg.base_dir() / p;
  }
  int max_index = 0;
  for (const auto& [key, value] : cfg.entries()) {
    if (key.rfind("label.", 0) != 0) continue;
    auto toks = split_ws(value);
    if (toks.size() != 2) fail(ErrorKind::Config, key + ": expected '<index> <category>'");
    LabelMapping m;
    m.external_name = key.substr(6);
    m.index = static_cast<int>(parse_int(toks[0], key));
    auto cat = parse_category(toks[1]);
    if (!cat) fail(ErrorKind::Config, key + ": unknown category '" + toks[1] + "'");
    m.category = *cat;
    if (m.index < 1) fail(ErrorKind::Config, key + ": mapped labels start at 1 (0 is non-gesture)");
    max_index = std::max(max_index, m.index);
    a.labels.push_back(std::move(m));
  }
  if (a.num_classes == 0) a.num_classes = max_index + 1;
  if (a.labels.empty()) fail(ErrorKind::Config, "adapter config has no label.<NAME> mappings");
  if (max_index >= a.num_classes) fail(ErrorKind::Config, "label index exceeds num_classes - 1");
  if (a.joints < 2) fail(ErrorKind::Config, "joints must be >= 2");
  if (a.values_per_joint < 3) fail(ErrorKind::Config, "values_per_joint must be >= 3");
  if (!(a.fps > 0.0)) fail(ErrorKind::Config, "fps must be positive");
  if (a.annotations.empty()) fail(ErrorKind::Config, "adapter config needs 'annotations'");
  return a;
}

AdapterConfig AdapterConfig::load(const fs::path& path, SequenceFormat format) {
  return from_config(KeyValueConfig::load(path), format);
}

namespace {

PoseSequence parse_adapter(const fs::path& path, const AdapterConfig& cfg) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::FileNotFound, "cannot open sequence file: " + path.string());
  PoseSequence seq;
  seq.fps = cfg.fps;
  seq.num_classes = cfg.num_classes;
  seq.source_id = path.stem().string();

  const std::size_t expected =
      static_cast<std::size_t>(cfg.leading_columns) +
      static_cast<std::size_t>(cfg.joints) * static_cast<std::size_t>(cfg.values_per_joint);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (blank(line) || line.front() == '#') continue;
    auto toks = tokenize(line, cfg.delimiters);
    if (toks.size() != expected) {
      throw ParseError(lineno, "pose line has " + std::to_string(toks.size()) +
                                   " fields, expected " + std::to_string(expected));
    }
    PoseFrame frame;
    frame.timestamp_index = static_cast<std::int64_t>(seq.frames.size());
    frame.joints.resize(static_cast<std::size_t>(cfg.joints));
    for (int j = 0; j < cfg.joints; ++j) {
      const std::size_t base = static_cast<std::size_t>(cfg.leading_columns) +
                               static_cast<std::size_t>(j * cfg.values_per_joint);
      frame.joints[static_cast<std::size_t>(j)] = {
          cfg.scale * to_double(toks[base], lineno, "coordinate"),
          cfg.scale * to_double(toks[base + 1], lineno, "coordinate"),
          cfg.scale * to_double(toks[base + 2], lineno, "coordinate")};
    }
    seq.frames.push_back(std::move(frame));
  }
  if (lineno == 0) throw ParseError(0, path.string() + ": empty input");

  std::ifstream ann(cfg.annotations);
  if (!ann) fail(ErrorKind::FileNotFound, "cannot open annotation file: " + cfg.annotations.string());
  lineno = 0;
  bool found = false;
  while (std::getline(ann, line)) {
    ++lineno;
    strip_cr(line);
    auto toks = tokenize(line, cfg.delimiters);
    if (toks.empty() || toks[0] != seq.source_id) continue;
    found = true;
    if ((toks.size() - 1) % 3 != 0) {
      throw ParseError(lineno, "annotation entries must be '<label> <start> <end>' triples");
    }
    for (std::size_t i = 1; i < toks.size(); i += 3) {
      auto it = std::find_if(cfg.labels.begin(), cfg.labels.end(),
                             [&](const auto& m) { return m.external_name == toks[i]; });
      if (it == cfg.labels.end()) {
        throw ParseError(lineno, "unmapped label '" + std::string(toks[i]) + "'");
      }
      GestureAnnotation a;
      a.label = it->index;
      a.category = it->category;
      a.start_frame = to_int(toks[i + 1], lineno, "start frame");
      a.end_frame = to_int(toks[i + 2], lineno, "end frame");
      seq.annotations.push_back(a);
    }
  }
  if (!found) {
    throw ParseError(0, "no annotation entry for sequence '" + seq.source_id + "' in " +
                            cfg.annotations.string());
  }
  std::sort(seq.annotations.begin(), seq.annotations.end(),
            [](const auto& a, const auto& b) { return a.start_frame < b.start_frame; });
  validate(seq);
  return seq;
}

}  // namespace

PoseSequence parse_sequence(const fs::path& path, SequenceFormat format,
                            const AdapterConfig* adapter) {
  if (!fs::exists(path)) fail(ErrorKind::FileNotFound, "no such file: " + path.string());
  if (format == SequenceFormat::canonical) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::FileNotFound, "cannot open sequence file: " + path.string());
    auto seq = parse_canonical(in, path.string());
    if (seq.source_id.empty()) seq.source_id = path.stem().string();
    return seq;
  }
  if (adapter == nullptr) {
    fail(ErrorKind::Config, "the shrec22/shrec19 formats need an adapter config");
  }
  return parse_adapter(path, *adapter);
}

std::string subject_of(const std::string& source_id) {
  auto slash = source_id.find('/');
  return slash == std::string::npos ? source_id : source_id.substr(0, slash);
}

std::pair<std::vector<PoseSequence>, std::vector<PoseSequence>> split_train_test(
    const std::vector<PoseSequence>& corpus, SplitPolicy policy, std::uint64_t seed,
    double train_fraction) {
  if (corpus.empty()) fail(ErrorKind::EmptyCorpus, "cannot split an empty corpus");
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    fail(ErrorKind::Config, "train fraction must lie in [0, 1]");
  }
  std::pair<std::vector<PoseSequence>, std::vector<PoseSequence>> out;
  if (policy == SplitPolicy::by_index) {
    const auto n_train = static_cast<std::size_t>(
        std::llround(static_cast<double>(corpus.size()) * train_fraction));
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      (i < n_train ? out.first : out.second).push_back(corpus[i]);
    }
    return out;
  }

  std::vector<std::string> subjects;
  for (const auto& s : corpus) {
    auto subj = subject_of(s.source_id);
    if (std::find(subjects.begin(), subjects.end(), subj) == subjects.end()) {
      subjects.push_back(subj);
    }
  }
  if (subjects.size() < 2) {
    fail(ErrorKind::SingleSubject, "by_subject split needs at least two subjects");
  }
  auto rng = make_rng(seed, {0x5e1175ULL});
  std::shuffle(subjects.begin(), subjects.end(), rng);
  const auto n_subjects = static_cast<long long>(subjects.size());
  const long long n_train = std::clamp<long long>(
      std::llround(static_cast<double>(n_subjects) * train_fraction), 1, n_subjects - 1);
  std::set<std::string> train_subjects(subjects.begin(), subjects.begin() + n_train);
  for (const auto& s : corpus) {
    (train_subjects.count(subject_of(s.source_id)) ? out.first : out.second).push_back(s);
  }
  return out;
}

std::vector<fs::path> list_sequence_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::FileNotFound, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".seq") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_dictionary(const Dictionary& dict, const fs::path& path) {
  std::ostringstream out;
  out << "joints " << dict.joint_count << '\n';
  out << "naming " << dict.joint_naming << '\n';
  for (std::size_t i = 0; i < dict.classes.size(); ++i) {
    out << i << ' ' << dict.classes[i].name << ' '
        << (i == 0 ? "none" : to_string(dict.classes[i].category)) << '\n';
  }
  write_file_atomically(path, out.str());
}

Dictionary read_dictionary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::FileNotFound, "cannot open dictionary: " + path.string());
  Dictionary dict;
  dict.classes.clear();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "joints" && toks.size() == 2) {
      dict.joint_count = static_cast<int>(to_int(toks[1], lineno, "joint count"));
      continue;
    }
    if (toks[0] == "naming" && toks.size() == 2) {
      dict.joint_naming = toks[1];
      continue;
    }
    if (toks.size() != 3) throw ParseError(lineno, "expected '<index> <name> <category>'");
    const auto index = to_int(toks[0], lineno, "class index");
    if (index != static_cast<long long>(dict.classes.size())) {
      throw ParseError(lineno, "class indices must be consecutive from 0");
    }
    ClassInfo info{toks[1], GestureCategory::static_pose};
    if (index > 0) {
      auto cat = parse_category(toks[2]);
      if (!cat) throw ParseError(lineno, "unknown category '" + toks[2] + "'");
      info.category = *cat;
    }
    dict.classes.push_back(std::move(info));
  }
  validate(dict);
  return dict;
}

}  // namespace handseg
