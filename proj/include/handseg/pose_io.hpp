#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "handseg/kvconfig.hpp"

namespace handseg {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

enum class GestureCategory { static_pose, dynamic_coarse, dynamic_fine, periodic };

const char* to_string(GestureCategory category);
std::optional<GestureCategory> parse_category(const std::string& text);

struct PoseFrame {
  std::vector<Vec3> joints;
  std::int64_t timestamp_index = 0;

  friend bool operator==(const PoseFrame&, const PoseFrame&) = default;
};

// Class 0 is the non-gesture class and never appears as an annotation label.
struct GestureAnnotation {
  int label = 1;
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;  // inclusive
  GestureCategory category = GestureCategory::static_pose;

  std::int64_t length() const { return end_frame - start_frame + 1; }

  friend bool operator==(const GestureAnnotation&, const GestureAnnotation&) = default;
};

struct PoseSequence {
  std::vector<PoseFrame> frames;
  std::vector<GestureAnnotation> annotations;
  double fps = 60.0;
  int num_classes = 2;
  std::string source_id;

  int joint_count() const {
    return frames.empty() ? 0 : static_cast<int>(frames.front().joints.size());
  }
  std::int64_t size() const { return static_cast<std::int64_t>(frames.size()); }

  friend bool operator==(const PoseSequence&, const PoseSequence&) = default;
};

struct ClassInfo {
  std::string name;
  GestureCategory category = GestureCategory::static_pose;
};

struct Dictionary {
  std::vector<ClassInfo> classes;  // classes[0] is the non-gesture class
  int joint_count = 26;
  std::string joint_naming = "wrist+5x5";

  int num_classes() const { return static_cast<int>(classes.size()); }
};

void validate(const Dictionary& dict);

// Throws Error(InvariantViolation) describing the first violated invariant.
void validate(const PoseSequence& seq);

enum class SequenceFormat { canonical, shrec22, shrec19 };

std::optional<SequenceFormat> parse_sequence_format(const std::string& text);

// Layout description for the benchmark adapters, read from a key-value file:
//
//   joints = 26
//   fps = 60
//   num_classes = 17
//   annotations = annotations.txt        (relative to the config file)
//   delimiter = ;                        (any of the listed characters)
//   leading_columns = 1
//   values_per_joint = 7                 (xyz first, extra values ignored)
//   scale = 1.0
//   label.GRAB = 1 dynamic_fine
//
// Annotation lines are `<sequence id> (<label name> <start> <end>)*`, split on
// the same delimiter set. The sequence id is the pose file's stem.
struct AdapterConfig {
  int joints = 26;
  double fps = 60.0;
  int num_classes = 2;
  std::filesystem::path annotations;
  std::string delimiters = " \t;,";
  int leading_columns = 0;
  int values_per_joint = 3;
  double scale = 1.0;
  struct LabelMapping {
    std::string external_name;
    int index = 1;
    GestureCategory category = GestureCategory::static_pose;
  };
  std::vector<LabelMapping> labels;

  static AdapterConfig from_config(const KeyValueConfig& cfg, SequenceFormat format);
  static AdapterConfig load(const std::filesystem::path& path, SequenceFormat format);
};

// Sequences without an id take the file stem.
PoseSequence parse_sequence(const std::filesystem::path& path,
                            SequenceFormat format = SequenceFormat::canonical,
                            const AdapterConfig* adapter = nullptr);

// Canonical reader over an arbitrary byte stream (used by the file reader and
// by fuzzing).
PoseSequence parse_canonical(std::istream& in, const std::string& origin = "<stream>");

void write_canonical(const PoseSequence& seq, std::ostream& out);

// Writes atomically (temporary file + rename). Throws Error(Io).
void write_sequence(const PoseSequence& seq, const std::filesystem::path& path);

enum class SplitPolicy { by_subject, by_index };

// Subject of a sequence: the source id up to its first '/', or the whole id.
std::string subject_of(const std::string& source_id);

// by_index keeps corpus order and puts the first round(n * train_fraction)
// sequences in train, so a corpus that arrives pre-split stays split.
// by_subject shuffles distinct subjects with `seed` and assigns whole
// subjects to train until the fraction is reached.
std::pair<std::vector<PoseSequence>, std::vector<PoseSequence>> split_train_test(
    const std::vector<PoseSequence>& corpus, SplitPolicy policy, std::uint64_t seed,
    double train_fraction = 0.5);

// Lists `*.seq` files in a directory in lexicographic order.
std::vector<std::filesystem::path> list_sequence_files(const std::filesystem::path& dir);

void write_dictionary(const Dictionary& dict, const std::filesystem::path& path);
Dictionary read_dictionary(const std::filesystem::path& path);

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace handseg
