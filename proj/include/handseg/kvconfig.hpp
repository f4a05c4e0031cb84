#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace handseg {

// Line-oriented `key = value` configuration. `#` starts a comment, keys may
// repeat (get_all returns them in file order), and later `set` calls
// override earlier entries.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig load(const std::filesystem::path& path);
  static KeyValueConfig parse(const std::string& text,
                              const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  std::vector<std::string> get_all(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);
  void add(const std::string& key, const std::string& value);

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }
  const std::filesystem::path& base_dir() const { return base_dir_; }
  std::string to_string() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::filesystem::path base_dir_;
  std::string origin_;
};

// Strict numeric parsing shared by every text reader. Throws Error(Config)
// naming `what` on failure.
double parse_double(const std::string& text, const std::string& what);
long long parse_int(const std::string& text, const std::string& what);

std::vector<std::string> split_ws(const std::string& text);
std::string trim(const std::string& text);

}  // namespace handseg
