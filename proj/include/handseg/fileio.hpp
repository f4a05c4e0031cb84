#pragma once

#include <filesystem>
#include <string>

namespace handseg {

// Writes `content` to `path` through a sibling temporary file and a rename,
// so readers never observe a partially written file. Throws Error(Io).
void write_file_atomically(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace handseg
