#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tsn {

struct SplitEntry {
  std::string path;  // relative to the dataset root
  int label = 0;

  bool operator==(const SplitEntry&) const = default;
};

using SplitList = std::vector<SplitEntry>;

/// Lines of `relative/path<space>label`; blank lines and '#' comments are
/// skipped. Malformed lines raise FormatError with the line number.
SplitList parse_split(std::istream& in);
SplitList load_split(const std::filesystem::path& path);
void write_split(std::ostream& out, std::span<const SplitEntry> entries);
void save_split(const std::filesystem::path& path, std::span<const SplitEntry> entries);

/// Throws ConfigError if a path is in both lists or a label is outside [0, C).
void check_splits(std::span<const SplitEntry> train, std::span<const SplitEntry> test, int num_classes);

}  // namespace tsn
