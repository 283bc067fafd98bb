#include "tsn/split.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "tsn/error.hpp"
#include "tsn/kv_file.hpp"

namespace tsn {

SplitList parse_split(std::istream& in) {
  SplitList out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream fields(t);
    std::string path, label_text, extra;
    fields >> path >> label_text;
    int label = 0;
    auto res = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (path.empty() || label_text.empty() || res.ec != std::errc() ||
        res.ptr != label_text.data() + label_text.size() || (fields >> extra) || label < 0) {
      throw FormatError("split line " + std::to_string(lineno) + ": expected \"path label\", got \"" + t + "\"");
    }
    out.push_back({path, label});
  }
  return out;
}

SplitList load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split file " + path.string());
  try {
    return parse_split(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_split(std::ostream& out, std::span<const SplitEntry> entries) {
  for (const auto& e : entries) out << e.path << ' ' << e.label << '\n';
}

void save_split(const std::filesystem::path& path, std::span<const SplitEntry> entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_split(out, entries);
}

void check_splits(std::span<const SplitEntry> train, std::span<const SplitEntry> test, int num_classes) {
  std::set<std::string> seen;
  for (const auto* list : {&train, &test}) {
    for (const auto& e : *list) {
      if (e.label < 0 || e.label >= num_classes) {
        throw ConfigError("split entry " + e.path + " has label " + std::to_string(e.label) +
                          " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
  }
  for (const auto& e : train) seen.insert(e.path);
  for (const auto& e : test) {
    if (seen.count(e.path)) throw ConfigError("path " + e.path + " appears in both train and test splits");
  }
}

}  // namespace tsn
