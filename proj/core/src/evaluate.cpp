#include "tsn/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "tsn/error.hpp"
#include "tsn/ops.hpp"
#include "tsn/parallel.hpp"
#include "tsn/sampling.hpp"

namespace tsn {

FusionSpec FusionSpec::two_stream() { return {{{"spatial", 1.0}, {"flow", 1.5}}}; }

FusionSpec FusionSpec::three_stream() { return {{{"spatial", 1.0}, {"flow", 1.0}, {"warped", 0.5}}}; }

void FusionSpec::validate() const {
  bool positive = false;
  for (const auto& [name, w] : weights) {
    if (!(w >= 0)) throw ConfigError("fusion weight of stream " + name + " must be >= 0");
    positive = positive || w > 0;
  }
  if (!positive) throw ConfigError("fusion needs at least one positive stream weight");
}

int argmax(std::span<const double> scores) {
  if (scores.empty()) throw DimensionError("argmax of an empty score vector");
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

std::vector<double> fuse_scores(std::span<const std::vector<double>> stream_scores, std::span<const double> weights) {
  if (stream_scores.size() != weights.size() || stream_scores.empty()) {
    throw ConfigError("fusion: " + std::to_string(stream_scores.size()) + " streams but " +
                      std::to_string(weights.size()) + " weights");
  }
  std::vector<double> fused(stream_scores[0].size(), 0.0);
  for (std::size_t s = 0; s < stream_scores.size(); ++s) {
    if (stream_scores[s].size() != fused.size()) {
      throw DimensionError("fusion: stream " + std::to_string(s) + " has " + std::to_string(stream_scores[s].size()) +
                           " classes, expected " + std::to_string(fused.size()));
    }
    for (std::size_t c = 0; c < fused.size(); ++c) fused[c] += weights[s] * stream_scores[s][c];
  }
  return fused;
}

namespace {

std::vector<Tensor> snippet_stacks(const VideoSource& video, const ModalityConfig& modality, int snippets) {
  const int units = snippet_units(video, modality.modality);
  const std::vector<int> starts = sample_test(units, modality.snippet_len, snippets);
  std::map<int, Tensor> cache;
  std::vector<Tensor> out;
  for (int s : starts) {
    std::vector<Tensor> parts;
    for (int l = 0; l < modality.snippet_len; ++l) {
      auto it = cache.find(s + l);
      if (it == cache.end()) it = cache.emplace(s + l, modality_unit(video, s + l, modality)).first;
      parts.push_back(it->second);
    }
    out.push_back(concat_channels(parts));
  }
  return out;
}

std::vector<Tensor> views_of(const Tensor& stack, StackKind kind, int out_side, bool ten_crop) {
  if (ten_crop) return tencrop(stack, kind, out_side);
  return {apply_crop(stack, CropSpec{kCropOutput, kCropOutput, CropPosition::Center, false}, kind, out_side)};
}

}  // namespace

std::vector<Tensor> test_views(const VideoSource& video, const ModalityConfig& modality, int out_side,
                               const EvalOptions& options) {
  modality.validate();
  std::vector<Tensor> out;
  for (const Tensor& stack : snippet_stacks(video, modality, options.snippets)) {
    for (auto& v : views_of(stack, stack_kind(modality.modality), out_side, options.ten_crop)) out.push_back(std::move(v));
  }
  return out;
}

std::vector<double> stream_scores(BackboneModel& model, const VideoSource& video, const ModalityConfig& modality,
                                  const EvalOptions& options) {
  NoGradGuard no_grad;
  modality.validate();
  if (input_channels(modality) != model.spec().input_channels) {
    throw DimensionError("stream model takes " + std::to_string(model.spec().input_channels) + " channels, " +
                         modality_name(modality.modality) + " snippets have " +
                         std::to_string(input_channels(modality)));
  }
  const auto classes = static_cast<std::size_t>(model.spec().num_classes);
  std::vector<double> total(classes, 0.0);
  std::size_t views = 0;
  for (const Tensor& stack : snippet_stacks(video, modality, options.snippets)) {
    const std::vector<Tensor> crops =
        views_of(stack, stack_kind(modality.modality), model.spec().input_size, options.ten_crop);
    const Tensor scores = model.forward(tsn::stack(crops), Mode::Eval);
    const auto d = scores.data();
    for (std::size_t r = 0; r < crops.size(); ++r) {
      for (std::size_t c = 0; c < classes; ++c) total[c] += d[r * classes + c];
    }
    views += crops.size();
  }
  for (double& x : total) x /= static_cast<double>(views);
  return total;
}

EvalResult evaluate(const std::vector<EvalStream>& streams, const Dataset& dataset, const EvalOptions& options) {
  if (streams.empty()) throw ConfigError("evaluation needs at least one stream");
  if (options.snippets < 1) throw ConfigError("evaluation needs at least one snippet per video");
  EvalResult result;
  FusionSpec fusion;
  const int classes = streams[0].model ? streams[0].model->spec().num_classes : 0;
  for (const auto& s : streams) {
    if (s.model == nullptr) throw ConfigError("stream " + s.name + " has no model");
    if (s.model->spec().num_classes != classes) {
      throw ConfigError("stream " + s.name + " predicts " + std::to_string(s.model->spec().num_classes) +
                        " classes, stream " + streams[0].name + " " + std::to_string(classes));
    }
    s.modality.validate();
    result.stream_names.push_back(s.name);
    result.weights.push_back(s.weight);
    fusion.weights.emplace_back(s.name, s.weight);
  }
  fusion.validate();
  if (dataset.num_classes != classes) {
    throw ConfigError("dataset has " + std::to_string(dataset.num_classes) + " classes, models " +
                      std::to_string(classes));
  }
  result.views_per_stream = static_cast<std::size_t>(options.snippets) * (options.ten_crop ? 10 : 1);

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return dataset.videos[a]->id() < dataset.videos[b]->id(); });
  result.videos.resize(order.size());
  parallel_for(order.size(), [&](std::size_t i) {
    const VideoSource& video = *dataset.videos[order[i]];
    VideoScores& vs = result.videos[i];
    vs.id = video.id();
    vs.label = video.label();
    for (const auto& s : streams) vs.streams.push_back(stream_scores(*s.model, video, s.modality, options));
    vs.fused = fuse_scores(vs.streams, result.weights);
    vs.prediction = argmax(vs.fused);
  });
  std::size_t correct = 0;
  for (const auto& v : result.videos) correct += v.prediction == v.label ? 1 : 0;
  result.accuracy = result.videos.empty() ? 0.0 : static_cast<double>(correct) / result.videos.size();
  return result;
}

double ScoreTable::accuracy() const {
  if (rows.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : rows) correct += argmax(r.scores) == r.label ? 1 : 0;
  return static_cast<double>(correct) / rows.size();
}

ScoreTable fused_table(const EvalResult& result) {
  ScoreTable t;
  for (std::size_t s = 0; s < result.stream_names.size(); ++s) {
    t.header.set("stream." + result.stream_names[s] + ".weight", format_double(result.weights[s]));
  }
  t.header.set("views_per_stream", std::to_string(result.views_per_stream));
  for (const auto& v : result.videos) t.rows.push_back({v.id, v.label, v.fused});
  t.header.set("accuracy", format_double(result.accuracy));
  return t;
}

ScoreTable stream_table(const EvalResult& result, std::size_t stream) {
  ScoreTable t;
  t.header.set("stream", result.stream_names.at(stream));
  t.header.set("views_per_stream", std::to_string(result.views_per_stream));
  for (const auto& v : result.videos) t.rows.push_back({v.id, v.label, v.streams.at(stream)});
  t.header.set("accuracy", format_double(t.accuracy()));
  return t;
}

void write_scores(std::ostream& out, const ScoreTable& table) {
  for (const auto& [k, v] : table.header.entries()) out << "# " << k << '=' << v << '\n';
  for (const auto& r : table.rows) {
    out << r.id << '\t' << r.label;
    for (double s : r.scores) out << '\t' << format_double(s);
    out << '\n';
  }
}

ScoreTable parse_scores(std::istream& in) {
  ScoreTable t;
  std::string line;
  int lineno = 0;
  std::size_t classes = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string::npos) t.header.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
      continue;
    }
    const auto fields = split(line, '\t');
    auto fail = [&](const std::string& why) {
      return FormatError("score line " + std::to_string(lineno) + ": " + why);
    };
    if (fields.size() < 3) throw fail("expected id, label and at least one score");
    ScoreRow row;
    row.id = fields[0];
    const std::string& lt = fields[1];
    auto res = std::from_chars(lt.data(), lt.data() + lt.size(), row.label);
    if (res.ec != std::errc() || res.ptr != lt.data() + lt.size() || row.label < 0) throw fail("bad label \"" + lt + "\"");
    for (std::size_t i = 2; i < fields.size(); ++i) {
      double v = 0.0;
      const std::string& f = fields[i];
      auto r = std::from_chars(f.data(), f.data() + f.size(), v);
      if (r.ec != std::errc() || r.ptr != f.data() + f.size()) throw fail("bad score \"" + f + "\"");
      row.scores.push_back(v);
    }
    if (classes == 0) classes = row.scores.size();
    if (row.scores.size() != classes) throw fail("expected " + std::to_string(classes) + " scores");
    t.rows.push_back(std::move(row));
  }
  return t;
}

ScoreTable read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open score file " + path.string());
  try {
    return parse_scores(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_scores(const std::filesystem::path& path, const ScoreTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_scores(out, table);
  if (!out) throw Error("failed writing " + path.string());
}

ScoreTable fuse_tables(const std::vector<ScoreTable>& tables, std::span<const double> weights) {
  if (tables.empty()) throw ConfigError("fuse: no score tables");
  if (tables.size() != weights.size()) {
    throw ConfigError("fuse: " + std::to_string(tables.size()) + " tables but " + std::to_string(weights.size()) +
                      " weights");
  }
  FusionSpec spec;
  for (std::size_t i = 0; i < weights.size(); ++i) spec.weights.emplace_back("table" + std::to_string(i), weights[i]);
  spec.validate();
  std::vector<std::map<std::string, const ScoreRow*>> index(tables.size());
  for (std::size_t i = 0; i < tables.size(); ++i) {
    for (const auto& r : tables[i].rows) {
      if (!index[i].emplace(r.id, &r).second) throw ConfigError("fuse: video " + r.id + " listed twice");
    }
    if (index[i].size() != index[0].size()) throw ConfigError("fuse: tables list different videos");
  }
  ScoreTable out;
  for (std::size_t i = 0; i < weights.size(); ++i) out.header.set("weight." + std::to_string(i), format_double(weights[i]));
  for (const auto& [id, first] : index[0]) {
    std::vector<std::vector<double>> per;
    for (std::size_t i = 0; i < tables.size(); ++i) {
      auto it = index[i].find(id);
      if (it == index[i].end()) throw ConfigError("fuse: video " + id + " missing from table " + std::to_string(i));
      if (it->second->label != first->label) throw ConfigError("fuse: video " + id + " has conflicting labels");
      if (it->second->scores.size() != first->scores.size()) {
        throw ConfigError("fuse: class-count mismatch for video " + id);
      }
      per.push_back(it->second->scores);
    }
    out.rows.push_back({id, first->label, fuse_scores(per, weights)});
  }
  out.header.set("accuracy", format_double(out.accuracy()));
  return out;
}

}  // namespace tsn
