#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "tsn/backbone.hpp"
#include "tsn/dataset.hpp"
#include "tsn/kv_file.hpp"
#include "tsn/snippet.hpp"

namespace tsn {

/// Named per-stream weights applied to raw (pre-softmax) scores.
struct FusionSpec {
  std::vector<std::pair<std::string, double>> weights;

  /// spatial 1, flow 1.5.
  static FusionSpec two_stream();
  /// spatial 1, flow 1, warped 0.5.
  static FusionSpec three_stream();
  /// Throws ConfigError on a negative weight or when none is positive.
  void validate() const;
};

/// One network stream at test time. The model is only read.
struct EvalStream {
  std::string name;
  BackboneModel* model = nullptr;
  ModalityConfig modality;
  double weight = 1.0;
};

struct EvalOptions {
  int snippets = kTestSnippets;
  bool ten_crop = true;  // otherwise a single center view
};

struct VideoScores {
  std::string id;
  int label = 0;
  std::vector<std::vector<double>> streams;  // mean raw scores per stream
  std::vector<double> fused;
  int prediction = 0;
};

struct EvalResult {
  std::vector<std::string> stream_names;
  std::vector<double> weights;
  std::vector<VideoScores> videos;  // sorted by id
  std::size_t views_per_stream = 0;  // snippets x crops, per video
  double accuracy = 0.0;
};

/// Argmax with ties going to the lowest class index.
int argmax(std::span<const double> scores);

/// sum_s weight_s * scores_s.
std::vector<double> fuse_scores(std::span<const std::vector<double>> stream_scores, std::span<const double> weights);

/// Test-time views of one video for one stream: `snippets` evenly spaced
/// snippets, each expanded into ten crops (or one center crop).
std::vector<Tensor> test_views(const VideoSource& video, const ModalityConfig& modality, int out_side,
                               const EvalOptions& options = {});

/// Mean raw scores of one stream over all test views of a video.
std::vector<double> stream_scores(BackboneModel& model, const VideoSource& video, const ModalityConfig& modality,
                                  const EvalOptions& options = {});

/// Scores every video with every stream, fuses with the stream weights and
/// reports accuracy. Parallel over videos; results do not depend on the
/// thread count or on dataset order.
EvalResult evaluate(const std::vector<EvalStream>& streams, const Dataset& dataset, const EvalOptions& options = {});

/// Score dump: '#' header lines, then `id<TAB>label<TAB>s_1 ... s_C`.
struct ScoreRow {
  std::string id;
  int label = 0;
  std::vector<double> scores;
};

struct ScoreTable {
  KeyValues header;
  std::vector<ScoreRow> rows;

  double accuracy() const;
};

ScoreTable fused_table(const EvalResult& result);
/// Table of a single stream's mean raw scores.
ScoreTable stream_table(const EvalResult& result, std::size_t stream);
void write_scores(std::ostream& out, const ScoreTable& table);
ScoreTable parse_scores(std::istream& in);
ScoreTable read_scores(const std::filesystem::path& path);
void save_scores(const std::filesystem::path& path, const ScoreTable& table);

/// Weighted sum of per-stream tables. Tables must list the same videos with
/// the same labels and class counts (rows are matched by id).
ScoreTable fuse_tables(const std::vector<ScoreTable>& tables, std::span<const double> weights);

}  // namespace tsn
