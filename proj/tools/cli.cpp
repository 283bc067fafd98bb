#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "tsn/backbone.hpp"
#include "tsn/consensus.hpp"
#include "tsn/dataset.hpp"
#include "tsn/error.hpp"
#include "tsn/evaluate.hpp"
#include "tsn/gradcheck.hpp"
#include "tsn/kv_file.hpp"
#include "tsn/synthetic.hpp"
#include "tsn/tensor_io.hpp"
#include "tsn/train.hpp"
#include "tsn/visualize.hpp"

namespace tsn::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

KeyValues run_header(const std::string& command, std::uint64_t seed) {
  KeyValues kv;
  kv.set("tsn_version", TSN_VERSION);
  kv.set("command", command);
  kv.set("seed", std::to_string(seed));
  return kv;
}

void append(KeyValues& into, const KeyValues& from, const std::string& prefix = "") {
  for (const auto& [k, v] : from.entries()) into.set(prefix + k, v);
}

void write_header(std::ostream& out, const KeyValues& header) {
  for (const auto& [k, v] : header.entries()) out << "# " << k << '=' << v << '\n';
}

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& token : split(text, ',')) {
    try {
      std::size_t used = 0;
      const std::string t = trim(token);
      out.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw UsageError("invalid " + what + " \"" + text + "\"");
    }
  }
  return out;
}

std::vector<int> parse_ints(const std::string& text, const std::string& what) {
  std::vector<int> out;
  if (trim(text).empty()) return out;
  for (double d : parse_doubles(text, what)) {
    if (d != static_cast<int>(d)) throw UsageError("invalid " + what + " \"" + text + "\"");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

std::vector<StageSpec> parse_stages(const std::string& text) {
  KeyValues kv;
  kv.set("stages", text);
  kv.set("input_channels", "3");
  kv.set("input_size", "64");
  kv.set("num_classes", "2");
  kv.set("dropout_prob", "0");
  return BackboneSpec::from_kv(kv).stages;
}

struct GenArgs {
  std::string spec, out;
  std::uint64_t seed = 1;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  const SyntheticSpec spec = SyntheticSpec::from_kv(KeyValues::load(a.spec));
  generate_dataset(spec, a.seed, a.out);
  KeyValues header = run_header("gen-data", a.seed);
  append(header, spec.to_kv(), "spec.");
  std::ofstream log(fs::path(a.out) / "generate.txt", std::ios::trunc);
  write_header(log, header);
  if (!log) throw Error("cannot write " + (fs::path(a.out) / "generate.txt").string());
  write_header(out, header);
  const std::size_t videos = static_cast<std::size_t>(spec.num_classes()) *
                             static_cast<std::size_t>(spec.train_per_class + spec.test_per_class);
  out << "generated " << videos << " videos in " << spec.num_classes() << " classes at " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string data, out, modality = "rgb", consensus = "avg", weights, init_from, preset = "desk", metrics;
  std::string stages, milestones, split = "train";
  int segments = kDefaultSegments, snippet_len = 0, batch = -1, iters = -1, lr_step = -1, input_size = -1, log_every = 10;
  double lr = -1, momentum = -1, weight_decay = -1, dropout = -1;
  bool partial_bn = false, baseline = false;
  std::uint64_t seed = 1;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig cfg = TrainConfig::preset(a.preset);
  const Dataset data = load_dataset(a.data, a.split);
  const Modality modality = parse_modality(a.modality);
  cfg.modality = ModalityConfig::defaults(modality, data.flow_bound);
  if (a.snippet_len > 0) cfg.modality.snippet_len = a.snippet_len;
  cfg.segments = a.segments;
  cfg.consensus = ConsensusKind::parse(a.consensus, a.segments);
  if (!a.weights.empty()) cfg.consensus = ConsensusKind::weighted(parse_doubles(a.weights, "consensus weights"));
  cfg.baseline = a.baseline;
  if (a.batch > 0) cfg.batch_size = a.batch;
  if (a.iters >= 0) cfg.max_iters = a.iters;
  if (a.lr > 0) cfg.schedule.base_lr = a.lr;
  if (a.lr_step >= 0) cfg.schedule.step_every = a.lr_step;
  if (!a.milestones.empty()) cfg.schedule.milestones = parse_ints(a.milestones, "lr milestones");
  if (a.momentum >= 0) cfg.momentum = a.momentum;
  if (a.weight_decay >= 0) cfg.weight_decay = a.weight_decay;
  if (a.dropout >= 0) cfg.dropout = a.dropout;
  if (a.input_size > 0) cfg.backbone.input_size = a.input_size;
  if (!a.stages.empty()) cfg.backbone.stages = parse_stages(a.stages);
  cfg.partial_bn = a.partial_bn;
  cfg.init_from = a.init_from;
  cfg.seed = a.seed;
  cfg.log_every = a.log_every;

  TrainResult result = train(cfg, data);
  KeyValues header = run_header("train", a.seed);
  header.set("data", a.data);
  header.set("preset", a.preset);
  append(header, cfg.to_kv(), "config.");
  append(header, result.model.spec().to_kv(), "backbone.");
  result.info.extra = header;
  save_checkpoint(a.out, result.model, result.info);

  const fs::path metrics = a.metrics.empty() ? fs::path(a.out) / "metrics.tsv" : fs::path(a.metrics);
  std::ofstream m(metrics, std::ios::trunc);
  write_metrics(m, result.log, header);
  if (!m) throw Error("cannot write " + metrics.string());
  write_header(out, header);
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    out << "step " << last.step << " lr " << format_double(last.lr) << " loss " << format_double(last.loss)
        << " train_acc " << format_double(last.train_acc) << '\n';
  }
  out << "checkpoint written to " << a.out << '\n';
  return 0;
}

struct StreamArg {
  std::string name, ckpt;
  double weight = 1.0;
};

StreamArg parse_stream(const std::string& text) {
  const auto eq = text.find('=');
  const auto colon = text.rfind(':');
  if (eq == std::string::npos || colon == std::string::npos || colon < eq || eq == 0 || colon == eq + 1) {
    throw UsageError("--stream expects NAME=CKPT:WEIGHT, got \"" + text + "\"");
  }
  StreamArg s{text.substr(0, eq), text.substr(eq + 1, colon - eq - 1), 0.0};
  const auto w = parse_doubles(text.substr(colon + 1), "stream weight");
  if (w.size() != 1) throw UsageError("--stream expects a single weight in \"" + text + "\"");
  s.weight = w[0];
  return s;
}

struct EvalArgs {
  std::string data, out, split = "test", stream_dir;
  std::vector<std::string> streams;
  int snippets = kTestSnippets;
  bool single_crop = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Dataset data = load_dataset(a.data, a.split);
  std::vector<StreamArg> args;
  for (const auto& s : a.streams) args.push_back(parse_stream(s));
  std::vector<BackboneModel> models;
  std::vector<CheckpointInfo> infos(args.size());
  models.reserve(args.size());
  for (std::size_t i = 0; i < args.size(); ++i) models.push_back(load_checkpoint(args[i].ckpt, &infos[i]));
  std::vector<EvalStream> streams;
  for (std::size_t i = 0; i < args.size(); ++i) {
    ModalityConfig m = ModalityConfig::defaults(parse_modality(infos[i].modality), infos[i].flow_bound);
    m.snippet_len = infos[i].snippet_len;
    streams.push_back({args[i].name, &models[i], m, args[i].weight});
  }
  EvalOptions opts;
  opts.snippets = a.snippets;
  opts.ten_crop = !a.single_crop;
  const EvalResult result = evaluate(streams, data, opts);

  KeyValues header = run_header("eval", 0);
  header.set("data", a.data);
  header.set("split", a.split);
  header.set("snippets", std::to_string(a.snippets));
  header.set("crops", a.single_crop ? "1" : "10");
  for (const auto& s : args) {
    header.set("stream." + s.name + ".checkpoint", s.ckpt);
    header.set("stream." + s.name + ".weight", format_double(s.weight));
  }
  ScoreTable table = fused_table(result);
  KeyValues full = header;
  append(full, table.header);
  table.header = full;
  save_scores(a.out, table);
  if (!a.stream_dir.empty()) {
    fs::create_directories(a.stream_dir);
    for (std::size_t i = 0; i < args.size(); ++i) {
      ScoreTable st = stream_table(result, i);
      KeyValues h = header;
      append(h, st.header);
      st.header = h;
      save_scores(fs::path(a.stream_dir) / (args[i].name + ".tsv"), st);
    }
  }
  write_header(out, header);
  out << "videos " << result.videos.size() << " views_per_stream " << result.views_per_stream << " accuracy "
      << format_double(result.accuracy) << '\n';
  return 0;
}

struct FuseArgs {
  std::vector<std::string> scores;
  std::string weights, out;
};

int cmd_fuse(const FuseArgs& a, std::ostream& out) {
  const auto weights = parse_doubles(a.weights, "fusion weights");
  if (weights.size() != a.scores.size()) {
    throw UsageError("--weights lists " + std::to_string(weights.size()) + " values for " +
                     std::to_string(a.scores.size()) + " score files");
  }
  std::vector<ScoreTable> tables;
  for (const auto& p : a.scores) tables.push_back(read_scores(p));
  ScoreTable fused = fuse_tables(tables, weights);
  KeyValues header = run_header("fuse", 0);
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    header.set("input." + std::to_string(i), a.scores[i]);
    header.set("input." + std::to_string(i) + ".weight", format_double(weights[i]));
  }
  header.set("accuracy", format_double(fused.accuracy()));
  fused.header = header;
  if (!a.out.empty()) {
    save_scores(a.out, fused);
    write_header(out, header);
  } else {
    write_scores(out, fused);
  }
  out << "videos " << fused.rows.size() << " accuracy " << format_double(fused.accuracy()) << '\n';
  return 0;
}

struct GradArgs {
  std::string consensus = "all";
  int segments = 3, trials = 2;
  double tolerance = 1e-5;
  std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  std::vector<std::string> kinds;
  if (a.consensus == "all") {
    kinds = {"avg", "max", "weighted"};
  } else {
    kinds = {a.consensus};
  }
  KeyValues header = run_header("gradcheck", a.seed);
  header.set("segments", std::to_string(a.segments));
  header.set("trials", std::to_string(a.trials));
  header.set("tolerance", format_double(a.tolerance));
  header.set("fd_step", "1e-05");
  header.set("rel_error_floor", format_double(kRelErrorFloor));
  write_header(out, header);
  bool all_pass = true;
  for (const auto& name : kinds) {
    GradcheckOptions o;
    o.segments = a.segments;
    o.trials = a.trials;
    o.seed = a.seed;
    o.consensus = ConsensusKind::parse(name, a.segments);
    if (o.consensus.type == ConsensusType::WeightedAverage && a.segments > 1) {
      std::vector<double> w(static_cast<std::size_t>(a.segments));
      double total = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) total += (w[i] = static_cast<double>(i + 1));
      for (double& x : w) x /= total;
      o.consensus = ConsensusKind::weighted(w);
    }
    const GradcheckReport r = gradcheck(o);
    for (const auto& l : r.layers) {
      out << name << '\t' << l.name << '\t' << l.checked << '\t' << format_double(l.max_rel_error) << '\n';
    }
    const bool pass = r.passed(a.tolerance);
    if (r.skipped()) {
      out << name << " SKIPPED (tie point, " << r.trials_skipped << " trials)\n";
    } else {
      out << name << " max_rel_error " << format_double(r.max_rel_error) << " trials " << r.trials_run
          << " skipped " << r.trials_skipped << ' ' << (pass ? "PASS" : "FAIL") << '\n';
      all_pass = all_pass && pass;
    }
  }
  return all_pass ? 0 : 1;
}

struct VisArgs {
  std::string ckpt, out;
  int cls = 0, iters = 200, blur_every = 10;
  double step = 0.05, sigma = 0.5;
  std::uint64_t seed = 1;
};

int cmd_visualize(const VisArgs& a, std::ostream& out) {
  CheckpointInfo info;
  BackboneModel model = load_checkpoint(a.ckpt, &info);
  VisualizeOptions o;
  o.iterations = a.iters;
  o.blur_every = a.blur_every;
  o.step = a.step;
  o.blur_sigma = a.sigma;
  o.seed = a.seed;
  const VisualizeResult r = visualize_class(model, a.cls, o);
  write_tensor(a.out, r.image);
  KeyValues header = run_header("visualize", a.seed);
  header.set("checkpoint", a.ckpt);
  header.set("class", std::to_string(a.cls));
  header.set("modality", info.modality);
  append(header, o.to_kv(), "options.");
  header.set("score_initial", format_double(r.score_trace.front()));
  header.set("score_final", format_double(r.score_trace.back()));
  if (info.modality == "flow" || info.modality == "warpedflow") {
    const auto [u, v] = mean_flow(r.image, info.flow_bound);
    header.set("mean_flow_u", format_double(u));
    header.set("mean_flow_v", format_double(v));
    header.set("mean_flow_angle_deg", format_double(flow_angle_deg(u, v)));
  }
  std::ofstream meta(a.out + ".txt", std::ios::trunc);
  write_header(meta, header);
  if (!meta) throw Error("cannot write " + a.out + ".txt");
  write_header(out, header);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal segment networks at desk scale", "tsn"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", TSN_VERSION);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic staged-motion dataset");
  g->add_option("--spec", gen.spec, "Synthetic spec (key=value file)")->required()->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Output dataset directory")->required();
  g->add_option("--seed", gen.seed, "Generation seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one stream");
  t->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", tr.out, "Checkpoint directory")->required();
  t->add_option("--modality", tr.modality, "rgb, rgbdiff, flow or warpedflow")
      ->check(CLI::IsMember({"rgb", "rgbdiff", "flow", "warpedflow"}));
  t->add_option("--segments", tr.segments, "Number of segments K")->check(CLI::PositiveNumber);
  t->add_option("--consensus", tr.consensus, "avg, max or weighted")->check(CLI::IsMember({"avg", "max", "weighted"}));
  t->add_option("--consensus-weights", tr.weights, "Comma-separated fixed weights for weighted consensus");
  t->add_flag("--baseline", tr.baseline, "Snippet-level training without consensus (K=1)");
  t->add_option("--init-from", tr.init_from, "Checkpoint to start from")->check(CLI::ExistingDirectory);
  t->add_flag("--partial-bn", tr.partial_bn, "Freeze running stats of every BN layer but the first");
  t->add_option("--preset", tr.preset, "desk, full-spatial or full-temporal")
      ->check(CLI::IsMember({"desk", "full-spatial", "full-temporal"}));
  t->add_option("--snippet-len", tr.snippet_len, "Frames or fields per snippet");
  t->add_option("--batch", tr.batch, "Videos per batch");
  t->add_option("--iters", tr.iters, "Training iterations");
  t->add_option("--lr", tr.lr, "Initial learning rate");
  t->add_option("--lr-step", tr.lr_step, "Decay the learning rate every N steps");
  t->add_option("--lr-milestones", tr.milestones, "Comma-separated decay steps");
  t->add_option("--momentum", tr.momentum, "SGD momentum");
  t->add_option("--weight-decay", tr.weight_decay, "L2 weight decay");
  t->add_option("--dropout", tr.dropout, "Dropout drop probability");
  t->add_option("--input-size", tr.input_size, "Network input side (crop output)");
  t->add_option("--stages", tr.stages, "Backbone stages out:kernel:stride:pool,...");
  t->add_option("--log-every", tr.log_every, "Metrics interval")->check(CLI::PositiveNumber);
  t->add_option("--metrics", tr.metrics, "Metrics TSV path (default <out>/metrics.tsv)");
  t->add_option("--split", tr.split, "Split to train on");
  t->add_option("--seed", tr.seed, "Training seed");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate and fuse streams with the 25 x 10 view protocol");
  e->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--stream", ev.streams, "NAME=CKPT:WEIGHT (repeatable)")->required();
  e->add_option("--out", ev.out, "Fused score TSV")->required();
  e->add_option("--split", ev.split, "Split to evaluate");
  e->add_option("--snippets", ev.snippets, "Snippets per video")->check(CLI::PositiveNumber);
  e->add_flag("--single-crop", ev.single_crop, "Use one center crop instead of ten crops");
  e->add_option("--stream-scores", ev.stream_dir, "Directory for per-stream score TSVs");

  FuseArgs fu;
  auto* f = app.add_subcommand("fuse", "Weighted sum of per-stream score TSVs");
  f->add_option("--scores", fu.scores, "Score TSV files")->required()->expected(1, -1)->check(CLI::ExistingFile);
  f->add_option("--weights", fu.weights, "Comma-separated weights, one per file")->required();
  f->add_option("--out", fu.out, "Fused TSV (default: stdout)");

  GradArgs gr;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the TSN loss gradient");
  gc->add_option("--consensus", gr.consensus, "avg, max, weighted or all")
      ->check(CLI::IsMember({"avg", "max", "weighted", "all"}));
  gc->add_option("--segments", gr.segments, "Number of segments K")->check(CLI::PositiveNumber);
  gc->add_option("--trials", gr.trials, "Random trials")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", gr.tolerance, "Pass threshold on max relative error");
  gc->add_option("--seed", gr.seed, "Seed");

  VisArgs vi;
  auto* v = app.add_subcommand("visualize", "Class visualization by gradient ascent on the input");
  v->add_option("--ckpt", vi.ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  v->add_option("--class", vi.cls, "Target class")->required();
  v->add_option("--out", vi.out, "Output tensor file")->required();
  v->add_option("--iters", vi.iters, "Iterations");
  v->add_option("--step", vi.step, "Step size");
  v->add_option("--blur-every", vi.blur_every, "Blur interval");
  v->add_option("--sigma", vi.sigma, "Blur sigma");
  v->add_option("--seed", vi.seed, "Seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << TSN_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n\n";
    err << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 2;
  }

  try {
    if (*g) return cmd_gen(gen, out);
    if (*t) return cmd_train(tr, out);
    if (*e) return cmd_eval(ev, out);
    if (*f) return cmd_fuse(fu, out);
    if (*gc) return cmd_gradcheck(gr, out);
    if (*v) return cmd_visualize(vi, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace tsn::cli
