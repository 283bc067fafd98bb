#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "cli.hpp"
#include "helpers.hpp"
#include "tsn/evaluate.hpp"
#include "tsn/tensor_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome tsn_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = tsn::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Byte comparison of two directory trees.
bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
  }
  return files > 0;
}

const char* kSpec =
    "class.0=up:3,down:3\n"
    "class.0.name=updown\n"
    "class.1=down:3,up:3\n"
    "class.1.name=downup\n"
    "class.2=right:3\n"
    "class.2.name=right\n"
    "frames=8\n"
    "actor_size=40\n"
    "train_per_class=2\n"
    "test_per_class=1\n";

// Generates a small dataset once per process.
const fs::path& dataset() {
  static const fs::path root = [] {
    const fs::path dir = tsn::test::temp_dir("cli_data");
    std::ofstream(dir / "spec.txt") << kSpec;
    const Outcome o = tsn_run({"gen-data", "--spec", (dir / "spec.txt").string(), "--out", (dir / "d").string(), "--seed", "3"});
    REQUIRE_MESSAGE(o.code == 0, o.err);
    return dir / "d";
  }();
  return root;
}

std::vector<std::string> train_args(const fs::path& out, const std::string& modality = "rgb") {
  return {"train", "--data", dataset().string(), "--out", out.string(), "--modality", modality, "--input-size", "16",
          "--stages", "4:3:1:1,6:3:1:0", "--batch", "2", "--iters", "4", "--log-every", "2", "--seed", "5",
          "--snippet-len", modality == "rgb" ? "1" : "2"};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2, help exits 0") {
    CHECK(tsn_run({}).code == 2);
    CHECK(tsn_run({"frobnicate"}).code == 2);
    CHECK(tsn_run({"--help"}).code == 0);
    const Outcome missing = tsn_run({"train", "--out", "x"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("--data") != std::string::npos);
    CHECK(tsn_run({"gradcheck", "--consensus", "median"}).code == 2);
    CHECK(tsn_run({"fuse", "--scores", (dataset() / "meta.txt").string(), "--weights", "1,2"}).code == 2);
    CHECK(tsn_run({"eval", "--data", dataset().string(), "--stream", "bad", "--out", "x.tsv"}).code == 2);
  }

  TEST_CASE("runtime errors exit 1") {
    const fs::path dir = tsn::test::temp_dir("cli_err");
    std::ofstream(dir / "bad.txt") << "class.0=up:3\nclass.1=down:3\n";
    const Outcome o = tsn_run({"gen-data", "--spec", (dir / "bad.txt").string(), "--out", (dir / "d").string()});
    CHECK(o.code == 1);
    CHECK(o.err.find("stage multiset") != std::string::npos);
  }

  TEST_CASE("installed binary reports exit codes") {
    const std::string bin = TSN_CLI_PATH;
    const auto status = [&](const std::string& args) {
      const int raw = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
      return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    CHECK(status("--help") == 0);
    CHECK(status("train") == 2);
    CHECK(status("gradcheck --consensus avg --trials 1") == 0);
  }

  TEST_CASE("gradcheck passes for every consensus") {
    const Outcome o = tsn_run({"gradcheck", "--consensus", "all", "--trials", "1"});
    CHECK(o.code == 0);
    CHECK(o.out.find("avg max_rel_error") != std::string::npos);
    CHECK(o.out.find("weighted max_rel_error") != std::string::npos);
    CHECK(o.out.find("FAIL") == std::string::npos);
  }

  TEST_CASE("gen-data is byte-deterministic") {
    const fs::path dir = tsn::test::temp_dir("cli_gen");
    std::ofstream(dir / "spec.txt") << kSpec;
    for (const char* name : {"a", "b"}) {
      REQUIRE(tsn_run({"gen-data", "--spec", (dir / "spec.txt").string(), "--out", (dir / name).string(), "--seed", "3"}).code == 0);
    }
    CHECK(same_tree(dir / "a", dir / "b"));
    CHECK(same_tree(dir / "a", dataset()));
    CHECK(slurp(dir / "a" / "generate.txt").find("# command=gen-data") != std::string::npos);
  }

  TEST_CASE("train, eval, fuse and visualize are byte-deterministic") {
    const fs::path dir = tsn::test::temp_dir("cli_pipeline");
    for (const char* name : {"rgb_a", "rgb_b"}) REQUIRE(tsn_run(train_args(dir / name)).code == 0);
    CHECK(same_tree(dir / "rgb_a", dir / "rgb_b"));
    const std::string metrics = slurp(dir / "rgb_a" / "metrics.tsv");
    CHECK(metrics.find("# step\tlr\tloss\ttrain_acc\n2\t") != std::string::npos);

    REQUIRE(tsn_run(train_args(dir / "flow", "flow")).code == 0);
    for (const char* name : {"a", "b"}) {
      const Outcome o = tsn_run({"eval", "--data", dataset().string(), "--stream", "spatial=" + (dir / "rgb_a").string() + ":1",
                                 "--stream", "flow=" + (dir / "flow").string() + ":1.5", "--snippets", "3", "--out",
                                 (dir / (std::string("eval_") + name + ".tsv")).string(), "--stream-scores",
                                 (dir / (std::string("streams_") + name)).string()});
      REQUIRE_MESSAGE(o.code == 0, o.err);
      CHECK(o.out.find("views_per_stream 30") != std::string::npos);
    }
    CHECK(slurp(dir / "eval_a.tsv") == slurp(dir / "eval_b.tsv"));
    CHECK(same_tree(dir / "streams_a", dir / "streams_b"));
    const std::string fused = slurp(dir / "eval_a.tsv");
    CHECK(fused.find("# stream.spatial.weight=1\n") != std::string::npos);
    CHECK(fused.find("# stream.flow.weight=1.5\n") != std::string::npos);

    // Re-fusing the per-stream dumps reproduces the fused scores.
    const Outcome f = tsn_run({"fuse", "--scores", (dir / "streams_a" / "spatial.tsv").string(),
                               (dir / "streams_a" / "flow.tsv").string(), "--weights", "1,1.5", "--out",
                               (dir / "refused.tsv").string()});
    REQUIRE_MESSAGE(f.code == 0, f.err);
    const tsn::ScoreTable direct = tsn::read_scores(dir / "eval_a.tsv");
    const tsn::ScoreTable refused = tsn::read_scores(dir / "refused.tsv");
    REQUIRE(direct.rows.size() == refused.rows.size());
    for (std::size_t i = 0; i < direct.rows.size(); ++i) {
      CHECK(direct.rows[i].id == refused.rows[i].id);
      for (std::size_t c = 0; c < direct.rows[i].scores.size(); ++c) {
        CHECK(refused.rows[i].scores[c] == doctest::Approx(direct.rows[i].scores[c]).epsilon(1e-12));
      }
    }

    for (const char* name : {"vis_a", "vis_b"}) {
      const Outcome o = tsn_run({"visualize", "--ckpt", (dir / "flow").string(), "--class", "1", "--iters", "5", "--out",
                                 (dir / (std::string(name) + ".tsnt")).string(), "--seed", "2"});
      REQUIRE_MESSAGE(o.code == 0, o.err);
    }
    CHECK(slurp(dir / "vis_a.tsnt") == slurp(dir / "vis_b.tsnt"));
    CHECK(slurp(dir / "vis_a.tsnt.txt") == slurp(dir / "vis_b.tsnt.txt"));
    CHECK(slurp(dir / "vis_a.tsnt.txt").find("mean_flow_angle_deg") != std::string::npos);
    CHECK(tsn::read_tensor(dir / "vis_a.tsnt").shape() == tsn::Shape{4, 16, 16});
  }
}
