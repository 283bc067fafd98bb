#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "helpers.hpp"
#include "tsn/error.hpp"
#include "tsn/evaluate.hpp"
#include "tsn/gradcheck.hpp"
#include "tsn/optim.hpp"
#include "tsn/train.hpp"
#include "tsn/visualize.hpp"

using namespace tsn;
using tsn::test::max_abs_diff;

namespace {

// Uniform gray video whose brightness encodes the class; flow is zero.
class FlatVideo final : public VideoSource {
 public:
  FlatVideo(std::string id, int label, int frames, double value)
      : id_(std::move(id)), label_(label), frames_(frames), value_(value) {}
  const std::string& id() const override { return id_; }
  int label() const override { return label_; }
  int num_frames() const override { return frames_; }
  Tensor frame(int t) const override {
    Tensor f({3, 256, 340}, value_);
    // A faint per-frame ramp keeps frames distinct.
    f.mutable_data()[0] += t;
    return f;
  }
  FlowField flow(int) const override { return FlowField::zeros(256, 340); }

 private:
  std::string id_;
  int label_;
  int frames_;
  double value_;
};

Dataset flat_dataset(int per_class, int frames = 9, int classes = 2) {
  Dataset ds;
  ds.num_classes = classes;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const double value = c == 0 ? 40.0 + 3 * i : 200.0 - 3 * i;
      ds.videos.push_back(
          std::make_shared<FlatVideo>("v" + std::to_string(c) + "_" + std::to_string(i), c, frames, value));
    }
  }
  return ds;
}

TrainConfig tiny_config() {
  TrainConfig c = TrainConfig::preset("desk");
  c.backbone.input_size = 16;
  c.backbone.stages = {{4, 3, 1, true}, {6, 3, 1, false}};
  c.batch_size = 4;
  c.max_iters = 50;
  c.log_every = 10;
  c.dropout = 0.0;
  return c;
}

bool same_state(const BackboneModel& a, const BackboneModel& b) {
  const auto x = a.state(), y = b.state();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& p = x[i].tensor;
    const auto& q = y[i].tensor;
    if (p.numel() != q.numel() || std::memcmp(p.data().data(), q.data().data(), p.numel() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("optimizer") {
  TEST_CASE("momentum 0 is plain gradient descent") {
    std::vector<double> p = {1.0, -2.0}, v = {0.0, 0.0};
    const std::vector<double> g = {0.5, 1.0};
    sgd_momentum_step(p, g, v, 0.1, 0.0);
    CHECK(p[0] == doctest::Approx(0.95));
    CHECK(p[1] == doctest::Approx(-2.1));
  }

  TEST_CASE("two steps of a constant gradient move -lr*g*(2+m)") {
    for (double m : {0.0, 0.5, 0.9}) {
      std::vector<double> p = {3.0}, v = {0.0};
      const std::vector<double> g = {2.0};
      sgd_momentum_step(p, g, v, 0.01, m);
      sgd_momentum_step(p, g, v, 0.01, m);
      CHECK(p[0] - 3.0 == doctest::Approx(-0.01 * 2.0 * (2.0 + m)).epsilon(1e-12));
    }
  }

  TEST_CASE("minimizes x^2 from 1 to below 1e-6 within 200 steps") {
    std::vector<double> x = {1.0}, v = {0.0};
    int steps = 0;
    while (std::abs(x[0]) >= 1e-6 && steps < 200) {
      const std::vector<double> g = {2.0 * x[0]};
      sgd_momentum_step(x, g, v, 0.1, 0.9);
      ++steps;
    }
    CHECK(std::abs(x[0]) < 1e-6);
    CHECK(steps <= 200);
  }

  TEST_CASE("size mismatch and weight decay") {
    std::vector<double> p = {1.0}, v = {0.0, 0.0};
    const std::vector<double> g = {1.0};
    CHECK_THROWS_AS(sgd_momentum_step(p, g, v, 0.1, 0.9), DimensionError);
    std::vector<double> q = {2.0}, w = {0.0};
    const std::vector<double> zero = {0.0};
    sgd_momentum_step(q, zero, w, 0.1, 0.0, 0.5);
    CHECK(q[0] == doctest::Approx(1.9));
  }

  TEST_CASE("schedules") {
    const TrainConfig spatial = TrainConfig::preset("full-spatial");
    CHECK(lr_at(0, spatial.schedule) == 0.001);
    CHECK(lr_at(1999, spatial.schedule) == 0.001);
    CHECK(lr_at(2000, spatial.schedule) == doctest::Approx(0.0001));
    CHECK(spatial.max_iters == 4500);
    CHECK(spatial.batch_size == 256);
    const TrainConfig temporal = TrainConfig::preset("full-temporal");
    CHECK(lr_at(0, temporal.schedule) == 0.005);
    CHECK(lr_at(11999, temporal.schedule) == 0.005);
    CHECK(lr_at(12000, temporal.schedule) == doctest::Approx(0.0005));
    CHECK(lr_at(17999, temporal.schedule) == doctest::Approx(0.0005));
    CHECK(lr_at(18000, temporal.schedule) == doctest::Approx(0.00005));
    CHECK(temporal.max_iters == 20000);
    CHECK(temporal.modality.modality == Modality::Flow);
    CHECK(lr_at(5, LrSchedule{0.3, 10, {}, 0.1}) == 0.3);
    CHECK_THROWS_AS(TrainConfig::preset("huge"), ConfigError);
    CHECK_THROWS_AS((LrSchedule{-1.0, 0, {}, 0.1}.validate()), ConfigError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("seeded 50-step runs are bit-identical") {
    const Dataset ds = flat_dataset(4);
    const TrainConfig c = tiny_config();
    const TrainResult a = train(c, ds), b = train(c, ds);
    CHECK(a.losses == b.losses);
    CHECK(same_state(a.model, b.model));
    TrainConfig other = c;
    other.seed = 2;
    CHECK(train(other, ds).losses != a.losses);
  }

  TEST_CASE("K=1 averaging matches the snippet-level baseline step for step") {
    const Dataset ds = flat_dataset(4);
    TrainConfig k1 = tiny_config();
    k1.segments = 1;
    TrainConfig base = k1;
    base.baseline = true;
    const TrainResult a = train(k1, ds), b = train(base, ds);
    REQUIRE(a.losses.size() == 50);
    CHECK(a.losses == b.losses);
    CHECK(same_state(a.model, b.model));
  }

  TEST_CASE("loss on separable two-class data falls below ln 2") {
    const Dataset ds = flat_dataset(4);
    TrainConfig c = tiny_config();
    c.max_iters = 200;
    c.log_every = 25;
    const TrainResult r = train(c, ds);
    CHECK(r.log.back().loss < std::log(2.0));
    CHECK(r.log.back().step == 200);
    CHECK(r.log.size() == 8);
  }

  TEST_CASE("init-from with cross-modality init keeps partial-BN stats frozen") {
    const Dataset ds = flat_dataset(3);
    TrainConfig rgb = tiny_config();
    rgb.max_iters = 5;
    const TrainResult pre = train(rgb, ds);
    const auto dir = tsn::test::temp_dir("init_from");
    save_checkpoint(dir / "rgb", pre.model, pre.info);

    TrainConfig flow = tiny_config();
    flow.modality = ModalityConfig::defaults(Modality::Flow);
    flow.modality.snippet_len = 2;
    flow.init_from = (dir / "rgb").string();
    flow.partial_bn = true;
    flow.max_iters = 20;
    const TrainResult r = train(flow, ds);
    const BackboneModel start = cross_modality_init(load_checkpoint(dir / "rgb"), 4);
    CHECK(r.model.spec().input_channels == 4);
    for (std::size_t s = 1; s < start.stages().size(); ++s) {
      CHECK(max_abs_diff(start.stages()[s].running_mean.data(), r.model.stages()[s].running_mean.data()) == 0.0);
      CHECK(max_abs_diff(start.stages()[s].running_var.data(), r.model.stages()[s].running_var.data()) == 0.0);
    }
    CHECK(max_abs_diff(start.stages()[0].running_var.data(), r.model.stages()[0].running_var.data()) > 0.0);
  }

  TEST_CASE("inconsistent inputs fail before the first step") {
    const Dataset ds = flat_dataset(2, 2);
    TrainConfig c = tiny_config();
    CHECK_THROWS_AS(train(c, ds), ConfigError);  // 2 frames cannot host 3 segments
    CHECK_THROWS_AS(train(c, Dataset{}), ConfigError);
    TrainConfig bad = tiny_config();
    bad.momentum = 1.0;
    CHECK_THROWS_AS(train(bad, flat_dataset(2)), ConfigError);
    TrainConfig base = tiny_config();
    base.baseline = true;
    CHECK_THROWS_AS(train(base, flat_dataset(2)), ConfigError);
  }

  TEST_CASE("metrics log format") {
    std::ostringstream out;
    KeyValues header;
    header.set("seed", "1");
    write_metrics(out, {{10, 0.01, 0.5, 0.75}, {20, 0.001, 0.25, 1.0}}, header);
    CHECK(out.str() == "# seed=1\n# step\tlr\tloss\ttrain_acc\n10\t0.01\t0.5\t0.75\n20\t0.001\t0.25\t1\n");
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("100-frame video: 25 snippets and 250 views") {
    const FlatVideo v("x", 0, 100, 10.0);
    const ModalityConfig rgb = ModalityConfig::defaults(Modality::Rgb);
    CHECK(test_views(v, rgb, 16).size() == 250);
    CHECK(test_views(v, rgb, 16, EvalOptions{25, false}).size() == 25);
    // Snippet i starts at frame 2 + 4i; the ramp value in pixel 0 reveals it.
    const auto views = test_views(v, rgb, 224, EvalOptions{25, false});
    for (int i = 0; i < 25; ++i) {
      const Tensor raw = snippet_stack(v, 2 + 4 * i, rgb);
      CHECK(max_abs_diff(views[static_cast<std::size_t>(i)].data(), tencrop(raw, StackKind::Appearance)[4].data()) == 0.0);
    }
  }

  TEST_CASE("constant model scores the frequency of its class") {
    BackboneSpec s;
    s.input_channels = 3;
    s.input_size = 16;
    s.stages = {};
    s.num_classes = 3;
    Rng rng(1);
    BackboneModel m = BackboneModel::build(s, rng);
    for (double& w : m.head_weight().mutable_data()) w = 0.0;
    m.head_bias().mutable_data()[1] = 1.0;
    const Dataset ds = flat_dataset(3, 9, 3);
    const EvalResult r = evaluate({{"spatial", &m, ModalityConfig::defaults(Modality::Rgb), 1.0}}, ds);
    CHECK(r.accuracy == doctest::Approx(1.0 / 3.0));
    CHECK(r.views_per_stream == 250);
    for (const auto& v : r.videos) CHECK(v.prediction == 1);
  }

  TEST_CASE("fusion weights") {
    const std::vector<std::vector<double>> two = {{1, 2}, {3, -1}};
    const std::vector<double> w2 = {1.0, 1.5};
    CHECK(fuse_scores(two, w2) == std::vector<double>{5.5, 0.5});
    const std::vector<std::vector<double>> three = {{1, 0}, {0, 1}, {2, 2}};
    const std::vector<double> w3 = {1.0, 1.0, 0.5};
    CHECK(fuse_scores(three, w3) == std::vector<double>{2, 2});
    CHECK(argmax(fuse_scores(three, w3)) == 0);
    const auto ts = FusionSpec::two_stream().weights;
    CHECK(ts == std::vector<std::pair<std::string, double>>{{"spatial", 1.0}, {"flow", 1.5}});
    const auto th = FusionSpec::three_stream().weights;
    CHECK(th == std::vector<std::pair<std::string, double>>{{"spatial", 1.0}, {"flow", 1.0}, {"warped", 0.5}});
    CHECK_THROWS_AS((FusionSpec{{{"a", -1.0}, {"b", 1.0}}}.validate()), ConfigError);
    CHECK_THROWS_AS((FusionSpec{{{"a", 0.0}}}.validate()), ConfigError);
  }

  TEST_CASE("scaling all weights keeps every prediction") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::vector<double>> s(3, std::vector<double>(5));
      for (auto& row : s)
        for (double& x : row) x = std::normal_distribution<double>()(rng);
      const std::vector<double> w = {1.0, 1.5, 0.5};
      const int p = argmax(fuse_scores(s, w));
      for (double lambda : {0.01, 2.0, 1000.0}) {
        std::vector<double> scaled = w;
        for (double& x : scaled) x *= lambda;
        CHECK(argmax(fuse_scores(s, scaled)) == p);
      }
    }
  }

  TEST_CASE("deterministic and independent of dataset order") {
    BackboneSpec s;
    s.input_channels = 3;
    s.input_size = 16;
    s.stages = {{4, 3, 1, true}};
    s.num_classes = 2;
    Rng rng(3);
    BackboneModel m = BackboneModel::build(s, rng);
    Dataset ds = flat_dataset(3);
    const std::vector<EvalStream> streams = {{"spatial", &m, ModalityConfig::defaults(Modality::Rgb), 1.0}};
    const EvalResult a = evaluate(streams, ds);
    std::reverse(ds.videos.begin(), ds.videos.end());
    const EvalResult b = evaluate(streams, ds);
    REQUIRE(a.videos.size() == b.videos.size());
    for (std::size_t i = 0; i < a.videos.size(); ++i) {
      CHECK(a.videos[i].id == b.videos[i].id);
      CHECK(a.videos[i].fused == b.videos[i].fused);
    }
    CHECK(a.accuracy == b.accuracy);
  }

  TEST_CASE("streams must agree on the class count and channels") {
    BackboneSpec s;
    s.input_channels = 3;
    s.input_size = 16;
    s.stages = {};
    s.num_classes = 2;
    Rng rng(4);
    BackboneModel two = BackboneModel::build(s, rng);
    s.num_classes = 3;
    BackboneModel three = BackboneModel::build(s, rng);
    const auto rgb = ModalityConfig::defaults(Modality::Rgb);
    const Dataset ds = flat_dataset(1);
    CHECK_THROWS_AS(evaluate({{"a", &two, rgb, 1.0}, {"b", &three, rgb, 1.5}}, ds), ConfigError);
    CHECK_THROWS(evaluate({{"f", &two, ModalityConfig::defaults(Modality::Flow), 1.0}}, ds));
  }

  TEST_CASE("score tables: round trip, parse errors and fusion by id") {
    ScoreTable spatial, flow;
    spatial.header.set("stream", "spatial");
    spatial.rows = {{"a", 0, {1.0, 0.0}}, {"b", 1, {0.25, 0.5}}, {"c", 1, {2.0, -1.0}}};
    flow.rows = {{"c", 1, {0.0, 2.0}}, {"a", 0, {0.0, 1.0}}, {"b", 1, {1.0, 0.0}}};
    std::stringstream buf;
    write_scores(buf, spatial);
    const ScoreTable back = parse_scores(buf);
    CHECK(back.header.get("stream") == "spatial");
    REQUIRE(back.rows.size() == 3);
    CHECK(back.rows[1].scores == spatial.rows[1].scores);
    const std::vector<double> w = {1.0, 1.5};
    const ScoreTable fused = fuse_tables({spatial, flow}, w);
    REQUIRE(fused.rows.size() == 3);
    CHECK(fused.rows[0].id == "a");
    CHECK(fused.rows[0].scores == std::vector<double>{1.0, 1.5});
    CHECK(fused.rows[1].scores == std::vector<double>{1.75, 0.5});
    CHECK(fused.rows[2].scores == std::vector<double>{2.0, 2.0});
    CHECK(fused.accuracy() == 0.0);  // the tie in "c" resolves to class 0
    CHECK(spatial.accuracy() == doctest::Approx(2.0 / 3.0));
    std::istringstream bad("# x=1\na\t0\t1\t2\nb\tq\t1\t2\n");
    try {
      parse_scores(bad);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    ScoreTable missing = flow;
    missing.rows.pop_back();
    CHECK_THROWS_AS(fuse_tables({spatial, missing}, w), ConfigError);
  }
}

TEST_SUITE("gradcheck harness") {
  TEST_CASE("average consensus, K=3") {
    GradcheckOptions o;
    const GradcheckReport r = gradcheck(o);
    CHECK(r.passed(1e-5));
    CHECK(r.layers.size() == 8);
  }

  TEST_CASE("max at a tie is skipped") {
    GradcheckOptions o;
    o.consensus = ConsensusKind::max();
    o.identical_snippets = true;
    const GradcheckReport r = gradcheck(o);
    CHECK(r.skipped());
    CHECK_FALSE(r.passed(1e-5));
  }

  TEST_CASE("K=1 equals the plain cross-entropy check") {
    GradcheckOptions k1;
    k1.segments = 1;
    GradcheckOptions base = k1;
    base.baseline = true;
    const GradcheckReport a = gradcheck(k1), b = gradcheck(base);
    CHECK(a.max_rel_error == b.max_rel_error);
    REQUIRE(a.layers.size() == b.layers.size());
    for (std::size_t i = 0; i < a.layers.size(); ++i) CHECK(a.layers[i].max_rel_error == b.layers[i].max_rel_error);
  }

  TEST_CASE("relative error floor") {
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(1e-12, -1e-12) == doctest::Approx(2e-6));
    CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  }
}

TEST_SUITE("visualization") {
  TEST_CASE("class score never decreases on a linear probe") {
    BackboneSpec s;
    s.input_channels = 3;
    s.input_size = 16;
    s.stages = {};
    s.num_classes = 4;
    Rng rng(5);
    BackboneModel m = BackboneModel::build(s, rng);
    const VisualizeResult r = visualize_class(m, 2, VisualizeOptions{60, 0.05, 10, 0.5, 0.05, 0.5, 3});
    REQUIRE(r.score_trace.size() == 61);
    for (std::size_t i = 1; i < r.score_trace.size(); ++i) CHECK(r.score_trace[i] >= r.score_trace[i - 1] - 1e-12);
    CHECK(r.score_trace.back() > r.score_trace.front());
    for (double x : r.image.data()) CHECK(std::abs(x) <= 0.5);
  }

  TEST_CASE("output shape follows the model input for RGB and flow models") {
    Rng rng(6);
    for (int channels : {3, 10}) {
      BackboneSpec s;
      s.input_channels = channels;
      s.input_size = 16;
      s.stages = {{4, 3, 1, true}};
      s.num_classes = 2;
      BackboneModel m = BackboneModel::build(s, rng);
      const VisualizeResult r = visualize_class(m, 0, VisualizeOptions{5});
      CHECK(r.image.shape() == Shape{static_cast<std::size_t>(channels), 16, 16});
    }
  }

  TEST_CASE("blur preserves channel sums and constants") {
    Rng rng(7);
    const Tensor img = Tensor::randn({2, 9, 7}, rng);
    const Tensor b = gaussian_blur(img, 0.8);
    for (std::size_t c = 0; c < 2; ++c) {
      double s0 = 0.0, s1 = 0.0;
      for (std::size_t i = 0; i < 63; ++i) {
        s0 += img.data()[c * 63 + i];
        s1 += b.data()[c * 63 + i];
      }
      CHECK(s1 == doctest::Approx(s0).epsilon(1e-12));
    }
    const Tensor flat = gaussian_blur(Tensor({1, 5, 5}, 0.3), 1.0);
    for (double x : flat.data()) CHECK(x == doctest::Approx(0.3));
  }

  TEST_CASE("mean flow and its angle") {
    // u channel +0.1 and v channel -0.05 on a bound of 20: u = 4 px, v = -2 px.
    Tensor f({4, 3, 3});
    auto d = f.mutable_data();
    for (std::size_t i = 0; i < 9; ++i) {
      d[i] = d[18 + i] = 0.1;
      d[9 + i] = d[27 + i] = -0.05;
    }
    const auto [u, v] = mean_flow(f, 20.0);
    CHECK(u == doctest::Approx(4.0));
    CHECK(v == doctest::Approx(-2.0));
    CHECK(flow_angle_deg(0, -1) == doctest::Approx(90.0));
    CHECK(flow_angle_deg(1, 0) == doctest::Approx(0.0));
    CHECK(std::abs(flow_angle_deg(0, 1)) == doctest::Approx(90.0));
  }
}
