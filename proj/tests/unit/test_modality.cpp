#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tsn/error.hpp"
#include "tsn/modality.hpp"

using namespace tsn;
using tsn::test::max_abs_diff;

namespace {

Homography random_homography(Rng& rng, double cx, double cy) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double s = 1.0 + 0.02 * u(rng), r = 0.02 * u(rng);
  const Homography around = Homography::normalized({s * std::cos(r), -s * std::sin(r), 0, s * std::sin(r),
                                                    s * std::cos(r), 0, 1e-5 * u(rng), 1e-5 * u(rng), 1});
  return Homography::translation(cx + 3 * u(rng), cy + 3 * u(rng)) * around * Homography::translation(-cx, -cy);
}

double grid_reprojection(const Homography& a, const Homography& b, int h, int w) {
  double worst = 0.0;
  for (int y = 0; y < h; y += 4) {
    for (int x = 0; x < w; x += 4) {
      const auto [ax, ay] = a.apply(x, y);
      const auto [bx, by] = b.apply(x, y);
      worst = std::max(worst, std::hypot(ax - bx, ay - by));
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("rgb difference") {
  TEST_CASE("consecutive differences, signed") {
    Tensor a({3, 2, 2}, 10.0), b({3, 2, 2}, 4.0), c({3, 2, 2}, 9.0);
    const Tensor frames[] = {a, b, c};
    const Tensor d = rgb_diff_stack(frames);
    REQUIRE(d.shape() == Shape{6, 2, 2});
    for (std::size_t i = 0; i < 12; ++i) CHECK(d.data()[i] == -6.0);
    for (std::size_t i = 12; i < 24; ++i) CHECK(d.data()[i] == 5.0);
  }

  TEST_CASE("needs two same-shaped frames") {
    const Tensor one[] = {Tensor({3, 2, 2})};
    CHECK_THROWS(rgb_diff_stack(one));
    const Tensor mixed[] = {Tensor({3, 2, 2}), Tensor({3, 2, 3})};
    CHECK_THROWS_AS(rgb_diff_stack(mixed), DimensionError);
  }
}

TEST_SUITE("flow discretization") {
  TEST_CASE("anchor values") {
    CHECK(discretize_value(0.0) == 128);
    CHECK(discretize_value(-20.0) == 0);
    CHECK(discretize_value(20.0) == 255);
    CHECK(discretize_value(-1e9) == 0);
    CHECK(discretize_value(1e9) == 255);
  }

  TEST_CASE("round trip within one quantization step, monotone") {
    for (double b : {20.0, 5.0}) {
      double worst = 0.0;
      int previous = -1;
      for (int i = 0; i <= 10000; ++i) {
        const double x = -b + 2.0 * b * i / 10000.0;
        const std::uint8_t q = discretize_value(x, b);
        CHECK(static_cast<int>(q) >= previous);
        previous = q;
        worst = std::max(worst, std::abs(undiscretize_value(q, b) - x));
      }
      CHECK(worst <= b / 255.0);
    }
  }

  TEST_CASE("field discretization keeps layout") {
    FlowField f = FlowField::zeros(2, 3);
    f.u.mutable_data()[4] = 20.0;
    f.v.mutable_data()[1] = -20.0;
    const DiscreteFlow d = discretize_flow(f);
    CHECK(d.height == 2);
    CHECK(d.width == 3);
    CHECK(d.u[4] == 255);
    CHECK(d.u[0] == 128);
    CHECK(d.v[1] == 0);
  }

  TEST_CASE("packed round trip") {
    Rng rng(1);
    FlowField f{Tensor::randn({4, 5}, rng), Tensor::randn({4, 5}, rng)};
    const FlowField g = FlowField::unpack(f.packed());
    CHECK(max_abs_diff(f.u.data(), g.u.data()) == 0.0);
    CHECK(max_abs_diff(f.v.data(), g.v.data()) == 0.0);
  }
}

TEST_SUITE("homography") {
  TEST_CASE("translation and composition") {
    const Homography t = Homography::translation(3, -2);
    const auto [x, y] = t.apply(1, 1);
    CHECK(x == doctest::Approx(4));
    CHECK(y == doctest::Approx(-1));
    const Homography i = t * t.inverse();
    CHECK(grid_reprojection(i, Homography::identity(), 16, 16) < 1e-12);
  }

  TEST_CASE("flow of a translation is constant") {
    const FlowField f = flow_from_homography(Homography::translation(2, 0), 8, 8);
    for (double v : f.u.data()) CHECK(v == doctest::Approx(2.0));
    for (double v : f.v.data()) CHECK(v == doctest::Approx(0.0));
  }

  TEST_CASE("zero flow estimates the identity") {
    Rng rng(2);
    const auto est = estimate_homography(FlowField::zeros(64, 80), rng);
    CHECK(grid_reprojection(est.h, Homography::identity(), 64, 80) < 1e-9);
    CHECK(est.inlier_ratio() == 1.0);
  }

  TEST_CASE("fit is exact on clean correspondences") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const Homography h = random_homography(rng, 40, 32);
      std::vector<PointPair> pairs;
      for (int y = 0; y < 64; y += 8) {
        for (int x = 0; x < 80; x += 8) {
          const auto [qx, qy] = h.apply(x, y);
          pairs.push_back({double(x), double(y), qx, qy});
        }
      }
      CHECK(grid_reprojection(fit_homography(pairs), h, 64, 80) < 1e-6);
    }
  }

  TEST_CASE("RANSAC recovers a known H with 30% outliers") {
    Rng rng(4);
    const int height = 128, width = 160;
    for (int trial = 0; trial < 10; ++trial) {
      const Homography h = random_homography(rng, width / 2.0, height / 2.0);
      FlowField f = flow_from_homography(h, height, width);
      std::uniform_real_distribution<double> junk(-15.0, 15.0);
      std::bernoulli_distribution corrupt(0.3);
      auto u = f.u.mutable_data();
      auto v = f.v.mutable_data();
      for (std::size_t i = 0; i < u.size(); ++i) {
        if (corrupt(rng)) {
          u[i] += junk(rng);
          v[i] += junk(rng);
        }
      }
      Rng ransac(100 + trial);
      const auto est = estimate_homography(f, ransac);
      CHECK(grid_reprojection(est.h, h, height, width) < 0.1);
      CHECK(est.inlier_ratio() > 0.6);
    }
  }

  TEST_CASE("estimation is equivariant to the flow's homography") {
    const Homography h = Homography::translation(1.5, -0.5);
    Rng r1(6);
    const auto est = estimate_homography(flow_from_homography(h, 64, 64), r1);
    CHECK(grid_reprojection(est.h, h, 64, 64) < 1e-6);
  }

  TEST_CASE("degenerate normalization throws") {
    CHECK_THROWS_AS(Homography::normalized({1, 0, 0, 0, 1, 0, 0, 0, 0}), DegenerateInputError);
  }
}

TEST_SUITE("warp compensation") {
  TEST_CASE("pure camera motion leaves zero residual") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      const Homography h = random_homography(rng, 20, 16);
      const FlowField r = warp_compensate(flow_from_homography(h, 32, 40), h);
      double worst = 0.0;
      for (std::size_t i = 0; i < r.u.numel(); ++i) worst = std::max({worst, std::abs(r.u.data()[i]), std::abs(r.v.data()[i])});
      CHECK(worst < 1e-6);
    }
  }

  TEST_CASE("camera translation (2,0) with an actor patch moving (-1,3)") {
    const Homography cam = Homography::translation(2, 0);
    FlowField f = flow_from_homography(cam, 10, 10);
    for (int y = 4; y < 7; ++y) {
      for (int x = 4; x < 7; ++x) {
        f.u.mutable_data()[y * 10 + x] = -1;
        f.v.mutable_data()[y * 10 + x] = 3;
      }
    }
    const FlowField r = warp_compensate(f, cam);
    for (int y = 0; y < 10; ++y) {
      for (int x = 0; x < 10; ++x) {
        const bool actor = y >= 4 && y < 7 && x >= 4 && x < 7;
        const double u = r.u.data()[y * 10 + x], v = r.v.data()[y * 10 + x];
        if (actor) {
          CHECK(std::abs(u + 3) < 1e-6);
          CHECK(std::abs(v - 3) < 1e-6);
        } else {
          CHECK(std::hypot(u, v) < 1e-6);
        }
      }
    }
  }

  TEST_CASE("exactly induced flow cancels") {
    Rng rng(9);
    const Homography h = random_homography(rng, 20, 16);
    const FlowField r = warp_compensate(flow_from_homography(h, 32, 40), h);
    double worst = 0.0;
    for (std::size_t i = 0; i < r.u.numel(); ++i) worst = std::max(worst, std::hypot(r.u.data()[i], r.v.data()[i]));
    CHECK(worst < 1e-9);
  }

  TEST_CASE("identity leaves the flow unchanged") {
    Rng rng(8);
    FlowField f{Tensor::randn({6, 7}, rng), Tensor::randn({6, 7}, rng)};
    const FlowField r = warp_compensate(f, Homography::identity());
    CHECK(max_abs_diff(r.u.data(), f.u.data()) < 1e-12);
    CHECK(max_abs_diff(r.v.data(), f.v.data()) < 1e-12);
  }
}

TEST_SUITE("flow stacks") {
  TEST_CASE("interleaved channels u1, v1, u2, v2") {
    FlowField a = FlowField::zeros(2, 2), b = FlowField::zeros(2, 2);
    a.u = Tensor({2, 2}, 20.0);
    b.v = Tensor({2, 2}, -20.0);
    const FlowField flows[] = {a, b};
    const Tensor s = flow_stack(flows);
    REQUIRE(s.shape() == Shape{4, 2, 2});
    CHECK(s.data()[0] == 255);
    CHECK(s.data()[4] == 128);
    CHECK(s.data()[8] == 128);
    CHECK(s.data()[12] == 0);
  }

  TEST_CASE("compensated stack of camera-only flow is all 128") {
    const Homography cam = Homography::translation(3, 1);
    const FlowField f = flow_from_homography(cam, 5, 6);
    const FlowField flows[] = {f, f};
    const Homography hs[] = {cam, cam};
    const Tensor stack = flow_stack(flows, hs);
    for (double v : stack.data()) CHECK(v == 128);
  }

  TEST_CASE("warped stack equals discretizing independently compensated residuals") {
    Rng rng(10);
    std::vector<FlowField> flows;
    std::vector<Homography> hs;
    for (int t = 0; t < 3; ++t) {
      hs.push_back(random_homography(rng, 10, 8));
      FlowField f = flow_from_homography(hs.back(), 16, 20);
      f.u.mutable_data()[37] += 4.0;
      flows.push_back(f);
    }
    const Tensor s = flow_stack(flows, hs);
    for (int t = 0; t < 3; ++t) {
      const DiscreteFlow d = discretize_flow(warp_compensate(flows[t], hs[t]));
      for (std::size_t i = 0; i < 16 * 20; ++i) {
        CHECK(s.data()[(2 * t) * 320 + i] == d.u[i]);
        CHECK(s.data()[(2 * t + 1) * 320 + i] == d.v[i]);
      }
    }
  }

  TEST_CASE("homography count must match") {
    const FlowField flows[] = {FlowField::zeros(2, 2), FlowField::zeros(2, 2)};
    const Homography hs[] = {Homography::identity()};
    CHECK_THROWS(flow_stack(flows, hs));
  }
}
