#include <doctest.h>

#include <map>
#include <set>

#include "helpers.hpp"
#include "tsn/error.hpp"
#include "tsn/sampling.hpp"

using namespace tsn;
using tsn::test::max_abs_diff;

namespace {

// Image whose value encodes (channel, row, col) so crops can be located.
Tensor grid_image(std::size_t channels = 1) {
  Tensor t({channels, 256, 340});
  auto d = t.mutable_data();
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < 256; ++i)
      for (std::size_t j = 0; j < 340; ++j) d[(c * 256 + i) * 340 + j] = static_cast<double>(c * 1000000 + i * 1000 + j);
  return t;
}

}  // namespace

TEST_SUITE("segments") {
  TEST_CASE("equal partitions") {
    const SegmentPlan p = partition_segments(300, 3);
    CHECK(p.ranges == std::vector<std::pair<int, int>>{{0, 100}, {100, 200}, {200, 300}});
    const SegmentPlan q = partition_segments(7, 3);
    CHECK(q.ranges == std::vector<std::pair<int, int>>{{0, 2}, {2, 4}, {4, 7}});
    CHECK(partition_segments(30).num_segments == 3);
    CHECK(kDefaultSegments == 3);
  }

  TEST_CASE("fewer frames than segments is an error") {
    CHECK_THROWS_AS(partition_segments(2, 3), ConfigError);
    CHECK_THROWS_AS(partition_segments(5, 0), ConfigError);
  }

  TEST_CASE("exhaustive sweep: ranges tile [0, T) with lengths within 1") {
    bool ok = true;
    for (int t = 1; t <= 1000 && ok; ++t) {
      for (int k = 1; k <= t && ok; ++k) {
        const SegmentPlan p = partition_segments(t, k);
        int expect_begin = 0, lo = t, hi = 0;
        for (const auto& [b, e] : p.ranges) {
          ok = ok && b == expect_begin && e > b;
          expect_begin = e;
          lo = std::min(lo, e - b);
          hi = std::max(hi, e - b);
        }
        ok = ok && expect_begin == t && hi - lo <= 1 && static_cast<int>(p.ranges.size()) == k;
      }
    }
    CHECK(ok);
  }
}

TEST_SUITE("sample_train") {
  TEST_CASE("L=1 draws are uniform over each segment") {
    const SegmentPlan p = partition_segments(30, 3);
    Rng rng(1);
    std::vector<std::map<int, int>> counts(3);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
      const auto s = sample_train(p, 1, rng);
      for (int k = 0; k < 3; ++k) {
        CHECK_MESSAGE((s[k] >= p.ranges[k].first && s[k] < p.ranges[k].second), "index outside its segment");
        ++counts[k][s[k]];
      }
    }
    for (int k = 0; k < 3; ++k) {
      REQUIRE(counts[k].size() == 10);
      double chi2 = 0.0;
      for (const auto& [idx, c] : counts[k]) {
        const double expected = draws / 10.0;
        CHECK(std::abs(c - expected) / expected < 0.02);
        chi2 += (c - expected) * (c - expected) / expected;
      }
      CHECK(chi2 < 27.88);  // chi-square, 9 dof, p = 0.001
    }
  }

  TEST_CASE("valid starts leave room for the snippet") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      const SegmentPlan p = partition_segments(23, 3);
      for (int s : sample_train(p, 5, rng)) CHECK(s + 5 <= 23);
    }
  }

  TEST_CASE("a final segment of exactly L has a single start") {
    const SegmentPlan p = partition_segments(15, 3);  // segments of length 5
    CHECK(valid_start_range(p, 0, 5) == std::pair{0, 4});
    CHECK(valid_start_range(p, 1, 5) == std::pair{5, 9});
    CHECK(valid_start_range(p, 2, 5) == std::pair{10, 10});
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const auto s = sample_train(p, 5, rng);
      CHECK(s[0] <= 4);
      CHECK((s[1] >= 5 && s[1] <= 9));
      CHECK(s[2] == 10);
    }
  }

  TEST_CASE("no valid start names the segment") {
    const SegmentPlan p = partition_segments(9, 3);
    Rng rng(4);
    try {
      sample_train(p, 8, rng);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("segment 1") != std::string::npos);
    }
  }

  TEST_CASE("seeded sequences are reproducible") {
    const SegmentPlan p = partition_segments(100, 3);
    Rng a(7), b(7);
    for (int i = 0; i < 50; ++i) CHECK(sample_train(p, 5, a) == sample_train(p, 5, b));
  }
}

TEST_SUITE("sample_test") {
  TEST_CASE("examples") {
    std::vector<int> all(25);
    for (int i = 0; i < 25; ++i) all[i] = i;
    CHECK(sample_test(25, 1, 25) == all);
    const auto s = sample_test(100, 1);
    REQUIRE(s.size() == 25);
    for (int i = 0; i < 25; ++i) CHECK(s[i] == 2 + 4 * i);
    CHECK(kTestSnippets == 25);
    CHECK_THROWS_AS(sample_test(4, 5), ConfigError);
  }

  TEST_CASE("matches the centered-stride formula, monotone and repeatable") {
    for (int t = 1; t <= 120; ++t) {
      for (int len : {1, 5}) {
        if (t < len) continue;
        const auto s = sample_test(t, len);
        CHECK(s == sample_test(t, len));
        for (int i = 0; i < 25; ++i) {
          CHECK(s[i] == static_cast<int>(std::floor((i + 0.5) * (t - len + 1) / 25.0)));
          if (i) CHECK(s[i] >= s[i - 1]);
          CHECK(s[i] + len <= t);
        }
      }
    }
  }
}

TEST_SUITE("augmentation") {
  TEST_CASE("224 crop offsets") {
    CHECK(crop_offset(256, 340, 224, 224, CropPosition::TopLeft) == std::pair{0, 0});
    CHECK(crop_offset(256, 340, 224, 224, CropPosition::TopRight) == std::pair{0, 116});
    CHECK(crop_offset(256, 340, 224, 224, CropPosition::BottomLeft) == std::pair{32, 0});
    CHECK(crop_offset(256, 340, 224, 224, CropPosition::BottomRight) == std::pair{32, 116});
    CHECK(crop_offset(256, 340, 224, 224, CropPosition::Center) == std::pair{16, 58});
  }

  TEST_CASE("256 crop collapses rows: three distinct windows") {
    std::set<std::pair<int, int>> windows;
    for (auto pos : kCropPositions) windows.insert(crop_offset(256, 340, 256, 256, pos));
    CHECK(windows == std::set<std::pair<int, int>>{{0, 0}, {0, 84}, {0, 42}});
  }

  TEST_CASE("every side/position pair yields an in-bounds window and a 224 output") {
    const Tensor img = grid_image();
    for (int ch : kCropSides) {
      for (int cw : kCropSides) {
        for (auto pos : kCropPositions) {
          const auto [y, x] = crop_offset(256, 340, ch, cw, pos);
          CHECK((y >= 0 && x >= 0 && y + ch <= 256 && x + cw <= 340));
          const Tensor out = apply_crop(img, CropSpec{ch, cw, pos, false}, StackKind::Appearance);
          CHECK(out.shape() == Shape{1, 224, 224});
        }
      }
    }
  }

  TEST_CASE("an unscaled 224 crop copies the window exactly") {
    const Tensor img = grid_image();
    const Tensor out = apply_crop(img, CropSpec{224, 224, CropPosition::BottomRight, false}, StackKind::Appearance);
    CHECK(out.data()[0] == 32 * 1000 + 116);
    CHECK(out.data()[224 * 224 - 1] == 255 * 1000 + 339);
  }

  TEST_CASE("random draws use only the listed sides and positions") {
    Rng rng(5);
    std::set<int> sides;
    std::set<int> positions;
    int flips = 0;
    for (int i = 0; i < 4000; ++i) {
      const CropSpec c = draw_crop(rng);
      sides.insert(c.crop_h);
      sides.insert(c.crop_w);
      positions.insert(static_cast<int>(c.position));
      flips += c.flip ? 1 : 0;
    }
    CHECK(sides == std::set<int>{168, 192, 224, 256});
    CHECK(positions.size() == 5);
    CHECK(std::abs(flips / 4000.0 - 0.5) < 0.05);
  }

  TEST_CASE("flip is an involution, including flow-channel negation") {
    Rng rng(6);
    Tensor flow = Tensor::uniform({4, 256, 340}, rng, -0.5, 0.5);
    const Tensor once = hflip(flow, StackKind::Flow);
    const Tensor twice = hflip(once, StackKind::Flow);
    CHECK(max_abs_diff(twice.data(), flow.data()) == 0.0);
    // u channels negate, v channels do not.
    CHECK(once.data()[0] == -flow.data()[339]);
    CHECK(once.data()[256 * 340] == flow.data()[256 * 340 + 339]);
    for (int ch : kCropSides) {
      for (auto pos : kCropPositions) {
        const Tensor a = apply_crop(flow, CropSpec{ch, ch, pos, true}, StackKind::Flow);
        const Tensor b = hflip(apply_crop(flow, CropSpec{ch, ch, pos, false}, StackKind::Flow), StackKind::Flow);
        CHECK(max_abs_diff(hflip(a, StackKind::Flow).data(), hflip(b, StackKind::Flow).data()) < 1e-12);
      }
    }
  }

  TEST_CASE("wrong input size is rejected") {
    Rng rng(7);
    CHECK_THROWS_AS(augment_train(Tensor({3, 240, 320}), rng, StackKind::Appearance), DimensionError);
    CHECK_THROWS_AS(tencrop(Tensor({3, 256, 320}), StackKind::Appearance), DimensionError);
  }

  TEST_CASE("output side is configurable") {
    Rng rng(8);
    CHECK(augment_train(grid_image(2), rng, StackKind::Flow, 32).shape() == Shape{2, 32, 32});
  }
}

TEST_SUITE("tencrop") {
  TEST_CASE("ten views; the sixth mirrors the first") {
    const Tensor img = grid_image(2);
    const auto views = tencrop(img, StackKind::Appearance);
    REQUIRE(views.size() == 10);
    for (const auto& v : views) CHECK(v.shape() == Shape{2, 224, 224});
    CHECK(max_abs_diff(views[5].data(), hflip(views[0], StackKind::Appearance).data()) == 0.0);
    for (int i = 0; i < 5; ++i) {
      CHECK(max_abs_diff(views[5 + i].data(), hflip(views[i], StackKind::Appearance).data()) == 0.0);
    }
  }

  TEST_CASE("order: four corners then center") {
    const auto views = tencrop(grid_image(), StackKind::Appearance);
    CHECK(views[0].data()[0] == 0);
    CHECK(views[1].data()[0] == 116);
    CHECK(views[2].data()[0] == 32000);
    CHECK(views[3].data()[0] == 32116);
    CHECK(views[4].data()[0] == 16058);
  }

  TEST_CASE("horizontally symmetric image: crops 1..5 equal crops 6..10") {
    Rng rng(9);
    Tensor img({3, 256, 340});
    auto d = img.mutable_data();
    std::normal_distribution<double> n;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 256; ++i)
        for (std::size_t j = 0; j < 170; ++j) d[(c * 256 + i) * 340 + j] = d[(c * 256 + i) * 340 + 339 - j] = n(rng);
    const auto views = tencrop(img, StackKind::Appearance);
    // Mirroring swaps the left and right corners: TL <-> TR and BL <-> BR.
    CHECK(max_abs_diff(views[0].data(), views[6].data()) == 0.0);
    CHECK(max_abs_diff(views[1].data(), views[5].data()) == 0.0);
    CHECK(max_abs_diff(views[2].data(), views[8].data()) == 0.0);
    CHECK(max_abs_diff(views[3].data(), views[7].data()) == 0.0);
    CHECK(max_abs_diff(views[4].data(), views[9].data()) == 0.0);
  }
}
