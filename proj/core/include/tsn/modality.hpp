#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tsn/tensor.hpp"

namespace tsn {

/// Per-pixel displacement from frame t to t+1: u along columns (x), v along
/// rows (y), both H x W.
struct FlowField {
  Tensor u, v;

  static FlowField zeros(std::size_t height, std::size_t width);
  std::size_t height() const { return u.dim(0); }
  std::size_t width() const { return u.dim(1); }
  /// Packs into a (2, H, W) tensor for the tensor file format.
  Tensor packed() const;
  static FlowField unpack(const Tensor& packed);
};

/// 3x3 projective map on pixel coordinates (x = column, y = row), stored
/// row-major with element (2,2) normalized to 1.
struct Homography {
  std::array<double, 9> m = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return {}; }
  static Homography translation(double tx, double ty);
  /// Scales so that m[8] == 1; throws DegenerateInputError when m[8] ~ 0.
  static Homography normalized(const std::array<double, 9>& raw);

  std::pair<double, double> apply(double x, double y) const;
  double determinant() const;
  Homography inverse() const;
  Homography operator*(const Homography& rhs) const;
};

/// Channel block t holds frame(t+1) - frame(t) as signed floats.
Tensor rgb_diff_stack(std::span<const Tensor> frames);

inline constexpr double kFlowBound = 20.0;

struct DiscreteFlow {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> u, v;
};

/// round((clamp(x, -b, b) + b) * 255 / (2b)).
std::uint8_t discretize_value(double x, double bound = kFlowBound);
/// Inverse of the linear map, without the clamp.
double undiscretize_value(double byte, double bound = kFlowBound);
DiscreteFlow discretize_flow(const FlowField& flow, double bound = kFlowBound);

struct RansacOptions {
  int iterations = 200;
  double inlier_tol = 0.5;  // px
  int grid = 16;            // grid x grid correspondences
};

struct HomographyEstimate {
  Homography h;
  std::size_t inliers = 0;
  std::size_t total = 0;
  double inlier_ratio() const { return total ? static_cast<double>(inliers) / total : 0.0; }
};

struct PointPair {
  double x, y;    // source pixel
  double qx, qy;  // displaced pixel
};

/// Normalized direct linear transform over >= 4 correspondences.
Homography fit_homography(std::span<const PointPair> pairs);

/// RANSAC over grid correspondences p -> p + flow(p); the model with the most
/// inliers is refit to all of its inliers.
HomographyEstimate estimate_homography(const FlowField& flow, Rng& rng, const RansacOptions& options = {});

/// Displacement field a homography induces on an H x W pixel grid.
FlowField flow_from_homography(const Homography& h, std::size_t height, std::size_t width);

/// residual(p) = (p + flow(p)) - h(p).
FlowField warp_compensate(const FlowField& flow, const Homography& h);

/// Byte-valued (2L) x H x W stack, channels u1, v1, u2, v2, ... When
/// homographies are given (one per field) each field is compensated first.
Tensor flow_stack(std::span<const FlowField> flows, std::span<const Homography> homographies = {},
                  double bound = kFlowBound);

}  // namespace tsn
