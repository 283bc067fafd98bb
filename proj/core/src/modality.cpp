#include "tsn/modality.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "tsn/error.hpp"

namespace tsn {

FlowField FlowField::zeros(std::size_t height, std::size_t width) {
  return {Tensor({height, width}, 0.0), Tensor({height, width}, 0.0)};
}

Tensor FlowField::packed() const {
  std::vector<double> values(u.data().begin(), u.data().end());
  values.insert(values.end(), v.data().begin(), v.data().end());
  return Tensor({2, height(), width()}, std::move(values));
}

FlowField FlowField::unpack(const Tensor& packed) {
  if (packed.rank() != 3 || packed.dim(0) != 2) {
    throw DimensionError("flow tensor must be (2, H, W), got " + shape_str(packed.shape()));
  }
  const std::size_t h = packed.dim(1), w = packed.dim(2), n = h * w;
  auto d = packed.data();
  return {Tensor({h, w}, std::vector<double>(d.begin(), d.begin() + static_cast<long>(n))),
          Tensor({h, w}, std::vector<double>(d.begin() + static_cast<long>(n), d.end()))};
}

Homography Homography::translation(double tx, double ty) { return {{1, 0, tx, 0, 1, ty, 0, 0, 1}}; }

Homography Homography::normalized(const std::array<double, 9>& raw) {
  if (std::abs(raw[8]) < 1e-12) throw DegenerateInputError("homography with vanishing (3,3) element");
  Homography h;
  for (std::size_t i = 0; i < 9; ++i) h.m[i] = raw[i] / raw[8];
  h.m[8] = 1.0;
  return h;
}

std::pair<double, double> Homography::apply(double x, double y) const {
  const double w = m[6] * x + m[7] * y + m[8];
  return {(m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w};
}

double Homography::determinant() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
  const double det = determinant();
  if (std::abs(det) <= 1e-9) throw DegenerateInputError("homography is not invertible");
  std::array<double, 9> inv = {
      m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8], m[1] * m[5] - m[2] * m[4],
      m[5] * m[6] - m[3] * m[8], m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
      m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7], m[0] * m[4] - m[1] * m[3]};
  return normalized(inv);
}

Homography Homography::operator*(const Homography& rhs) const {
  std::array<double, 9> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += m[static_cast<std::size_t>(r * 3 + k)] * rhs.m[static_cast<std::size_t>(k * 3 + c)];
      out[static_cast<std::size_t>(r * 3 + c)] = acc;
    }
  }
  return normalized(out);
}

Tensor rgb_diff_stack(std::span<const Tensor> frames) {
  if (frames.size() < 2) throw ConfigError("rgb difference needs at least two frames");
  const Shape& shape = frames.front().shape();
  if (shape.size() != 3) throw DimensionError("frames must be C x H x W, got " + shape_str(shape));
  for (const auto& f : frames) {
    if (f.shape() != shape) {
      throw DimensionError("rgb difference: frame size mismatch " + shape_str(shape) + " vs " +
                           shape_str(f.shape()));
    }
  }
  const std::size_t per = frames.front().numel();
  const std::size_t l = frames.size() - 1;
  std::vector<double> out(per * l);
  for (std::size_t t = 0; t < l; ++t) {
    auto a = frames[t].data();
    auto b = frames[t + 1].data();
    for (std::size_t i = 0; i < per; ++i) out[t * per + i] = b[i] - a[i];
  }
  return Tensor({shape[0] * l, shape[1], shape[2]}, std::move(out));
}

std::uint8_t discretize_value(double x, double bound) {
  if (!(bound > 0.0)) throw ConfigError("flow bound must be positive");
  const double c = std::clamp(x, -bound, bound);
  return static_cast<std::uint8_t>(std::lround((c + bound) * 255.0 / (2.0 * bound)));
}

double undiscretize_value(double byte, double bound) { return byte * (2.0 * bound) / 255.0 - bound; }

DiscreteFlow discretize_flow(const FlowField& flow, double bound) {
  if (!(bound > 0.0)) throw ConfigError("flow bound must be positive");
  DiscreteFlow out;
  out.height = flow.height();
  out.width = flow.width();
  out.u.resize(flow.u.numel());
  out.v.resize(flow.v.numel());
  auto u = flow.u.data();
  auto v = flow.v.data();
  for (std::size_t i = 0; i < out.u.size(); ++i) {
    out.u[i] = discretize_value(u[i], bound);
    out.v[i] = discretize_value(v[i], bound);
  }
  return out;
}

namespace {

struct Similarity {
  double cx, cy, s;
};

Similarity hartley(std::span<const PointPair> pairs, bool dst) {
  double cx = 0, cy = 0;
  for (const auto& p : pairs) {
    cx += dst ? p.qx : p.x;
    cy += dst ? p.qy : p.y;
  }
  cx /= static_cast<double>(pairs.size());
  cy /= static_cast<double>(pairs.size());
  double mean_dist = 0;
  for (const auto& p : pairs) {
    const double dx = (dst ? p.qx : p.x) - cx, dy = (dst ? p.qy : p.y) - cy;
    mean_dist += std::sqrt(dx * dx + dy * dy);
  }
  mean_dist /= static_cast<double>(pairs.size());
  if (mean_dist < 1e-12) throw DegenerateInputError("correspondences collapse to a point");
  return {cx, cy, std::sqrt(2.0) / mean_dist};
}

bool collinear(const PointPair& a, const PointPair& b, const PointPair& c) {
  const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  return std::abs(cross) < 1e-6;
}

double reprojection_error(const Homography& h, const PointPair& p) {
  const auto [x, y] = h.apply(p.x, p.y);
  return std::hypot(x - p.qx, y - p.qy);
}

}  // namespace

Homography fit_homography(std::span<const PointPair> pairs) {
  if (pairs.size() < 4) {
    throw DegenerateInputError("homography fit needs >= 4 correspondences, got " +
                               std::to_string(pairs.size()));
  }
  const Similarity ns = hartley(pairs, false);
  const Similarity nd = hartley(pairs, true);
  Eigen::MatrixXd a(2 * static_cast<long>(pairs.size()), 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double x = (pairs[i].x - ns.cx) * ns.s, y = (pairs[i].y - ns.cy) * ns.s;
    const double u = (pairs[i].qx - nd.cx) * nd.s, v = (pairs[i].qy - nd.cy) * nd.s;
    const long r = 2 * static_cast<long>(i);
    a.row(r) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(r + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d ts, td_inv;
  ts << ns.s, 0, -ns.s * ns.cx, 0, ns.s, -ns.s * ns.cy, 0, 0, 1;
  td_inv << 1.0 / nd.s, 0, nd.cx, 0, 1.0 / nd.s, nd.cy, 0, 0, 1;
  const Eigen::Matrix3d full = td_inv * hn * ts;
  std::array<double, 9> raw{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) raw[static_cast<std::size_t>(r * 3 + c)] = full(r, c);
  }
  Homography out = Homography::normalized(raw);
  if (std::abs(out.determinant()) <= 1e-9) throw DegenerateInputError("fitted homography is singular");
  return out;
}

HomographyEstimate estimate_homography(const FlowField& flow, Rng& rng, const RansacOptions& options) {
  const std::size_t h = flow.height(), w = flow.width();
  if (h < 32 || w < 32) {
    throw ConfigError("homography estimation needs flow of at least 32x32, got " + std::to_string(h) +
                      "x" + std::to_string(w));
  }
  if (options.grid < 2 || options.iterations < 1 || !(options.inlier_tol > 0.0)) {
    throw ConfigError("invalid RANSAC options");
  }
  auto u = flow.u.data();
  auto v = flow.v.data();
  std::vector<PointPair> pairs;
  const auto grid = static_cast<std::size_t>(options.grid);
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      const std::size_t row = (2 * gy + 1) * h / (2 * grid);
      const std::size_t col = (2 * gx + 1) * w / (2 * grid);
      const double du = u[row * w + col], dv = v[row * w + col];
      if (!std::isfinite(du) || !std::isfinite(dv)) continue;
      const double x = static_cast<double>(col), y = static_cast<double>(row);
      pairs.push_back({x, y, x + du, y + dv});
    }
  }
  if (pairs.size() < 4) {
    throw DegenerateInputError("only " + std::to_string(pairs.size()) + " usable correspondences");
  }

  auto count_inliers = [&](const Homography& model, std::vector<std::size_t>* idx) {
    std::size_t n = 0;
    if (idx) idx->clear();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (reprojection_error(model, pairs[i]) < options.inlier_tol) {
        ++n;
        if (idx) idx->push_back(i);
      }
    }
    return n;
  };

  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  bool found = false;
  Homography best;
  std::size_t best_count = 0;
  for (int it = 0; it < options.iterations; ++it) {
    std::array<std::size_t, 4> s{};
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        s[k] = pick(rng);
        fresh = std::find(s.begin(), s.begin() + static_cast<long>(k), s[k]) == s.begin() + static_cast<long>(k);
      }
    }
    const std::array<PointPair, 4> sample = {pairs[s[0]], pairs[s[1]], pairs[s[2]], pairs[s[3]]};
    bool degenerate = false;
    for (int a = 0; a < 4 && !degenerate; ++a) {
      for (int b = a + 1; b < 4 && !degenerate; ++b) {
        for (int c = b + 1; c < 4 && !degenerate; ++c) {
          degenerate = collinear(sample[static_cast<std::size_t>(a)], sample[static_cast<std::size_t>(b)],
                                 sample[static_cast<std::size_t>(c)]);
        }
      }
    }
    if (degenerate) continue;
    Homography model;
    try {
      model = fit_homography(sample);
    } catch (const DegenerateInputError&) {
      continue;
    }
    const std::size_t n = count_inliers(model, nullptr);
    if (!found || n > best_count) {
      found = true;
      best = model;
      best_count = n;
    }
  }
  if (!found || best_count < 4) throw DegenerateInputError("RANSAC found no consistent homography");

  std::vector<std::size_t> idx;
  count_inliers(best, &idx);
  std::vector<PointPair> inliers;
  for (std::size_t i : idx) inliers.push_back(pairs[i]);
  Homography refit = fit_homography(inliers);
  HomographyEstimate est;
  est.h = refit;
  est.inliers = count_inliers(refit, nullptr);
  est.total = pairs.size();
  return est;
}

FlowField flow_from_homography(const Homography& h, std::size_t height, std::size_t width) {
  FlowField f = FlowField::zeros(height, width);
  auto u = f.u.mutable_data();
  auto v = f.v.mutable_data();
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double x = static_cast<double>(c), y = static_cast<double>(r);
      const auto [px, py] = h.apply(x, y);
      u[r * width + c] = px - x;
      v[r * width + c] = py - y;
    }
  }
  return f;
}

FlowField warp_compensate(const FlowField& flow, const Homography& h) {
  if (std::abs(h.determinant()) <= 1e-9) throw DegenerateInputError("homography is not invertible");
  const std::size_t height = flow.height(), width = flow.width();
  FlowField out = FlowField::zeros(height, width);
  auto u = flow.u.data();
  auto v = flow.v.data();
  auto ru = out.u.mutable_data();
  auto rv = out.v.mutable_data();
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t i = r * width + c;
      const double x = static_cast<double>(c), y = static_cast<double>(r);
      const auto [px, py] = h.apply(x, y);
      ru[i] = (x + u[i]) - px;
      rv[i] = (y + v[i]) - py;
    }
  }
  return out;
}

Tensor flow_stack(std::span<const FlowField> flows, std::span<const Homography> homographies,
                  double bound) {
  if (flows.empty()) throw ConfigError("flow stack needs at least one field");
  if (!homographies.empty() && homographies.size() != flows.size()) {
    throw ConfigError("warped flow stack needs one homography per field");
  }
  const std::size_t h = flows.front().height(), w = flows.front().width(), plane = h * w;
  std::vector<double> out(2 * flows.size() * plane);
  for (std::size_t t = 0; t < flows.size(); ++t) {
    if (flows[t].height() != h || flows[t].width() != w) {
      throw DimensionError("flow stack: field " + std::to_string(t) + " has size " +
                           shape_str(flows[t].u.shape()) + ", expected " + shape_str(flows.front().u.shape()));
    }
    const DiscreteFlow d =
        homographies.empty() ? discretize_flow(flows[t], bound)
                             : discretize_flow(warp_compensate(flows[t], homographies[t]), bound);
    std::copy(d.u.begin(), d.u.end(), out.begin() + static_cast<long>(2 * t * plane));
    std::copy(d.v.begin(), d.v.end(), out.begin() + static_cast<long>((2 * t + 1) * plane));
  }
  return Tensor({2 * flows.size(), h, w}, std::move(out));
}

}  // namespace tsn
