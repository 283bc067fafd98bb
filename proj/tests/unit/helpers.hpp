#pragma once

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tsn/gradcheck.hpp"
#include "tsn/tensor.hpp"

namespace tsn::test {

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::path(TSN_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Max relative error between analytic gradients of each input and central
/// differences of the scalar `loss` (recomputed without grad recording).
inline double check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double step = 1e-5,
                              double floor = kRelErrorFloor) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  loss().backward();
  double worst = 0.0;
  for (auto& x : inputs) {
    const std::vector<double> analytic = x.grad_values();
    const std::vector<double> numeric = numeric_gradient([&] { return loss().item(); }, x, step);
    for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
  }
  return worst;
}

}  // namespace tsn::test
