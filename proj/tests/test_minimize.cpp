#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "loopscale/errors.hpp"
#include "loopscale/minimize.hpp"

using namespace loopscale;

namespace {

// (x - c)^T M (x - c) with diagonal M.
ObjectiveFn diagonal_quadratic(std::vector<double> c, std::vector<double> m) {
  return [c, m](std::span<const double> x, std::span<double> g) {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      f += m[i] * (x[i] - c[i]) * (x[i] - c[i]);
      g[i] = 2.0 * m[i] * (x[i] - c[i]);
    }
    return f;
  };
}

Box cube(std::size_t n, double lo, double hi) {
  return {std::vector<double>(n, lo), std::vector<double>(n, hi)};
}

}  // namespace

TEST_CASE("interior minimum of an ill-conditioned quadratic") {
  const std::vector<double> c{0.3, -1.2, 2.0, 0.0};
  const auto fn = diagonal_quadratic(c, {1.0, 100.0, 0.01, 1e4});
  const MinimizeResult res = minimize_bounded(fn, cube(4, -5, 5), {4, 4, -4, 3});
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(res.x[i] - c[i]) < 1e-8);
  CHECK(res.f < 1e-14);
}

TEST_CASE("non-diagonal quadratic") {
  // M = [[2, 1], [1, 3]], minimum at (1, -1).
  const ObjectiveFn fn = [](std::span<const double> x, std::span<double> g) {
    const double u = x[0] - 1.0, v = x[1] + 1.0;
    g[0] = 4 * u + 2 * v;
    g[1] = 2 * u + 6 * v;
    return 2 * u * u + 2 * u * v + 3 * v * v;
  };
  const MinimizeResult res = minimize_bounded(fn, cube(2, -10, 10), {7, 7});
  CHECK(std::abs(res.x[0] - 1.0) < 1e-8);
  CHECK(std::abs(res.x[1] + 1.0) < 1e-8);
}

TEST_CASE("minimum outside the box lands on the clamped point") {
  const std::vector<double> c{3.0, -7.0, 0.5};
  const auto fn = diagonal_quadratic(c, {1.0, 4.0, 9.0});
  const Box box = cube(3, -2, 2);
  const MinimizeResult res = minimize_bounded(fn, box, {0, 0, 0});
  CHECK(res.x[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(res.x[1] == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(std::abs(res.x[2] - 0.5) < 1e-8);
  CHECK(box.contains(res.x));
  CHECK(res.projected_gradient < 1e-8);
}

TEST_CASE("monotone objective runs to the upper bound") {
  const ObjectiveFn fn = [](std::span<const double> x, std::span<double> g) {
    g[0] = -1.0;
    g[1] = 2.0 * x[1];
    return -x[0] + x[1] * x[1];
  };
  const MinimizeResult res = minimize_bounded(fn, cube(2, -1, 3), {-1, 2});
  CHECK(res.x[0] == 3.0);
  CHECK(std::abs(res.x[1]) < 1e-8);
}

TEST_CASE("Rosenbrock in a box") {
  const ObjectiveFn fn = [](std::span<const double> x, std::span<double> g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2 * a - 400 * x[0] * b;
    g[1] = 200 * b;
    return a * a + 100 * b * b;
  };
  const MinimizeResult res = minimize_bounded(fn, cube(2, -2, 2), {-1.2, 1.0});
  CHECK(std::abs(res.x[0] - 1.0) < 1e-6);
  CHECK(std::abs(res.x[1] - 1.0) < 1e-6);
}

TEST_CASE("never worse than the start") {
  const ObjectiveFn fn = [](std::span<const double> x, std::span<double> g) {
    g[0] = std::cos(x[0]) + 0.2 * x[0];
    return std::sin(x[0]) + 0.1 * x[0] * x[0];
  };
  for (double x0 : {-4.0, -1.0, 0.0, 2.5, 4.0}) {
    std::vector<double> g(1);
    const double f0 = fn(std::vector<double>{x0}, g);
    const MinimizeResult res = minimize_bounded(fn, cube(1, -4, 4), {x0});
    CHECK(res.f <= f0);
  }
}

TEST_CASE("iteration cap is reported") {
  const auto fn = diagonal_quadratic({0.3, 0.7}, {1.0, 1e6});
  MinimizeOptions opts;
  opts.max_iter = 1;
  const MinimizeResult res = minimize_bounded(fn, cube(2, -5, 5), {4, -4}, opts);
  CHECK(res.status == StopReason::max_iter);
  CHECK(res.iterations == 1);
}

TEST_CASE("start point errors") {
  const auto fn = diagonal_quadratic({0.0}, {1.0});
  CHECK_THROWS_AS(minimize_bounded(fn, cube(1, -1, 1), {2.0}), UsageError);
  const ObjectiveFn nan_fn = [](std::span<const double>, std::span<double> g) {
    g[0] = 0.0;
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(minimize_bounded(nan_fn, cube(1, -1, 1), {0.0}), NumericError);
}

TEST_CASE("projected gradient ignores outward components at bounds") {
  const Box box = cube(2, 0, 1);
  const std::vector<double> x{0.0, 1.0};
  CHECK(projected_gradient_norm(x, std::vector<double>{1.0, -1.0}, box) == 0.0);
  CHECK(projected_gradient_norm(x, std::vector<double>{-1.0, 0.5}, box) == 1.0);
  CHECK(box.project(std::vector<double>{-3.0, 0.25})[0] == 0.0);
}
