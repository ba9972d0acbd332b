#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "mlmf/follower.hpp"
#include "mlmf/scenarios.hpp"

using namespace mlmf;

namespace {

FollowerCost quadratic_cost(const Mat& M, const Vec& g, const Mat& C) {
  FollowerCost cost;
  cost.value = [M, g, C](const Vec& y, const Vec& x) {
    return 0.5 * y.dot(M * y) - g.dot(y) + (C * x).dot(y);
  };
  cost.grad_y = [M, g, C](const Vec& y, const Vec& x) -> Vec { return M * y - g + C * x; };
  cost.hess_yy = [M](const Vec&, const Vec&) -> Mat { return M; };
  cost.cross_jac = [C](int, const Vec&, const Vec&) -> Mat { return C.transpose(); };
  return cost;
}

/// min y^2 s.t. y >= 1; barrier theta*y^2 - log(y - 1).
FollowerCost square_cost() {
  FollowerCost cost;
  cost.value = [](const Vec& y, const Vec&) { return y[0] * y[0]; };
  cost.grad_y = [](const Vec& y, const Vec&) { return Vec::Constant(1, 2.0 * y[0]); };
  cost.hess_yy = [](const Vec&, const Vec&) { return Mat::Constant(1, 1, 2.0); };
  cost.cross_jac = [](int, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  return cost;
}

FollowerConstraintSet ge_one_constraint() {
  InequalityOracle h;
  h.value = [](const Vec& y, const Vec&) { return 1.0 - y[0]; };
  h.grad_y = [](const Vec&, const Vec&) { return Vec::Constant(1, -1.0); };
  h.hess_yy = [](const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  GeneralConstraints g;
  g.A = Mat(0, 1);
  g.b = Vec(0);
  g.inequalities.push_back(h);
  return g;
}

double barrier_root(double theta) { return 0.5 * (1.0 + std::sqrt(1.0 + 2.0 / theta)); }

}  // namespace

TEST_CASE("one GD step is exact for the matched quadratic") {
  // s = (y - x)^2 / 2, alpha = 2/(mu + l) = 1.
  const auto cost = quadratic_cost(Mat::Identity(1, 1), Vec::Zero(1), -Mat::Identity(1, 1));
  const Vec x = Vec::Constant(1, 3.7);
  const Vec y1 = inner_gd(cost, x, Vec::Zero(1), 1, 1.0);
  CHECK(y1[0] == doctest::Approx(3.7));
}

TEST_CASE("the scalar recursion y <- 0.2 y + 0.8 x and its contraction bound") {
  // s = y^2 - 2xy: grad = 2y - 2x, mu = l = 2, Gamma = 1.
  FollowerCost cost;
  cost.value = [](const Vec& y, const Vec& x) { return y[0] * y[0] - 2.0 * x[0] * y[0]; };
  cost.grad_y = [](const Vec& y, const Vec& x) {
    return Vec::Constant(1, 2.0 * y[0] - 2.0 * x[0]);
  };
  cost.hess_yy = [](const Vec&, const Vec&) { return Mat::Constant(1, 1, 2.0); };
  cost.cross_jac = [](int, const Vec&, const Vec&) { return Mat::Constant(1, 1, -2.0); };
  const Vec x = Vec::Constant(1, 1.5);
  Vec y = Vec::Zero(1);
  for (int t = 0; t < 10; ++t) {
    const Vec y_next = inner_gd(cost, x, y, 1, 0.4);
    CHECK(y_next[0] == doctest::Approx(0.2 * y[0] + 0.8 * x[0]));
    y = y_next;
  }
  // (1 - 2 alpha Gamma)^T on the squared error = 0.2^10 = (0.2^5)^2.
  CHECK(std::abs(y[0] - x[0]) <= std::pow(0.2, 5) * std::abs(x[0]) + 1e-15);
}

TEST_CASE("per-iterate contraction holds for random strongly convex quadratics") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 1 + static_cast<int>(rng() % 5);
    Mat G(p, p);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) G(r, c) = gauss(rng);
    const Mat M = G * G.transpose() + Mat::Identity(p, p);
    Eigen::SelfAdjointEigenSolver<Mat> eig(M);
    const double mu = eig.eigenvalues().minCoeff();
    const double ell = eig.eigenvalues().maxCoeff();
    const double alpha = 2.0 / (mu + ell);
    const double gamma_br = mu * ell / (mu + ell);
    const double rate = 1.0 - 2.0 * alpha * gamma_br;

    Vec g(p), x(1);
    for (int t = 0; t < p; ++t) g[t] = gauss(rng);
    x[0] = gauss(rng);
    const auto cost = quadratic_cost(M, g, Mat::Zero(p, 1));
    const Vec y_star = M.llt().solve(g);
    Vec y(p);
    for (int t = 0; t < p; ++t) y[t] = 2.0 * gauss(rng);
    double err_sq = (y - y_star).squaredNorm();
    for (int t = 1; t <= 60; ++t) {
      y = inner_gd(cost, x, y, 1, alpha);
      const double e = (y - y_star).squaredNorm();
      // The bound is tight for eigen-aligned errors; rounding noise in the
      // iterates (~1e-16 absolute) shows up as ~1e-9 relative once the
      // distance reaches 1e-7, hence the slack.
      CHECK(e <= rate * err_sq * (1.0 + 1e-6) + 1e-24);
      err_sq = e;
    }
  }
}

TEST_CASE("non-finite gradients are reported with the iterate index") {
  FollowerCost cost;
  cost.value = [](const Vec&, const Vec&) { return 0.0; };
  cost.grad_y = [](const Vec&, const Vec&) {
    return Vec::Constant(1, std::numeric_limits<double>::quiet_NaN());
  };
  cost.hess_yy = [](const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  cost.cross_jac = [](int, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  CHECK_THROWS_WITH_AS(inner_gd(cost, Vec::Zero(1), Vec::Zero(1), 5, 0.1),
                       doctest::Contains("iterate 1"), Error);
}

TEST_CASE("best response of an LQ follower matches the closed form") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int p = 3, q = 2;
  Mat G(p, p), C(p, q);
  Vec g(p), x(q);
  for (int r = 0; r < p; ++r) {
    g[r] = gauss(rng);
    for (int c = 0; c < p; ++c) G(r, c) = gauss(rng);
    for (int c = 0; c < q; ++c) C(r, c) = gauss(rng);
  }
  for (int c = 0; c < q; ++c) x[c] = gauss(rng);
  const Mat M = G * G.transpose() + Mat::Identity(p, p);
  const auto cost = quadratic_cost(M, g, C);
  const Vec want = M.llt().solve(g - C * x);
  const Vec got = best_response_exact(cost, x, Vec::Zero(p));
  CHECK((got - want).norm() <= 1e-9 * (1.0 + want.norm()));
  CHECK(cost.grad_y(got, x).norm() <= 1e-9 * (1.0 + got.norm()));
}

TEST_CASE("zero data gives the zero best response") {
  const auto cost = quadratic_cost(Mat::Identity(2, 2), Vec::Zero(2), Mat::Zero(2, 1));
  const Vec got = best_response_exact(cost, Vec::Zero(1), Vec::Ones(2));
  CHECK(got.norm() <= 1e-12);
}

TEST_CASE("barrier inner solve matches the 1-D analytic stationary point") {
  const auto cost = square_cost();
  const auto set = ge_one_constraint();
  for (double theta : {1.0, 10.0, 100.0}) {
    const Vec y = barrier_inner_solve(cost, set, Vec(), theta, Vec::Constant(1, 2.0)).y;
    CHECK(y[0] == doctest::Approx(barrier_root(theta)).epsilon(1e-9));
  }
}

TEST_CASE("rectangle barrier solution approaches the clamp as theta grows") {
  FollowerCost cost;
  cost.value = [](const Vec& y, const Vec&) { return 0.5 * (y[0] - 2.0) * (y[0] - 2.0); };
  cost.grad_y = [](const Vec& y, const Vec&) { return Vec::Constant(1, y[0] - 2.0); };
  cost.hess_yy = [](const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  cost.cross_jac = [](int, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  const FollowerConstraintSet set = Rectangle{Vec::Zero(1), Vec::Ones(1)};
  const Vec y = barrier_inner_solve(cost, set, Vec(), 1e6, Vec::Constant(1, 0.5)).y;
  CHECK(std::abs(y[0] - 1.0) <= 2e-6);  // clamp(2, [0,1]) = 1 up to O(1/theta)
  CHECK(y[0] < 1.0);                    // strictly feasible
}

TEST_CASE("equality-only constraint projects zero onto the affine line") {
  FollowerCost cost;
  cost.value = [](const Vec& y, const Vec&) { return 0.5 * y.squaredNorm(); };
  cost.grad_y = [](const Vec& y, const Vec&) -> Vec { return y; };
  cost.hess_yy = [](const Vec&, const Vec&) -> Mat { return Mat::Identity(2, 2); };
  cost.cross_jac = [](int, const Vec&, const Vec&) { return Mat::Zero(1, 2); };
  GeneralConstraints g;
  g.A = Mat::Ones(1, 2);
  g.b = Vec::Constant(1, 2.0);
  const FollowerConstraintSet set = g;
  Vec start(2);
  start << 1.8, 0.2;
  for (double theta : {1.0, 7.0, 1e4}) {
    const Vec y = barrier_inner_solve(cost, set, Vec(), theta, start).y;
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("infeasible start points are rejected") {
  const auto cost = square_cost();
  const auto set = ge_one_constraint();
  CHECK_THROWS_AS(barrier_inner_solve(cost, set, Vec(), 1.0, Vec::Constant(1, 0.5)), Error);
}

TEST_CASE("sumt runs exactly four inner solves on the spec trace") {
  // s~ = 1, eps = 1e-3, theta0 = 1, chi = 10: solves at 1, 10, 100, 1000.
  BarrierParams params;
  params.theta0 = 1.0;
  params.chi = 10.0;
  params.eps = 1e-3;
  const auto res = sumt(square_cost(), ge_one_constraint(), Vec(), params,
                        Vec::Constant(1, 2.0));
  CHECK(res.inner_solves == 4);
  CHECK(res.theta_final == doctest::Approx(1000.0));
  CHECK(res.y[0] == doctest::Approx(barrier_root(1000.0)).epsilon(1e-9));
  // Gap at exit obeys the s~/theta bound: here |y - 1| <= 1e-3 suffices.
  CHECK(std::abs(res.y[0] - 1.0) <= 1e-3);
}

TEST_CASE("sumt rejects unconstrained followers") {
  BarrierParams params;
  CHECK_THROWS_AS(sumt(square_cost(), Unconstrained{}, Vec(), params, Vec::Zero(1)), Error);
}

TEST_CASE("barrier gap obeys the sqrt(2 s~ / (mu theta)) bound and decreases") {
  // min y^2 on y >= 1: y* = 1, mu = 2, s~ = 1.
  const auto cost = square_cost();
  const auto set = ge_one_constraint();
  double prev_gap = std::numeric_limits<double>::infinity();
  for (double theta : {10.0, 100.0, 1000.0, 1e6}) {
    const Vec y = barrier_best_response(cost, set, Vec(), theta, Vec::Constant(1, 2.0));
    const double gap = std::abs(y[0] - 1.0);
    CHECK(gap <= std::sqrt(2.0 * 1.0 / (2.0 * theta)));
    CHECK(gap <= prev_gap + 1e-15);
    prev_gap = gap;
  }
}

TEST_CASE("interior points are strictly feasible") {
  const FollowerConstraintSet rect = Rectangle{Vec::Zero(2), Vec::Ones(2)};
  CHECK(strictly_feasible(rect, interior_point(rect, 2, Vec()), Vec()));
  const auto gen = ge_one_constraint();
  CHECK(strictly_feasible(gen, interior_point(gen, 1, Vec()), Vec()));
}

TEST_CASE("every barrier iterate stays strictly feasible from a boundary-hugging start") {
  const auto cost = square_cost();
  const auto set = ge_one_constraint();
  const Vec y = barrier_inner_solve(cost, set, Vec(), 50.0, Vec::Constant(1, 1.0 + 1e-9)).y;
  CHECK(y[0] > 1.0);
  CHECK(y[0] == doctest::Approx(barrier_root(50.0)).epsilon(1e-8));
}
