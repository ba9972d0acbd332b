#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mlmf/game.hpp"
#include "mlmf/scenarios.hpp"

using namespace mlmf;

namespace {

Vec make_vec(std::initializer_list<double> vals) {
  Vec v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index t = 0;
  for (double x : vals) v[t++] = x;
  return v;
}

}  // namespace

TEST_CASE("projection onto a box clamps per coordinate") {
  const auto set = FeasibleSet::box(make_vec({0.0, 0.0}), make_vec({1.0, 1.0}));
  CHECK(project(set, make_vec({2.0, -1.0})).isApprox(make_vec({1.0, 0.0})));
}

TEST_CASE("projection is the identity inside the set") {
  const auto box = FeasibleSet::box(make_vec({-1.0, -1.0}), make_vec({1.0, 1.0}));
  const Vec v = make_vec({0.3, -0.7});
  CHECK(project(box, v).isApprox(v));
  const auto ball = FeasibleSet::ball(make_vec({0.0, 0.0}), 2.0);
  CHECK(project(ball, v).isApprox(v));
}

TEST_CASE("projection onto a ball rescales radially") {
  const auto set = FeasibleSet::ball(make_vec({0.0, 0.0}), 1.0);
  const Vec out = project(set, make_vec({3.0, 4.0}));
  CHECK(out.isApprox(make_vec({0.6, 0.8}), 1e-12));
  CHECK(out.norm() == doctest::Approx(1.0));
}

TEST_CASE("projection dimension mismatch throws") {
  const auto set = FeasibleSet::box(make_vec({0.0}), make_vec({1.0}));
  CHECK_THROWS_AS(project(set, make_vec({0.0, 1.0})), Error);
}

TEST_CASE("projection is idempotent and non-expansive") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 2.0);
  auto rand_vec = [&](int n) {
    Vec v(n);
    for (int t = 0; t < n; ++t) v[t] = gauss(rng);
    return v;
  };
  const std::vector<FeasibleSet> sets = {
      FeasibleSet::whole_space(3),
      FeasibleSet::box(make_vec({-1.0, 0.0, -2.0}), make_vec({1.0, 0.5, 2.0})),
      FeasibleSet::ball(make_vec({0.5, -0.5, 0.0}), 1.5)};
  for (const auto& set : sets) {
    for (int s = 0; s < 200; ++s) {
      const Vec u = rand_vec(3), v = rand_vec(3);
      const Vec pu = project(set, u), pv = project(set, v);
      CHECK((project(set, pu) - pu).norm() <= 1e-12);
      CHECK((pu - pv).norm() <= (u - v).norm() + 1e-12);
      CHECK(set.contains(pu, 1e-9));
    }
  }
}

TEST_CASE("barrier evaluation matches the closed form on rectangles") {
  const FollowerConstraintSet set = Rectangle{make_vec({0.0}), make_vec({1.0})};
  const Vec y = make_vec({0.25});
  const auto bar = eval_barrier(set, y, Vec());
  CHECK(bar.value == doctest::Approx(-std::log(0.25) - std::log(0.75)));
  CHECK(bar.grad[0] == doctest::Approx(-1.0 / 0.25 + 1.0 / 0.75));
  CHECK(bar.hess(0, 0) == doctest::Approx(1.0 / 0.0625 + 1.0 / 0.5625));
  CHECK_THROWS_AS(eval_barrier(set, make_vec({1.5}), Vec()), Error);
}

TEST_CASE("cluster partition covers every follower exactly once") {
  auto built = build_lq(LqParams{}, 3);
  const auto& spec = built.spec;
  std::vector<int> seen(spec.num_followers, 0);
  for (int j = 0; j < spec.num_leaders; ++j)
    for (int i : spec.cluster(j)) {
      CHECK(spec.cluster_of[i] == j);
      ++seen[i];
    }
  for (int i = 0; i < spec.num_followers; ++i) CHECK(seen[i] == 1);
}

TEST_CASE("validate_assumptions accepts a matched quadratic and flags an inflated mu") {
  GameSpec spec;
  spec.num_leaders = 1;
  spec.num_followers = 1;
  spec.leader_dims = {1};
  spec.follower_dims = {1};
  spec.cluster_of = {0};
  FollowerCost fc;
  fc.value = [](const Vec& y, const Vec&) { return y[0] * y[0]; };
  fc.grad_y = [](const Vec& y, const Vec&) { return Vec::Constant(1, 2.0 * y[0]); };
  fc.hess_yy = [](const Vec&, const Vec&) { return Mat::Constant(1, 1, 2.0); };
  fc.cross_jac = [](int, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  spec.follower_costs.push_back(fc);
  LeaderCost lc;
  lc.value = [](const Vec& x, const Vec&) { return x[0] * x[0]; };
  lc.grad_xj = [](const Vec& x, const Vec&) { return Vec::Constant(1, 2.0 * x[0]); };
  lc.grad_y = [](const Vec&, const Vec& y) { return Vec::Zero(y.size()); };
  spec.leader_costs.push_back(lc);
  spec.leader_sets.push_back(FeasibleSet::whole_space(1));
  spec.follower_sets.emplace_back(Unconstrained{});
  spec.constants.mu = 2.0;
  spec.constants.l_s1 = 2.0;
  spec.finalize();

  auto report = validate_assumptions(spec, 16, 5);
  CHECK(report.passed());
  CHECK(report.min_hessian_eigenvalue == doctest::Approx(2.0));

  spec.constants.mu = 5.0;  // declared above the true eigenvalue
  auto bad = validate_assumptions(spec, 16, 5);
  CHECK_FALSE(bad.passed());
}

TEST_CASE("microgrid scenario passes validate_assumptions with mu from the M blocks") {
  MicrogridParams params;
  params.m = 2;
  params.cluster_sizes = {2, 2};
  auto built = build_microgrid(params, 7);
  auto report = validate_assumptions(built.spec, 8, 3);
  CHECK(report.passed());
  CHECK(report.min_hessian_eigenvalue >= built.spec.constants.mu - 1e-9);
}

TEST_CASE("follower oracle derivatives agree with finite differences") {
  auto built = build_lq(LqParams{}, 13);
  const auto& spec = built.spec;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto rand_vec = [&](int n) {
    Vec v(n);
    for (int t = 0; t < n; ++t) v[t] = gauss(rng);
    return v;
  };
  const double fd = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    const Vec x = rand_vec(spec.total_leader_dim());
    for (int i = 0; i < spec.num_followers; ++i) {
      const int pi = spec.follower_dims[i];
      const Vec y = rand_vec(pi);
      const auto& cost = spec.follower_costs[i];
      const Vec g = cost.grad_y(y, x);
      // grad vs FD of the value
      Vec g_fd(pi);
      for (int t = 0; t < pi; ++t) {
        Vec yp = y, ym = y;
        yp[t] += fd;
        ym[t] -= fd;
        g_fd[t] = (cost.value(yp, x) - cost.value(ym, x)) / (2.0 * fd);
      }
      CHECK((g - g_fd).norm() <= 1e-5 * (1.0 + g.norm()));
      // hess vs FD of the gradient
      const Mat H = cost.hess_yy(y, x);
      Mat H_fd(pi, pi);
      for (int t = 0; t < pi; ++t) {
        Vec yp = y, ym = y;
        yp[t] += fd;
        ym[t] -= fd;
        H_fd.col(t) = (cost.grad_y(yp, x) - cost.grad_y(ym, x)) / (2.0 * fd);
      }
      CHECK((H - H_fd).norm() <= 1e-5 * (1.0 + H.norm()));
      // cross_jac vs FD of the gradient over x^j
      for (int j = 0; j < spec.num_leaders; ++j) {
        const Mat J = cost.cross_jac(j, y, x);
        Mat J_fd(spec.leader_dims[j], pi);
        for (int t = 0; t < spec.leader_dims[j]; ++t) {
          Vec xp = x, xm = x;
          xp[spec.leader_offset(j) + t] += fd;
          xm[spec.leader_offset(j) + t] -= fd;
          J_fd.row(t) = ((cost.grad_y(y, xp) - cost.grad_y(y, xm)) / (2.0 * fd)).transpose();
        }
        CHECK((J - J_fd).norm() <= 1e-5 * (1.0 + J.norm()));
      }
    }
  }
}
