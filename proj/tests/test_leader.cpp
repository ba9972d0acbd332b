#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mlmf/consensus.hpp"
#include "mlmf/follower.hpp"
#include "mlmf/leader.hpp"
#include "mlmf/oracle.hpp"
#include "mlmf/scenarios.hpp"

using namespace mlmf;

namespace {

/// s = (y - x)^2 / 2, theta = x^2/2 + x y: Phi(x) = (3/2) x^2, grad = 3x.
GameSpec toy_1x1() {
  GameSpec spec;
  spec.num_leaders = 1;
  spec.num_followers = 1;
  spec.leader_dims = {1};
  spec.follower_dims = {1};
  spec.cluster_of = {0};
  FollowerCost fc;
  fc.value = [](const Vec& y, const Vec& x) {
    return 0.5 * (y[0] - x[0]) * (y[0] - x[0]);
  };
  fc.grad_y = [](const Vec& y, const Vec& x) { return Vec::Constant(1, y[0] - x[0]); };
  fc.hess_yy = [](const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  fc.cross_jac = [](int, const Vec&, const Vec&) { return Mat::Constant(1, 1, -1.0); };
  spec.follower_costs.push_back(fc);
  LeaderCost lc;
  lc.value = [](const Vec& x, const Vec& y) { return 0.5 * x[0] * x[0] + x[0] * y[0]; };
  lc.grad_xj = [](const Vec& x, const Vec& y) { return Vec::Constant(1, x[0] + y[0]); };
  lc.grad_y = [](const Vec& x, const Vec&) { return Vec::Constant(1, x[0]); };
  spec.leader_costs.push_back(lc);
  spec.leader_sets.push_back(FeasibleSet::whole_space(1));
  spec.follower_sets.emplace_back(Unconstrained{});
  spec.exact_best_response.push_back([](const Vec& x) { return Vec::Constant(1, x[0]); });
  spec.constants.mu = 1.0;
  spec.constants.l_s1 = 1.0;
  spec.finalize();
  return spec;
}

/// Runs one cold-started pass of the estimated pipeline at x.
Vec estimated_pseudo_gradient(const GameSpec& spec, const LeaderGraph& graph, const Vec& x,
                              int T, int D, int B) {
  const double alpha = default_inner_step(spec.constants);
  Vec y(spec.total_follower_dim());
  for (int i = 0; i < spec.num_followers; ++i)
    y.segment(spec.follower_offset(i), spec.follower_dims[i]) = inner_gd(
        spec.follower_costs[i], x, Vec::Zero(spec.follower_dims[i]), T, alpha);
  std::vector<ClusterSensitivity> sens;
  std::vector<ClusterBlocks> truth;
  const double gamma = 1.0 / spec.constants.l_s1;
  for (int h = 0; h < spec.num_leaders; ++h) {
    sens.push_back(assemble_cluster_blocks(spec, h, y, x));
    ClusterBlocks z(sens[h].leader_dims, sens[h].member_dims);
    truth.push_back(jhi_descent(sens[h], std::move(z), gamma, D));
  }
  EstimatorBank bank(sens);
  run_consensus(bank, graph, truth, B);
  Vec psi(spec.total_leader_dim());
  for (int j = 0; j < spec.num_leaders; ++j)
    psi.segment(spec.leader_offset(j), spec.leader_dims[j]) =
        hypergradient_estimate(spec, j, x, y, extract_blocks(bank, spec, j));
  return psi;
}

}  // namespace

TEST_CASE("zero strip reduces the estimate to grad_xj") {
  auto built = build_lq(LqParams{}, 7);
  const auto& spec = built.spec;
  const Vec x = Vec::Ones(spec.total_leader_dim());
  const Vec y = Vec::Ones(spec.total_follower_dim());
  std::vector<Mat> strip;
  for (int i = 0; i < spec.num_followers; ++i)
    strip.push_back(Mat::Zero(spec.leader_dims[0], spec.follower_dims[i]));
  const Vec est = hypergradient_estimate(spec, 0, x, y, strip);
  CHECK((est - spec.leader_costs[0].grad_xj(x, y)).norm() <= 1e-14);
}

TEST_CASE("exact pipeline on the 1x1 toy game gives 3x") {
  const GameSpec spec = toy_1x1();
  for (double xv : {-1.0, 0.5, 2.0}) {
    const Vec x = Vec::Constant(1, xv);
    const Vec exact = hypergradient_exact(spec, 0, x);
    CHECK(exact[0] == doctest::Approx(3.0 * xv));
    // At y = x, Psi = grad_xj + (dy*/dx) grad_y = (x + y) + 1 * x = 3x.
    const Vec psi = pseudo_gradient_exact(spec, x);
    CHECK(psi[0] == doctest::Approx(3.0 * xv));
  }
}

TEST_CASE("estimated hypergradient on the toy game reproduces 3x") {
  const GameSpec spec = toy_1x1();
  const LeaderGraph graph = make_leader_graph(1, {});
  const Vec x = Vec::Constant(1, 0.8);
  const Vec psi = estimated_pseudo_gradient(spec, graph, x, 60, 60, 30);
  CHECK(psi[0] == doctest::Approx(2.4).epsilon(1e-8));
}

TEST_CASE("estimate converges to the exact pseudo-gradient as budgets grow") {
  LqParams params;
  params.m = 2;
  params.cluster_sizes = {2, 1};
  auto built = build_lq(params, 17);
  const auto& spec = built.spec;
  const LeaderGraph graph = make_leader_graph(2, {{0, 1}});
  Vec x(spec.total_leader_dim());
  x.setLinSpaced(spec.total_leader_dim(), -0.5, 1.0);
  const Vec psi_star = pseudo_gradient_exact(spec, x);
  double prev = std::numeric_limits<double>::infinity();
  for (int budget : {10, 40, 160}) {
    const Vec psi = estimated_pseudo_gradient(spec, graph, x, budget, budget, budget);
    const double err = (psi - psi_star).norm();
    CHECK(err <= prev * (1.0 + 1e-9) + 1e-10);
    prev = err;
  }
  const Vec psi200 = estimated_pseudo_gradient(spec, graph, x, 200, 200, 200);
  CHECK((psi200 - psi_star).norm() / psi_star.norm() <= 1e-4);
}

TEST_CASE("exact hypergradients match central differences of Phi") {
  auto built = build_lq(LqParams{}, 29);
  const auto& spec = built.spec;
  Vec x(spec.total_leader_dim());
  x.setLinSpaced(spec.total_leader_dim(), 0.2, 0.9);
  auto phi = [&](int j, const Vec& xq) {
    Vec y(spec.total_follower_dim());
    for (int i = 0; i < spec.num_followers; ++i)
      y.segment(spec.follower_offset(i), spec.follower_dims[i]) =
          best_response_exact(spec, i, xq);
    return spec.leader_costs[j].value(xq, y);
  };
  const double fd = 1e-6;
  for (int j = 0; j < spec.num_leaders; ++j) {
    const Vec grad = hypergradient_exact(spec, j, x);
    for (int t = 0; t < spec.leader_dims[j]; ++t) {
      Vec xp = x, xm = x;
      xp[spec.leader_offset(j) + t] += fd;
      xm[spec.leader_offset(j) + t] -= fd;
      const double fd_grad = (phi(j, xp) - phi(j, xm)) / (2.0 * fd);
      CHECK(grad[t] == doctest::Approx(fd_grad).epsilon(1e-5));
    }
  }
}

TEST_CASE("projected step fixed points and clamping") {
  const auto box = FeasibleSet::box(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0));
  // Zero gradient: stay put.
  CHECK(projected_step(box, Vec::Constant(1, 0.5), Vec::Zero(1), 0.1)[0] ==
        doctest::Approx(0.5));
  // Whole space: plain gradient step.
  const auto free = FeasibleSet::whole_space(1);
  CHECK(projected_step(free, Vec::Constant(1, 0.5), Vec::Constant(1, 1.0), 0.25)[0] ==
        doctest::Approx(0.25));
  // Exit through the wall: clamped.
  CHECK(projected_step(box, Vec::Constant(1, 0.9), Vec::Constant(1, -10.0), 0.1)[0] ==
        doctest::Approx(1.0));
}

TEST_CASE("step schedules: examples and monotonicity") {
  const auto dim = StepSchedule::diminishing(1.0);
  CHECK(dim.at(0) == doctest::Approx(1.0));
  const auto con = StepSchedule::constant(0.0012);
  CHECK(con.at(0) == doctest::Approx(0.0012));
  CHECK(con.at(123456) == doctest::Approx(0.0012));
  const auto scaled = StepSchedule::diminishing(0.6, 0.0044);
  CHECK(scaled.at(0) == doctest::Approx(0.0044));
  double prev = scaled.at(0);
  for (int k = 1; k <= 1000000; k = k * 7 + 1) {
    const double b = scaled.at(k);
    CHECK(b <= prev + 1e-18);
    prev = b;
  }
  CHECK_THROWS_AS(StepSchedule::diminishing(0.5), Error);  // b must exceed 1/2
}

TEST_CASE("projected-step fixed point characterizes the oracle equilibrium") {
  LqParams params;
  params.m = 2;
  params.cluster_sizes = {1, 2};
  params.box_halfwidth = 5.0;
  auto built = build_lq(params, 41);
  const auto& spec = built.spec;
  const SePoint se = solve_se_lq(spec, Vec::Zero(spec.total_leader_dim()), 1e-12);
  const Vec psi = pseudo_gradient_exact(spec, se.x);
  for (double beta : {1e-3, 0.1, 1.0}) {
    Vec moved(spec.total_leader_dim());
    for (int j = 0; j < spec.num_leaders; ++j)
      moved.segment(spec.leader_offset(j), spec.leader_dims[j]) = projected_step(
          spec.leader_sets[j], se.x.segment(spec.leader_offset(j), spec.leader_dims[j]),
          psi.segment(spec.leader_offset(j), spec.leader_dims[j]), beta);
    CHECK((moved - se.x).norm() <= 1e-8 * (1.0 + se.x.norm()));
  }
}
