#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "mlmf/follower.hpp"
#include "mlmf/scenarios.hpp"
#include "mlmf/sensitivity.hpp"

using namespace mlmf;

namespace {

Mat random_spd(int n, std::mt19937_64& rng, double shift = 1.0) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat G(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) G(r, c) = gauss(rng);
  return G * G.transpose() + shift * Mat::Identity(n, n);
}

GameSpec scalar_game() {
  // s = y^2/2 - x y, theta arbitrary.
  GameSpec spec;
  spec.num_leaders = 1;
  spec.num_followers = 1;
  spec.leader_dims = {1};
  spec.follower_dims = {1};
  spec.cluster_of = {0};
  FollowerCost fc;
  fc.value = [](const Vec& y, const Vec& x) { return 0.5 * y[0] * y[0] - x[0] * y[0]; };
  fc.grad_y = [](const Vec& y, const Vec& x) { return Vec::Constant(1, y[0] - x[0]); };
  fc.hess_yy = [](const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  fc.cross_jac = [](int, const Vec&, const Vec&) { return Mat::Constant(1, 1, -1.0); };
  spec.follower_costs.push_back(fc);
  LeaderCost lc;
  lc.value = [](const Vec& x, const Vec&) { return 0.5 * x[0] * x[0]; };
  lc.grad_xj = [](const Vec& x, const Vec&) { return Vec::Constant(1, x[0]); };
  lc.grad_y = [](const Vec&, const Vec& y) { return Vec::Zero(y.size()); };
  spec.leader_costs.push_back(lc);
  spec.leader_sets.push_back(FeasibleSet::whole_space(1));
  spec.follower_sets.emplace_back(Unconstrained{});
  spec.finalize();
  return spec;
}

}  // namespace

TEST_CASE("scalar assembly: J = -1, H = 1") {
  const GameSpec spec = scalar_game();
  const auto sens = assemble_cluster_blocks(spec, 0, Vec::Zero(1), Vec::Zero(1));
  CHECK(sens.J.block(0, 0)(0, 0) == doctest::Approx(-1.0));
  CHECK(sens.H[0](0, 0) == doctest::Approx(1.0));
  CHECK(sens.warnings.empty());
}

TEST_CASE("assembly preserves the per-follower block structure") {
  auto built = build_lq(LqParams{}, 21);
  const auto& spec = built.spec;
  const Vec x = Vec::Ones(spec.total_leader_dim());
  const Vec y = Vec::Ones(spec.total_follower_dim());
  for (int h = 0; h < spec.num_leaders; ++h) {
    const auto sens = assemble_cluster_blocks(spec, h, y, x);
    CHECK(static_cast<int>(sens.H.size()) == static_cast<int>(spec.cluster(h).size()));
    for (std::size_t t = 0; t < sens.member_ids.size(); ++t) {
      const int i = sens.member_ids[t];
      CHECK(sens.H[t].rows() == spec.follower_dims[i]);
      // H block equals the follower's own Hessian (separable costs).
      const Mat Hi = spec.follower_costs[i].hess_yy(spec.follower_block(y, i), x);
      CHECK((sens.H[t] - Hi).norm() <= 1e-14);
    }
  }
}

TEST_CASE("a Hessian below mu/2 is recorded as a model-violation warning") {
  GameSpec spec = scalar_game();
  spec.constants.mu = 4.0;  // true Hessian is 1 < mu/2
  const auto sens = assemble_cluster_blocks(spec, 0, Vec::Zero(1), Vec::Zero(1));
  CHECK(sens.warnings.size() == 1);
}

TEST_CASE("exact J-H-I: identity Hessian returns J") {
  std::mt19937_64 rng(5);
  const Mat J = random_spd(3, rng);
  CHECK((exact_jhi_dense(J, Mat::Identity(3, 3)) - J).norm() <= 1e-13);
}

TEST_CASE("exact J-H-I: scalar 1 / 2 = 0.5") {
  CHECK(exact_jhi_dense(Mat::Ones(1, 1), Mat::Constant(1, 1, 2.0))(0, 0) ==
        doctest::Approx(0.5));
}

TEST_CASE("exact J-H-I residual on a random 4x4 SPD block") {
  std::mt19937_64 rng(6);
  const Mat H = random_spd(4, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat J(2, 4);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) J(r, c) = gauss(rng);
  const Mat Z = exact_jhi_dense(J, H);
  CHECK((Z * H - J).norm() <= 1e-12 * (1.0 + J.norm()));
}

TEST_CASE("singular H is rejected") {
  CHECK_THROWS_AS(exact_jhi_dense(Mat::Ones(1, 1), Mat::Zero(1, 1)), Error);
}

TEST_CASE("one descent step with identity Hessian and gamma 1 is exact") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat J(2, 3);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) J(r, c) = gauss(rng);
  const Mat Z1 = jhi_descent_dense(J, Mat::Identity(3, 3), Mat::Zero(2, 3), 1.0, 1);
  CHECK((Z1 - J).norm() <= 1e-14);
}

TEST_CASE("scalar descent trace 1/4, 3/8, 7/16") {
  const Mat J = Mat::Ones(1, 1), H = Mat::Constant(1, 1, 2.0);
  Mat Z = Mat::Zero(1, 1);
  Z = jhi_descent_dense(J, H, Z, 0.25, 1);
  CHECK(Z(0, 0) == doctest::Approx(0.25));
  Z = jhi_descent_dense(J, H, Z, 0.25, 1);
  CHECK(Z(0, 0) == doctest::Approx(0.375));
  Z = jhi_descent_dense(J, H, Z, 0.25, 1);
  CHECK(Z(0, 0) == doctest::Approx(7.0 / 16.0));
}

TEST_CASE("gamma <= 0 is rejected") {
  CHECK_THROWS_AS(jhi_descent_dense(Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Zero(1, 1),
                                    0.0, 1),
                  Error);
}

TEST_CASE("per-step contraction of the blockwise descent against the exact target") {
  auto built = build_lq(LqParams{}, 33);
  const auto& spec = built.spec;
  const Vec x = Vec::Ones(spec.total_leader_dim());
  const Vec y = Vec::Ones(spec.total_follower_dim());
  for (int h = 0; h < spec.num_leaders; ++h) {
    const auto sens = assemble_cluster_blocks(spec, h, y, x);
    const ClusterBlocks z_ref = exact_jhi(sens);
    const double gamma = 1.0 / spec.constants.l_s1;
    const double factor = jhi_contraction_factor(sens, gamma);
    CHECK(factor < 1.0);
    ClusterBlocks z(sens.leader_dims, sens.member_dims);
    double err = z.frobenius_distance(z_ref);
    for (int d = 0; d < 50; ++d) {
      z = jhi_descent(sens, std::move(z), gamma, 1);
      const double e = z.frobenius_distance(z_ref);
      CHECK(e <= factor * err * (1.0 + 1e-9) + 1e-15);
      err = e;
    }
  }
}

TEST_CASE("Lemma-8 Frobenius bound holds when the gamma interval is feasible") {
  // Single cluster of one 2-dim follower, m = 1: lower bound
  // (1 - 1/sqrt(m p)) / mu < gamma, and the bound uses sqrt(m p)(1 - gamma mu).
  std::mt19937_64 rng(44);
  GameSpec spec;
  spec.num_leaders = 1;
  spec.num_followers = 1;
  spec.leader_dims = {2};
  spec.follower_dims = {2};
  spec.cluster_of = {0};
  const Mat M = [&] {
    Mat G = random_spd(2, rng, 0.0);
    Eigen::SelfAdjointEigenSolver<Mat> eig(G);
    // Rescale eigenvalues into [0.9, 1.1].
    const Vec l = eig.eigenvalues();
    Vec scaled(2);
    for (int t = 0; t < 2; ++t)
      scaled[t] = 0.9 + 0.2 * (l[t] - l.minCoeff()) / (l.maxCoeff() - l.minCoeff());
    return Mat(eig.eigenvectors() * scaled.asDiagonal() * eig.eigenvectors().transpose());
  }();
  FollowerCost fc;
  fc.value = [M](const Vec& y, const Vec&) { return 0.5 * y.dot(M * y); };
  fc.grad_y = [M](const Vec& y, const Vec&) -> Vec { return M * y; };
  fc.hess_yy = [M](const Vec&, const Vec&) -> Mat { return M; };
  fc.cross_jac = [](int, const Vec&, const Vec&) { return Mat::Ones(2, 2); };
  spec.follower_costs.push_back(fc);
  LeaderCost lc;
  lc.value = [](const Vec&, const Vec&) { return 0.0; };
  lc.grad_xj = [](const Vec&, const Vec&) { return Vec::Zero(2); };
  lc.grad_y = [](const Vec&, const Vec& y) { return Vec::Zero(y.size()); };
  spec.leader_costs.push_back(lc);
  spec.leader_sets.push_back(FeasibleSet::whole_space(2));
  spec.follower_sets.emplace_back(Unconstrained{});
  spec.constants.mu = 0.9;
  spec.finalize();

  const auto sens = assemble_cluster_blocks(spec, 0, Vec::Zero(2), Vec::Zero(2));
  const double mu = 0.9, p_cluster = 2.0;
  const double lower = (1.0 - 1.0 / std::sqrt(p_cluster)) / mu;
  const double gamma = 0.9;  // in (lower, 1/lambda_max) with lambda_max <= 1.1
  CHECK(gamma > lower);
  const ClusterBlocks z_ref = exact_jhi(sens);
  const double per_step = std::sqrt(p_cluster) * (1.0 - gamma * mu);
  ClusterBlocks z(sens.leader_dims, sens.member_dims);
  const double err0_sq = std::pow(z.frobenius_distance(z_ref), 2);
  for (int D = 1; D <= 30; ++D) {
    z = jhi_descent(sens, std::move(z), gamma, 1);
    const double err_sq = std::pow(z.frobenius_distance(z_ref), 2);
    CHECK(err_sq <= std::pow(per_step, 2 * D) * err0_sq * (1.0 + 1e-9) + 1e-24);
  }
}

TEST_CASE("reduced Hessian with no equality rows is the plain inverse") {
  std::mt19937_64 rng(8);
  const Mat H = random_spd(3, rng);
  const Mat Ht = reduced_hessian(H, Mat(0, 3));
  CHECK((Ht * H - Mat::Identity(3, 3)).norm() <= 1e-11);
}

TEST_CASE("reduced Hessian of the identity with A = [1, 1]") {
  Mat A(1, 2);
  A << 1.0, 1.0;
  const Mat Ht = reduced_hessian(Mat::Identity(2, 2), A);
  Mat want(2, 2);
  want << 0.5, -0.5, -0.5, 0.5;
  CHECK((Ht - want).norm() <= 1e-12);
  CHECK((A * Ht).norm() <= 1e-12);
}

TEST_CASE("A Ht = 0 and the projector identity on random instances") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int p = 4, ma = 2;
    const Mat H = random_spd(p, rng);
    Mat A(ma, p);
    for (int r = 0; r < ma; ++r)
      for (int c = 0; c < p; ++c) A(r, c) = gauss(rng);
    const Mat Ht = reduced_hessian(H, A);
    CHECK((A * Ht).norm() <= 1e-10);
    CHECK((Ht - Ht.transpose()).norm() <= 1e-10);
    CHECK((Ht * H * Ht - Ht).norm() <= 1e-9);
  }
}

TEST_CASE("rank-deficient A H^{-1} A^T is rejected") {
  Mat A(2, 2);
  A << 1.0, 1.0, 1.0, 1.0;  // duplicated row
  CHECK_THROWS_AS(reduced_hessian(Mat::Identity(2, 2), A), Error);
}

TEST_CASE("scalar best-response Jacobian: dy*/dx = 1 for s = (y - x)^2 / 2") {
  const GameSpec spec = scalar_game();
  const auto jac = exact_best_response_jacobian(spec, Vec::Constant(1, 0.3));
  CHECK(jac.block[0][0](0, 0) == doctest::Approx(1.0));
  CHECK(jac.y_star[0][0] == doctest::Approx(0.3));
}

TEST_CASE("LQ Jacobian blocks equal -C^T-structured M^{-1} maps") {
  auto built = build_lq(LqParams{}, 55);
  const auto& spec = built.spec;
  const Vec x = Vec::Ones(spec.total_leader_dim());
  const auto jac = exact_best_response_jacobian(spec, x);
  const double fd = 1e-6;
  for (int i = 0; i < spec.num_followers; ++i)
    for (int j = 0; j < spec.num_leaders; ++j) {
      Mat J_fd(spec.leader_dims[j], spec.follower_dims[i]);
      for (int t = 0; t < spec.leader_dims[j]; ++t) {
        Vec xp = x, xm = x;
        xp[spec.leader_offset(j) + t] += fd;
        xm[spec.leader_offset(j) + t] -= fd;
        J_fd.row(t) =
            ((best_response_exact(spec, i, xp) - best_response_exact(spec, i, xm)) /
             (2.0 * fd))
                .transpose();
      }
      CHECK((jac.block[i][j] - J_fd).norm() <= 1e-5 * (1.0 + J_fd.norm()));
    }
}

TEST_CASE("microgrid implicit Jacobian matches central differences") {
  MicrogridParams params;
  params.m = 2;
  params.cluster_sizes = {2, 1};
  auto built = build_microgrid(params, 71);
  const auto& spec = built.spec;
  Vec x(spec.total_leader_dim());
  x.setConstant(0.4);
  const auto jac = exact_best_response_jacobian(spec, x);
  const double fd = 1e-5;
  for (int i = 0; i < spec.num_followers; ++i)
    for (int j = 0; j < spec.num_leaders; ++j) {
      Mat J_fd(spec.leader_dims[j], spec.follower_dims[i]);
      for (int t = 0; t < spec.leader_dims[j]; ++t) {
        Vec xp = x, xm = x;
        xp[spec.leader_offset(j) + t] += fd;
        xm[spec.leader_offset(j) + t] -= fd;
        J_fd.row(t) =
            ((best_response_exact(spec, i, xp) - best_response_exact(spec, i, xm)) /
             (2.0 * fd))
                .transpose();
      }
      CHECK((jac.block[i][j] - J_fd).norm() <= 1e-5 * (1.0 + J_fd.norm()));
    }
}

TEST_CASE("constrained Jacobian (barrier path) matches finite differences") {
  // Follower: min 1/2 ||y||^2 + (c x)^T y  s.t. y_0 + y_1 = 2, y_0 >= 0.2,
  // differentiated along the barrier path at fixed theta.
  GameSpec spec;
  spec.num_leaders = 1;
  spec.num_followers = 1;
  spec.leader_dims = {1};
  spec.follower_dims = {2};
  spec.cluster_of = {0};
  Mat C(2, 1);
  C << 0.7, -0.4;
  FollowerCost fc;
  fc.value = [C](const Vec& y, const Vec& x) {
    return 0.5 * y.squaredNorm() + (C * x).dot(y);
  };
  fc.grad_y = [C](const Vec& y, const Vec& x) -> Vec { return y + C * x; };
  fc.hess_yy = [](const Vec&, const Vec&) -> Mat { return Mat::Identity(2, 2); };
  fc.cross_jac = [C](int, const Vec&, const Vec&) -> Mat { return C.transpose(); };
  spec.follower_costs.push_back(fc);
  LeaderCost lc;
  lc.value = [](const Vec& x, const Vec&) { return 0.5 * x.squaredNorm(); };
  lc.grad_xj = [](const Vec& x, const Vec&) -> Vec { return x; };
  lc.grad_y = [](const Vec&, const Vec& y) { return Vec::Zero(y.size()); };
  spec.leader_costs.push_back(lc);
  spec.leader_sets.push_back(FeasibleSet::whole_space(1));
  InequalityOracle h;
  h.value = [](const Vec& y, const Vec&) { return 0.2 - y[0]; };
  h.grad_y = [](const Vec&, const Vec&) {
    Vec g(2);
    g << -1.0, 0.0;
    return g;
  };
  h.hess_yy = [](const Vec&, const Vec&) { return Mat::Zero(2, 2); };
  GeneralConstraints g;
  g.A = Mat::Ones(1, 2);
  g.b = Vec::Constant(1, 2.0);
  g.inequalities.push_back(h);
  spec.follower_sets.emplace_back(g);
  spec.finalize();

  const BarrierContext ctx{50.0};
  const Vec x = Vec::Constant(1, 0.6);
  const auto jac = exact_best_response_jacobian(spec, x, ctx);
  const double fd = 1e-6;
  auto path = [&](const Vec& xq) {
    return barrier_best_response(spec.follower_costs[0], spec.follower_sets[0], xq,
                                 ctx.theta, interior_point(spec.follower_sets[0], 2, xq));
  };
  Vec xp = x, xm = x;
  xp[0] += fd;
  xm[0] -= fd;
  const Mat J_fd = ((path(xp) - path(xm)) / (2.0 * fd)).transpose();
  CHECK((jac.block[0][0] - J_fd).norm() <= 1e-5 * (1.0 + J_fd.norm()));
  // The Jacobian respects the equality constraint: rows sum to zero.
  CHECK(std::abs(jac.block[0][0].row(0).sum()) <= 1e-9);
}

TEST_CASE("dense view of cluster blocks has the canonical layout") {
  auto built = build_lq(LqParams{}, 91);
  const auto& spec = built.spec;
  const Vec x = Vec::Ones(spec.total_leader_dim());
  const Vec y = Vec::Ones(spec.total_follower_dim());
  const auto sens = assemble_cluster_blocks(spec, 0, y, x);
  const Mat dense = sens.J.dense();
  const int n_h = static_cast<int>(spec.cluster(0).size());
  const int p_cluster = spec.cluster_dim(0);
  CHECK(dense.rows() == n_h * spec.total_leader_dim());
  CHECK(dense.cols() == spec.num_leaders * p_cluster);
  // Leader strip g sits at rows [g * n_h * q_g ...] and columns
  // [g * p_cluster ...]; spot-check block (g, t) = (1, 0).
  const int qg = spec.leader_dims[1];
  const Mat strip = dense.block(n_h * spec.leader_dims[0], p_cluster, qg,
                                spec.follower_dims[spec.cluster(0)[0]]);
  CHECK((strip - sens.J.block(1, 0)).norm() <= 1e-14);
}
