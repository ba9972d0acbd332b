#include "mlmf/oracle.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "mlmf/follower.hpp"
#include "mlmf/leader.hpp"

namespace mlmf {

Vec best_response_stack(const GameSpec& spec, const Vec& x,
                        const std::optional<BarrierContext>& barrier) {
  Vec y(spec.total_follower_dim());
  for (int i = 0; i < spec.num_followers; ++i) {
    const auto& set = spec.follower_sets[i];
    Vec yi;
    if (!is_unconstrained(set)) {
      check(barrier.has_value(), "best_response_stack: constrained follower needs theta");
      yi = barrier_best_response(spec.follower_costs[i], set, x, barrier->theta,
                                 interior_point(set, spec.follower_dims[i], x));
    } else {
      yi = best_response_exact(spec, i, x);
    }
    y.segment(spec.follower_offset(i), spec.follower_dims[i]) = yi;
  }
  return y;
}

AffinePseudoGradient probe_pseudo_gradient(const GameSpec& spec,
                                           const std::optional<BarrierContext>& barrier) {
  const int q = spec.total_leader_dim();
  AffinePseudoGradient out;
  const Vec x0 = Vec::Zero(q);
  out.b = pseudo_gradient_exact(spec, x0, barrier);
  out.A = Mat(q, q);
  for (int c = 0; c < q; ++c) {
    Vec xc = x0;
    xc[c] = 1.0;
    out.A.col(c) = pseudo_gradient_exact(spec, xc, barrier) - out.b;
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (out.A + out.A.transpose()));
  out.m_theta = eig.eigenvalues().minCoeff();
  out.l_phi = out.A.jacobiSvd().singularValues().maxCoeff();
  return out;
}

SePoint solve_se_lq(const GameSpec& spec, const Vec& x0, double tol,
                    const std::optional<BarrierContext>& barrier) {
  check(spec.finalized(), "solve_se_lq: spec not finalized");
  check_dim(x0.size(), spec.total_leader_dim(), "solve_se_lq: x0");
  check(tol > 0.0, "solve_se_lq: tol must be > 0");

  const AffinePseudoGradient affine = probe_pseudo_gradient(spec, barrier);
  double beta;
  if (affine.m_theta > 1e-12 && affine.l_phi > 0.0) {
    // Midpoint of (0, 2 m_theta / l^2): makes I - beta A a strict contraction.
    beta = affine.m_theta / (affine.l_phi * affine.l_phi);
  } else {
    // Strictly-but-not-strongly monotone probe: take tiny steps and rely on
    // the iteration cap to flag non-convergence.
    beta = affine.l_phi > 0.0 ? 1e-3 / affine.l_phi : 1.0;
  }

  auto project_all = [&](const Vec& v) {
    Vec out(v.size());
    for (int j = 0; j < spec.num_leaders; ++j)
      out.segment(spec.leader_offset(j), spec.leader_dims[j]) = project(
          spec.leader_sets[j], v.segment(spec.leader_offset(j), spec.leader_dims[j]));
    return out;
  };

  SePoint result;
  Vec x = project_all(x0);
  const int max_iters = 1000000;
  int k = 0;
  for (; k < max_iters; ++k) {
    const Vec psi = pseudo_gradient_exact(spec, x, barrier);
    const Vec x_next = project_all(x - beta * psi);
    const double step = (x_next - x).norm();
    x = x_next;
    if (step <= tol * beta) break;
  }
  check(k < max_iters, "solve_se_lq: no progress after 1e6 iterations "
                       "(possible monotonicity violation)");
  result.x = x;
  result.y = best_response_stack(spec, x, barrier);
  result.iterations = k + 1;
  const Vec psi = pseudo_gradient_exact(spec, x, barrier);
  result.fixed_point_residual = (x - project_all(x - beta * psi)).norm() / beta;
  return result;
}

namespace {

Vec sample_feasible(const FeasibleSet& set, const Vec& anchor, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec v(set.dim());
  for (int t = 0; t < set.dim(); ++t) v[t] = anchor[t] + gauss(rng);
  return project(set, v);
}

}  // namespace

EquilibriumReport verify_equilibrium(const GameSpec& spec, const Vec& x, const Vec& y,
                                     int samples, double tol, std::uint64_t rng_seed,
                                     const std::optional<BarrierContext>& barrier) {
  check(spec.finalized(), "verify_equilibrium: spec not finalized");
  EquilibriumReport report;
  report.followers_pass = true;
  report.leaders_pass = true;
  std::mt19937_64 rng(rng_seed);

  for (int i = 0; i < spec.num_followers; ++i) {
    const Vec yi = spec.follower_block(y, i);
    const auto& set = spec.follower_sets[i];
    double residual;
    if (is_unconstrained(set)) {
      residual = spec.follower_costs[i].grad_y(yi, x).norm();
    } else {
      check(barrier.has_value(), "verify_equilibrium: constrained follower needs theta");
      // Stationarity of the barrier objective at the follower's theta.
      const BarrierEval bar = eval_barrier(set, yi, x);
      Vec g = barrier->theta * spec.follower_costs[i].grad_y(yi, x) + bar.grad;
      if (const auto* gen = std::get_if<GeneralConstraints>(&set); gen && gen->A.rows() > 0) {
        const Mat AAt = gen->A * gen->A.transpose();
        g -= gen->A.transpose() * AAt.ldlt().solve(gen->A * g);
      }
      residual = g.norm() / (1.0 + barrier->theta);
    }
    report.worst_follower_residual = std::max(report.worst_follower_residual, residual);
    if (residual > tol) {
      report.followers_pass = false;
      report.failures.push_back("follower " + std::to_string(i) +
                                ": stationarity residual " + std::to_string(residual));
    }
  }

  for (int j = 0; j < spec.num_leaders; ++j) {
    const Vec xj = spec.leader_block(x, j);
    const double own = [&] {
      const Vec yx = best_response_stack(spec, x, barrier);
      return spec.leader_costs[j].value(x, yx);
    }();
    for (int s = 0; s < samples; ++s) {
      Vec x_dev = x;
      x_dev.segment(spec.leader_offset(j), spec.leader_dims[j]) =
          sample_feasible(spec.leader_sets[j], xj, rng);
      const Vec y_dev = best_response_stack(spec, x_dev, barrier);
      const double dev = spec.leader_costs[j].value(x_dev, y_dev);
      const double margin = dev - own;  // >= -tol required
      report.worst_leader_margin = std::min(report.worst_leader_margin, margin);
      if (margin < -tol) {
        report.leaders_pass = false;
        report.failures.push_back("leader " + std::to_string(j) +
                                  ": profitable deviation, margin " + std::to_string(margin));
        break;
      }
    }
  }
  return report;
}

}  // namespace mlmf
