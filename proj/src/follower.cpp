#include "mlmf/follower.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>

namespace mlmf {

void BarrierParams::validate() const {
  check(theta0 > 0.0, "BarrierParams: theta0 must be > 0");
  check(chi > 1.0, "BarrierParams: chi must be > 1");
  check(eps > 0.0, "BarrierParams: eps must be > 0");
  check(eps_inner > 0.0, "BarrierParams: eps_inner must be > 0");
}

Vec inner_gd(const FollowerCost& cost, const Vec& x, const Vec& y0, int T, double alpha) {
  check(T >= 1, "inner_gd: T must be >= 1");
  check(alpha > 0.0, "inner_gd: alpha must be > 0");
  Vec y = y0;
  for (int t = 1; t <= T; ++t) {
    const Vec g = cost.grad_y(y, x);
    if (!g.allFinite())
      throw Error("inner_gd: non-finite gradient at iterate " + std::to_string(t));
    y -= alpha * g;
  }
  return y;
}

namespace {

Vec newton_minimize(const FollowerCost& cost, const Vec& x, const Vec& y_start,
                    double grad_tol, int max_iters) {
  Vec y = y_start;
  for (int it = 0; it < max_iters; ++it) {
    const Vec g = cost.grad_y(y, x);
    if (!g.allFinite()) throw Error("best_response_exact: non-finite gradient");
    if (g.norm() <= grad_tol * (1.0 + y.norm())) return y;
    const Mat H = cost.hess_yy(y, x);
    Vec d = -H.ldlt().solve(g);
    if (!d.allFinite()) throw Error("best_response_exact: singular Hessian");
    // Backtrack on the value; full steps are exact for quadratics.
    double t = 1.0;
    const double f0 = cost.value(y, x);
    const double slope = g.dot(d);
    while (t > 1e-14 && cost.value(y + t * d, x) > f0 + 1e-4 * t * slope) t *= 0.5;
    if (t <= 1e-14) break;
    y += t * d;
  }
  const Vec g = cost.grad_y(y, x);
  check(g.norm() <= grad_tol * (1.0 + y.norm()),
        "best_response_exact: no convergence (non-quadratic oracle?)");
  return y;
}

}  // namespace

Vec best_response_exact(const FollowerCost& cost, const Vec& x, const Vec& y_start) {
  return newton_minimize(cost, x, y_start, 1e-9, 500);
}

Vec best_response_exact(const GameSpec& spec, int i, const Vec& x) {
  check(i >= 0 && i < spec.num_followers, "best_response_exact: follower id out of range");
  if (!spec.exact_best_response.empty() && spec.exact_best_response[i]) {
    Vec y = spec.exact_best_response[i](x);
    check_dim(y.size(), spec.follower_dims[i], "best_response_exact closed form");
    return y;
  }
  return best_response_exact(spec.follower_costs[i], x, Vec::Zero(spec.follower_dims[i]));
}

BarrierSolveResult barrier_inner_solve(const FollowerCost& cost,
                                       const FollowerConstraintSet& set, const Vec& x,
                                       double theta, const Vec& y_start,
                                       double eps_inner, int max_iters) {
  check(theta > 0.0, "barrier_inner_solve: theta must be > 0");
  check(strictly_feasible(set, y_start, x),
        "barrier_inner_solve: start point not strictly feasible");

  const auto* gen = std::get_if<GeneralConstraints>(&set);
  const Mat* A = (gen != nullptr && gen->A.rows() > 0) ? &gen->A : nullptr;
  const Eigen::Index p = y_start.size();
  const Eigen::Index ma = A ? A->rows() : 0;

  auto objective = [&](const Vec& y) {
    return theta * cost.value(y, x) + eval_barrier(set, y, x).value;
  };
  auto reduced_grad = [&](const Vec& g) -> Vec {
    if (!A) return g;
    // Project onto null(A): g - A^T (A A^T)^{-1} A g.
    const Mat AAt = (*A) * A->transpose();
    return g - A->transpose() * AAt.ldlt().solve((*A) * g);
  };

  Vec y = y_start;
  BarrierSolveResult out;
  const double grad_scale = 1.0 + theta;  // gradients scale with theta
  for (int it = 0; it < max_iters; ++it) {
    const BarrierEval bar = eval_barrier(set, y, x);
    const Vec g = theta * cost.grad_y(y, x) + bar.grad;
    if (reduced_grad(g).norm() <= eps_inner * grad_scale * (1.0 + y.norm())) break;
    const Mat H = theta * cost.hess_yy(y, x) + bar.hess;

    Vec d(p);
    if (!A) {
      d = -H.ldlt().solve(g);
    } else {
      Mat K = Mat::Zero(p + ma, p + ma);
      K.topLeftCorner(p, p) = H;
      K.topRightCorner(p, ma) = A->transpose();
      K.bottomLeftCorner(ma, p) = *A;
      Vec rhs(p + ma);
      rhs.head(p) = -g;
      rhs.tail(ma) = -((*A) * y - gen->b);  // absorbs equality drift
      const Vec sol = K.fullPivLu().solve(rhs);
      d = sol.head(p);
    }
    if (!d.allFinite()) throw Error("barrier_inner_solve: singular KKT system");

    const double f0 = objective(y);
    const double slope = g.dot(d);
    double t = 1.0;
    while (t > 1e-14) {
      const Vec y_new = y + t * d;
      if (strictly_feasible(set, y_new, x, 1e-6) &&
          objective(y_new) <= f0 + 1e-4 * t * slope)
        break;
      t *= 0.5;
    }
    if (t <= 1e-14) {
      // Either converged to rounding or the search cannot stay feasible.
      if (reduced_grad(g).norm() <= 1e-6 * grad_scale * (1.0 + y.norm())) break;
      throw Error("barrier_inner_solve: line search underflow (cannot stay strictly feasible)");
    }
    y += t * d;
    ++out.newton_iters;
    if ((t * d).norm() <= 1e-15 * (1.0 + y.norm())) break;
  }
  out.y = y;
  return out;
}

SumtResult sumt(const FollowerCost& cost, const FollowerConstraintSet& set, const Vec& x,
                const BarrierParams& params, const Vec& y_start) {
  check(!is_unconstrained(set), "sumt: follower is unconstrained (use inner_gd)");
  params.validate();
  const double s_tilde = static_cast<double>(num_inequalities(set));
  SumtResult out;
  out.y = y_start;
  double theta = params.theta0;
  while (true) {
    auto solve = barrier_inner_solve(cost, set, x, theta, out.y, params.eps_inner,
                                     params.max_inner_iters);
    out.y = solve.y;  // warm start for the next barrier level
    ++out.inner_solves;
    out.theta_final = theta;
    if (theta >= s_tilde / params.eps) break;
    theta *= params.chi;
  }
  return out;
}

Vec barrier_best_response(const FollowerCost& cost, const FollowerConstraintSet& set,
                          const Vec& x, double theta, const Vec& y_start,
                          double eps_inner) {
  Vec y0 = y_start;
  if (!strictly_feasible(set, y0, x)) y0 = interior_point(set, static_cast<int>(y_start.size()), x);
  return barrier_inner_solve(cost, set, x, theta, y0, eps_inner, 500).y;
}

Vec interior_point(const FollowerConstraintSet& set, int dim, const Vec& x) {
  if (is_unconstrained(set)) return Vec::Zero(dim);
  if (const auto* r = std::get_if<Rectangle>(&set)) return 0.5 * (r->lower + r->upper);

  const auto& g = std::get<GeneralConstraints>(set);
  Vec y = Vec::Zero(dim);
  if (g.A.rows() > 0) {
    // Least-squares point on the affine set.
    y = g.A.transpose() * (g.A * g.A.transpose()).ldlt().solve(g.b);
  }
  auto worst = [&](const Vec& v) {
    double w = -std::numeric_limits<double>::infinity();
    for (const auto& h : g.inequalities) w = std::max(w, h.value(v, x));
    return w;
  };
  if (worst(y) < 0.0) return y;

  // Phase I: push the most violated constraints down along projected
  // gradients of a smooth hinge surrogate.
  const double delta = 0.1;
  Mat P = Mat::Identity(dim, dim);
  if (g.A.rows() > 0)
    P -= g.A.transpose() * (g.A * g.A.transpose()).ldlt().solve(g.A);
  double step = 1.0;
  for (int it = 0; it < 20000; ++it) {
    if (worst(y) < -1e-8) return y;
    Vec grad = Vec::Zero(dim);
    for (const auto& h : g.inequalities) {
      const double hv = h.value(y, x);
      const double w = 1.0 / (1.0 + std::exp(-hv / delta));  // soft indicator
      grad += w * h.grad_y(y, x);
    }
    const Vec d = P * grad;
    if (d.norm() <= 1e-14) break;
    const double w0 = worst(y);
    Vec y_new = y - step * d / d.norm();
    if (worst(y_new) < w0) {
      y = y_new;
      step = std::min(step * 1.5, 1e3);
    } else {
      step *= 0.5;
      if (step < 1e-14) break;
    }
  }
  check(worst(y) < 0.0, "interior_point: no strictly feasible point found (Slater?)");
  return y;
}

}  // namespace mlmf
