#pragma once

#include <optional>

#include "mlmf/game.hpp"
#include "mlmf/types.hpp"

namespace mlmf {

/// Barrier (SUMT) schedule shared by constrained followers.
struct BarrierParams {
  double theta0 = 1.0;  // initial barrier parameter
  double chi = 10.0;    // growth factor, > 1
  double eps = 1e-6;    // target gap; loop stops once theta >= s~/eps
  double eps_inner = 1e-10;  // reduced-gradient tolerance of each inner solve
  int max_inner_iters = 200;
  void validate() const;
};

/// Per-follower mutable state across outer iterations: the decision doubles
/// as the warm-start buffer (y_{0,k} = y_{T,k-1}).
struct FollowerState {
  Vec y;
  double theta = 1.0;  // current barrier parameter (constrained mode)
};

/// T steps of gradient descent y <- y - alpha * grad s(y, x). Requires
/// 0 < alpha <= 2/(mu + l_s1) to carry the contraction guarantee; throws with
/// the iterate index if a gradient turns non-finite.
Vec inner_gd(const FollowerCost& cost, const Vec& x, const Vec& y0, int T, double alpha);

/// Step size 2/(mu + l_s1), the upper end of the admissible interval.
inline double default_inner_step(const SmoothnessConstants& c) {
  return 2.0 / (c.mu + c.l_s1);
}

/// Oracle-quality unconstrained minimizer of s(., x): uses the spec-attached
/// closed form when present, otherwise damped Newton to stationarity
/// ||grad|| <= 1e-9 (1 + ||y||). Throws when it cannot converge.
Vec best_response_exact(const GameSpec& spec, int i, const Vec& x);

/// Same as above but starting from an explicit point (no spec needed).
Vec best_response_exact(const FollowerCost& cost, const Vec& x, const Vec& y_start);

struct BarrierSolveResult {
  Vec y;
  int newton_iters = 0;
};

/// Minimizes theta * s(y, x) + phi(y, x) over {A y = b} by projected Newton
/// with backtracking (factor 1/2, Armijo 1e-4); every iterate stays strictly
/// feasible. Throws if y_start is infeasible or the line search underflows.
BarrierSolveResult barrier_inner_solve(const FollowerCost& cost,
                                       const FollowerConstraintSet& set, const Vec& x,
                                       double theta, const Vec& y_start,
                                       double eps_inner = 1e-10, int max_iters = 200);

struct SumtResult {
  Vec y;
  double theta_final = 0.0;
  int inner_solves = 0;
};

/// Algorithm-2 loop: barrier_inner_solve at theta, warm start, stop after the
/// solve at the first theta >= s~/eps, else theta <- chi * theta.
/// Unconstrained sets are rejected (callers use inner_gd / best_response_exact).
SumtResult sumt(const FollowerCost& cost, const FollowerConstraintSet& set, const Vec& x,
                const BarrierParams& params, const Vec& y_start);

/// Constrained best response at a FIXED barrier parameter theta: the
/// y*_theta(x) object of the barrier path (used by sensitivity and oracles).
Vec barrier_best_response(const FollowerCost& cost, const FollowerConstraintSet& set,
                          const Vec& x, double theta, const Vec& y_start,
                          double eps_inner = 1e-12);

/// A strictly feasible interior point of the set (midpoint for rectangles,
/// phase-I style search otherwise). Throws when none is found.
Vec interior_point(const FollowerConstraintSet& set, int dim, const Vec& x);

}  // namespace mlmf
