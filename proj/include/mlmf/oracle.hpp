#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mlmf/game.hpp"
#include "mlmf/sensitivity.hpp"
#include "mlmf/types.hpp"

namespace mlmf {

/// Affine model Psi(x) ~= A x + b probed from the exact pseudo-gradient
/// (exact for LQ games). Carries the monotonicity/Lipschitz data of the map.
struct AffinePseudoGradient {
  Mat A;
  Vec b;
  double m_theta = 0.0;  // lambda_min of the symmetric part
  double l_phi = 0.0;    // ||A||_2
};

AffinePseudoGradient probe_pseudo_gradient(const GameSpec& spec,
                                           const std::optional<BarrierContext>& barrier = {});

struct SePoint {
  Vec x;             // x^<> of the leaders' game
  Vec y;             // y*(x^<>)
  int iterations = 0;
  double fixed_point_residual = 0.0;  // ||x - P(x - beta Psi(x))||
};

/// Ground-truth Stackelberg equilibrium for LQ games: exact projected
/// pseudo-gradient iterations with a probe-derived safe step until
/// ||x_{k+1} - x_k|| <= tol * beta. Throws after 1e6 iterations without
/// convergence (possible monotonicity violation).
SePoint solve_se_lq(const GameSpec& spec, const Vec& x0, double tol = 1e-12,
                    const std::optional<BarrierContext>& barrier = {});

struct EquilibriumReport {
  bool followers_pass = false;
  bool leaders_pass = false;
  double worst_follower_residual = 0.0;
  double worst_leader_margin = 0.0;  // most negative deviation gain observed
  std::vector<std::string> failures;
  bool passed() const { return followers_pass && leaders_pass; }
};

/// Definition-1 check: follower stationarity at (x, y) plus sampled
/// unilateral leader deviations (each leader's cost cannot improve by more
/// than tol at any sampled feasible deviation).
EquilibriumReport verify_equilibrium(const GameSpec& spec, const Vec& x, const Vec& y,
                                     int samples, double tol, std::uint64_t rng_seed = 7,
                                     const std::optional<BarrierContext>& barrier = {});

/// Stacks the followers' exact best responses at x.
Vec best_response_stack(const GameSpec& spec, const Vec& x,
                        const std::optional<BarrierContext>& barrier = {});

}  // namespace mlmf
