#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mlmf/game.hpp"
#include "mlmf/types.hpp"

namespace mlmf {

/// The eight appendix constants plus the best-response contraction modulus.
struct XiConstants {
  double xi1 = 0, xi2 = 0, xi3 = 0, xi4 = 0, xi5 = 0, xi6 = 0, xi7 = 0, xi8 = 0;
  double gamma_br = 0;  // Gamma = mu l_s1 / (mu + l_s1)
};

/// Verbatim appendix formulas from the problem dimensions (m, N, p) and the
/// declared smoothness constants.
XiConstants compute_constants(int m, int N, int p, const SmoothnessConstants& c);
XiConstants compute_constants(const GameSpec& spec);

/// Inner-loop setup shared by the bound and M(beta) computations.
struct InnerLoopRates {
  double alpha = 0;   // follower GD step
  double gamma = 0;   // J-H-I step
  double sigma2 = 0;  // consensus contraction factor
  double r_z = 1;     // rank bound of the stacked consensus error
  int p_M = 1;        // max cluster dimension
};

struct ContractionFactors {
  double C_T = 0, C_D = 0, C_B = 0;
  /// Per-step bases: 1-2*alpha*Gamma, m*sqrt(p_M)*(1-gamma*mu), sigma2.
  double base_T = 0, base_D = 0, base_B = 0;
};

ContractionFactors contraction_factors(int m, const SmoothnessConstants& c,
                                       const XiConstants& xi, const InnerLoopRates& rates,
                                       int T, int D, int B);

/// Proposition-1 lower bounds on (T, D, B). Infeasible denominators (a
/// non-contractive base) throw, naming the offending parameter, unless
/// collect_errors is set, in which case the corresponding bound is +inf and
/// the message is recorded.
struct IterationBounds {
  double T_min = 0, D_min = 0, B_min = 0;  // +inf when infeasible
  std::vector<std::string> notes;
  bool feasible() const;
};

IterationBounds iteration_bounds(int m, int N, const SmoothnessConstants& c,
                                 const XiConstants& xi, const InnerLoopRates& rates,
                                 double beta_M, double pi, bool collect_errors = false);

/// The 4x4 coupling matrix M(beta) of the constant-step analysis. Requires
/// declared m_theta and l_phi.
Mat build_M(double beta, int m, int N, const SmoothnessConstants& c, const XiConstants& xi,
            const ContractionFactors& cf);

/// G(beta) = sqrt(1 - 2 m_theta beta + l_phi^2 beta^2).
double step_contraction_G(double beta, double m_theta, double l_phi);

/// Smallest positive root of det(I4 - M(beta)) on (0, 2 m_theta / l_phi^2),
/// located by sign scan on a geometric grid plus bisection to 1e-10;
/// +infinity when no root exists below the monotonicity bound.
double beta_star(int m, int N, const SmoothnessConstants& c, const XiConstants& xi,
                 const ContractionFactors& cf);

/// Everything the harness serializes to theory.json.
struct TheoryReport {
  XiConstants xi;
  ContractionFactors c_factors;
  IterationBounds bounds;
  InnerLoopRates rates;
  double pi = 2.0;
  double beta_M = 1.0;
  double beta_s = 0.0;                  // +inf encoded as "inf" in JSON
  std::optional<double> beta_monotone;  // 2 m_theta / l_phi^2
  std::optional<double> rho_M_at_run_beta;
  bool gamma_interval_feasible = false;
  std::vector<std::string> warnings;
};

TheoryReport make_theory_report(const GameSpec& spec, const InnerLoopRates& rates, int T,
                                int D, int B, double beta_M, double pi,
                                std::optional<double> run_beta = {});

}  // namespace mlmf
