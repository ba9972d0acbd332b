#include "mlmf/theory.hpp"

#include <Eigen/LU>
#include <cmath>
#include <limits>

#include "mlmf/network.hpp"

namespace mlmf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
inline double sq(double v) { return v * v; }
}  // namespace

XiConstants compute_constants(int m, int N, int p, const SmoothnessConstants& c) {
  check(m >= 1 && N >= 1 && p >= 1, "compute_constants: need m, N, p >= 1");
  c.validate();
  const double mu2 = sq(c.mu);
  const double mu4 = sq(mu2);
  const double k2 = sq(c.kappa());
  XiConstants xi;
  xi.xi1 = 6.0 * sq(static_cast<double>(m)) * sq(static_cast<double>(p)) * N * sq(c.l_s1) *
               sq(c.l_s2) / mu4 +
           6.0 * m * p * sq(c.l_s2) / mu2;
  xi.xi2 = xi.xi1 * N * k2 + xi.xi1 * N;
  xi.xi3 = 3.0 * m * sq(c.l_theta1) +
           3.0 * std::pow(static_cast<double>(m), 3) * sq(static_cast<double>(N)) * p *
               sq(c.l_s1) * sq(c.l_theta1) / mu2;
  xi.xi4 = 3.0 * sq(static_cast<double>(N)) * sq(c.l_theta0) * xi.xi2 + xi.xi3;
  xi.xi5 = xi.xi3 + 3.0 * sq(static_cast<double>(N)) * sq(c.l_theta0) * xi.xi1;
  xi.xi6 = 2.0 * m * sq(c.l_theta0) +
           2.0 * sq(static_cast<double>(m)) * std::pow(static_cast<double>(N), 3) * p *
               sq(c.l_s1) * sq(c.l_theta0) / mu2;
  xi.xi7 = 16.0 * xi.xi1 * N * k2 / (3.0 * m) + 2.0 * xi.xi1 * N / (3.0 * m);
  xi.xi8 = 2.0 * N * k2 + xi.xi7 + 8.0 * m * xi.xi7;
  xi.gamma_br = c.mu * c.l_s1 / (c.mu + c.l_s1);
  return xi;
}

XiConstants compute_constants(const GameSpec& spec) {
  check(spec.finalized(), "compute_constants: spec not finalized");
  return compute_constants(spec.num_leaders, spec.num_followers, spec.total_follower_dim(),
                           spec.constants);
}

ContractionFactors contraction_factors(int m, const SmoothnessConstants& c,
                                       const XiConstants& xi, const InnerLoopRates& rates,
                                       int T, int D, int B) {
  check(T >= 0 && D >= 0 && B >= 0, "contraction_factors: budgets must be >= 0");
  check(rates.alpha > 0.0, "contraction_factors: alpha must be > 0");
  check(rates.gamma > 0.0, "contraction_factors: gamma must be > 0");
  ContractionFactors cf;
  cf.base_T = 1.0 - 2.0 * rates.alpha * xi.gamma_br;
  cf.base_D = m * std::sqrt(static_cast<double>(rates.p_M)) * (1.0 - rates.gamma * c.mu);
  cf.base_B = rates.sigma2;
  cf.C_T = std::pow(cf.base_T, T);
  cf.C_D = std::pow(cf.base_D, 2 * D);
  cf.C_B = rates.r_z * std::pow(rates.sigma2, 2 * B);
  return cf;
}

bool IterationBounds::feasible() const {
  return std::isfinite(T_min) && std::isfinite(D_min) && std::isfinite(B_min);
}

IterationBounds iteration_bounds(int m, int N, const SmoothnessConstants& c,
                                 const XiConstants& xi, const InnerLoopRates& rates,
                                 double beta_M, double pi, bool collect_errors) {
  check(pi > 1.0, "iteration_bounds: pi must be > 1");
  check(beta_M > 0.0 && beta_M <= 1.0, "iteration_bounds: beta_M must be in (0, 1]");
  IterationBounds out;
  auto fail = [&](double& slot, const std::string& msg) {
    if (!collect_errors) throw Error("iteration_bounds: " + msg);
    slot = kInf;
    out.notes.push_back(msg);
  };

  const double bm2 = sq(beta_M);
  const double lth0_2 = sq(c.l_theta0);

  const double num_T = std::log(2.0 * pi + 16.0 * pi * xi.xi3 / m + 128.0 * pi * xi.xi1 / 3.0 +
                                2.0 * bm2 * pi * xi.xi5 * xi.xi8);
  const double base_T = 1.0 - 2.0 * rates.alpha * xi.gamma_br;
  if (base_T <= 0.0) {
    // One exact step; any T >= 1 satisfies the bound.
    out.T_min = 1.0;
  } else if (base_T >= 1.0) {
    fail(out.T_min, "alpha is not contractive (1 - 2*alpha*Gamma >= 1)");
  } else {
    out.T_min = std::ceil(num_T / std::log(1.0 / base_T));
  }

  const double num_D =
      std::log(2.0 * pi + 16.0 * m * pi + 36.0 * m * sq(static_cast<double>(N)) * pi * bm2 *
                                              lth0_2 * xi.xi8);
  const double base_D = m * std::sqrt(static_cast<double>(rates.p_M)) * (1.0 - rates.gamma * c.mu);
  if (base_D <= 0.0) {
    out.D_min = 1.0;
  } else if (base_D >= 1.0) {
    fail(out.D_min,
         "gamma is not contractive in the Frobenius bound (m*sqrt(p_M)*(1-gamma*mu) >= 1)");
  } else {
    out.D_min = std::ceil(num_D / (2.0 * std::log(1.0 / base_D)));
  }

  const double num_B =
      std::log(2.0 * pi + 36.0 * sq(static_cast<double>(N)) * pi * bm2 * lth0_2 * xi.xi8);
  const double base_B = rates.r_z * rates.sigma2;
  if (base_B >= 1.0) {
    fail(out.B_min, "r_z * sigma2 >= 1: the B bound's log denominator is not positive");
  } else {
    out.B_min = std::ceil(num_B / (2.0 * std::log(1.0 / base_B)));
  }
  return out;
}

double step_contraction_G(double beta, double m_theta, double l_phi) {
  const double g2 = 1.0 - 2.0 * m_theta * beta + sq(l_phi) * sq(beta);
  check(g2 >= 0.0, "step_contraction_G: beta outside the real domain of G");
  return std::sqrt(g2);
}

Mat build_M(double beta, int m, int N, const SmoothnessConstants& c, const XiConstants& xi,
            const ContractionFactors& cf) {
  check(beta >= 0.0, "build_M: beta must be >= 0");
  check(c.m_theta.has_value() && c.l_phi.has_value(),
        "build_M: m_theta and l_phi must be declared");
  const double kappa = c.kappa();
  const double lth0_2 = sq(c.l_theta0);
  const double Ct_t = std::sqrt(xi.xi5 * cf.C_T);
  const double Cd_t = std::sqrt(18.0 * m * sq(static_cast<double>(N)) * lth0_2 * cf.C_D);
  const double Cb_t = std::sqrt(18.0 * sq(static_cast<double>(N)) * lth0_2 * cf.C_B);
  const double G = step_contraction_G(beta, *c.m_theta, *c.l_phi);

  Mat M(4, 4);
  M(0, 0) = G;
  M(0, 1) = beta * Ct_t;
  M(0, 2) = beta * Cd_t;
  M(0, 3) = beta * Cb_t;

  const double k2N = kappa * std::sqrt(2.0 * N);
  M(1, 0) = kappa * std::sqrt(2.0 * N * xi.xi4) * beta;
  M(1, 1) = std::sqrt(2.0 * cf.C_T) + k2N * Ct_t * beta;
  M(1, 2) = k2N * beta * Cd_t;
  M(1, 3) = k2N * beta * Cb_t;

  const double s7 = std::sqrt(xi.xi7);
  M(2, 0) = std::sqrt(xi.xi4 * xi.xi7) * beta;
  M(2, 1) = s7 * Ct_t * beta + 4.0 * std::sqrt(xi.xi3 * cf.C_T / m);
  M(2, 2) = s7 * Cd_t * beta + std::sqrt(2.0 * cf.C_D);
  M(2, 3) = s7 * beta * Cb_t;

  const double s2m7 = std::sqrt(2.0 * m * xi.xi7);
  M(3, 0) = 2.0 * std::sqrt(2.0 * m * xi.xi4 * xi.xi7) * beta;
  M(3, 1) = 8.0 * std::sqrt(2.0 * xi.xi3 * cf.C_T) + 2.0 * s2m7 * beta * Ct_t;
  M(3, 2) = 4.0 * std::sqrt(m * cf.C_D) + 2.0 * s2m7 * beta * Cd_t;
  M(3, 3) = std::sqrt(2.0 * cf.C_B) + 2.0 * s2m7 * beta * Cb_t;

  check(M.allFinite(), "build_M: non-finite entries");
  return M;
}

double beta_star(int m, int N, const SmoothnessConstants& c, const XiConstants& xi,
                 const ContractionFactors& cf) {
  check(c.m_theta.has_value() && c.l_phi.has_value(),
        "beta_star: m_theta and l_phi must be declared");
  check(cf.C_T < 0.5 && cf.C_D < 0.5 && cf.C_B < 0.5,
        "beta_star: needs C_T, C_D, C_B < 1/2 so that I - M(0) is nonsingular off the "
        "first coordinate");
  const double beta_max = 2.0 * (*c.m_theta) / sq(*c.l_phi);
  auto det_at = [&](double beta) {
    const Mat M = build_M(beta, m, N, c, xi, cf);
    const double d = (Mat::Identity(4, 4) - M).determinant();
    check(std::isfinite(d), "beta_star: non-finite determinant");
    return d;
  };

  // det(I - M(0)) = 0 exactly (G(0) = 1); scan upward from a tiny positive
  // beta where the determinant is positive.
  const double lo0 = beta_max * 1e-12;
  const int grid = 4096;
  double prev_beta = lo0;
  double prev_det = det_at(lo0);
  if (prev_det <= 0.0) return lo0;  // degenerate: root at (numerically) zero
  const double ratio = std::pow((beta_max * (1.0 - 1e-12)) / lo0, 1.0 / grid);
  double beta = lo0;
  for (int t = 1; t <= grid; ++t) {
    beta *= ratio;
    const double d = det_at(beta);
    if (d <= 0.0) {
      // Bisection on [prev_beta, beta].
      double a = prev_beta, b = beta;
      for (int it = 0; it < 200 && (b - a) > 1e-10 * std::max(1.0, b); ++it) {
        const double mid = 0.5 * (a + b);
        if (det_at(mid) > 0.0)
          a = mid;
        else
          b = mid;
      }
      return 0.5 * (a + b);
    }
    prev_beta = beta;
    prev_det = d;
  }
  return kInf;  // no root below the monotonicity bound
}

TheoryReport make_theory_report(const GameSpec& spec, const InnerLoopRates& rates, int T,
                                int D, int B, double beta_M, double pi,
                                std::optional<double> run_beta) {
  check(spec.finalized(), "make_theory_report: spec not finalized");
  const int m = spec.num_leaders;
  const int N = spec.num_followers;
  TheoryReport report;
  report.rates = rates;
  report.pi = pi;
  report.beta_M = beta_M;
  report.xi = compute_constants(spec);
  report.c_factors = contraction_factors(m, spec.constants, report.xi, rates, T, D, B);
  report.bounds = iteration_bounds(m, N, spec.constants, report.xi, rates, beta_M, pi,
                                   /*collect_errors=*/true);
  for (const auto& n : report.bounds.notes) report.warnings.push_back("bounds: " + n);

  const double lower = (1.0 - 1.0 / std::sqrt(static_cast<double>(m) * rates.p_M)) /
                       spec.constants.mu;
  report.gamma_interval_feasible = rates.gamma > lower && report.c_factors.base_D < 1.0;
  if (!report.gamma_interval_feasible)
    report.warnings.push_back(
        "gamma outside the Frobenius-bound interval; relying on the per-step 2-norm "
        "contraction instead");

  if (spec.constants.m_theta && spec.constants.l_phi) {
    report.beta_monotone = 2.0 * (*spec.constants.m_theta) / sq(*spec.constants.l_phi);
    if (report.c_factors.C_T < 0.5 && report.c_factors.C_D < 0.5 &&
        report.c_factors.C_B < 0.5) {
      report.beta_s = beta_star(m, N, spec.constants, report.xi, report.c_factors);
    } else {
      report.beta_s = 0.0;
      report.warnings.push_back(
          "budgets too small for the constant-step certificate (some C >= 1/2); beta_s "
          "not computed");
    }
    if (run_beta) {
      const Mat M = build_M(*run_beta, m, N, spec.constants, report.xi, report.c_factors);
      report.rho_M_at_run_beta = spectral_radius(M);
    }
  } else {
    report.warnings.push_back(
        "m_theta / l_phi not declared; constant-step certificate skipped");
  }

  if (report.bounds.feasible()) {
    if (T < report.bounds.T_min || D < report.bounds.D_min || B < report.bounds.B_min)
      report.warnings.push_back(
          "configured budgets are below the Proposition-1 minima (conservative bounds); "
          "run proceeds");
  }
  return report;
}

}  // namespace mlmf
