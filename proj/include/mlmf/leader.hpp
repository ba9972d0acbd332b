#pragma once

#include <optional>
#include <vector>

#include "mlmf/game.hpp"
#include "mlmf/sensitivity.hpp"
#include "mlmf/types.hpp"

namespace mlmf {

/// Outer step-size schedule: diminishing beta_k = scale * (k+1)^{-b} with
/// b in (1/2, 1], or a constant beta.
class StepSchedule {
 public:
  static StepSchedule diminishing(double b, double scale = 1.0);
  static StepSchedule constant(double beta);

  double at(int k) const;
  bool is_constant() const { return constant_; }
  double exponent() const { return b_; }
  double scale() const { return scale_; }
  /// Largest step of the schedule (beta_M of the iteration bounds).
  double max_step() const { return constant_ ? scale_ : at(0); }

 private:
  bool constant_ = false;
  double b_ = 1.0;
  double scale_ = 1.0;
};

inline double step_at(const StepSchedule& schedule, int k) { return schedule.at(k); }

/// Eq.-(12) estimate: grad_xj theta(x, y_T) - sum_i S_i grad_{y_i} theta(x, y_T),
/// with S_i the extracted q_j x p_i consensus blocks (strip indexed by global
/// follower id). Never calls the follower oracles.
Vec hypergradient_estimate(const GameSpec& spec, int j, const Vec& x, const Vec& y_T,
                           const std::vector<Mat>& strip);

/// Exact hypergradient of leader j from the best-response oracle and the
/// implicit-differentiation Jacobian.
Vec hypergradient_exact(const GameSpec& spec, int j, const Vec& x,
                        const std::optional<BarrierContext>& barrier = {});

/// Stacked exact pseudo-gradient Psi*(x) (all leaders, canonical order).
Vec pseudo_gradient_exact(const GameSpec& spec, const Vec& x,
                          const std::optional<BarrierContext>& barrier = {});

/// Same but reusing a precomputed Jacobian/best-response bundle.
Vec pseudo_gradient_from_jacobian(const GameSpec& spec, const Vec& x,
                                  const BestResponseJacobian& jac);

/// x' = project(set, x - beta * grad).
Vec projected_step(const FeasibleSet& set, const Vec& x, const Vec& grad, double beta);

}  // namespace mlmf
