#include "mlmf/leader.hpp"

#include <cmath>

#include "mlmf/follower.hpp"

namespace mlmf {

StepSchedule StepSchedule::diminishing(double b, double scale) {
  check(b > 0.5 && b <= 1.0, "StepSchedule: diminishing exponent must be in (1/2, 1]");
  check(scale > 0.0, "StepSchedule: scale must be > 0");
  StepSchedule s;
  s.constant_ = false;
  s.b_ = b;
  s.scale_ = scale;
  return s;
}

StepSchedule StepSchedule::constant(double beta) {
  check(beta > 0.0, "StepSchedule: constant beta must be > 0");
  StepSchedule s;
  s.constant_ = true;
  s.scale_ = beta;
  return s;
}

double StepSchedule::at(int k) const {
  check(k >= 0, "StepSchedule: k must be >= 0");
  if (constant_) return scale_;
  return scale_ * std::pow(static_cast<double>(k) + 1.0, -b_);
}

Vec hypergradient_estimate(const GameSpec& spec, int j, const Vec& x, const Vec& y_T,
                           const std::vector<Mat>& strip) {
  check(j >= 0 && j < spec.num_leaders, "hypergradient_estimate: leader id out of range");
  check_dim(y_T.size(), spec.total_follower_dim(), "hypergradient_estimate: y_T");
  check_dim(static_cast<Eigen::Index>(strip.size()), spec.num_followers,
            "hypergradient_estimate: strip");
  const auto& cost = spec.leader_costs[j];
  Vec grad = cost.grad_xj(x, y_T);
  check_dim(grad.size(), spec.leader_dims[j], "hypergradient_estimate: grad_xj");
  const Vec gy = cost.grad_y(x, y_T);
  check_dim(gy.size(), spec.total_follower_dim(), "hypergradient_estimate: grad_y");
  for (int i = 0; i < spec.num_followers; ++i) {
    check_dim(strip[i].rows(), spec.leader_dims[j], "hypergradient_estimate: strip block rows");
    check_dim(strip[i].cols(), spec.follower_dims[i], "hypergradient_estimate: strip block cols");
    grad.noalias() -= strip[i] * gy.segment(spec.follower_offset(i), spec.follower_dims[i]);
  }
  return grad;
}

Vec hypergradient_exact(const GameSpec& spec, int j, const Vec& x,
                        const std::optional<BarrierContext>& barrier) {
  const BestResponseJacobian jac = exact_best_response_jacobian(spec, x, barrier);
  Vec y(spec.total_follower_dim());
  for (int i = 0; i < spec.num_followers; ++i)
    y.segment(spec.follower_offset(i), spec.follower_dims[i]) = jac.y_star[i];
  const auto& cost = spec.leader_costs[j];
  Vec grad = cost.grad_xj(x, y);
  const Vec gy = cost.grad_y(x, y);
  for (int i = 0; i < spec.num_followers; ++i)
    grad.noalias() += jac.block[i][j] * gy.segment(spec.follower_offset(i), spec.follower_dims[i]);
  return grad;
}

Vec pseudo_gradient_from_jacobian(const GameSpec& spec, const Vec& x,
                                  const BestResponseJacobian& jac) {
  Vec y(spec.total_follower_dim());
  for (int i = 0; i < spec.num_followers; ++i)
    y.segment(spec.follower_offset(i), spec.follower_dims[i]) = jac.y_star[i];
  Vec psi(spec.total_leader_dim());
  for (int j = 0; j < spec.num_leaders; ++j) {
    const auto& cost = spec.leader_costs[j];
    Vec grad = cost.grad_xj(x, y);
    const Vec gy = cost.grad_y(x, y);
    for (int i = 0; i < spec.num_followers; ++i)
      grad.noalias() +=
          jac.block[i][j] * gy.segment(spec.follower_offset(i), spec.follower_dims[i]);
    psi.segment(spec.leader_offset(j), spec.leader_dims[j]) = grad;
  }
  return psi;
}

Vec pseudo_gradient_exact(const GameSpec& spec, const Vec& x,
                          const std::optional<BarrierContext>& barrier) {
  return pseudo_gradient_from_jacobian(spec, x, exact_best_response_jacobian(spec, x, barrier));
}

Vec projected_step(const FeasibleSet& set, const Vec& x, const Vec& grad, double beta) {
  check(beta > 0.0, "projected_step: beta must be > 0");
  return project(set, x - beta * grad);
}

}  // namespace mlmf
