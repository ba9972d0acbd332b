#include "mlmf/game.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>

namespace mlmf {

// ---------------------------------------------------------------------------
// FeasibleSet
// ---------------------------------------------------------------------------

FeasibleSet::FeasibleSet(Box b) : set_(std::move(b)) {
  const auto& box = std::get<Box>(set_);
  check_dim(box.upper.size(), box.lower.size(), "FeasibleSet::box");
  check((box.lower.array() <= box.upper.array()).all(),
        "FeasibleSet::box: lower > upper in some coordinate");
}

FeasibleSet::FeasibleSet(Ball b) : set_(std::move(b)) {
  check(std::get<Ball>(set_).radius > 0.0, "FeasibleSet::ball: radius must be > 0");
}

FeasibleSet FeasibleSet::box(Vec lower, Vec upper) {
  return FeasibleSet(Box{std::move(lower), std::move(upper)});
}

FeasibleSet FeasibleSet::ball(Vec center, double radius) {
  return FeasibleSet(Ball{std::move(center), radius});
}

int FeasibleSet::dim() const {
  return std::visit(
      [](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, WholeSpace>) return s.dim;
        else if constexpr (std::is_same_v<T, Box>) return static_cast<int>(s.lower.size());
        else return static_cast<int>(s.center.size());
      },
      set_);
}

bool FeasibleSet::contains(const Vec& v, double tol) const {
  return std::visit(
      [&](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, WholeSpace>) {
          return v.size() == s.dim;
        } else if constexpr (std::is_same_v<T, Box>) {
          return v.size() == s.lower.size() &&
                 (v.array() >= s.lower.array() - tol).all() &&
                 (v.array() <= s.upper.array() + tol).all();
        } else {
          return v.size() == s.center.size() && (v - s.center).norm() <= s.radius + tol;
        }
      },
      set_);
}

Vec project(const FeasibleSet& set, const Vec& v) {
  check_dim(v.size(), set.dim(), "project");
  return std::visit(
      [&](const auto& s) -> Vec {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, WholeSpace>) {
          return v;
        } else if constexpr (std::is_same_v<T, Box>) {
          return v.cwiseMax(s.lower).cwiseMin(s.upper);
        } else {
          const Vec d = v - s.center;
          const double n = d.norm();
          if (n <= s.radius) return v;
          return s.center + d * (s.radius / n);
        }
      },
      set.raw());
}

// ---------------------------------------------------------------------------
// Follower constraint sets
// ---------------------------------------------------------------------------

bool is_unconstrained(const FollowerConstraintSet& set) {
  return std::holds_alternative<Unconstrained>(set);
}

int num_inequalities(const FollowerConstraintSet& set) {
  if (std::holds_alternative<Unconstrained>(set)) return 0;
  if (const auto* r = std::get_if<Rectangle>(&set))
    return 2 * static_cast<int>(r->lower.size());
  return static_cast<int>(std::get<GeneralConstraints>(set).inequalities.size());
}

namespace {

BarrierEval rectangle_barrier(const Rectangle& r, const Vec& y) {
  check_dim(y.size(), r.lower.size(), "eval_barrier(rectangle)");
  BarrierEval out;
  const Eigen::Index p = y.size();
  out.grad = Vec::Zero(p);
  out.hess = Mat::Zero(p, p);
  for (Eigen::Index t = 0; t < p; ++t) {
    const double lo = y[t] - r.lower[t];
    const double hi = r.upper[t] - y[t];
    check(lo > 0.0 && hi > 0.0, "eval_barrier: point not strictly inside rectangle");
    out.value += -std::log(lo) - std::log(hi);
    out.grad[t] = -1.0 / lo + 1.0 / hi;
    out.hess(t, t) = 1.0 / (lo * lo) + 1.0 / (hi * hi);
  }
  return out;
}

BarrierEval general_barrier(const GeneralConstraints& g, const Vec& y, const Vec& x) {
  BarrierEval out;
  const Eigen::Index p = y.size();
  out.grad = Vec::Zero(p);
  out.hess = Mat::Zero(p, p);
  for (const auto& h : g.inequalities) {
    const double hv = h.value(y, x);
    check(hv < 0.0, "eval_barrier: inequality not strictly satisfied");
    const Vec gh = h.grad_y(y, x);
    out.value += -std::log(-hv);
    out.grad += gh / (-hv);
    out.hess += gh * gh.transpose() / (hv * hv) + h.hess_yy(y, x) / (-hv);
  }
  return out;
}

}  // namespace

BarrierEval eval_barrier(const FollowerConstraintSet& set, const Vec& y, const Vec& x) {
  if (std::holds_alternative<Unconstrained>(set)) {
    BarrierEval out;
    out.grad = Vec::Zero(y.size());
    out.hess = Mat::Zero(y.size(), y.size());
    return out;
  }
  if (const auto* r = std::get_if<Rectangle>(&set)) return rectangle_barrier(*r, y);
  return general_barrier(std::get<GeneralConstraints>(set), y, x);
}

Mat barrier_cross_jac(const FollowerConstraintSet& set, int j, int qj, const Vec& y,
                      const Vec& x) {
  Mat out = Mat::Zero(qj, y.size());
  const auto* g = std::get_if<GeneralConstraints>(&set);
  if (g == nullptr) return out;  // rectangles do not depend on x
  for (const auto& h : g->inequalities) {
    if (!h.grad_xj && !h.cross_jac) continue;
    const double hv = h.value(y, x);
    check(hv < 0.0, "barrier_cross_jac: inequality not strictly satisfied");
    const Vec gy = h.grad_y(y, x);
    if (h.grad_xj) {
      const Vec gx = h.grad_xj(j, y, x);
      out += gx * gy.transpose() / (hv * hv);
    }
    if (h.cross_jac) out += h.cross_jac(j, y, x) / (-hv);
  }
  return out;
}

bool strictly_feasible(const FollowerConstraintSet& set, const Vec& y, const Vec& x,
                       double eq_tol) {
  if (std::holds_alternative<Unconstrained>(set)) return true;
  if (const auto* r = std::get_if<Rectangle>(&set)) {
    return (y.array() > r->lower.array()).all() && (y.array() < r->upper.array()).all();
  }
  const auto& g = std::get<GeneralConstraints>(set);
  for (const auto& h : g.inequalities)
    if (h.value(y, x) >= 0.0) return false;
  if (g.A.rows() > 0 && (g.A * y - g.b).norm() > eq_tol) return false;
  return true;
}

// ---------------------------------------------------------------------------
// SmoothnessConstants / GameSpec
// ---------------------------------------------------------------------------

void SmoothnessConstants::validate() const {
  check(mu > 0.0, "SmoothnessConstants: mu must be > 0");
  check(l_theta0 > 0.0 && l_theta1 > 0.0 && l_s0 > 0.0 && l_s1 > 0.0,
        "SmoothnessConstants: Lipschitz constants must be > 0");
  check(l_s2 >= 0.0, "SmoothnessConstants: l_s2 must be >= 0");
  if (m_theta) check(*m_theta > 0.0, "SmoothnessConstants: m_theta must be > 0");
  if (l_phi) check(*l_phi > 0.0, "SmoothnessConstants: l_phi must be > 0");
}

void GameSpec::finalize() {
  check(num_leaders >= 1 && num_followers >= 1, "GameSpec: need m >= 1 and N >= 1");
  check_dim(static_cast<Eigen::Index>(leader_dims.size()), num_leaders, "GameSpec::leader_dims");
  check_dim(static_cast<Eigen::Index>(follower_dims.size()), num_followers,
            "GameSpec::follower_dims");
  check_dim(static_cast<Eigen::Index>(cluster_of.size()), num_followers, "GameSpec::cluster_of");
  check_dim(static_cast<Eigen::Index>(leader_costs.size()), num_leaders, "GameSpec::leader_costs");
  check_dim(static_cast<Eigen::Index>(follower_costs.size()), num_followers,
            "GameSpec::follower_costs");
  check_dim(static_cast<Eigen::Index>(leader_sets.size()), num_leaders, "GameSpec::leader_sets");
  check_dim(static_cast<Eigen::Index>(follower_sets.size()), num_followers,
            "GameSpec::follower_sets");
  constants.validate();

  q_offset_.assign(num_leaders, 0);
  q_total_ = 0;
  for (int j = 0; j < num_leaders; ++j) {
    check(leader_dims[j] >= 1, "GameSpec: leader dims must be >= 1");
    check_dim(leader_sets[j].dim(), leader_dims[j], "GameSpec::leader_sets[" + std::to_string(j) + "]");
    q_offset_[j] = q_total_;
    q_total_ += leader_dims[j];
  }
  p_offset_.assign(num_followers, 0);
  p_total_ = 0;
  for (int i = 0; i < num_followers; ++i) {
    check(follower_dims[i] >= 1, "GameSpec: follower dims must be >= 1");
    p_offset_[i] = p_total_;
    p_total_ += follower_dims[i];
  }

  clusters_.assign(num_leaders, {});
  for (int i = 0; i < num_followers; ++i) {
    const int j = cluster_of[i];
    check(j >= 0 && j < num_leaders,
          "GameSpec: cluster_of[" + std::to_string(i) + "] out of range");
    clusters_[j].push_back(i);  // ascending: i grows monotonically
  }
  cluster_dim_.assign(num_leaders, 0);
  p_max_cluster_ = 0;
  int covered = 0;
  for (int j = 0; j < num_leaders; ++j) {
    covered += static_cast<int>(clusters_[j].size());
    for (int i : clusters_[j]) cluster_dim_[j] += follower_dims[i];
    p_max_cluster_ = std::max(p_max_cluster_, cluster_dim_[j]);
  }
  check(covered == num_followers, "GameSpec: cluster partition does not cover all followers");

  if (!exact_best_response.empty())
    check_dim(static_cast<Eigen::Index>(exact_best_response.size()), num_followers,
              "GameSpec::exact_best_response");
  finalized_ = true;
}

bool GameSpec::has_constrained_followers() const {
  for (const auto& s : follower_sets)
    if (!is_unconstrained(s)) return true;
  return false;
}

// ---------------------------------------------------------------------------
// validate_assumptions
// ---------------------------------------------------------------------------

AssumptionReport validate_assumptions(const GameSpec& spec, int samples,
                                      std::uint64_t rng_seed) {
  check(spec.finalized(), "validate_assumptions: spec not finalized");
  check(samples >= 1, "validate_assumptions: samples must be >= 1");
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_vec = [&](int n) {
    Vec v(n);
    for (int t = 0; t < n; ++t) v[t] = gauss(rng);
    return v;
  };

  AssumptionReport report;
  report.min_hessian_eigenvalue = std::numeric_limits<double>::infinity();
  const double tol = 1e-9;
  const double mu = spec.constants.mu;

  for (int s = 0; s < samples; ++s) {
    const Vec x = random_vec(spec.total_leader_dim());
    for (int i = 0; i < spec.num_followers; ++i) {
      Vec y = random_vec(spec.follower_dims[i]);
      // Constrained followers are only assumed strongly convex on the
      // interior; sample a strictly feasible point there.
      if (const auto* r = std::get_if<Rectangle>(&spec.follower_sets[i])) {
        const Vec u = (y.array().tanh() * 0.49 + 0.5).matrix();
        y = r->lower + (r->upper - r->lower).cwiseProduct(u);
      } else if (!is_unconstrained(spec.follower_sets[i])) {
        continue;  // general sets: no generic interior sampler
      }
      const Mat H = spec.follower_costs[i].hess_yy(y, x);
      Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (H + H.transpose()));
      const double lmin = eig.eigenvalues().minCoeff();
      report.min_hessian_eigenvalue = std::min(report.min_hessian_eigenvalue, lmin);
      if ((H - H.transpose()).norm() > tol * (1.0 + H.norm()))
        report.violations.push_back("follower " + std::to_string(i) +
                                    ": Hessian not symmetric at a sample");
      if (lmin < mu - 1e-7 * (1.0 + std::abs(mu)))
        report.violations.push_back(
            "follower " + std::to_string(i) + ": sampled Hessian eigenvalue " +
            std::to_string(lmin) + " below declared mu " + std::to_string(mu));

      // Sampled Lipschitz ratio of grad s over (y, x) perturbations.
      const Vec dy = random_vec(spec.follower_dims[i]) * 1e-3;
      const Vec dx = random_vec(spec.total_leader_dim()) * 1e-3;
      const Vec g0 = spec.follower_costs[i].grad_y(y, x);
      const Vec g1 = spec.follower_costs[i].grad_y(y + dy, x + dx);
      const double dz = std::sqrt(dy.squaredNorm() + dx.squaredNorm());
      if (dz > 0.0) {
        const double ratio = (g1 - g0).norm() / dz;
        report.max_grad_lipschitz_ratio = std::max(report.max_grad_lipschitz_ratio, ratio);
        if (ratio > spec.constants.l_s1 * (1.0 + 1e-6) + 1e-9)
          report.violations.push_back(
              "follower " + std::to_string(i) + ": sampled grad Lipschitz ratio " +
              std::to_string(ratio) + " exceeds declared l_s1 " +
              std::to_string(spec.constants.l_s1));
      }
    }
  }
  return report;
}

}  // namespace mlmf
