#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "mlmf/types.hpp"

namespace mlmf {

// ---------------------------------------------------------------------------
// Feasible sets with closed-form Euclidean projections.
// ---------------------------------------------------------------------------

struct WholeSpace {
  int dim = 0;
};

struct Box {
  Vec lower;
  Vec upper;
};

struct Ball {
  Vec center;
  double radius = 1.0;
};

/// Convex feasible set restricted to variants with closed-form projections,
/// so that projected updates stay exact.
class FeasibleSet {
 public:
  FeasibleSet() : set_(WholeSpace{0}) {}
  explicit FeasibleSet(WholeSpace w) : set_(w) {}
  explicit FeasibleSet(Box b);
  explicit FeasibleSet(Ball b);

  static FeasibleSet whole_space(int dim) { return FeasibleSet(WholeSpace{dim}); }
  static FeasibleSet box(Vec lower, Vec upper);
  static FeasibleSet ball(Vec center, double radius);

  int dim() const;
  bool contains(const Vec& v, double tol = 1e-12) const;
  bool is_whole_space() const { return std::holds_alternative<WholeSpace>(set_); }

  const std::variant<WholeSpace, Box, Ball>& raw() const { return set_; }

 private:
  std::variant<WholeSpace, Box, Ball> set_;
};

/// Euclidean projection onto the set. Throws on dimension mismatch.
Vec project(const FeasibleSet& set, const Vec& v);

// ---------------------------------------------------------------------------
// Follower constraint sets (barrier-method regime).
// ---------------------------------------------------------------------------

struct Unconstrained {};

/// Componentwise bounds l < y < u handled by the closed-form log barrier.
struct Rectangle {
  Vec lower;
  Vec upper;
};

/// Smooth convex inequality h(y, x) <= 0. Hessians are w.r.t. y; the optional
/// x-derivatives default to zero maps (constraints independent of x).
struct InequalityOracle {
  std::function<double(const Vec& y, const Vec& x)> value;
  std::function<Vec(const Vec& y, const Vec& x)> grad_y;
  std::function<Mat(const Vec& y, const Vec& x)> hess_yy;
  // q_j x 1 gradient of h w.r.t. leader block j, and q_j x p_i cross block
  // d/dx^j of grad_y h; empty functions mean identically zero.
  std::function<Vec(int j, const Vec& y, const Vec& x)> grad_xj;
  std::function<Mat(int j, const Vec& y, const Vec& x)> cross_jac;
};

/// General set {A y = b, h_r(y, x) <= 0}. A must have full row rank and a
/// strictly feasible point must exist.
struct GeneralConstraints {
  Mat A;  // may be 0 x p (no equalities)
  Vec b;
  std::vector<InequalityOracle> inequalities;
};

using FollowerConstraintSet = std::variant<Unconstrained, Rectangle, GeneralConstraints>;

bool is_unconstrained(const FollowerConstraintSet& set);
int num_inequalities(const FollowerConstraintSet& set);

/// Log-barrier phi(y, x) = -sum_r log(-h_r(y, x)) for the set's inequalities,
/// with analytic derivatives. Throws if y is not strictly feasible.
struct BarrierEval {
  double value = 0.0;
  Vec grad;   // p_i
  Mat hess;   // p_i x p_i
};
BarrierEval eval_barrier(const FollowerConstraintSet& set, const Vec& y, const Vec& x);

/// Cross block d/dx^j of grad_y phi (q_j x p_i); zero unless inequalities
/// depend on x.
Mat barrier_cross_jac(const FollowerConstraintSet& set, int j, int qj, const Vec& y,
                      const Vec& x);

/// True iff all inequalities are strictly satisfied and ||Ay - b|| <= eq_tol.
bool strictly_feasible(const FollowerConstraintSet& set, const Vec& y, const Vec& x,
                       double eq_tol = 1e-10);

// ---------------------------------------------------------------------------
// Cost oracles. Closures with analytic derivatives supplied by scenario
// builders; evaluation must be a pure function of the inputs.
// ---------------------------------------------------------------------------

/// Follower i's cost s(y^i, x) with second-order local oracle.
struct FollowerCost {
  std::function<double(const Vec& y, const Vec& x)> value;
  std::function<Vec(const Vec& y, const Vec& x)> grad_y;    // p_i
  std::function<Mat(const Vec& y, const Vec& x)> hess_yy;   // p_i x p_i
  /// Cross block d/dx^j of grad_y s, laid out q_j x p_i.
  std::function<Mat(int j, const Vec& y, const Vec& x)> cross_jac;
};

/// Leader j's cost theta(x, y); y is the full stacked follower vector.
struct LeaderCost {
  std::function<double(const Vec& x, const Vec& y)> value;
  std::function<Vec(const Vec& x, const Vec& y)> grad_xj;  // q_j
  std::function<Vec(const Vec& x, const Vec& y)> grad_y;   // p
};

/// Declared smoothness/monotonicity constants. Scenario builders derive them
/// analytically; validate_assumptions spot-checks them.
struct SmoothnessConstants {
  double mu = 1.0;        // strong convexity of followers
  double l_theta0 = 1.0;  // Lipschitz of theta
  double l_theta1 = 1.0;  // Lipschitz of grad theta
  double l_s0 = 1.0;      // Lipschitz of s
  double l_s1 = 1.0;      // Lipschitz of grad s
  double l_s2 = 0.0;      // Lipschitz of hess s (0 for quadratics)
  std::optional<double> m_theta;  // strong monotonicity of Psi
  std::optional<double> l_phi;    // Lipschitz of the hypergradient

  double ell() const { return std::max(l_theta1, l_s1); }
  double kappa() const { return ell() / mu; }
  void validate() const;
};

// ---------------------------------------------------------------------------
// GameSpec: the full networked MLMF game.
// ---------------------------------------------------------------------------

class GameSpec {
 public:
  int num_leaders = 0;
  int num_followers = 0;
  std::vector<int> leader_dims;    // q_j
  std::vector<int> follower_dims;  // p_i
  std::vector<int> cluster_of;     // follower id -> leader id (0-based)
  std::vector<LeaderCost> leader_costs;
  std::vector<FollowerCost> follower_costs;
  std::vector<FeasibleSet> leader_sets;
  std::vector<FollowerConstraintSet> follower_sets;
  SmoothnessConstants constants;

  /// Optional per-follower closed-form best response y*(x) (LQ scenarios).
  std::vector<std::function<Vec(const Vec& x)>> exact_best_response;

  /// Validates invariants and builds offsets/cluster tables. Must be called
  /// once after the fields are filled; the spec is immutable afterwards.
  void finalize();

  bool finalized() const { return finalized_; }
  int total_leader_dim() const { return q_total_; }
  int total_follower_dim() const { return p_total_; }
  int leader_offset(int j) const { return q_offset_[j]; }
  int follower_offset(int i) const { return p_offset_[i]; }
  const std::vector<int>& cluster(int j) const { return clusters_[j]; }
  /// Stacked follower dimension of cluster j.
  int cluster_dim(int j) const { return cluster_dim_[j]; }
  int max_cluster_dim() const { return p_max_cluster_; }
  bool has_constrained_followers() const;

  Eigen::VectorBlock<const Vec> leader_block(const Vec& x, int j) const {
    return x.segment(q_offset_[j], leader_dims[j]);
  }
  Eigen::VectorBlock<const Vec> follower_block(const Vec& y, int i) const {
    return y.segment(p_offset_[i], follower_dims[i]);
  }

 private:
  bool finalized_ = false;
  int q_total_ = 0;
  int p_total_ = 0;
  int p_max_cluster_ = 0;
  std::vector<int> q_offset_;
  std::vector<int> p_offset_;
  std::vector<int> cluster_dim_;
  std::vector<std::vector<int>> clusters_;
};

// ---------------------------------------------------------------------------
// Assumption validation (diagnostic, never aborts).
// ---------------------------------------------------------------------------

struct AssumptionReport {
  double min_hessian_eigenvalue = 0.0;   // over all sampled followers
  double max_grad_lipschitz_ratio = 0.0; // sampled ||grad diff|| / (l_s1 ||dz||)
  std::vector<std::string> violations;
  bool passed() const { return violations.empty(); }
};

/// Samples random (y, x) pairs and checks the declared mu / Lipschitz
/// constants against the oracles. Flags violations, does not abort.
AssumptionReport validate_assumptions(const GameSpec& spec, int samples,
                                      std::uint64_t rng_seed);

}  // namespace mlmf
