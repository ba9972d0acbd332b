#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mlmf/game.hpp"
#include "mlmf/types.hpp"

namespace mlmf {

// ---------------------------------------------------------------------------
// Block representation of the cluster-h J-H-I stack.
//
// Every Algorithm-1 object attached to cluster h (the cross-Jacobian stack J,
// the descent iterates Z, the consensus estimators) is block-diagonal over
// leaders g and, within a leader strip, over the cluster's followers, with
// dense q_g x p_i blocks. All updates are entrywise-linear, so blockwise
// arithmetic reproduces the full-matrix arithmetic exactly; off-cluster
// blocks are never materialized.
// ---------------------------------------------------------------------------

class ClusterBlocks {
 public:
  ClusterBlocks() = default;
  /// Zero blocks of shape q_g x p_i for all (leader g, cluster member t).
  ClusterBlocks(const std::vector<int>& leader_dims, const std::vector<int>& member_dims);

  int leader_count() const { return static_cast<int>(blocks_.size()); }
  int member_count() const {
    return blocks_.empty() ? 0 : static_cast<int>(blocks_[0].size());
  }
  Mat& block(int g, int t) { return blocks_[g][t]; }
  const Mat& block(int g, int t) const { return blocks_[g][t]; }

  void set_zero();
  ClusterBlocks& operator+=(const ClusterBlocks& other);
  ClusterBlocks& operator-=(const ClusterBlocks& other);
  ClusterBlocks& operator*=(double s);
  /// this += s * other
  void add_scaled(const ClusterBlocks& other, double s);

  double frobenius_norm() const;
  double frobenius_distance(const ClusterBlocks& other) const;
  bool all_finite() const;
  bool same_shape(const ClusterBlocks& other) const;

  /// Full matrix in the canonical layout (leaders ascending; followers
  /// ascending within the cluster): rows n_h * q, cols m * p_cluster.
  Mat dense() const;

 private:
  std::vector<std::vector<Mat>> blocks_;  // [leader g][cluster slot t]
};

// ---------------------------------------------------------------------------
// Cluster sensitivity data: the J and H stacks of one cluster.
// ---------------------------------------------------------------------------

struct ClusterSensitivity {
  int cluster = 0;                 // leader h owning the cluster
  std::vector<int> leader_dims;    // q_g for all leaders
  std::vector<int> member_ids;     // followers of the cluster, ascending
  std::vector<int> member_dims;    // p_i per member
  ClusterBlocks J;                 // cross-Jacobian blocks d/dx^g grad_y s^i
  std::vector<Mat> H;              // per member: SPD Hessian block
  std::vector<std::string> warnings;
};

/// Barrier context for constrained followers: derivatives of
/// s_R = theta * s + phi are used in place of those of s.
struct BarrierContext {
  double theta = 1.0;
};

/// Populates J and H from the follower oracles at y (stacked, full length p)
/// and x. In barrier mode, constrained followers contribute
/// theta * (.) + barrier derivatives. Records a warning when a Hessian block
/// has an eigenvalue below mu/2.
ClusterSensitivity assemble_cluster_blocks(const GameSpec& spec, int h, const Vec& y,
                                           const Vec& x,
                                           const std::optional<BarrierContext>& barrier = {});

/// Z^R = J (I_m o H)^{-1}, computed via per-block Cholesky solves.
ClusterBlocks exact_jhi(const ClusterSensitivity& sens);

/// Dense single-block variant: Z^R = J H^{-1} (tests and oracles).
Mat exact_jhi_dense(const Mat& J, const Mat& H);

/// D steps of Z <- Z - gamma (Z (I_m o H) - J) from the warm start z0.
ClusterBlocks jhi_descent(const ClusterSensitivity& sens, ClusterBlocks z0, double gamma,
                          int D);

/// Dense single-block recursion Z <- Z - gamma (Z H - J).
Mat jhi_descent_dense(const Mat& J, const Mat& H, Mat z0, double gamma, int D);

/// ||I - gamma (I_m o H)||_2 = max over Hessian eigenvalues of |1 - gamma l|.
double jhi_contraction_factor(const ClusterSensitivity& sens, double gamma);
double jhi_contraction_factor_dense(const Mat& H, double gamma);

/// Null-space-projected inverse of Proposition-3 form:
/// H~ = H^{-1} - H^{-1} A^T [A H^{-1} A^T]^{-1} A H^{-1}; A may be 0 x p.
Mat reduced_hessian(const Mat& H_R, const Mat& A);

// ---------------------------------------------------------------------------
// Exact best-response Jacobian oracle.
// ---------------------------------------------------------------------------

/// Per-(follower, leader) sensitivity blocks d y^{i,*} / d x^j in the q_j x
/// p_i layout, i.e. the (i, j) entry of the stacked d y*(x)/d x^j map.
struct BestResponseJacobian {
  std::vector<std::vector<Mat>> block;  // [follower i][leader j] : q_j x p_i
  std::vector<Vec> y_star;              // per-follower best response used
};

/// Evaluates the implicit-differentiation formula at y*(x): unconstrained
/// followers use -cross * H^{-1}; constrained followers use the barrier path
/// at the given theta with the reduced Hessian.
BestResponseJacobian exact_best_response_jacobian(const GameSpec& spec, const Vec& x,
                                                  const std::optional<BarrierContext>& barrier = {});

}  // namespace mlmf
