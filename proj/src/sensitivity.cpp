#include "mlmf/sensitivity.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "mlmf/follower.hpp"

namespace mlmf {

// ---------------------------------------------------------------------------
// ClusterBlocks
// ---------------------------------------------------------------------------

ClusterBlocks::ClusterBlocks(const std::vector<int>& leader_dims,
                             const std::vector<int>& member_dims) {
  blocks_.resize(leader_dims.size());
  for (std::size_t g = 0; g < leader_dims.size(); ++g) {
    blocks_[g].reserve(member_dims.size());
    for (int p : member_dims) blocks_[g].push_back(Mat::Zero(leader_dims[g], p));
  }
}

void ClusterBlocks::set_zero() {
  for (auto& strip : blocks_)
    for (auto& b : strip) b.setZero();
}

bool ClusterBlocks::same_shape(const ClusterBlocks& other) const {
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t g = 0; g < blocks_.size(); ++g) {
    if (blocks_[g].size() != other.blocks_[g].size()) return false;
    for (std::size_t t = 0; t < blocks_[g].size(); ++t)
      if (blocks_[g][t].rows() != other.blocks_[g][t].rows() ||
          blocks_[g][t].cols() != other.blocks_[g][t].cols())
        return false;
  }
  return true;
}

ClusterBlocks& ClusterBlocks::operator+=(const ClusterBlocks& other) {
  check(same_shape(other), "ClusterBlocks: shape mismatch in +=");
  for (std::size_t g = 0; g < blocks_.size(); ++g)
    for (std::size_t t = 0; t < blocks_[g].size(); ++t) blocks_[g][t] += other.blocks_[g][t];
  return *this;
}

ClusterBlocks& ClusterBlocks::operator-=(const ClusterBlocks& other) {
  check(same_shape(other), "ClusterBlocks: shape mismatch in -=");
  for (std::size_t g = 0; g < blocks_.size(); ++g)
    for (std::size_t t = 0; t < blocks_[g].size(); ++t) blocks_[g][t] -= other.blocks_[g][t];
  return *this;
}

ClusterBlocks& ClusterBlocks::operator*=(double s) {
  for (auto& strip : blocks_)
    for (auto& b : strip) b *= s;
  return *this;
}

void ClusterBlocks::add_scaled(const ClusterBlocks& other, double s) {
  check(same_shape(other), "ClusterBlocks: shape mismatch in add_scaled");
  for (std::size_t g = 0; g < blocks_.size(); ++g)
    for (std::size_t t = 0; t < blocks_[g].size(); ++t)
      blocks_[g][t] += s * other.blocks_[g][t];
}

double ClusterBlocks::frobenius_norm() const {
  double sq = 0.0;
  for (const auto& strip : blocks_)
    for (const auto& b : strip) sq += b.squaredNorm();
  return std::sqrt(sq);
}

double ClusterBlocks::frobenius_distance(const ClusterBlocks& other) const {
  check(same_shape(other), "ClusterBlocks: shape mismatch in frobenius_distance");
  double sq = 0.0;
  for (std::size_t g = 0; g < blocks_.size(); ++g)
    for (std::size_t t = 0; t < blocks_[g].size(); ++t)
      sq += (blocks_[g][t] - other.blocks_[g][t]).squaredNorm();
  return std::sqrt(sq);
}

bool ClusterBlocks::all_finite() const {
  for (const auto& strip : blocks_)
    for (const auto& b : strip)
      if (!b.allFinite()) return false;
  return true;
}

Mat ClusterBlocks::dense() const {
  const int m = leader_count();
  const int n = member_count();
  int p_cluster = 0;
  std::vector<int> col_off(n, 0);
  for (int t = 0; t < n; ++t) {
    col_off[t] = p_cluster;
    p_cluster += static_cast<int>(blocks_[0][t].cols());
  }
  int rows = 0;
  std::vector<int> row_off(m, 0);
  for (int g = 0; g < m; ++g) {
    row_off[g] = rows;
    rows += n * static_cast<int>(blocks_[g][0].rows());
  }
  Mat out = Mat::Zero(rows, m * p_cluster);
  for (int g = 0; g < m; ++g) {
    const int qg = static_cast<int>(blocks_[g][0].rows());
    for (int t = 0; t < n; ++t)
      out.block(row_off[g] + t * qg, g * p_cluster + col_off[t], qg,
                blocks_[g][t].cols()) = blocks_[g][t];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

ClusterSensitivity assemble_cluster_blocks(const GameSpec& spec, int h, const Vec& y,
                                           const Vec& x,
                                           const std::optional<BarrierContext>& barrier) {
  check(spec.finalized(), "assemble_cluster_blocks: spec not finalized");
  check(h >= 0 && h < spec.num_leaders, "assemble_cluster_blocks: cluster id out of range");
  check_dim(y.size(), spec.total_follower_dim(), "assemble_cluster_blocks: y");
  check_dim(x.size(), spec.total_leader_dim(), "assemble_cluster_blocks: x");

  ClusterSensitivity sens;
  sens.cluster = h;
  sens.leader_dims = spec.leader_dims;
  sens.member_ids = spec.cluster(h);
  for (int i : sens.member_ids) sens.member_dims.push_back(spec.follower_dims[i]);
  sens.J = ClusterBlocks(sens.leader_dims, sens.member_dims);

  for (std::size_t t = 0; t < sens.member_ids.size(); ++t) {
    const int i = sens.member_ids[t];
    const Vec yi = spec.follower_block(y, i);
    const auto& cost = spec.follower_costs[i];
    Mat Hi;
    if (barrier && !is_unconstrained(spec.follower_sets[i])) {
      const auto& set = spec.follower_sets[i];
      if (const auto* gen = std::get_if<GeneralConstraints>(&set))
        check(gen->A.rows() == 0,
              "assemble_cluster_blocks: equality-constrained followers are not supported "
              "in the distributed loop (follower " + std::to_string(i) + ")");
      const BarrierEval bar = eval_barrier(set, yi, x);
      Hi = barrier->theta * cost.hess_yy(yi, x) + bar.hess;
      for (int j = 0; j < spec.num_leaders; ++j)
        sens.J.block(j, static_cast<int>(t)) =
            barrier->theta * cost.cross_jac(j, yi, x) +
            barrier_cross_jac(set, j, spec.leader_dims[j], yi, x);
    } else {
      Hi = cost.hess_yy(yi, x);
      for (int j = 0; j < spec.num_leaders; ++j)
        sens.J.block(j, static_cast<int>(t)) = cost.cross_jac(j, yi, x);
    }
    check_dim(Hi.rows(), spec.follower_dims[i], "assemble_cluster_blocks: H block");
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (Hi + Hi.transpose()));
    if (eig.eigenvalues().minCoeff() < 0.5 * spec.constants.mu)
      sens.warnings.push_back("follower " + std::to_string(i) +
                              ": Hessian eigenvalue below mu/2 (model violation)");
    sens.H.push_back(std::move(Hi));
  }
  return sens;
}

// ---------------------------------------------------------------------------
// Exact J-H-I and the descent
// ---------------------------------------------------------------------------

Mat exact_jhi_dense(const Mat& J, const Mat& H) {
  check_dim(H.rows(), H.cols(), "exact_jhi: H must be square");
  check_dim(J.cols(), H.rows(), "exact_jhi: J/H shapes");
  Eigen::LLT<Mat> llt(H);
  check(llt.info() == Eigen::Success, "exact_jhi: H not positive definite");
  // Z H = J  =>  Z = (H^{-1} J^T)^T via one Cholesky solve.
  return llt.solve(J.transpose()).transpose();
}

ClusterBlocks exact_jhi(const ClusterSensitivity& sens) {
  ClusterBlocks Z(sens.leader_dims, sens.member_dims);
  for (int g = 0; g < Z.leader_count(); ++g)
    for (int t = 0; t < Z.member_count(); ++t)
      Z.block(g, t) = exact_jhi_dense(sens.J.block(g, t), sens.H[t]);
  return Z;
}

Mat jhi_descent_dense(const Mat& J, const Mat& H, Mat z, double gamma, int D) {
  check(gamma > 0.0, "jhi_descent: gamma must be > 0");
  check(D >= 0, "jhi_descent: D must be >= 0");
  for (int d = 0; d < D; ++d) z -= gamma * (z * H - J);
  return z;
}

ClusterBlocks jhi_descent(const ClusterSensitivity& sens, ClusterBlocks z, double gamma,
                          int D) {
  check(gamma > 0.0, "jhi_descent: gamma must be > 0");
  check(D >= 0, "jhi_descent: D must be >= 0");
  check(z.same_shape(sens.J), "jhi_descent: warm start shape mismatch");
  for (int d = 0; d < D; ++d)
    for (int g = 0; g < z.leader_count(); ++g)
      for (int t = 0; t < z.member_count(); ++t)
        z.block(g, t) -= gamma * (z.block(g, t) * sens.H[t] - sens.J.block(g, t));
  return z;
}

double jhi_contraction_factor_dense(const Mat& H, double gamma) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (H + H.transpose()));
  double factor = 0.0;
  for (Eigen::Index t = 0; t < eig.eigenvalues().size(); ++t)
    factor = std::max(factor, std::abs(1.0 - gamma * eig.eigenvalues()[t]));
  return factor;
}

double jhi_contraction_factor(const ClusterSensitivity& sens, double gamma) {
  double factor = 0.0;
  for (const auto& H : sens.H)
    factor = std::max(factor, jhi_contraction_factor_dense(H, gamma));
  return factor;
}

// ---------------------------------------------------------------------------
// Reduced Hessian (Proposition-3 form)
// ---------------------------------------------------------------------------

Mat reduced_hessian(const Mat& H_R, const Mat& A) {
  check_dim(H_R.rows(), H_R.cols(), "reduced_hessian: H must be square");
  Eigen::LLT<Mat> llt(H_R);
  check(llt.info() == Eigen::Success, "reduced_hessian: H not positive definite");
  const Mat Hinv = llt.solve(Mat::Identity(H_R.rows(), H_R.cols()));
  if (A.rows() == 0) return Hinv;
  check_dim(A.cols(), H_R.rows(), "reduced_hessian: A columns");
  const Mat AHiAt = A * Hinv * A.transpose();
  Eigen::FullPivLU<Mat> lu(AHiAt);
  check(lu.isInvertible(), "reduced_hessian: A H^{-1} A^T is rank deficient");
  return Hinv - Hinv * A.transpose() * lu.solve(A * Hinv);
}

// ---------------------------------------------------------------------------
// Exact best-response Jacobian
// ---------------------------------------------------------------------------

BestResponseJacobian exact_best_response_jacobian(const GameSpec& spec, const Vec& x,
                                                  const std::optional<BarrierContext>& barrier) {
  check(spec.finalized(), "exact_best_response_jacobian: spec not finalized");
  BestResponseJacobian out;
  out.block.resize(spec.num_followers);
  out.y_star.resize(spec.num_followers);
  for (int i = 0; i < spec.num_followers; ++i) {
    const auto& cost = spec.follower_costs[i];
    const auto& set = spec.follower_sets[i];
    out.block[i].resize(spec.num_leaders);
    if (!is_unconstrained(set)) {
      check(barrier.has_value(),
            "exact_best_response_jacobian: constrained follower needs a barrier context");
      const double theta = barrier->theta;
      const Vec yi = barrier_best_response(cost, set, x, theta,
                                           interior_point(set, spec.follower_dims[i], x));
      const BarrierEval bar = eval_barrier(set, yi, x);
      const Mat H_R = theta * cost.hess_yy(yi, x) + bar.hess;
      Mat A(0, spec.follower_dims[i]);
      if (const auto* gen = std::get_if<GeneralConstraints>(&set))
        if (gen->A.rows() > 0) A = gen->A;
      const Mat Ht = reduced_hessian(H_R, A);
      for (int j = 0; j < spec.num_leaders; ++j) {
        const Mat J_R = theta * cost.cross_jac(j, yi, x) +
                        barrier_cross_jac(set, j, spec.leader_dims[j], yi, x);
        out.block[i][j] = -J_R * Ht;
      }
      out.y_star[i] = yi;
    } else {
      const Vec yi = best_response_exact(spec, i, x);
      const Mat H = cost.hess_yy(yi, x);
      Eigen::LLT<Mat> llt(H);
      check(llt.info() == Eigen::Success,
            "exact_best_response_jacobian: follower Hessian not positive definite");
      for (int j = 0; j < spec.num_leaders; ++j) {
        const Mat Jij = cost.cross_jac(j, yi, x);
        out.block[i][j] = -llt.solve(Jij.transpose()).transpose();
      }
      out.y_star[i] = yi;
    }
  }
  return out;
}

}  // namespace mlmf
