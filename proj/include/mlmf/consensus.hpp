#pragma once

#include <vector>

#include "mlmf/network.hpp"
#include "mlmf/sensitivity.hpp"
#include "mlmf/types.hpp"

namespace mlmf {

/// Message/read counters for the information-structure audit.
struct ConsensusCounters {
  Eigen::MatrixXi neighbor_reads;  // (j, g): j read g's estimator
  Eigen::MatrixXi truth_reads;     // (j, h): j read cluster-h truth

  void reset(int m) {
    neighbor_reads = Eigen::MatrixXi::Zero(m, m);
    truth_reads = Eigen::MatrixXi::Zero(m, m);
  }
};

/// Per-leader estimators of every cluster's J-H-I block: bank(j, h)
/// approximates Z_{P_h,D,k}. Shapes are fixed for the life of a run.
class EstimatorBank {
 public:
  EstimatorBank() = default;
  /// Zero-initialized bank shaped after the per-cluster sensitivities.
  EstimatorBank(const std::vector<ClusterSensitivity>& cluster_shapes);

  int m() const { return m_; }
  ClusterBlocks& estimator(int j, int h) { return est_[j][h]; }
  const ClusterBlocks& estimator(int j, int h) const { return est_[j][h]; }

  /// sqrt of sum over (j, h) of ||est(j,h) - truth[h]||_F^2; equals
  /// || Z_hat - I_m o Z_D ||_F in the paper's stacked layout.
  double frobenius_error(const std::vector<ClusterBlocks>& truth) const;

 private:
  int m_ = 0;
  std::vector<std::vector<ClusterBlocks>> est_;
};

/// One synchronous round of the estimator update: every (j, h) is rebuilt
/// from the round-(b-1) snapshot as
///   sum_{g: w_jg != 0} w_jg * est(g,h)  +  xi_jh w_jh (truth_h - est(j,h)),
/// the truth term present only when w_jh != 0 (leader j adjacent to h, or
/// j == h). Counters, when given, record every neighbor/truth read.
void consensus_round(EstimatorBank& bank, const LeaderGraph& graph,
                     const std::vector<ClusterBlocks>& truth,
                     ConsensusCounters* counters = nullptr);

/// B rounds; when per_round_error is non-null it receives the Frobenius
/// error against the truth stack after every round.
void run_consensus(EstimatorBank& bank, const LeaderGraph& graph,
                   const std::vector<ClusterBlocks>& truth, int B,
                   std::vector<double>* per_round_error = nullptr,
                   ConsensusCounters* counters = nullptr);

/// Eq.-(11) extraction for leader j: the j-th diagonal strip of each
/// estimator, reindexed by global follower id -> q_j x p_i block.
std::vector<Mat> extract_blocks(const EstimatorBank& bank, const GameSpec& spec, int j);

}  // namespace mlmf
