#include "mlmf/consensus.hpp"

#include <cmath>

namespace mlmf {

EstimatorBank::EstimatorBank(const std::vector<ClusterSensitivity>& cluster_shapes) {
  m_ = static_cast<int>(cluster_shapes.size());
  est_.resize(m_);
  for (int j = 0; j < m_; ++j) {
    est_[j].reserve(m_);
    for (int h = 0; h < m_; ++h)
      est_[j].emplace_back(cluster_shapes[h].leader_dims, cluster_shapes[h].member_dims);
  }
}

double EstimatorBank::frobenius_error(const std::vector<ClusterBlocks>& truth) const {
  check_dim(static_cast<Eigen::Index>(truth.size()), m_, "EstimatorBank::frobenius_error");
  double sq = 0.0;
  for (int j = 0; j < m_; ++j)
    for (int h = 0; h < m_; ++h) {
      const double d = est_[j][h].frobenius_distance(truth[h]);
      sq += d * d;
    }
  return std::sqrt(sq);
}

void consensus_round(EstimatorBank& bank, const LeaderGraph& graph,
                     const std::vector<ClusterBlocks>& truth, ConsensusCounters* counters) {
  const int m = bank.m();
  check(graph.m == m, "consensus_round: graph/bank size mismatch");
  check_dim(static_cast<Eigen::Index>(truth.size()), m, "consensus_round: truth stack");

  // Double-buffered: all round-b values are formed from the round-(b-1)
  // snapshot only.
  std::vector<std::vector<ClusterBlocks>> next(m);
  for (int j = 0; j < m; ++j) {
    next[j].reserve(m);
    for (int h = 0; h < m; ++h) {
      check(bank.estimator(j, h).same_shape(truth[h]),
            "consensus_round: estimator/truth shape mismatch at (" + std::to_string(j) +
                "," + std::to_string(h) + ")");
      ClusterBlocks acc = truth[h];
      acc.set_zero();
      for (int g = 0; g < m; ++g) {
        const double w = graph.W(j, g);
        if (w == 0.0) continue;
        acc.add_scaled(bank.estimator(g, h), w);
        if (counters) ++counters->neighbor_reads(j, g);
      }
      const double wjh = graph.W(j, h);
      if (wjh != 0.0) {
        // Truth injection: the only channel through which leader j sees
        // cluster-h data, gated by adjacency.
        const double gain = graph.xi(j, h) * wjh;
        acc.add_scaled(truth[h], gain);
        acc.add_scaled(bank.estimator(j, h), -gain);
        if (counters) ++counters->truth_reads(j, h);
      }
      next[j].push_back(std::move(acc));
    }
  }
  for (int j = 0; j < m; ++j)
    for (int h = 0; h < m; ++h) bank.estimator(j, h) = std::move(next[j][h]);
}

void run_consensus(EstimatorBank& bank, const LeaderGraph& graph,
                   const std::vector<ClusterBlocks>& truth, int B,
                   std::vector<double>* per_round_error, ConsensusCounters* counters) {
  check(B >= 0, "run_consensus: B must be >= 0");
  if (per_round_error) per_round_error->clear();
  for (int b = 0; b < B; ++b) {
    consensus_round(bank, graph, truth, counters);
    if (per_round_error) per_round_error->push_back(bank.frobenius_error(truth));
  }
}

std::vector<Mat> extract_blocks(const EstimatorBank& bank, const GameSpec& spec, int j) {
  check(j >= 0 && j < spec.num_leaders, "extract_blocks: leader id out of range");
  std::vector<Mat> strip(spec.num_followers);
  for (int h = 0; h < spec.num_leaders; ++h) {
    const auto& members = spec.cluster(h);
    const ClusterBlocks& est = bank.estimator(j, h);
    for (std::size_t t = 0; t < members.size(); ++t)
      strip[members[t]] = est.block(j, static_cast<int>(t));
  }
  return strip;
}

}  // namespace mlmf
