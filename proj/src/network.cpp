#include "mlmf/network.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <numeric>
#include <vector>

namespace mlmf {

bool graph_connected(int m, const EdgeList& edges) {
  if (m <= 0) return false;
  std::vector<int> parent(m);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& [j, g] : edges) {
    if (j < 0 || j >= m || g < 0 || g >= m || j == g) return false;
    parent[find(j)] = find(g);
  }
  const int root = find(0);
  for (int j = 1; j < m; ++j)
    if (find(j) != root) return false;
  return true;
}

Mat metropolis_weights(int m, const EdgeList& edges) {
  check(m >= 1, "metropolis_weights: m must be >= 1");
  check(graph_connected(m, edges), "metropolis_weights: graph is not connected");
  std::vector<int> degree(m, 0);
  for (const auto& [j, g] : edges) {
    ++degree[j];
    ++degree[g];
  }
  Mat W = Mat::Zero(m, m);
  for (const auto& [j, g] : edges) {
    const double w = 1.0 / (1.0 + std::max(degree[j], degree[g]));
    W(j, g) = w;
    W(g, j) = w;
  }
  for (int j = 0; j < m; ++j) W(j, j) = 1.0 - W.row(j).sum();
  return W;
}

void LeaderGraph::validate() const {
  check(m >= 1, "LeaderGraph: m must be >= 1");
  check_dim(W.rows(), m, "LeaderGraph::W rows");
  check_dim(W.cols(), m, "LeaderGraph::W cols");
  check((W - W.transpose()).norm() <= 1e-12 * m, "LeaderGraph: W not symmetric");
  for (int j = 0; j < m; ++j) {
    check(std::abs(W.row(j).sum() - 1.0) <= 1e-12 * m,
          "LeaderGraph: row " + std::to_string(j) + " of W does not sum to 1");
    check(W(j, j) > 0.0, "LeaderGraph: W diagonal entry " + std::to_string(j) + " not positive");
  }
  Mat adj = Mat::Zero(m, m);
  for (const auto& [j, g] : edges) {
    check(j != g, "LeaderGraph: self-loop edge");
    adj(j, g) = adj(g, j) = 1.0;
  }
  for (int j = 0; j < m; ++j)
    for (int g = 0; g < m; ++g) {
      if (j == g) continue;
      check((W(j, g) > 0.0) == (adj(j, g) > 0.0),
            "LeaderGraph: W sparsity does not match the edge set at (" +
                std::to_string(j) + "," + std::to_string(g) + ")");
      check(W(j, g) >= 0.0, "LeaderGraph: negative weight");
    }
  check(graph_connected(m, edges), "LeaderGraph: graph is not connected");
  check_dim(xi.rows(), m, "LeaderGraph::xi rows");
  check_dim(xi.cols(), m, "LeaderGraph::xi cols");
  for (int j = 0; j < m; ++j)
    for (int h = 0; h < m; ++h) {
      if (W(j, h) == 0.0) continue;
      check(xi(j, h) > 0.0 && xi(j, h) < W(j, j) / W(j, h),
            "LeaderGraph: xi(" + std::to_string(j) + "," + std::to_string(h) +
                ") outside (0, w_jj/w_jh)");
    }
}

Mat default_injection_gains(const Mat& W, double frac) {
  check(frac > 0.0 && frac < 1.0, "default_injection_gains: frac must be in (0,1)");
  const int m = static_cast<int>(W.rows());
  Mat xi = Mat::Zero(m, m);
  for (int j = 0; j < m; ++j)
    for (int h = 0; h < m; ++h)
      if (W(j, h) != 0.0) xi(j, h) = frac * W(j, j) / W(j, h);
  return xi;
}

LeaderGraph make_leader_graph(int m, const EdgeList& edges, double xi_frac) {
  LeaderGraph graph;
  graph.m = m;
  graph.edges = edges;
  graph.W = metropolis_weights(m, edges);
  graph.xi = default_injection_gains(graph.W, xi_frac);
  graph.validate();
  return graph;
}

Mat modified_weight_matrix(const LeaderGraph& graph, int h) {
  check(h >= 0 && h < graph.m, "modified_weight_matrix: h out of range");
  Mat Wt = graph.W;
  for (int r = 0; r < graph.m; ++r) {
    if (graph.W(r, h) == 0.0) continue;
    check(graph.xi(r, h) > 0.0 && graph.xi(r, h) < graph.W(r, r) / graph.W(r, h),
          "modified_weight_matrix: xi(" + std::to_string(r) + "," + std::to_string(h) +
              ") outside (0, w_rr/w_rh)");
    Wt(r, r) = graph.W(r, r) - graph.xi(r, h) * graph.W(r, h);
  }
  return Wt;
}

double spectral_radius(const Mat& A) {
  Eigen::EigenSolver<Mat> eig(A, /*computeEigenvectors=*/false);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

double consensus_contraction_factor(const LeaderGraph& graph) {
  double sigma2 = 0.0;
  for (int h = 0; h < graph.m; ++h) {
    const Mat Wt = modified_weight_matrix(graph, h);
    // W~^h differs from symmetric W only on the diagonal, so the 2-norm is
    // the largest absolute eigenvalue.
    Eigen::SelfAdjointEigenSolver<Mat> eig(Wt);
    const double rho = eig.eigenvalues().cwiseAbs().maxCoeff();
    check(rho < 1.0, "consensus_contraction_factor: rho(W~^" + std::to_string(h) +
                         ") = " + std::to_string(rho) + " >= 1 (invalid xi)");
    sigma2 = std::max(sigma2, rho);
  }
  return sigma2;
}

}  // namespace mlmf
