#pragma once

#include <utility>
#include <vector>

#include "mlmf/types.hpp"

namespace mlmf {

using EdgeList = std::vector<std::pair<int, int>>;

/// Undirected leader communication graph with a doubly stochastic weight
/// matrix W and truth-injection gains xi (entry (j,h) is used whenever
/// w_{jh} != 0, including the self entry (h,h)).
struct LeaderGraph {
  int m = 0;
  EdgeList edges;  // unordered pairs, 0-based, j != g
  Mat W;           // m x m, symmetric, doubly stochastic, positive diagonal
  Mat xi;          // m x m gains, 0 < xi(j,h) < W(j,j)/W(j,h) where W(j,h) != 0

  bool adjacent(int j, int g) const { return W(j, g) != 0.0; }
  void validate() const;
};

bool graph_connected(int m, const EdgeList& edges);

/// Metropolis-Hastings weights: w_{jg} = 1/(1 + max(d_j, d_g)) on edges, the
/// diagonal absorbing the remainder. Throws if the graph is disconnected.
Mat metropolis_weights(int m, const EdgeList& edges);

/// Gains xi(j,h) = frac * w_{jj}/w_{jh} for every w_{jh} != 0 (self entry
/// included). frac must lie in (0, 1); the default 1/2 is the midpoint of the
/// admissible interval.
Mat default_injection_gains(const Mat& W, double frac = 0.5);

/// Builds a validated graph from an edge list with Metropolis weights and the
/// default gain policy.
LeaderGraph make_leader_graph(int m, const EdgeList& edges, double xi_frac = 0.5);

/// W~^h: W with each diagonal entry r replaced by w_{rr} - xi(r,h) * w_{rh}.
Mat modified_weight_matrix(const LeaderGraph& graph, int h);

/// sigma_2 = max_h rho(W~^h); throws (naming the offending h) if any
/// spectral radius reaches 1.
double consensus_contraction_factor(const LeaderGraph& graph);

/// Spectral radius of a (general, square) matrix.
double spectral_radius(const Mat& A);

}  // namespace mlmf
