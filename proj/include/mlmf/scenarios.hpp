#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "mlmf/game.hpp"

namespace mlmf {

struct BuiltScenario {
  GameSpec spec;
  nlohmann::json manifest;  // all generated parameters, keyed by symbol
};

/// Generic linear-quadratic game: strongly convex quadratic followers with
/// bilinear leader coupling. The workhorse for oracle-backed tests.
struct LqParams {
  int m = 2;
  std::vector<int> cluster_sizes = {2, 1};
  int leader_dim = 2;             // q_j, uniform
  int follower_dim = 2;           // p_i, uniform
  double hess_eig_lo = 0.9;       // follower Hessian eigenvalue range
  double hess_eig_hi = 1.1;
  double q_eig_lo = 1.5;          // leader quadratic eigenvalue range
  double q_eig_hi = 2.5;
  double follower_coupling = 0.15;  // scale of C_i (x -> follower gradient)
  double leader_coupling = 0.2;     // scale of G_j (y -> leader gradient)
  double linear_scale = 1.0;        // scale of d_j / g_i
  double box_halfwidth = 0.0;       // > 0: leader boxes [-w, w]^{q_j}
};

BuiltScenario build_lq(const LqParams& params, std::uint64_t seed);

/// Networked Stackelberg-Cournot microgrid management (Case 1 shape).
struct MicrogridParams {
  int m = 4;
  std::vector<int> cluster_sizes = {5, 6, 7, 8};
  int num_markets = 4;       // v
  int leader_dim = 2;        // q_j
  int follower_dim = 1;      // p_i
  double q_eig_lo = 2.0;     // Q^j eigenvalue range
  double q_eig_hi = 3.0;
  double m_eig_lo = 1.0;     // M^i eigenvalue range
  double m_eig_hi = 2.0;
  double price_sensitivity = 0.05;  // scale of P entries
  double supply_penalty = 0.1;      // r_bar
  double base_price_lo = 1.0;       // e entries
  double base_price_hi = 2.0;
  double linear_scale = 1.0;        // d^j / g^i ranges
  double fixed_cost = 0.0;          // u
  double box_halfwidth = 0.0;       // > 0: leader boxes [-w, w]^{q_j}
  int pd_retries = 16;              // monotonicity regeneration attempts
};

BuiltScenario build_microgrid(const MicrogridParams& params, std::uint64_t seed);

/// Heterogeneous cellular pricing game (Case 2 shape): scalar followers with
/// rectangle bounds handled by the log barrier.
struct CellularParams {
  int m = 4;
  std::vector<int> cluster_sizes = {5, 6, 7, 8};
  double a_lo = 1.0, a_hi = 2.0;           // a^i
  double z_lo = 0.5, z_hi = 1.5;           // z^i
  double lambda_lo = 0.5, lambda_hi = 1.5; // allocation parameters
  double r_lo = 1.0, r_hi = 2.0;           // unit-rate revenues
  double data_size = 1.0;                  // B_u
  double gain_lo = 0.1, gain_hi = 1.0;     // channel gains h_{j,i}
  double bound_lo = 0.1;                   // l^i
  double bound_hi = 2.0;                   // u^i
  double price_lo = 0.05, price_hi = 5.0;  // leader box bounds
  double capacity = 1.0;                   // C^i_l
};

BuiltScenario build_cellular(const CellularParams& params, std::uint64_t seed);

}  // namespace mlmf
