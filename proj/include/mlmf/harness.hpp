#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlmf/consensus.hpp"
#include "mlmf/follower.hpp"
#include "mlmf/game.hpp"
#include "mlmf/leader.hpp"
#include "mlmf/network.hpp"
#include "mlmf/oracle.hpp"
#include "mlmf/scenarios.hpp"
#include "mlmf/theory.hpp"

namespace mlmf {

/// Full run configuration; mirrors the JSON config field-for-field. Unknown
/// JSON keys are rejected.
struct RunConfig {
  enum class ScenarioKind { Microgrid, Cellular, CustomLq, File };
  ScenarioKind scenario_kind = ScenarioKind::CustomLq;
  nlohmann::json scenario;  // raw scenario object (kind-specific parameters)

  EdgeList graph_edges;  // 0-based after parsing (config uses 1-based ids)
  int T = 100, D = 100, B = 100;
  std::optional<double> alpha;  // default 2/(mu + l_s1)
  std::optional<double> gamma;  // default 1/l_s2, or 1/l_s1 for quadratics
  StepSchedule schedule = StepSchedule::constant(1e-2);
  std::optional<StepSchedule> schedule_constant;     // for compare-schedules
  std::optional<StepSchedule> schedule_diminishing;  // for compare-schedules
  double xi_frac = 0.5;
  BarrierParams barrier;
  int max_outer_iterations = 1000;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  bool oracle = true;
  bool record_timing = true;
  double pi = 2.0;
  std::optional<double> r_z;   // override of the conservative rank bound
  std::optional<Vec> x0;

  void validate() const;
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

/// One outer-iteration record. Oracle-gated entries are NaN when unavailable
/// and serialize as "NA".
struct TrajectoryRow {
  int k = 0;
  double beta = 0.0;
  double rel_x_err = 0.0;   // ||x_k - x*|| / ||x_0 - x*||
  double psi_norm = 0.0;    // ||Psi_hat(x_k)||
  double rel_psi_err = 0.0; // ||Psi_hat(x_k) - Psi(x*)|| / ||Psi_hat(x_0) - Psi(x*)||
  double br_err = 0.0;      // ||y_{T,k} - y*(x_k)||
  double jhi_err = 0.0;     // ||Z_{D,k} - Z^R_k||_F
  double cons_err = 0.0;    // ||Z_hat_{B,k} - I_m o Z_{D,k}||_F
  double wall_ms = 0.0;
  double delta_k = 0.0;     // warm-start composite (oracle runs)
  Vec x;                    // in-memory only
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;
  /// CSV with the pinned header; oracle-off columns are "NA".
  std::string to_csv(bool with_timing) const;
};

/// Information-structure audit counters collected over a run.
struct AuditCounters {
  Eigen::MatrixXi follower_oracle_calls;  // (leader j, follower i)
  ConsensusCounters consensus;
  int out_of_cluster_calls = 0;
  int non_neighbor_reads = 0;
  int non_adjacent_truth_reads = 0;
};

struct RunResult {
  Trajectory trajectory;
  TheoryReport theory;
  nlohmann::json manifest;
  Vec x_final;
  Vec y_final;
  std::optional<SePoint> oracle_point;
  AuditCounters audit;
  bool early_stopped = false;
  int iterations_run = 0;
};

/// Executes Algorithm 1 end to end with warm starts: follower stage,
/// cluster assembly, J-H-I descent, B consensus rounds, simultaneous
/// projected leader steps. Deterministic given config.seed.
RunResult run(const RunConfig& config);

/// Writes trajectory.csv, theory.json, manifest.json under config.output_dir.
void write_outputs(const RunConfig& config, const RunResult& result);

struct ScheduleComparison {
  Trajectory diminishing;
  Trajectory constant;
  /// Iterations to reach a relative-error threshold; -1 when never reached.
  int iters_to_threshold_diminishing_1e1 = -1;
  int iters_to_threshold_diminishing_1e2 = -1;
  int iters_to_threshold_constant_1e1 = -1;
  int iters_to_threshold_constant_1e2 = -1;
};

/// Runs the diminishing and constant variants with identical seeds/budgets.
ScheduleComparison compare_schedules(const RunConfig& config);

struct BarrierGapRow {
  double theta = 0.0;
  double cost_gap = 0.0;       // sum_j |theta^j(x, y*_theta) - theta^j(x, y*)|
  double lemma_bound = 0.0;    // l_theta0 * sqrt(sum_i 2 s~ / (mu theta))
  double worst_br_gap = 0.0;   // max_i ||y_theta^i - y*^i||
  double br_gap_bound = 0.0;   // max_i sqrt(2 s~ / (mu theta))
};

/// Cost-gap sweep over barrier parameters at the configured x0 (constrained
/// scenarios with oracle-computable constrained optima).
std::vector<BarrierGapRow> barrier_gap_sweep(const RunConfig& config,
                                             const std::vector<double>& thetas);

nlohmann::json theory_to_json(const TheoryReport& report);

}  // namespace mlmf
