#include "mlmf/harness.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <set>

namespace mlmf {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& ctx) {
  check(j.is_object(), ctx + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    check(allowed.count(key) > 0, ctx + ": unknown key '" + key + "'");
}

double get_num(const json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

int get_int(const json& j, const char* key, int fallback) {
  return j.contains(key) ? j.at(key).get<int>() : fallback;
}

std::pair<double, double> get_range(const json& j, const char* key, double lo, double hi) {
  if (!j.contains(key)) return {lo, hi};
  const auto& r = j.at(key);
  check(r.is_array() && r.size() == 2, std::string("scenario: '") + key +
                                           "' must be a [lo, hi] pair");
  return {r[0].get<double>(), r[1].get<double>()};
}

std::vector<int> get_cluster_sizes(const json& j, int m) {
  if (!j.contains("cluster_sizes")) return std::vector<int>(m, 1);
  std::vector<int> sizes = j.at("cluster_sizes").get<std::vector<int>>();
  check(static_cast<int>(sizes.size()) == m, "scenario: cluster_sizes must have m entries");
  return sizes;
}

StepSchedule parse_schedule(const json& j, const std::string& ctx) {
  reject_unknown(j, {"kind", "b", "scale", "beta"}, ctx);
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "diminishing")
    return StepSchedule::diminishing(get_num(j, "b", 1.0), get_num(j, "scale", 1.0));
  if (kind == "constant") return StepSchedule::constant(j.at("beta").get<double>());
  throw Error(ctx + ": schedule kind must be 'diminishing' or 'constant'");
}

std::string format_cell(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  check(T >= 1 && D >= 1 && B >= 0, "config: budgets must satisfy T, D >= 1 and B >= 0");
  check(max_outer_iterations >= 1, "config: max_outer_iterations must be >= 1");
  check(xi_frac > 0.0 && xi_frac < 1.0, "config: xi.frac must be in (0, 1)");
  check(pi > 1.0, "config: pi must be > 1");
  barrier.validate();
  if (alpha) check(*alpha > 0.0, "config: steps.alpha must be > 0");
  if (gamma) check(*gamma > 0.0, "config: steps.gamma must be > 0");
  if (r_z) check(*r_z >= 1.0, "config: r_z must be >= 1");
}

RunConfig parse_config(const json& j) {
  reject_unknown(j,
                 {"scenario", "graph", "budgets", "steps", "xi", "barrier",
                  "max_outer_iterations", "seed", "output_dir", "oracle", "record_timing",
                  "pi", "r_z", "x0"},
                 "config");
  RunConfig cfg;

  const json& sc = j.at("scenario");
  check(sc.is_object() && sc.contains("kind"), "config: scenario.kind is required");
  const std::string kind = sc.at("kind").get<std::string>();
  if (kind == "microgrid")
    cfg.scenario_kind = RunConfig::ScenarioKind::Microgrid;
  else if (kind == "cellular")
    cfg.scenario_kind = RunConfig::ScenarioKind::Cellular;
  else if (kind == "custom-LQ")
    cfg.scenario_kind = RunConfig::ScenarioKind::CustomLq;
  else if (kind == "file")
    cfg.scenario_kind = RunConfig::ScenarioKind::File;
  else
    throw Error("config: scenario.kind must be microgrid | cellular | custom-LQ | file");
  cfg.scenario = sc;

  if (j.contains("graph")) {
    reject_unknown(j.at("graph"), {"edges"}, "config.graph");
    for (const auto& e : j.at("graph").at("edges")) {
      check(e.is_array() && e.size() == 2, "config.graph: edges must be [j, g] pairs");
      const int a = e[0].get<int>(), b = e[1].get<int>();
      check(a >= 1 && b >= 1, "config.graph: leader ids are 1-based");
      cfg.graph_edges.emplace_back(a - 1, b - 1);
    }
  }

  if (j.contains("budgets")) {
    const json& bj = j.at("budgets");
    reject_unknown(bj, {"T", "D", "B"}, "config.budgets");
    cfg.T = get_int(bj, "T", cfg.T);
    cfg.D = get_int(bj, "D", cfg.D);
    cfg.B = get_int(bj, "B", cfg.B);
  }

  if (j.contains("steps")) {
    const json& st = j.at("steps");
    reject_unknown(st, {"alpha", "gamma", "schedule", "constant", "diminishing"},
                   "config.steps");
    if (st.contains("alpha")) cfg.alpha = st.at("alpha").get<double>();
    if (st.contains("gamma")) cfg.gamma = st.at("gamma").get<double>();
    if (st.contains("schedule")) cfg.schedule = parse_schedule(st.at("schedule"), "config.steps.schedule");
    if (st.contains("constant"))
      cfg.schedule_constant = parse_schedule(st.at("constant"), "config.steps.constant");
    if (st.contains("diminishing"))
      cfg.schedule_diminishing =
          parse_schedule(st.at("diminishing"), "config.steps.diminishing");
  }

  if (j.contains("xi")) {
    reject_unknown(j.at("xi"), {"frac"}, "config.xi");
    cfg.xi_frac = get_num(j.at("xi"), "frac", 0.5);
  }

  if (j.contains("barrier")) {
    const json& bj = j.at("barrier");
    reject_unknown(bj, {"theta0", "chi", "eps", "eps_inner"}, "config.barrier");
    cfg.barrier.theta0 = get_num(bj, "theta0", 1.0);
    cfg.barrier.chi = get_num(bj, "chi", 10.0);
    cfg.barrier.eps = get_num(bj, "eps", 1e-6);
    cfg.barrier.eps_inner = get_num(bj, "eps_inner", 1e-6);
  } else {
    cfg.barrier.eps_inner = 1e-6;  // main-loop accuracy; oracles use tighter
  }

  cfg.max_outer_iterations = get_int(j, "max_outer_iterations", cfg.max_outer_iterations);
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("oracle")) cfg.oracle = j.at("oracle").get<bool>();
  if (j.contains("record_timing")) cfg.record_timing = j.at("record_timing").get<bool>();
  cfg.pi = get_num(j, "pi", 2.0);
  if (j.contains("r_z")) cfg.r_z = j.at("r_z").get<double>();
  if (j.contains("x0")) {
    const auto vals = j.at("x0").get<std::vector<double>>();
    Vec x0(static_cast<Eigen::Index>(vals.size()));
    for (std::size_t t = 0; t < vals.size(); ++t) x0[static_cast<Eigen::Index>(t)] = vals[t];
    cfg.x0 = x0;
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "load_config: cannot open " + path);
  json j = json::parse(in);
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Scenario construction from config
// ---------------------------------------------------------------------------

namespace {

BuiltScenario build_scenario_object(const json& sc, std::uint64_t seed);

BuiltScenario build_lq_from_json(const json& sc, std::uint64_t seed) {
  reject_unknown(sc,
                 {"kind", "m", "cluster_sizes", "leader_dim", "follower_dim", "hess_eig",
                  "q_eig", "follower_coupling", "leader_coupling", "linear_scale",
                  "box_halfwidth"},
                 "scenario(custom-LQ)");
  LqParams p;
  p.m = get_int(sc, "m", p.m);
  p.cluster_sizes = get_cluster_sizes(sc, p.m);
  p.leader_dim = get_int(sc, "leader_dim", p.leader_dim);
  p.follower_dim = get_int(sc, "follower_dim", p.follower_dim);
  std::tie(p.hess_eig_lo, p.hess_eig_hi) = get_range(sc, "hess_eig", p.hess_eig_lo, p.hess_eig_hi);
  std::tie(p.q_eig_lo, p.q_eig_hi) = get_range(sc, "q_eig", p.q_eig_lo, p.q_eig_hi);
  p.follower_coupling = get_num(sc, "follower_coupling", p.follower_coupling);
  p.leader_coupling = get_num(sc, "leader_coupling", p.leader_coupling);
  p.linear_scale = get_num(sc, "linear_scale", p.linear_scale);
  p.box_halfwidth = get_num(sc, "box_halfwidth", p.box_halfwidth);
  return build_lq(p, seed);
}

BuiltScenario build_microgrid_from_json(const json& sc, std::uint64_t seed) {
  reject_unknown(sc,
                 {"kind", "m", "cluster_sizes", "num_markets", "leader_dim", "follower_dim",
                  "q_eig", "m_eig", "price_sensitivity", "supply_penalty", "base_price",
                  "linear_scale", "fixed_cost", "box_halfwidth"},
                 "scenario(microgrid)");
  MicrogridParams p;
  p.m = get_int(sc, "m", p.m);
  if (sc.contains("cluster_sizes"))
    p.cluster_sizes = sc.at("cluster_sizes").get<std::vector<int>>();
  else if (p.m != 4)
    p.cluster_sizes = std::vector<int>(p.m, 2);
  check(static_cast<int>(p.cluster_sizes.size()) == p.m,
        "scenario(microgrid): cluster_sizes must have m entries");
  p.num_markets = get_int(sc, "num_markets", p.num_markets);
  p.leader_dim = get_int(sc, "leader_dim", p.leader_dim);
  p.follower_dim = get_int(sc, "follower_dim", p.follower_dim);
  std::tie(p.q_eig_lo, p.q_eig_hi) = get_range(sc, "q_eig", p.q_eig_lo, p.q_eig_hi);
  std::tie(p.m_eig_lo, p.m_eig_hi) = get_range(sc, "m_eig", p.m_eig_lo, p.m_eig_hi);
  p.price_sensitivity = get_num(sc, "price_sensitivity", p.price_sensitivity);
  p.supply_penalty = get_num(sc, "supply_penalty", p.supply_penalty);
  std::tie(p.base_price_lo, p.base_price_hi) =
      get_range(sc, "base_price", p.base_price_lo, p.base_price_hi);
  p.linear_scale = get_num(sc, "linear_scale", p.linear_scale);
  p.fixed_cost = get_num(sc, "fixed_cost", p.fixed_cost);
  p.box_halfwidth = get_num(sc, "box_halfwidth", p.box_halfwidth);
  return build_microgrid(p, seed);
}

BuiltScenario build_cellular_from_json(const json& sc, std::uint64_t seed) {
  reject_unknown(sc,
                 {"kind", "m", "cluster_sizes", "a", "z", "lambda", "r", "data_size", "gain",
                  "bounds", "price", "capacity"},
                 "scenario(cellular)");
  CellularParams p;
  p.m = get_int(sc, "m", p.m);
  if (sc.contains("cluster_sizes"))
    p.cluster_sizes = sc.at("cluster_sizes").get<std::vector<int>>();
  else if (p.m != 4)
    p.cluster_sizes = std::vector<int>(p.m, 2);
  check(static_cast<int>(p.cluster_sizes.size()) == p.m,
        "scenario(cellular): cluster_sizes must have m entries");
  std::tie(p.a_lo, p.a_hi) = get_range(sc, "a", p.a_lo, p.a_hi);
  std::tie(p.z_lo, p.z_hi) = get_range(sc, "z", p.z_lo, p.z_hi);
  std::tie(p.lambda_lo, p.lambda_hi) = get_range(sc, "lambda", p.lambda_lo, p.lambda_hi);
  std::tie(p.r_lo, p.r_hi) = get_range(sc, "r", p.r_lo, p.r_hi);
  p.data_size = get_num(sc, "data_size", p.data_size);
  std::tie(p.gain_lo, p.gain_hi) = get_range(sc, "gain", p.gain_lo, p.gain_hi);
  std::tie(p.bound_lo, p.bound_hi) = get_range(sc, "bounds", p.bound_lo, p.bound_hi);
  std::tie(p.price_lo, p.price_hi) = get_range(sc, "price", p.price_lo, p.price_hi);
  p.capacity = get_num(sc, "capacity", p.capacity);
  return build_cellular(p, seed);
}

BuiltScenario build_scenario_object(const json& sc, std::uint64_t seed) {
  const std::string kind = sc.at("kind").get<std::string>();
  if (kind == "custom-LQ") return build_lq_from_json(sc, seed);
  if (kind == "microgrid") return build_microgrid_from_json(sc, seed);
  if (kind == "cellular") return build_cellular_from_json(sc, seed);
  if (kind == "file") {
    reject_unknown(sc, {"kind", "path"}, "scenario(file)");
    std::ifstream in(sc.at("path").get<std::string>());
    check(in.good(), "scenario(file): cannot open " + sc.at("path").get<std::string>());
    json inner = json::parse(in);
    check(inner.is_object() && inner.contains("kind") && inner.at("kind") != "file",
          "scenario(file): file must contain a concrete scenario object");
    return build_scenario_object(inner, seed);
  }
  throw Error("scenario: unknown kind " + kind);
}

// ---------------------------------------------------------------------------
// Instrumentation
// ---------------------------------------------------------------------------

struct AuditCell {
  int current_leader = -1;
  Eigen::MatrixXi calls;  // (leader, follower)
  int out_of_cluster = 0;
  std::vector<int> cluster_of;
};

GameSpec instrument(const GameSpec& spec, const std::shared_ptr<AuditCell>& cell) {
  GameSpec wrapped = spec;
  for (int i = 0; i < spec.num_followers; ++i) {
    const FollowerCost base = spec.follower_costs[i];
    auto tick = [cell, i] {
      if (cell->current_leader >= 0) {
        ++cell->calls(cell->current_leader, i);
        if (cell->cluster_of[i] != cell->current_leader) ++cell->out_of_cluster;
      }
    };
    FollowerCost probe;
    probe.value = [base, tick](const Vec& y, const Vec& x) {
      tick();
      return base.value(y, x);
    };
    probe.grad_y = [base, tick](const Vec& y, const Vec& x) {
      tick();
      return base.grad_y(y, x);
    };
    probe.hess_yy = [base, tick](const Vec& y, const Vec& x) {
      tick();
      return base.hess_yy(y, x);
    };
    probe.cross_jac = [base, tick](int j, const Vec& y, const Vec& x) {
      tick();
      return base.cross_jac(j, y, x);
    };
    wrapped.follower_costs[i] = std::move(probe);
  }
  wrapped.finalize();
  return wrapped;
}

/// Shared SUMT threshold so every follower ends on the same theta rung.
double shared_stop_theta(const GameSpec& spec, const BarrierParams& params) {
  int s_max = 0;
  for (const auto& set : spec.follower_sets) s_max = std::max(s_max, num_inequalities(set));
  if (s_max == 0) return params.theta0;
  double theta = params.theta0;
  while (theta < static_cast<double>(s_max) / params.eps) theta *= params.chi;
  return theta;
}

}  // namespace

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

std::string Trajectory::to_csv(bool with_timing) const {
  std::string out = "k,beta,rel_x_err,psi_norm,rel_psi_err,br_err,jhi_err,cons_err,wall_ms\n";
  for (const auto& r : rows) {
    out += std::to_string(r.k);
    out += ',';
    out += format_cell(r.beta);
    out += ',';
    out += format_cell(r.rel_x_err);
    out += ',';
    out += format_cell(r.psi_norm);
    out += ',';
    out += format_cell(r.rel_psi_err);
    out += ',';
    out += format_cell(r.br_err);
    out += ',';
    out += format_cell(r.jhi_err);
    out += ',';
    out += format_cell(r.cons_err);
    out += ',';
    out += format_cell(with_timing ? r.wall_ms : kNaN);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// The Algorithm-1 loop
// ---------------------------------------------------------------------------

RunResult run(const RunConfig& config) {
  config.validate();
  BuiltScenario scenario = build_scenario_object(config.scenario, config.seed);
  auto cell = std::make_shared<AuditCell>();
  cell->cluster_of = scenario.spec.cluster_of;
  cell->calls = Eigen::MatrixXi::Zero(scenario.spec.num_leaders, scenario.spec.num_followers);
  const GameSpec spec = instrument(scenario.spec, cell);

  const int m = spec.num_leaders;
  EdgeList edges = config.graph_edges;
  check(m == 1 || !edges.empty(), "run: a leader graph is required when m > 1");
  const LeaderGraph graph = make_leader_graph(m, edges, config.xi_frac);
  const double sigma2 = consensus_contraction_factor(graph);

  const auto& c = spec.constants;
  const double alpha = config.alpha.value_or(default_inner_step(c));
  std::vector<std::string> run_warnings;
  if (alpha > default_inner_step(c) + 1e-15)
    run_warnings.push_back("alpha above 2/(mu+l_s1); contraction guarantee void");

  const bool constrained = spec.has_constrained_followers();
  const double stop_theta = constrained ? shared_stop_theta(spec, config.barrier) : 0.0;
  std::optional<BarrierContext> barrier_ctx;
  if (constrained) barrier_ctx = BarrierContext{stop_theta};

  // Initial point.
  Vec x(spec.total_leader_dim());
  if (config.x0) {
    check_dim(config.x0->size(), spec.total_leader_dim(), "run: x0");
    x = *config.x0;
  } else {
    x.setZero();
  }
  for (int j = 0; j < m; ++j)
    x.segment(spec.leader_offset(j), spec.leader_dims[j]) =
        project(spec.leader_sets[j], x.segment(spec.leader_offset(j), spec.leader_dims[j]));

  std::vector<Vec> y(spec.num_followers);
  std::vector<double> theta_state(spec.num_followers, config.barrier.theta0);
  for (int i = 0; i < spec.num_followers; ++i) {
    if (is_unconstrained(spec.follower_sets[i]))
      y[i] = Vec::Zero(spec.follower_dims[i]);
    else
      y[i] = interior_point(spec.follower_sets[i], spec.follower_dims[i], x);
  }

  // Oracle ground truth.
  RunResult result;
  Vec psi_star;
  double x0_err_norm = 0.0, psi0_err_norm = 0.0;
  if (config.oracle) {
    cell->current_leader = -1;
    result.oracle_point = solve_se_lq(scenario.spec, x, 1e-12, barrier_ctx);
    psi_star = pseudo_gradient_exact(scenario.spec, result.oracle_point->x, barrier_ctx);
    x0_err_norm = (x - result.oracle_point->x).norm();
  }

  // Cluster shapes, warm-start iterates, estimator bank.
  Vec y_stack(spec.total_follower_dim());
  for (int i = 0; i < spec.num_followers; ++i)
    y_stack.segment(spec.follower_offset(i), spec.follower_dims[i]) = y[i];
  std::vector<ClusterSensitivity> shapes;
  for (int h = 0; h < m; ++h)
    shapes.push_back(assemble_cluster_blocks(scenario.spec, h, y_stack, x, barrier_ctx));
  std::vector<ClusterBlocks> Z;
  for (int h = 0; h < m; ++h) Z.emplace_back(shapes[h].leader_dims, shapes[h].member_dims);
  EstimatorBank bank(shapes);
  result.audit.consensus.reset(m);

  // Effective gamma: declared default, capped by the spectral stability bound
  // of the initial Hessian stack (decided once; recorded in the manifest).
  double gamma = config.gamma.value_or(c.l_s2 > 0.0 ? 1.0 / c.l_s2 : 1.0 / c.l_s1);
  {
    double lmax = 0.0;
    for (const auto& s : shapes)
      for (const auto& H : s.H) {
        Eigen::SelfAdjointEigenSolver<Mat> eig(H);
        lmax = std::max(lmax, eig.eigenvalues().maxCoeff());
      }
    if (gamma * lmax >= 2.0) {
      gamma = 1.0 / lmax;
      run_warnings.push_back("gamma capped at 1/lambda_max of the initial Hessian stack");
    }
  }

  const int K = config.max_outer_iterations;
  result.trajectory.rows.reserve(K);

  for (int k = 0; k < K; ++k) {
    const auto t_start = std::chrono::steady_clock::now();
    TrajectoryRow row;
    row.k = k;
    row.beta = config.schedule.at(k);
    row.x = x;

    // Warm-start snapshots for the composite Delta_k.
    const Vec y_start = y_stack;

    // Q1: follower best-response approximation, cluster by cluster.
    for (int j = 0; j < m; ++j) {
      cell->current_leader = j;
      for (int i : spec.cluster(j)) {
        if (is_unconstrained(spec.follower_sets[i])) {
          y[i] = inner_gd(spec.follower_costs[i], x, y[i], config.T, alpha);
        } else {
          BarrierParams bp = config.barrier;
          bp.eps_inner = config.barrier.eps_inner;
          // Resume the theta ladder where the follower left it; the shared
          // threshold keeps all followers on the same final rung.
          double theta = theta_state[i];
          SumtResult res;
          res.y = y[i];
          while (true) {
            res.y = barrier_inner_solve(spec.follower_costs[i], spec.follower_sets[i], x,
                                        theta, res.y, bp.eps_inner, bp.max_inner_iters)
                        .y;
            if (theta >= stop_theta) break;
            theta *= bp.chi;
          }
          theta_state[i] = theta;
          y[i] = res.y;
        }
        y_stack.segment(spec.follower_offset(i), spec.follower_dims[i]) = y[i];
      }
    }
    cell->current_leader = -1;

    // Oracle diagnostics on the follower stage.
    if (config.oracle) {
      const Vec y_opt = best_response_stack(scenario.spec, x, barrier_ctx);
      row.br_err = (y_stack - y_opt).norm();
      row.delta_k = (y_start - y_opt).squaredNorm();
    } else {
      row.br_err = kNaN;
      row.delta_k = kNaN;
    }

    // Cluster assembly (each cluster leader collects its followers' blocks).
    std::vector<ClusterSensitivity> sens;
    sens.reserve(m);
    for (int h = 0; h < m; ++h) {
      cell->current_leader = h;
      sens.push_back(assemble_cluster_blocks(spec, h, y_stack, x, barrier_ctx));
    }
    cell->current_leader = -1;

    // Q2: local J-H-I descent with warm starts.
    double jhi_sq = 0.0, delta_z_sq = 0.0;
    for (int h = 0; h < m; ++h) {
      const ClusterBlocks z_ref = exact_jhi(sens[h]);
      delta_z_sq += std::pow(Z[h].frobenius_distance(z_ref), 2);
      Z[h] = jhi_descent(sens[h], std::move(Z[h]), gamma, config.D);
      jhi_sq += std::pow(Z[h].frobenius_distance(z_ref), 2);
    }
    row.jhi_err = std::sqrt(jhi_sq);

    // Q3: B consensus rounds over the leader graph.
    const double delta_bank_sq = std::pow(bank.frobenius_error(Z), 2);
    run_consensus(bank, graph, Z, config.B, nullptr, &result.audit.consensus);
    row.cons_err = bank.frobenius_error(Z);
    if (config.oracle) row.delta_k += delta_z_sq + delta_bank_sq;

    // Q4: estimated hypergradients and simultaneous projected steps.
    Vec psi_hat(spec.total_leader_dim());
    Vec x_next(spec.total_leader_dim());
    for (int j = 0; j < m; ++j) {
      const std::vector<Mat> strip = extract_blocks(bank, spec, j);
      const Vec grad = hypergradient_estimate(spec, j, x, y_stack, strip);
      psi_hat.segment(spec.leader_offset(j), spec.leader_dims[j]) = grad;
      x_next.segment(spec.leader_offset(j), spec.leader_dims[j]) = projected_step(
          spec.leader_sets[j], x.segment(spec.leader_offset(j), spec.leader_dims[j]), grad,
          row.beta);
    }
    row.psi_norm = psi_hat.norm();

    if (config.oracle) {
      row.rel_x_err = x0_err_norm > 0.0 ? (x - result.oracle_point->x).norm() / x0_err_norm
                                        : (x - result.oracle_point->x).norm();
      const double psi_err = (psi_hat - psi_star).norm();
      if (k == 0) psi0_err_norm = psi_err;
      row.rel_psi_err = psi0_err_norm > 0.0 ? psi_err / psi0_err_norm : psi_err;
    } else {
      row.rel_x_err = kNaN;
      row.rel_psi_err = kNaN;
    }

    const auto t_end = std::chrono::steady_clock::now();
    row.wall_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t_end - t_start)
            .count();
    const double step_norm = (x_next - x).norm();
    x = x_next;
    result.trajectory.rows.push_back(std::move(row));
    result.iterations_run = k + 1;
    if (step_norm <= 1e-10) {
      result.early_stopped = true;
      break;
    }
  }

  result.x_final = x;
  result.y_final = y_stack;
  result.audit.follower_oracle_calls = cell->calls;
  result.audit.out_of_cluster_calls = cell->out_of_cluster;
  // Structural audit: reads through zero-weight channels cannot happen by
  // construction; recompute the counts against the weight matrix anyway.
  for (int j = 0; j < m; ++j)
    for (int g = 0; g < m; ++g) {
      if (graph.W(j, g) == 0.0 && result.audit.consensus.neighbor_reads(j, g) > 0)
        ++result.audit.non_neighbor_reads;
      if (graph.W(j, g) == 0.0 && result.audit.consensus.truth_reads(j, g) > 0)
        ++result.audit.non_adjacent_truth_reads;
    }

  // Theory report.
  InnerLoopRates rates;
  rates.alpha = alpha;
  rates.gamma = gamma;
  rates.sigma2 = sigma2;
  rates.p_M = spec.max_cluster_dim();
  if (config.r_z) {
    rates.r_z = *config.r_z;
  } else {
    double rz = 0.0;
    for (int h = 0; h < m; ++h)
      rz += std::min(static_cast<double>(m) * spec.cluster(h).size() *
                         spec.total_leader_dim(),
                     static_cast<double>(m) * spec.cluster_dim(h));
    rates.r_z = std::max(1.0, rz);
  }
  double beta_M = std::min(config.schedule.max_step(), 1.0);
  std::optional<double> run_beta;
  if (config.schedule.is_constant()) run_beta = config.schedule.max_step();
  result.theory = make_theory_report(scenario.spec, rates, config.T, config.D, config.B,
                                     beta_M, config.pi, run_beta);
  for (const auto& w : run_warnings) result.theory.warnings.push_back(w);

  // Manifest: resolved configuration plus every generated parameter.
  json man;
  man["config"] = {{"scenario", config.scenario},
                   {"budgets", {{"T", config.T}, {"D", config.D}, {"B", config.B}}},
                   {"steps",
                    {{"alpha", alpha},
                     {"gamma", gamma},
                     {"schedule",
                      config.schedule.is_constant()
                          ? json{{"kind", "constant"}, {"beta", config.schedule.max_step()}}
                          : json{{"kind", "diminishing"},
                                 {"b", config.schedule.exponent()},
                                 {"scale", config.schedule.scale()}}}}},
                   {"xi", {{"frac", config.xi_frac}}},
                   {"max_outer_iterations", config.max_outer_iterations},
                   {"seed", config.seed},
                   {"oracle", config.oracle},
                   {"record_timing", config.record_timing},
                   {"pi", config.pi}};
  json edges_json = json::array();
  for (const auto& [a, b] : graph.edges) edges_json.push_back({a + 1, b + 1});
  man["config"]["graph"] = {{"edges", edges_json}};
  if (constrained)
    man["config"]["barrier"] = {{"theta0", config.barrier.theta0},
                                {"chi", config.barrier.chi},
                                {"eps", config.barrier.eps},
                                {"shared_stop_theta", stop_theta}};
  man["scenario_parameters"] = scenario.manifest;
  man["sigma2"] = sigma2;
  man["warnings"] = run_warnings;
  man["iterations_run"] = result.iterations_run;
  man["early_stopped"] = result.early_stopped;
  if (result.oracle_point) {
    json xs = json::array();
    for (Eigen::Index t = 0; t < result.oracle_point->x.size(); ++t)
      xs.push_back(result.oracle_point->x[t]);
    man["oracle"] = {{"x_star", xs},
                     {"iterations", result.oracle_point->iterations},
                     {"fixed_point_residual", result.oracle_point->fixed_point_residual}};
  }
  result.manifest = std::move(man);
  return result;
}

// ---------------------------------------------------------------------------
// Outputs
// ---------------------------------------------------------------------------

json theory_to_json(const TheoryReport& report) {
  auto num_or_inf = [](double v) -> json {
    if (std::isinf(v)) return "inf";
    return v;
  };
  json j;
  j["xi"] = {report.xi.xi1, report.xi.xi2, report.xi.xi3, report.xi.xi4,
             report.xi.xi5, report.xi.xi6, report.xi.xi7, report.xi.xi8};
  j["gamma_br"] = report.xi.gamma_br;
  j["c_factors"] = {{"C_T", report.c_factors.C_T},
                    {"C_D", num_or_inf(report.c_factors.C_D)},
                    {"C_B", report.c_factors.C_B},
                    {"base_T", report.c_factors.base_T},
                    {"base_D", report.c_factors.base_D},
                    {"base_B", report.c_factors.base_B}};
  j["bounds"] = {{"T_min", num_or_inf(report.bounds.T_min)},
                 {"D_min", num_or_inf(report.bounds.D_min)},
                 {"B_min", num_or_inf(report.bounds.B_min)},
                 {"notes", report.bounds.notes}};
  j["rates"] = {{"alpha", report.rates.alpha},
                {"gamma", report.rates.gamma},
                {"sigma2", report.rates.sigma2},
                {"r_z", report.rates.r_z},
                {"p_M", report.rates.p_M}};
  j["pi"] = report.pi;
  j["beta_M"] = report.beta_M;
  j["beta_s"] = num_or_inf(report.beta_s);
  if (report.beta_monotone) j["beta_monotone"] = *report.beta_monotone;
  if (report.rho_M_at_run_beta) j["rho_M_at_run_beta"] = *report.rho_M_at_run_beta;
  j["gamma_interval_feasible"] = report.gamma_interval_feasible;
  j["warnings"] = report.warnings;
  return j;
}

void write_outputs(const RunConfig& config, const RunResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  {
    std::ofstream out(fs::path(config.output_dir) / "trajectory.csv");
    out << result.trajectory.to_csv(config.record_timing);
  }
  {
    std::ofstream out(fs::path(config.output_dir) / "theory.json");
    out << theory_to_json(result.theory).dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(config.output_dir) / "manifest.json");
    out << result.manifest.dump(2) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Schedule comparison
// ---------------------------------------------------------------------------

namespace {

int iters_to_threshold(const Trajectory& traj, bool oracle, double threshold) {
  double psi0 = 0.0;
  for (const auto& r : traj.rows) {
    if (r.k == 0) psi0 = r.psi_norm;
    const double metric = oracle ? r.rel_psi_err : (psi0 > 0.0 ? r.psi_norm / psi0 : 0.0);
    if (!std::isnan(metric) && metric <= threshold) return r.k;
  }
  return -1;
}

}  // namespace

ScheduleComparison compare_schedules(const RunConfig& config) {
  check(config.schedule_diminishing.has_value() && config.schedule_constant.has_value(),
        "compare_schedules: config must provide steps.diminishing and steps.constant");
  RunConfig dim = config;
  dim.schedule = *config.schedule_diminishing;
  RunConfig con = config;
  con.schedule = *config.schedule_constant;

  ScheduleComparison cmp;
  cmp.diminishing = run(dim).trajectory;
  cmp.constant = run(con).trajectory;
  cmp.iters_to_threshold_diminishing_1e1 = iters_to_threshold(cmp.diminishing, config.oracle, 1e-1);
  cmp.iters_to_threshold_diminishing_1e2 = iters_to_threshold(cmp.diminishing, config.oracle, 1e-2);
  cmp.iters_to_threshold_constant_1e1 = iters_to_threshold(cmp.constant, config.oracle, 1e-1);
  cmp.iters_to_threshold_constant_1e2 = iters_to_threshold(cmp.constant, config.oracle, 1e-2);
  return cmp;
}

// ---------------------------------------------------------------------------
// Barrier gap sweep
// ---------------------------------------------------------------------------

namespace {

/// Exact minimizer of the raw follower cost over its constraint set: golden
/// section for 1-D rectangles, projected gradient otherwise.
Vec constrained_minimizer(const FollowerCost& cost, const FollowerConstraintSet& set,
                          const Vec& x, double mu) {
  if (is_unconstrained(set)) {
    Vec y0 = Vec::Zero(1);
    return best_response_exact(cost, x, y0);
  }
  const auto* rect = std::get_if<Rectangle>(&set);
  check(rect != nullptr,
        "barrier_gap_sweep: constrained oracle implemented for rectangle sets");
  if (rect->lower.size() == 1) {
    double a = rect->lower[0], b = rect->upper[0];
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double c1 = b - phi * (b - a), c2 = a + phi * (b - a);
    Vec v1(1), v2(1);
    v1[0] = c1;
    v2[0] = c2;
    double f1 = cost.value(v1, x), f2 = cost.value(v2, x);
    for (int it = 0; it < 200 && (b - a) > 1e-14; ++it) {
      if (f1 < f2) {
        b = c2;
        c2 = c1;
        f2 = f1;
        c1 = b - phi * (b - a);
        v1[0] = c1;
        f1 = cost.value(v1, x);
      } else {
        a = c1;
        c1 = c2;
        f1 = f2;
        c2 = a + phi * (b - a);
        v2[0] = c2;
        f2 = cost.value(v2, x);
      }
    }
    Vec out(1);
    out[0] = 0.5 * (a + b);
    return out;
  }
  // Projected gradient with a conservative step.
  Vec y = 0.5 * (rect->lower + rect->upper);
  const double step = 1.0 / std::max(mu, 1.0) * 0.1;
  for (int it = 0; it < 200000; ++it) {
    const Vec g = cost.grad_y(y, x);
    const Vec y_new = (y - step * g).cwiseMax(rect->lower).cwiseMin(rect->upper);
    if ((y_new - y).norm() <= 1e-13) return y_new;
    y = y_new;
  }
  return y;
}

}  // namespace

std::vector<BarrierGapRow> barrier_gap_sweep(const RunConfig& config,
                                             const std::vector<double>& thetas) {
  BuiltScenario scenario = build_scenario_object(config.scenario, config.seed);
  const GameSpec& spec = scenario.spec;
  check(spec.has_constrained_followers(),
        "barrier_gap_sweep: scenario has no constrained followers");

  Vec x(spec.total_leader_dim());
  if (config.x0) {
    check_dim(config.x0->size(), spec.total_leader_dim(), "barrier_gap_sweep: x0");
    x = *config.x0;
  } else {
    x.setZero();
  }
  for (int j = 0; j < spec.num_leaders; ++j)
    x.segment(spec.leader_offset(j), spec.leader_dims[j]) =
        project(spec.leader_sets[j], x.segment(spec.leader_offset(j), spec.leader_dims[j]));

  // Ground-truth constrained best responses (theta-independent).
  Vec y_true(spec.total_follower_dim());
  for (int i = 0; i < spec.num_followers; ++i) {
    Vec yi;
    if (is_unconstrained(spec.follower_sets[i]))
      yi = best_response_exact(spec, i, x);
    else
      yi = constrained_minimizer(spec.follower_costs[i], spec.follower_sets[i], x,
                                 spec.constants.mu);
    y_true.segment(spec.follower_offset(i), spec.follower_dims[i]) = yi;
  }

  std::vector<BarrierGapRow> table;
  for (double theta : thetas) {
    check(theta > 0.0, "barrier_gap_sweep: theta values must be > 0");
    BarrierGapRow row;
    row.theta = theta;
    Vec y_theta(spec.total_follower_dim());
    double bound_sq_sum = 0.0;
    for (int i = 0; i < spec.num_followers; ++i) {
      const auto& set = spec.follower_sets[i];
      Vec yi;
      if (is_unconstrained(set)) {
        yi = best_response_exact(spec, i, x);
      } else {
        yi = barrier_best_response(spec.follower_costs[i], set, x, theta,
                                   interior_point(set, spec.follower_dims[i], x));
        const double s_tilde = static_cast<double>(num_inequalities(set));
        const double gap_bound = std::sqrt(2.0 * s_tilde / (spec.constants.mu * theta));
        bound_sq_sum += 2.0 * s_tilde / (spec.constants.mu * theta);
        const double br_gap =
            (yi - y_true.segment(spec.follower_offset(i), spec.follower_dims[i])).norm();
        row.worst_br_gap = std::max(row.worst_br_gap, br_gap);
        row.br_gap_bound = std::max(row.br_gap_bound, gap_bound);
      }
      y_theta.segment(spec.follower_offset(i), spec.follower_dims[i]) = yi;
    }
    for (int j = 0; j < spec.num_leaders; ++j)
      row.cost_gap += std::abs(spec.leader_costs[j].value(x, y_theta) -
                               spec.leader_costs[j].value(x, y_true));
    row.lemma_bound = spec.constants.l_theta0 * std::sqrt(bound_sq_sum);
    table.push_back(row);
  }
  return table;
}

}  // namespace mlmf
