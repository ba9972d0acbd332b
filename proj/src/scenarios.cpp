#include "mlmf/scenarios.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <memory>
#include <random>

#include "mlmf/follower.hpp"
#include "mlmf/oracle.hpp"

namespace mlmf {

namespace {

using nlohmann::json;

json mat_to_json(const Mat& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vec_to_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index t = 0; t < v.size(); ++t) out.push_back(v[t]);
  return out;
}

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine);
  }
  double gauss(double sigma = 1.0) {
    return std::normal_distribution<double>(0.0, sigma)(engine);
  }
  int integer(int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(engine);
  }
  Mat gauss_mat(int r, int c, double sigma = 1.0) {
    Mat M(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) M(i, j) = gauss(sigma);
    return M;
  }
  Vec uniform_vec(int n, double lo, double hi) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
  /// Random symmetric matrix with eigenvalues drawn uniformly from [lo, hi].
  Mat spd(int n, double lo, double hi) {
    if (n == 1) return Mat::Constant(1, 1, uniform(lo, hi));
    const Mat G = gauss_mat(n, n);
    const Mat Q = Eigen::HouseholderQR<Mat>(G).householderQ();
    Vec d(n);
    for (int i = 0; i < n; ++i) d[i] = uniform(lo, hi);
    Mat M = Q * d.asDiagonal() * Q.transpose();
    return 0.5 * (M + M.transpose());
  }
};

std::vector<int> cluster_assignment(const std::vector<int>& sizes) {
  std::vector<int> cluster_of;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    check(sizes[j] >= 1, "scenario: cluster sizes must be >= 1");
    for (int t = 0; t < sizes[j]; ++t) cluster_of.push_back(static_cast<int>(j));
  }
  return cluster_of;
}

double spectral_norm(const Mat& M) { return M.jacobiSvd().singularValues().maxCoeff(); }

/// Largest singular value of the (x^j, y) Hessian of leader j's cost,
/// assembled by probing the analytic gradients (exact for quadratics).
double leader_grad_lipschitz(const GameSpec& spec, int j) {
  const int qj = spec.leader_dims[j];
  const int p = spec.total_follower_dim();
  const Vec x0 = Vec::Zero(spec.total_leader_dim());
  const Vec y0 = Vec::Zero(p);
  auto grad = [&](const Vec& xj, const Vec& y) {
    Vec x = x0;
    x.segment(spec.leader_offset(j), qj) = xj;
    Vec g(qj + p);
    g.head(qj) = spec.leader_costs[j].grad_xj(x, y);
    g.tail(p) = spec.leader_costs[j].grad_y(x, y);
    return g;
  };
  const Vec g0 = grad(Vec::Zero(qj), y0);
  Mat H(qj + p, qj + p);
  for (int c = 0; c < qj + p; ++c) {
    Vec xj = Vec::Zero(qj);
    Vec y = y0;
    if (c < qj)
      xj[c] = 1.0;
    else
      y[c - qj] += 1.0;
    H.col(c) = grad(xj, y) - g0;
  }
  return spectral_norm(H);
}

/// Same for follower i's gradient over (y^i, x). For the quadratic scenarios
/// the (y, x) Hessian of s^i is [[M_i, C_i^T-blocks], [., 0]]; assembled from
/// the oracles.
double follower_grad_lipschitz(const GameSpec& spec, int i) {
  const int pi = spec.follower_dims[i];
  const int q = spec.total_leader_dim();
  Mat H(pi + q, pi + q);
  H.setZero();
  const Vec x0 = Vec::Zero(q);
  const Vec y0 = Vec::Zero(pi);
  H.topLeftCorner(pi, pi) = spec.follower_costs[i].hess_yy(y0, x0);
  for (int j = 0; j < spec.num_leaders; ++j) {
    const Mat Jij = spec.follower_costs[i].cross_jac(j, y0, x0);  // q_j x p_i
    H.block(pi + spec.leader_offset(j), 0, spec.leader_dims[j], pi) = Jij;
    H.block(0, pi + spec.leader_offset(j), pi, spec.leader_dims[j]) = Jij.transpose();
  }
  return spectral_norm(H);
}

/// Margin-inflated max gradient norm over seeded samples of the region of
/// interest (theta is quadratic, so its true global constant is unbounded).
double estimate_l_theta0(const GameSpec& spec, Rng& rng, double radius) {
  double worst = 0.0;
  for (int s = 0; s < 32; ++s) {
    Vec x(spec.total_leader_dim());
    for (int t = 0; t < x.size(); ++t) x[t] = rng.uniform(-radius, radius);
    Vec y;
    if (spec.has_constrained_followers()) {
      y = Vec(spec.total_follower_dim());
      for (int i = 0; i < spec.num_followers; ++i) {
        Vec yi(spec.follower_dims[i]);
        if (const auto* r = std::get_if<Rectangle>(&spec.follower_sets[i]))
          for (int t = 0; t < yi.size(); ++t)
            yi[t] = rng.uniform(r->lower[t], r->upper[t]);
        else
          for (int t = 0; t < yi.size(); ++t) yi[t] = rng.uniform(-radius, radius);
        y.segment(spec.follower_offset(i), spec.follower_dims[i]) = yi;
      }
    } else {
      y = Vec(spec.total_follower_dim());
      for (int i = 0; i < spec.num_followers; ++i)
        y.segment(spec.follower_offset(i), spec.follower_dims[i]) =
            best_response_exact(spec, i, x);
      for (int t = 0; t < y.size(); ++t) y[t] += rng.gauss(0.25);
    }
    for (int j = 0; j < spec.num_leaders; ++j) {
      const double gx = spec.leader_costs[j].grad_xj(x, y).norm();
      const double gy = spec.leader_costs[j].grad_y(x, y).norm();
      worst = std::max(worst, std::hypot(gx, gy));
      worst = std::max(worst, std::abs(spec.leader_costs[j].value(x, y)) /
                                  std::max(1.0, std::hypot(x.norm(), y.norm())));
    }
  }
  return 1.5 * std::max(worst, 1e-6);
}

std::vector<FeasibleSet> leader_boxes(const std::vector<int>& dims, double halfwidth) {
  std::vector<FeasibleSet> sets;
  for (int q : dims) {
    if (halfwidth > 0.0)
      sets.push_back(FeasibleSet::box(Vec::Constant(q, -halfwidth), Vec::Constant(q, halfwidth)));
    else
      sets.push_back(FeasibleSet::whole_space(q));
  }
  return sets;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generic LQ game
// ---------------------------------------------------------------------------

namespace {

struct LqData {
  std::vector<Mat> M;     // follower Hessians
  std::vector<Mat> Minv;  // cached solves for the closed-form best response
  std::vector<Vec> g;     // follower linear terms
  std::vector<Mat> C;     // follower cross terms, p_i x q
  std::vector<Mat> Q;     // leader quadratics
  std::vector<Vec> d;     // leader linear terms
  std::vector<Mat> G;     // leader-follower bilinear terms, q_j x p
};

}  // namespace

BuiltScenario build_lq(const LqParams& params, std::uint64_t seed) {
  check(params.m >= 1, "build_lq: m must be >= 1");
  check(static_cast<int>(params.cluster_sizes.size()) == params.m,
        "build_lq: cluster_sizes must have m entries");
  Rng rng(seed);

  GameSpec spec;
  spec.num_leaders = params.m;
  spec.cluster_of = cluster_assignment(params.cluster_sizes);
  spec.num_followers = static_cast<int>(spec.cluster_of.size());
  spec.leader_dims.assign(params.m, params.leader_dim);
  spec.follower_dims.assign(spec.num_followers, params.follower_dim);
  const int q = params.m * params.leader_dim;
  const int p = spec.num_followers * params.follower_dim;

  auto data = std::make_shared<LqData>();
  for (int i = 0; i < spec.num_followers; ++i) {
    data->M.push_back(rng.spd(params.follower_dim, params.hess_eig_lo, params.hess_eig_hi));
    data->Minv.push_back(data->M.back().inverse());
    data->g.push_back(rng.uniform_vec(params.follower_dim, -params.linear_scale,
                                      params.linear_scale));
    data->C.push_back(rng.gauss_mat(params.follower_dim, q, params.follower_coupling));
  }
  for (int j = 0; j < params.m; ++j) {
    data->Q.push_back(rng.spd(params.leader_dim, params.q_eig_lo, params.q_eig_hi));
    data->d.push_back(
        rng.uniform_vec(params.leader_dim, -params.linear_scale, params.linear_scale));
    data->G.push_back(rng.gauss_mat(params.leader_dim, p, params.leader_coupling));
  }

  const int pi = params.follower_dim;
  for (int i = 0; i < spec.num_followers; ++i) {
    FollowerCost cost;
    cost.value = [data, i](const Vec& y, const Vec& x) {
      return 0.5 * y.dot(data->M[i] * y) - data->g[i].dot(y) + (data->C[i] * x).dot(y);
    };
    cost.grad_y = [data, i](const Vec& y, const Vec& x) -> Vec {
      return data->M[i] * y - data->g[i] + data->C[i] * x;
    };
    cost.hess_yy = [data, i](const Vec&, const Vec&) -> Mat { return data->M[i]; };
    const int qj = params.leader_dim;
    cost.cross_jac = [data, i, qj](int j, const Vec&, const Vec&) -> Mat {
      return data->C[i].middleCols(j * qj, qj).transpose();
    };
    spec.follower_costs.push_back(std::move(cost));
    spec.follower_sets.emplace_back(Unconstrained{});
    spec.exact_best_response.push_back([data, i](const Vec& x) -> Vec {
      return data->Minv[i] * (data->g[i] - data->C[i] * x);
    });
  }
  (void)pi;

  for (int j = 0; j < params.m; ++j) {
    LeaderCost cost;
    const int qj = params.leader_dim;
    const int off = j * qj;
    cost.value = [data, j, off, qj](const Vec& x, const Vec& y) {
      const Vec xj = x.segment(off, qj);
      return 0.5 * xj.dot(data->Q[j] * xj) + data->d[j].dot(xj) + xj.dot(data->G[j] * y);
    };
    cost.grad_xj = [data, j, off, qj](const Vec& x, const Vec& y) -> Vec {
      const Vec xj = x.segment(off, qj);
      return data->Q[j] * xj + data->d[j] + data->G[j] * y;
    };
    cost.grad_y = [data, j, off, qj](const Vec& x, const Vec&) -> Vec {
      return data->G[j].transpose() * x.segment(off, qj);
    };
    spec.leader_costs.push_back(std::move(cost));
  }
  spec.leader_sets = leader_boxes(spec.leader_dims, params.box_halfwidth);

  SmoothnessConstants c;
  c.mu = std::numeric_limits<double>::infinity();
  for (const auto& M : data->M) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(M);
    c.mu = std::min(c.mu, eig.eigenvalues().minCoeff());
  }
  c.l_s2 = 0.0;
  spec.constants = c;  // provisional; refined below
  spec.finalize();

  double ls1 = 0.0, lt1 = 0.0;
  for (int i = 0; i < spec.num_followers; ++i)
    ls1 = std::max(ls1, follower_grad_lipschitz(spec, i));
  for (int j = 0; j < params.m; ++j) lt1 = std::max(lt1, leader_grad_lipschitz(spec, j));
  spec.constants.l_s1 = ls1;
  spec.constants.l_theta1 = lt1;
  spec.constants.l_s0 = ls1;  // same spot-check register as l_theta0
  spec.constants.l_theta0 = estimate_l_theta0(spec, rng, 2.0);

  const AffinePseudoGradient affine = probe_pseudo_gradient(spec);
  if (affine.m_theta > 0.0) spec.constants.m_theta = affine.m_theta;
  spec.constants.l_phi = affine.l_phi;

  BuiltScenario out;
  out.spec = std::move(spec);
  json man;
  man["kind"] = "custom-LQ";
  man["seed"] = seed;
  man["m"] = params.m;
  man["N"] = out.spec.num_followers;
  man["cluster_sizes"] = params.cluster_sizes;
  for (int i = 0; i < out.spec.num_followers; ++i) {
    man["followers"][i]["M"] = mat_to_json(data->M[i]);
    man["followers"][i]["g"] = vec_to_json(data->g[i]);
    man["followers"][i]["C"] = mat_to_json(data->C[i]);
  }
  for (int j = 0; j < params.m; ++j) {
    man["leaders"][j]["Q"] = mat_to_json(data->Q[j]);
    man["leaders"][j]["d"] = vec_to_json(data->d[j]);
    man["leaders"][j]["G"] = mat_to_json(data->G[j]);
  }
  man["constants"] = {{"mu", out.spec.constants.mu},
                      {"l_s1", out.spec.constants.l_s1},
                      {"l_theta1", out.spec.constants.l_theta1},
                      {"l_theta0", out.spec.constants.l_theta0},
                      {"m_theta", affine.m_theta},
                      {"l_phi", affine.l_phi}};
  out.manifest = std::move(man);
  return out;
}

// ---------------------------------------------------------------------------
// Microgrid (Case 1)
// ---------------------------------------------------------------------------

namespace {

struct MicrogridData {
  std::vector<Mat> Q;   // q_j x q_j
  std::vector<Vec> d;   // q_j
  std::vector<Mat> Aj;  // v x q_j participation (0/1, one per column)
  Mat A;                // v x q stacked
  Mat B;                // v x p stacked
  std::vector<Mat> Bi;  // v x p_i
  std::vector<Mat> M;   // p_i x p_i
  std::vector<Mat> Minv;
  std::vector<Vec> g;   // p_i
  Mat P;                // v x v
  Vec e;                // v
  double u = 0.0;
  double r_bar = 0.0;
  std::vector<int> q_off, p_off;
};

Mat participation_matrix(Rng& rng, int v, int cols) {
  Mat A = Mat::Zero(v, cols);
  for (int c = 0; c < cols; ++c) A(rng.integer(0, v - 1), c) = 1.0;
  return A;
}

}  // namespace

BuiltScenario build_microgrid(const MicrogridParams& params, std::uint64_t seed) {
  check(params.m >= 1, "build_microgrid: m must be >= 1");
  check(static_cast<int>(params.cluster_sizes.size()) == params.m,
        "build_microgrid: cluster_sizes must have m entries");
  check(params.num_markets >= 1, "build_microgrid: need at least one market");

  for (int attempt = 0; attempt <= params.pd_retries; ++attempt) {
    Rng rng(seed + static_cast<std::uint64_t>(attempt) * 0x9e3779b97f4a7c15ULL);

    GameSpec spec;
    spec.num_leaders = params.m;
    spec.cluster_of = cluster_assignment(params.cluster_sizes);
    spec.num_followers = static_cast<int>(spec.cluster_of.size());
    spec.leader_dims.assign(params.m, params.leader_dim);
    spec.follower_dims.assign(spec.num_followers, params.follower_dim);
    const int v = params.num_markets;
    const int q = params.m * params.leader_dim;
    const int p = spec.num_followers * params.follower_dim;

    auto data = std::make_shared<MicrogridData>();
    data->u = params.fixed_cost;
    data->r_bar = params.supply_penalty;
    data->P = Mat::Zero(v, v);
    for (int r = 0; r < v; ++r)
      for (int c = 0; c < v; ++c) data->P(r, c) = rng.uniform(0.0, params.price_sensitivity);
    data->e = rng.uniform_vec(v, params.base_price_lo, params.base_price_hi);
    data->A = Mat::Zero(v, q);
    for (int j = 0; j < params.m; ++j) {
      data->Q.push_back(rng.spd(params.leader_dim, params.q_eig_lo, params.q_eig_hi));
      data->d.push_back(
          rng.uniform_vec(params.leader_dim, 0.0, params.linear_scale));
      data->Aj.push_back(participation_matrix(rng, v, params.leader_dim));
      data->A.middleCols(j * params.leader_dim, params.leader_dim) = data->Aj.back();
      data->q_off.push_back(j * params.leader_dim);
    }
    data->B = Mat::Zero(v, p);
    for (int i = 0; i < spec.num_followers; ++i) {
      data->M.push_back(rng.spd(params.follower_dim, params.m_eig_lo, params.m_eig_hi));
      data->Minv.push_back(data->M.back().inverse());
      data->g.push_back(rng.uniform_vec(params.follower_dim, 0.0, params.linear_scale));
      data->Bi.push_back(participation_matrix(rng, v, params.follower_dim));
      data->B.middleCols(i * params.follower_dim, params.follower_dim) = data->Bi.back();
      data->p_off.push_back(i * params.follower_dim);
    }

    const int qj_dim = params.leader_dim;
    for (int i = 0; i < spec.num_followers; ++i) {
      FollowerCost cost;
      cost.value = [data, i](const Vec& y, const Vec& x) {
        const Vec market = data->e - data->P * (data->A * x);
        return 0.5 * y.dot(data->M[i] * y) - data->g[i].dot(y) +
               market.dot(data->Bi[i] * y);
      };
      cost.grad_y = [data, i](const Vec& y, const Vec& x) -> Vec {
        const Vec market = data->e - data->P * (data->A * x);
        return data->M[i] * y - data->g[i] + data->Bi[i].transpose() * market;
      };
      cost.hess_yy = [data, i](const Vec&, const Vec&) -> Mat { return data->M[i]; };
      cost.cross_jac = [data, i, qj_dim](int j, const Vec&, const Vec&) -> Mat {
        const Mat PAj = data->P * data->Aj[j];
        return -(PAj.transpose() * data->Bi[i]);
      };
      spec.follower_costs.push_back(std::move(cost));
      spec.follower_sets.emplace_back(Unconstrained{});
      spec.exact_best_response.push_back([data, i](const Vec& x) -> Vec {
        const Vec market = data->e - data->P * (data->A * x);
        return data->Minv[i] * (data->g[i] - data->Bi[i].transpose() * market);
      });
    }

    for (int j = 0; j < params.m; ++j) {
      LeaderCost cost;
      const int off = j * qj_dim;
      cost.value = [data, j, off, qj_dim](const Vec& x, const Vec& y) {
        const Vec xj = x.segment(off, qj_dim);
        const Vec Ax = data->A * x;
        const Vec market = data->e - data->P * Ax;
        const Vec gap = Ax - data->B * y;
        return 0.5 * xj.dot(data->Q[j] * xj) + data->d[j].dot(xj) + data->u -
               market.dot(data->Aj[j] * xj) + data->r_bar * gap.squaredNorm();
      };
      cost.grad_xj = [data, j, off, qj_dim](const Vec& x, const Vec& y) -> Vec {
        const Vec xj = x.segment(off, qj_dim);
        const Vec Ax = data->A * x;
        const Vec gap = Ax - data->B * y;
        return data->Q[j] * xj + data->d[j] - data->Aj[j].transpose() * data->e +
               data->Aj[j].transpose() * (data->P.transpose() * (data->Aj[j] * xj)) +
               data->Aj[j].transpose() * (data->P * Ax) +
               2.0 * data->r_bar * (data->Aj[j].transpose() * gap);
      };
      cost.grad_y = [data](const Vec& x, const Vec& y) -> Vec {
        const Vec gap = data->A * x - data->B * y;
        return -2.0 * data->r_bar * (data->B.transpose() * gap);
      };
      spec.leader_costs.push_back(std::move(cost));
    }
    spec.leader_sets = leader_boxes(spec.leader_dims, params.box_halfwidth);

    SmoothnessConstants c;
    c.mu = std::numeric_limits<double>::infinity();
    for (const auto& M : data->M) {
      Eigen::SelfAdjointEigenSolver<Mat> eig(M);
      c.mu = std::min(c.mu, eig.eigenvalues().minCoeff());
    }
    c.l_s2 = 0.0;
    spec.constants = c;
    spec.finalize();

    double ls1 = 0.0, lt1 = 0.0;
    for (int i = 0; i < spec.num_followers; ++i)
      ls1 = std::max(ls1, follower_grad_lipschitz(spec, i));
    for (int j = 0; j < params.m; ++j) lt1 = std::max(lt1, leader_grad_lipschitz(spec, j));
    spec.constants.l_s1 = ls1;
    spec.constants.l_theta1 = lt1;
    spec.constants.l_s0 = ls1;
    spec.constants.l_theta0 = estimate_l_theta0(spec, rng, 2.0);

    const AffinePseudoGradient affine = probe_pseudo_gradient(spec);
    if (affine.m_theta <= 1e-10) continue;  // regenerate: monotonicity failed
    spec.constants.m_theta = affine.m_theta;
    spec.constants.l_phi = affine.l_phi;

    BuiltScenario out;
    out.spec = std::move(spec);
    json man;
    man["kind"] = "microgrid";
    man["seed"] = seed;
    man["attempt"] = attempt;
    man["m"] = params.m;
    man["N"] = out.spec.num_followers;
    man["cluster_sizes"] = params.cluster_sizes;
    man["num_markets"] = v;
    man["P"] = mat_to_json(data->P);
    man["e"] = vec_to_json(data->e);
    man["u"] = data->u;
    man["r_bar"] = data->r_bar;
    for (int j = 0; j < params.m; ++j) {
      man["leaders"][j]["Q"] = mat_to_json(data->Q[j]);
      man["leaders"][j]["d"] = vec_to_json(data->d[j]);
      man["leaders"][j]["A"] = mat_to_json(data->Aj[j]);
    }
    for (int i = 0; i < out.spec.num_followers; ++i) {
      man["followers"][i]["M"] = mat_to_json(data->M[i]);
      man["followers"][i]["g"] = vec_to_json(data->g[i]);
      man["followers"][i]["B"] = mat_to_json(data->Bi[i]);
    }
    man["constants"] = {{"mu", out.spec.constants.mu},
                        {"l_s1", out.spec.constants.l_s1},
                        {"l_theta1", out.spec.constants.l_theta1},
                        {"l_theta0", out.spec.constants.l_theta0},
                        {"m_theta", affine.m_theta},
                        {"l_phi", affine.l_phi}};
    out.manifest = std::move(man);
    return out;
  }
  throw Error("build_microgrid: no strongly monotone instance after retries "
              "(reduce price_sensitivity or supply_penalty)");
}

// ---------------------------------------------------------------------------
// Cellular pricing (Case 2)
// ---------------------------------------------------------------------------

namespace {

struct CellularData {
  Vec a, z, lambda, r, l_lo, l_hi;  // per follower
  Mat h;                            // m x N channel gains
  double B_u = 1.0;
  double capacity = 1.0;
};

}  // namespace

BuiltScenario build_cellular(const CellularParams& params, std::uint64_t seed) {
  check(params.m >= 1, "build_cellular: m must be >= 1");
  check(static_cast<int>(params.cluster_sizes.size()) == params.m,
        "build_cellular: cluster_sizes must have m entries");
  check(params.bound_lo < params.bound_hi, "build_cellular: bounds must satisfy l < u");
  Rng rng(seed);

  GameSpec spec;
  spec.num_leaders = params.m;
  spec.cluster_of = cluster_assignment(params.cluster_sizes);
  spec.num_followers = static_cast<int>(spec.cluster_of.size());
  spec.leader_dims.assign(params.m, 1);
  spec.follower_dims.assign(spec.num_followers, 1);
  const int N = spec.num_followers;

  auto data = std::make_shared<CellularData>();
  data->B_u = params.data_size;
  data->capacity = params.capacity;
  data->a = rng.uniform_vec(N, params.a_lo, params.a_hi);
  data->z = rng.uniform_vec(N, params.z_lo, params.z_hi);
  data->lambda = rng.uniform_vec(N, params.lambda_lo, params.lambda_hi);
  data->r = rng.uniform_vec(N, params.r_lo, params.r_hi);
  data->l_lo = rng.uniform_vec(N, params.bound_lo, 0.5 * (params.bound_lo + params.bound_hi));
  data->l_hi = Vec(N);
  for (int i = 0; i < N; ++i)
    data->l_hi[i] = rng.uniform(data->l_lo[i] + 0.25 * (params.bound_hi - params.bound_lo),
                                params.bound_hi);
  data->h = Mat(params.m, N);
  for (int j = 0; j < params.m; ++j)
    for (int i = 0; i < N; ++i) data->h(j, i) = rng.uniform(params.gain_lo, params.gain_hi);

  for (int i = 0; i < N; ++i) {
    FollowerCost cost;
    cost.value = [data, i](const Vec& y, const Vec& x) {
      const double lin = data->h.col(i).dot(x);
      const double level = data->a[i] + data->z[i] * y[0];
      check(level > 0.0, "cellular follower cost: log argument must stay positive");
      return -data->capacity +
             data->lambda[i] * (lin * y[0] - data->r[i] * data->B_u * std::log(level));
    };
    cost.grad_y = [data, i](const Vec& y, const Vec& x) -> Vec {
      const double lin = data->h.col(i).dot(x);
      const double level = data->a[i] + data->z[i] * y[0];
      Vec g(1);
      g[0] = data->lambda[i] * (lin - data->r[i] * data->B_u * data->z[i] / level);
      return g;
    };
    cost.hess_yy = [data, i](const Vec& y, const Vec&) -> Mat {
      const double level = data->a[i] + data->z[i] * y[0];
      Mat H(1, 1);
      H(0, 0) = data->lambda[i] * data->r[i] * data->B_u * data->z[i] * data->z[i] /
                (level * level);
      return H;
    };
    cost.cross_jac = [data, i](int j, const Vec&, const Vec&) -> Mat {
      Mat J(1, 1);
      J(0, 0) = data->lambda[i] * data->h(j, i);
      return J;
    };
    spec.follower_costs.push_back(std::move(cost));
    spec.follower_sets.emplace_back(
        Rectangle{Vec::Constant(1, data->l_lo[i]), Vec::Constant(1, data->l_hi[i])});
  }

  for (int j = 0; j < params.m; ++j) {
    LeaderCost cost;
    cost.value = [data, j](const Vec& x, const Vec& y) {
      double acc = 0.0;
      for (int i = 0; i < y.size(); ++i) acc += data->h(j, i) * data->lambda[i] * y[i];
      return -x[j] * acc;
    };
    cost.grad_xj = [data, j](const Vec&, const Vec& y) -> Vec {
      double acc = 0.0;
      for (int i = 0; i < y.size(); ++i) acc += data->h(j, i) * data->lambda[i] * y[i];
      return Vec::Constant(1, -acc);
    };
    cost.grad_y = [data, j](const Vec& x, const Vec& y) -> Vec {
      Vec g(y.size());
      for (int i = 0; i < y.size(); ++i) g[i] = -x[j] * data->h(j, i) * data->lambda[i];
      return g;
    };
    spec.leader_costs.push_back(std::move(cost));
  }
  for (int j = 0; j < params.m; ++j)
    spec.leader_sets.push_back(
        FeasibleSet::box(Vec::Constant(1, params.price_lo), Vec::Constant(1, params.price_hi)));

  // Raw strong convexity on the feasible interval: the Hessian is smallest at
  // the upper bound. This is the mu entering the Lemma-13 style gap bounds;
  // the barrier term only adds curvature on top of it.
  SmoothnessConstants c;
  c.mu = std::numeric_limits<double>::infinity();
  double ls1 = 0.0;
  for (int i = 0; i < N; ++i) {
    const double lev_hi = data->a[i] + data->z[i] * data->l_hi[i];
    const double lev_lo = data->a[i] + data->z[i] * data->l_lo[i];
    const double hess_min =
        data->lambda[i] * data->r[i] * data->B_u * data->z[i] * data->z[i] / (lev_hi * lev_hi);
    const double hess_max =
        data->lambda[i] * data->r[i] * data->B_u * data->z[i] * data->z[i] / (lev_lo * lev_lo);
    c.mu = std::min(c.mu, hess_min);
    const double cross = data->lambda[i] * data->h.col(i).norm();
    ls1 = std::max(ls1, hess_max + cross);
  }
  c.l_s1 = ls1;
  c.l_s0 = ls1;
  // Third derivative of the log term: 2 lambda r B_u z^3 / level^3.
  double ls2 = 0.0;
  for (int i = 0; i < N; ++i) {
    const double lev_lo = data->a[i] + data->z[i] * data->l_lo[i];
    ls2 = std::max(ls2, 2.0 * data->lambda[i] * data->r[i] * data->B_u *
                            std::pow(data->z[i], 3) / std::pow(lev_lo, 3));
  }
  c.l_s2 = ls2;
  double lt1 = 0.0;
  for (int j = 0; j < params.m; ++j) {
    double acc = 0.0;
    for (int i = 0; i < N; ++i)
      acc += std::pow(data->h(j, i) * data->lambda[i], 2);
    lt1 = std::max(lt1, std::sqrt(acc));
  }
  c.l_theta1 = std::max(lt1, 1e-6);
  spec.constants = c;
  spec.finalize();
  spec.constants.l_theta0 = estimate_l_theta0(spec, rng, params.price_hi);

  BuiltScenario out;
  out.spec = std::move(spec);
  json man;
  man["kind"] = "cellular";
  man["seed"] = seed;
  man["m"] = params.m;
  man["N"] = N;
  man["cluster_sizes"] = params.cluster_sizes;
  man["B_u"] = data->B_u;
  man["capacity"] = data->capacity;
  man["a"] = vec_to_json(data->a);
  man["z"] = vec_to_json(data->z);
  man["lambda"] = vec_to_json(data->lambda);
  man["r"] = vec_to_json(data->r);
  man["lower"] = vec_to_json(data->l_lo);
  man["upper"] = vec_to_json(data->l_hi);
  man["h"] = mat_to_json(data->h);
  man["constants"] = {{"mu", out.spec.constants.mu},
                      {"l_s1", out.spec.constants.l_s1},
                      {"l_s2", out.spec.constants.l_s2},
                      {"l_theta1", out.spec.constants.l_theta1},
                      {"l_theta0", out.spec.constants.l_theta0}};
  out.manifest = std::move(man);
  return out;
}

}  // namespace mlmf
