#include "d2oc/swarm_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

#include "d2oc/condensed_qp.hpp"
#include "d2oc/kkt_full.hpp"
#include "d2oc/stability.hpp"

namespace d2oc {

std::string to_string(SolverBackend backend) {
  switch (backend) {
    case SolverBackend::kFullKkt: return "full_kkt";
    case SolverBackend::kCondensed: return "condensed";
    case SolverBackend::kCondensedStable: return "condensed_stable";
  }
  return "unknown";
}

SolverBackend backend_from_string(const std::string& name) {
  if (name == "full_kkt") return SolverBackend::kFullKkt;
  if (name == "condensed") return SolverBackend::kCondensed;
  if (name == "condensed_stable") return SolverBackend::kCondensedStable;
  throw std::invalid_argument(
      "unknown solver_backend '" + name +
      "' (valid: full_kkt, condensed, condensed_stable)");
}

std::vector<std::vector<int>> comm_graph(
    const std::vector<Eigen::VectorXd>& positions, double comm_range) {
  const int n = static_cast<int>(positions.size());
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if ((positions[i] - positions[j]).norm() <= comm_range) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
    }
  }
  return adj;
}

double coverage_fraction(const SampleField& field) {
  if (!(field.initial_mass > 0.0)) {
    throw std::invalid_argument("coverage_fraction: initial mass must be positive");
  }
  return std::clamp(1.0 - field.total_mass() / field.initial_mass, 0.0, 1.0);
}

LtiModel make_fleet_model(FleetKind kind, double dt) {
  switch (kind) {
    case FleetKind::kScalar: return make_scalar();
    case FleetKind::kDoubleIntegrator2d: return make_double_integrator2d(dt);
    case FleetKind::kQuadrotor8: return make_quadrotor8(dt);
  }
  throw std::invalid_argument("unknown fleet kind");
}

namespace {

struct AgentSolveOutput {
  Eigen::VectorXd u;
  double solve_ms = 0.0;
  double lyapunov = 0.0;
  double radius = 0.0;
  double slack = 0.0;
  bool idle = false;  // view exhausted: hold position
};

struct SimContext {
  const SwarmConfig* cfg;
  LtiModel model;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  InputBounds bounds;
  RolloutParams rollout;
  StabilitySpec stab;  // condensed_stable only
};

AgentSolveOutput solve_agent(const SimContext& ctx, const SampleField& view,
                             const AgentState& x, Eigen::VectorXd& ref_prev) {
  AgentSolveOutput out;
  if (view.weights.maxCoeff() <= 0.0) {
    out.u = Eigen::VectorXd::Zero(ctx.model.m);
    out.idle = true;
    return out;
  }
  const HorizonData hd = build_horizon_data(view, ctx.model, x, ctx.cfg->horizon,
                                            ctx.Q, ctx.R, ctx.rollout);

  const auto t0 = std::chrono::steady_clock::now();
  switch (ctx.cfg->backend) {
    case SolverBackend::kFullKkt: {
      const KktSystem sys = assemble_kkt(ctx.model, hd, x);
      const KktSolution sol = solve_full(sys);
      out.u = sol.ubar.head(ctx.model.m)
                  .cwiseMax(ctx.bounds.u_min)
                  .cwiseMin(ctx.bounds.u_max);
      break;
    }
    case SolverBackend::kCondensed: {
      const CondensedQp qp = condense(ctx.model, hd, x, ctx.bounds);
      out.u = solve_box_qp(qp).u;
      break;
    }
    case SolverBackend::kCondensedStable: {
      const CondensedQp qp = condense(ctx.model, hd, x, ctx.bounds);
      const Eigen::VectorXd& ref_cur = hd.reference.front();
      if (ref_prev.size() == 0) ref_prev = ref_cur;
      ErrorState es;
      es.e = x.x - ref_prev;
      es.d = ctx.model.A * ref_prev - ref_cur;
      const QcqpResult res = solve_stable_qcqp(qp, ctx.stab, ctx.model, es);
      out.u = res.u;
      out.lyapunov = es.e.dot(ctx.stab.P * es.e);
      out.radius = stability_radius(ctx.stab, es.e);
      out.slack = res.eps;
      ref_prev = ref_cur;
      break;
    }
  }
  const auto t1 = std::chrono::steady_clock::now();
  out.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return out;
}

double decay_amount(const DecayParams& p, double w_start, double dist2) {
  if (dist2 > p.r_c * p.r_c) return 0.0;
  const double kernel = std::exp(-dist2 / (2.0 * p.sigma_c * p.sigma_c));
  if (p.rule == DecayRule::kGaussianTruncated) return p.eta * kernel;
  return w_start * std::min(1.0, p.eta * kernel);
}

}  // namespace

SimTrace run_sim(const SwarmConfig& cfg) {
  if (cfg.n_agents < 1) throw std::invalid_argument("run_sim: need at least one agent");
  if (!(cfg.coverage_target >= 0.0 && cfg.coverage_target < 1.0)) {
    throw std::invalid_argument("run_sim: coverage_target must be in [0, 1)");
  }
  if (!(cfg.comm_range > 0.0)) {
    throw std::invalid_argument("run_sim: comm_range must be positive");
  }

  SimContext ctx;
  ctx.cfg = &cfg;
  ctx.model = make_fleet_model(cfg.fleet, cfg.dt);
  // Damping acts on the derivative states only: positions are steered by the
  // sample weights, so Q leaves the C'C subspace untouched.
  ctx.Q = cfg.q_weight *
          (Eigen::MatrixXd::Identity(ctx.model.n, ctx.model.n) -
           ctx.model.C.transpose() * ctx.model.C);
  ctx.R = cfg.r_weight * Eigen::MatrixXd::Identity(ctx.model.m, ctx.model.m);
  ctx.bounds.u_min = cfg.u_min.size() == ctx.model.m
                         ? cfg.u_min
                         : Eigen::VectorXd::Constant(ctx.model.m, -10.0);
  ctx.bounds.u_max = cfg.u_max.size() == ctx.model.m
                         ? cfg.u_max
                         : Eigen::VectorXd::Constant(ctx.model.m, 10.0);
  ctx.rollout.select = cfg.select;
  ctx.rollout.decay = cfg.decay;
  if (cfg.backend == SolverBackend::kCondensedStable) {
    ctx.stab = synthesize_lyapunov(ctx.model, cfg.contraction, cfg.rho);
  }

  SampleField truth = make_gmm_field(cfg.domain, cfg.gmm, cfg.n_sp, cfg.seed);

  // Seeded placement; explicit initial positions override.
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<AgentState> agents(cfg.n_agents);
  std::vector<Eigen::VectorXd> ref_prev(cfg.n_agents);
  for (int i = 0; i < cfg.n_agents; ++i) {
    Eigen::VectorXd pos(ctx.model.d);
    if (i < static_cast<int>(cfg.initial_positions.size())) {
      pos = cfg.initial_positions[i];
    } else {
      for (int c = 0; c < ctx.model.d; ++c) {
        pos(c) = cfg.domain.lo(c) + unit(rng) * (cfg.domain.hi(c) - cfg.domain.lo(c));
      }
    }
    AgentState st;
    st.x = lift_reference(pos, ctx.model);
    st.k = 0;
    agents[i] = st;
  }
  std::vector<SampleField> views(cfg.n_agents, truth);

  SimTrace trace;
  trace.initial_field = truth;

  double solve_ms_total = 0.0;
  std::size_t solve_count = 0;

  int step_idx = 0;
  for (; step_idx < cfg.max_steps; ++step_idx) {
    if (coverage_fraction(truth) >= cfg.coverage_target) {
      trace.target_reached = true;
      break;
    }

    // Stage A: decoupled preview + solve per agent (reads only the agent's
    // own state and view, so fan-out is safe).
    std::vector<AgentSolveOutput> outputs(cfg.n_agents);
    auto solve_range = [&](int begin, int end) {
      for (int i = begin; i < end; ++i) {
        outputs[i] = solve_agent(ctx, views[i], agents[i], ref_prev[i]);
      }
    };
    if (cfg.parallel && cfg.n_agents > 1) {
      const int workers = std::min<int>(
          cfg.n_agents, std::max(2u, std::thread::hardware_concurrency()));
      std::vector<std::thread> pool;
      const int chunk = (cfg.n_agents + workers - 1) / workers;
      for (int w = 0; w < workers; ++w) {
        const int begin = w * chunk;
        const int end = std::min(cfg.n_agents, begin + chunk);
        if (begin < end) pool.emplace_back(solve_range, begin, end);
      }
      for (auto& t : pool) t.join();
    } else {
      solve_range(0, cfg.n_agents);
    }

    StepRecord rec;
    rec.step = step_idx;
    rec.position.resize(cfg.n_agents);
    rec.control.resize(cfg.n_agents);
    rec.solve_ms.resize(cfg.n_agents);
    if (cfg.backend == SolverBackend::kCondensedStable) {
      rec.lyapunov.resize(cfg.n_agents);
      rec.radius.resize(cfg.n_agents);
      rec.slack.resize(cfg.n_agents);
    }

    std::vector<Eigen::VectorXd> positions(cfg.n_agents);
    for (int i = 0; i < cfg.n_agents; ++i) {
      agents[i] = step(ctx.model, agents[i], outputs[i].u);
      positions[i] = output(ctx.model, agents[i]);
      rec.position[i] = positions[i];
      rec.control[i] = outputs[i].u;
      rec.solve_ms[i] = outputs[i].solve_ms;
      if (!outputs[i].idle) {
        solve_ms_total += outputs[i].solve_ms;
        ++solve_count;
      }
      if (cfg.backend == SolverBackend::kCondensedStable) {
        rec.lyapunov[i] = outputs[i].lyapunov;
        rec.radius[i] = outputs[i].radius;
        rec.slack[i] = outputs[i].slack;
      }
    }

    // Stage B: decay against start-of-step weights, applied jointly so agent
    // order cannot matter. Each agent's own view records only its own pass.
    Eigen::VectorXd removed = Eigen::VectorXd::Zero(truth.count());
    for (int i = 0; i < cfg.n_agents; ++i) {
      for (int j = 0; j < truth.count(); ++j) {
        const double dist2 = (truth.positions.col(j) - positions[i]).squaredNorm();
        removed(j) += decay_amount(cfg.decay, truth.weights(j), dist2);
      }
      views[i] = decay_weights(views[i], positions[i], cfg.decay);
    }
    truth.weights = (truth.weights - removed).cwiseMax(0.0);

    // Stage C: synchronous merge over the geometric graph.
    if (cfg.exchange_every > 0 && (step_idx % cfg.exchange_every) == 0) {
      const auto adj = comm_graph(positions, cfg.comm_range);
      std::vector<SampleField> merged(cfg.n_agents);
      for (int i = 0; i < cfg.n_agents; ++i) {
        std::vector<const SampleField*> neigh;
        neigh.reserve(adj[i].size());
        for (int j : adj[i]) neigh.push_back(&views[j]);
        merged[i] = exchange_weights(views[i], neigh, cfg.merge);
      }
      views = std::move(merged);
    }

    rec.total_mass = truth.total_mass();
    rec.coverage = coverage_fraction(truth);
    trace.steps.push_back(std::move(rec));
  }

  if (!trace.target_reached) {
    trace.target_reached = coverage_fraction(truth) >= cfg.coverage_target;
  }
  trace.steps_run = static_cast<int>(trace.steps.size());
  trace.final_coverage = coverage_fraction(truth);
  trace.mean_solve_ms = solve_count > 0 ? solve_ms_total / solve_count : 0.0;
  trace.final_field = truth;
  return trace;
}

}  // namespace d2oc
