#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "d2oc/density_field.hpp"
#include "d2oc/lti_model.hpp"

namespace d2oc {

enum class SolverBackend { kFullKkt, kCondensed, kCondensedStable };

std::string to_string(SolverBackend backend);
SolverBackend backend_from_string(const std::string& name);

enum class FleetKind { kScalar, kDoubleIntegrator2d, kQuadrotor8 };

struct SwarmConfig {
  int n_agents = 10;
  FleetKind fleet = FleetKind::kQuadrotor8;
  double dt = 0.1;

  BoxDomain domain;
  std::vector<GmmComponent> gmm;
  int n_sp = 800;
  std::uint64_t seed = 1;

  double comm_range = 15.0;
  SelectionParams select;
  DecayParams decay;
  MergeRule merge = MergeRule::kMin;
  int exchange_every = 1;  // Stage C cadence in steps

  int horizon = 30;
  SolverBackend backend = SolverBackend::kCondensed;
  double q_weight = 0.0;  // Q = q_weight * I
  double r_weight = 1.0;  // R = r_weight * I
  Eigen::VectorXd u_min;  // empty selects +/-10 per channel
  Eigen::VectorXd u_max;

  double contraction = 0.2;  // stable backend only
  double rho = 1e3;

  double coverage_target = 0.99;
  int max_steps = 600;
  bool parallel = false;

  // Optional explicit initial positions (otherwise seeded uniform in the
  // domain); derivative states start at zero.
  std::vector<Eigen::VectorXd> initial_positions;
};

/// Per-step record of the closed-loop run.
struct StepRecord {
  int step = 0;
  std::vector<Eigen::VectorXd> position;
  std::vector<Eigen::VectorXd> control;
  std::vector<double> solve_ms;
  double total_mass = 0.0;
  double coverage = 0.0;
  // Populated by the condensed_stable backend only.
  std::vector<double> lyapunov;
  std::vector<double> radius;
  std::vector<double> slack;
};

struct SimTrace {
  std::vector<StepRecord> steps;
  bool target_reached = false;
  int steps_run = 0;
  double final_coverage = 0.0;
  double mean_solve_ms = 0.0;
  SampleField initial_field;
  SampleField final_field;
};

/// Geometric communication graph: i and j are adjacent iff their positions
/// are within comm_range (no self loops). Returns an adjacency list.
std::vector<std::vector<int>> comm_graph(
    const std::vector<Eigen::VectorXd>& positions, double comm_range);

/// Fraction of initially present sample mass that has been removed.
double coverage_fraction(const SampleField& field);

LtiModel make_fleet_model(FleetKind kind, double dt);

/// Runs the decentralized coverage loop: per step every agent builds its
/// preview from its own field view and solves with the configured backend;
/// weight decay is computed against the start-of-step field and applied
/// jointly; views are min-merged over the communication graph. Deterministic
/// for a fixed seed. Reaching max_steps before the coverage target is a
/// flagged outcome, not an error.
SimTrace run_sim(const SwarmConfig& cfg);

}  // namespace d2oc
