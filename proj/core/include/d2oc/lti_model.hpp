#pragma once

#include <Eigen/Dense>
#include <vector>

namespace d2oc {

/// Discrete-time LTI agent model x' = A x + B u, y = C x.
///
/// C selects the spatial position from the state and must have full row
/// rank so the position is always recoverable (and liftable back).
struct LtiModel {
  Eigen::MatrixXd A;  // n x n state transition
  Eigen::MatrixXd B;  // n x m input map
  Eigen::MatrixXd C;  // d x n position output selector
  int n = 0;
  int m = 0;
  int d = 0;
};

/// Agent state at discrete time index k.
struct AgentState {
  Eigen::VectorXd x;
  int k = 0;
};

/// Cached power sequences pow_a = [A^0 .. A^T], pow_ab = [A^0 B .. A^(T-1) B],
/// built with the recursion A^(l+1) = A * A^l (no repeated exponentiation).
struct PowerSequence {
  std::vector<Eigen::MatrixXd> pow_a;
  std::vector<Eigen::MatrixXd> pow_ab;
};

/// Validates dimensions and the full-row-rank condition on C.
/// Throws std::invalid_argument on an inconsistent triple.
LtiModel make_model(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C);

/// 1-state, 1-input, 1-output model with scalar A = a, B = b, C = 1.
LtiModel make_scalar(double a = 1.0, double b = 1.0);

/// Planar double integrator, states [px vx py vy], one force input per axis,
/// exact zero-order-hold discretization.
LtiModel make_double_integrator2d(double dt);

/// 8th-order planar model: per axis a chain of four integrators
/// (position, velocity, acceleration, jerk) driven by one input, discretized
/// exactly (truncated Taylor series of the nilpotent chain is exact).
/// State layout: [px vx ax jx py vy ay jy]; C selects px, py.
LtiModel make_quadrotor8(double dt);

/// One dynamics step x' = A x + B u; increments the time index.
AgentState step(const LtiModel& model, const AgentState& state,
                const Eigen::VectorXd& u);

/// Position output y = C x.
Eigen::VectorXd output(const LtiModel& model, const AgentState& state);

/// Builds [A^0..A^T] and [A^0 B..A^(T-1) B] in O(T n^2 (n+m)).
PowerSequence power_sequence(const LtiModel& model, int T);

}  // namespace d2oc
