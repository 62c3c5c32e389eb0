#pragma once

#include <Eigen/Dense>
#include <vector>

#include "d2oc/density_field.hpp"
#include "d2oc/lti_model.hpp"

namespace d2oc {

/// Box bounds on the applied input.
struct InputBounds {
  Eigen::VectorXd u_min;
  Eigen::VectorXd u_max;
};

/// Condensed m-dimensional QP: minimize 0.5 u'Hu + g'u over the box.
/// H is symmetric PD whenever R is (H >= R in the Loewner order).
struct CondensedQp {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::VectorXd u_min;
  Eigen::VectorXd u_max;
};

/// Box-QP minimizer with the facial active set (-1 lower, 0 free, +1 upper).
struct BoxQpSolution {
  Eigen::VectorXd u;
  std::vector<int> active;
};

/// Condenses the T-horizon problem onto the first input in one forward pass:
///   H = R + sum_l B'(A^l)' Qbar_l A^l B
///   g = sum_l B'(A^l)' Qbar_l (A^(l+1) x0 - r_{l+1})
/// using the running products A^l B and A^(l+1) x0, O(T n^2 m) total.
CondensedQp condense(const LtiModel& model, const HorizonData& hd,
                     const AgentState& x0, const InputBounds& bounds);

/// Exact solve of the box QP. For m <= 4 this enumerates the 3^m facial
/// lattice with KKT sign checks; larger m falls back to a projected Newton
/// iteration. The returned point satisfies the projected-gradient
/// certificate |u - clip(u - (Hu+g))|_inf <= 1e-10.
BoxQpSolution solve_box_qp(const CondensedQp& qp);

/// Horizon cost of applying u now and nothing afterwards:
///   J0(u) = 0.5 u'Ru + sum_l 0.5 |A^(l+1) x0 + A^l B u - r_{l+1}|^2_{Qbar_l}
/// whose gradient is exactly Hu + g. Serves as the finite-difference oracle
/// for the condensed coefficients.
double surrogate_cost(const LtiModel& model, const HorizonData& hd,
                      const AgentState& x0, const Eigen::VectorXd& u);

}  // namespace d2oc
