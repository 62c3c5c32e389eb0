#pragma once

#include <Eigen/Dense>
#include <vector>

#include "d2oc/density_field.hpp"
#include "d2oc/lti_model.hpp"

namespace d2oc {

/// Saddle-point system E z = F for the T-horizon problem, with
/// z = [xbar; lambdabar; ubar].
///
/// Block layout (all blocks per horizon step):
///   E11 = diag(Qbar_0 .. Qbar_{T-1})         (state stationarity weights)
///   E12 = E21' upper bidiagonal, -I on the diagonal, A' above it
///   E23 = E32' = diag(B),  E33 = diag(R),  E13 = E31 = E22 = 0
///   F   = [F1; F2; 0], F1_l = Qbar_l * r_{l+1}, F2 = [-A x0; 0; ...].
struct KktSystem {
  Eigen::MatrixXd E;
  Eigen::VectorXd F;
  int T = 0;
  int n = 0;
  int m = 0;
  // Generator blocks kept alongside the assembled matrix so the Schur path
  // can run block back-substitutions without parsing E.
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd R;
  std::vector<Eigen::MatrixXd> state_penalty;
};

struct KktSolution {
  Eigen::VectorXd xbar;       // stacked states, length n*T
  Eigen::VectorXd lambdabar;  // stacked co-states, length n*T
  Eigen::VectorXd ubar;       // stacked inputs, length m*T
  double residual_norm = 0.0;
  double solve_seconds = 0.0;
};

/// Schur complement of the saddle-point system onto the input block:
/// H_full ubar = G_full reproduces the unconstrained optimum.
struct SchurReduction {
  Eigen::MatrixXd H_full;  // mT x mT
  Eigen::VectorXd G_full;  // mT
};

KktSystem assemble_kkt(const LtiModel& model, const HorizonData& hd,
                       const AgentState& x0);

/// Dense factorization solve of E z = F. Throws on a (near-)singular
/// factorization; otherwise residual_norm <= 1e-8 * (1 + |F|).
KktSolution solve_full(const KktSystem& sys);

/// Structured reduction
///   H_full = E33 + E23' E12^-1 E11 E12^-T E23
///   G_full = E23' E12^-1 (E11 E12^-T F2 - F1)
/// computed by block back-substitution on the bidiagonal E12 (no dense
/// inverse is ever formed).
SchurReduction schur_reduce(const KktSystem& sys);

}  // namespace d2oc
