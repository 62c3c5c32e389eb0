#pragma once

#include <Eigen/Dense>
#include <vector>

#include "d2oc/condensed_qp.hpp"
#include "d2oc/lti_model.hpp"

namespace d2oc {

/// Contractive Lyapunov certificate for the tracking-error dynamics.
/// P = L'L with L upper triangular, Q_c = contraction * P, and
/// lambda = lambda_min(Q_c) / lambda_max(P) is the per-step decay ratio.
struct StabilitySpec {
  Eigen::MatrixXd P;
  Eigen::MatrixXd L;   // upper-triangular Cholesky factor, P = L'L
  Eigen::MatrixXd Qc;  // contraction * P
  double contraction = 0.2;
  double rho = 1e3;  // slack penalty; +inf selects the hard-constraint mode
  double lambda = 0.0;
};

/// Tracking error e = x - r and the reference propagation drift
/// d = A r_prev - r_cur, both in state space.
struct ErrorState {
  Eigen::VectorXd e;
  Eigen::VectorXd d;
};

enum class QcqpStatus { kOptimal, kInfeasible };

struct QcqpResult {
  Eigen::VectorXd u;
  double eps = 0.0;       // slack on the contraction constraint
  double mu = 0.0;        // multiplier of the norm-form constraint
  int iterations = 0;
  double residual = 0.0;  // |L(Ae+Bu+d)| - radius - eps at return
  QcqpStatus status = QcqpStatus::kOptimal;
};

/// Per-step Lyapunov value and ISS envelope for a closed-loop error run.
struct IssTraceResult {
  Eigen::VectorXd value;       // V(e_k) = e_k' P e_k
  Eigen::VectorXd envelope;    // bound on |e_k|
  Eigen::VectorXd error_norm;  // |e_k|
};

/// Solves A'XA - X + Q = 0 for Schur-stable A by doubling. Throws if the
/// iteration does not contract.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A,
                                        const Eigen::MatrixXd& Q);

/// Discrete algebraic Riccati equation via the structure-preserving doubling
/// iteration; requires (A, B) stabilizable with the given weights.
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

/// Builds the Lyapunov certificate: an LQR gain with unit weights closes the
/// loop, then (A+BK)'P(A+BK) - P = -I fixes P. Throws when the pair cannot
/// be stabilized.
StabilitySpec synthesize_lyapunov(const LtiModel& model, double contraction,
                                  double rho = 1e3);

/// Schur-complement certificate of the contraction condition
/// V(Ae+Bu+d) - V(e) <= -e'Q_c e: the bordered matrix
///   [ e'(P-Q_c)e   (P e+)' ]
///   [  P e+           P    ]
/// is PSD iff the condition holds. Returns min eigenvalue >= -1e-9.
bool check_contraction_lmi(const StabilitySpec& spec, const LtiModel& model,
                           const ErrorState& es, const Eigen::VectorXd& u);

/// State-dependent stability radius sqrt(1-c) * |L e|.
double stability_radius(const StabilitySpec& spec, const Eigen::VectorXd& e);

/// Soft-constrained contractive QCQP
///   min 0.5 u'Hu + g'u + rho eps^2
///   s.t. |L(Ae+Bu+d)| <= radius(e) + eps,  u in box,  eps >= 0
/// solved by safeguarded Newton on the scalar dual multiplier, with the
/// primal recovered through an exact box-QP per multiplier value. With
/// rho = +inf the slack is pinned to zero and an unattainable radius is
/// reported as kInfeasible.
QcqpResult solve_stable_qcqp(const CondensedQp& qp, const StabilitySpec& spec,
                             const LtiModel& model, const ErrorState& es);

/// Evaluates V(e_k) and the ISS envelope
///   sqrt(lmax/lmin) (1-lambda)^(k/2) |e0| + sup_j |d_j| / sqrt(lmin lambda)
/// over a recorded error run. Controls are accepted for signature
/// compatibility with recorded traces and only checked for alignment.
IssTraceResult iss_trace(const StabilitySpec& spec, const LtiModel& model,
                         const std::vector<ErrorState>& errors,
                         const std::vector<Eigen::VectorXd>& controls = {});

}  // namespace d2oc
