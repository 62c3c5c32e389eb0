#include "d2oc/stability.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace d2oc {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(std::string("stability: ") + what);
}

}  // namespace

Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A,
                                        const Eigen::MatrixXd& Q) {
  require(A.rows() == A.cols() && Q.rows() == Q.cols() && A.rows() == Q.rows(),
          "Lyapunov operands must be square and matched");
  // X = sum_j (A')^j Q A^j by squaring: X <- X + S'XS, S <- S^2.
  Eigen::MatrixXd X = Q;
  Eigen::MatrixXd S = A;
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::MatrixXd incr = S.transpose() * X * S;
    // magnitude guards avoid squared-norm overflow for divergent iterates
    if (!incr.allFinite() || incr.cwiseAbs().maxCoeff() > 1e100) break;
    X += incr;
    if (incr.norm() <= 1e-15 * std::max(1.0, X.norm())) {
      const double res = (A.transpose() * X * A - X + Q).norm();
      if (X.allFinite() && res <= 1e-8 * std::max(1.0, Q.norm() + X.norm())) {
        return X;
      }
      break;
    }
    S = S * S;
    if (!S.allFinite() || S.cwiseAbs().maxCoeff() > 1e100) break;
  }
  throw std::runtime_error(
      "solve_discrete_lyapunov: iteration did not contract (A not Schur?)");
}

Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const int n = static_cast<int>(A.rows());
  require(A.cols() == n && B.rows() == n, "DARE dimension mismatch");
  require(Q.rows() == n && Q.cols() == n, "DARE Q dimension mismatch");
  require(R.rows() == B.cols() && R.cols() == B.cols(), "DARE R dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> rchol(R);
  require(rchol.info() == Eigen::Success, "DARE R must be positive definite");

  // Structure-preserving doubling:
  //   W = I + G H,  A <- A W^-1 A,  G <- G + A W^-1 G A',  H <- H + A' H W^-1 A.
  Eigen::MatrixXd Ak = A;
  Eigen::MatrixXd G = B * rchol.solve(B.transpose());
  Eigen::MatrixXd H = Q;
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::MatrixXd W =
        Eigen::MatrixXd::Identity(n, n) + G * H;
    const auto lu = W.partialPivLu();
    const Eigen::MatrixXd V1 = lu.solve(Ak);
    const Eigen::MatrixXd V2 = lu.solve(G.transpose()).transpose();
    G += Ak * V2 * Ak.transpose();
    const Eigen::MatrixXd Hnext = H + V1.transpose() * H * Ak;
    Ak = Ak * V1;
    const double delta = (Hnext - H).norm();
    H = Hnext;
    if (!H.allFinite()) break;
    if (delta <= 1e-12 * std::max(1.0, H.norm())) return H;
  }
  throw std::runtime_error("solve_dare: no convergence (pair not stabilizable?)");
}

StabilitySpec synthesize_lyapunov(const LtiModel& model, double contraction,
                                  double rho) {
  require(contraction > 0.0 && contraction < 1.0, "contraction must be in (0,1)");
  require(rho > 0.0, "rho must be positive");

  const int n = model.n;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd Im = Eigen::MatrixXd::Identity(model.m, model.m);

  const Eigen::MatrixXd Pare = solve_dare(model.A, model.B, I, Im);
  const Eigen::MatrixXd K =
      -(Im + model.B.transpose() * Pare * model.B)
           .ldlt()
           .solve(model.B.transpose() * Pare * model.A);
  const Eigen::MatrixXd Acl = model.A + model.B * K;

  const double rho_cl =
      Acl.eigenvalues().cwiseAbs().maxCoeff();
  if (!(rho_cl < 1.0)) {
    throw std::runtime_error(
        "synthesize_lyapunov: closed loop not Schur (spectral radius " +
        std::to_string(rho_cl) + ")");
  }

  StabilitySpec spec;
  spec.P = solve_discrete_lyapunov(Acl, I);
  spec.P = 0.5 * (spec.P + spec.P.transpose().eval());
  spec.contraction = contraction;
  spec.rho = rho;
  spec.Qc = contraction * spec.P;

  Eigen::LLT<Eigen::MatrixXd> llt(spec.P);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("synthesize_lyapunov: P is not positive definite");
  }
  spec.L = llt.matrixU();
  if ((spec.L.transpose() * spec.L - spec.P).norm() > 1e-10 * spec.P.norm()) {
    throw std::runtime_error("synthesize_lyapunov: Cholesky factor check failed");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spec.P);
  spec.lambda = contraction * es.eigenvalues().minCoeff() /
                es.eigenvalues().maxCoeff();
  return spec;
}

bool check_contraction_lmi(const StabilitySpec& spec, const LtiModel& model,
                           const ErrorState& es, const Eigen::VectorXd& u) {
  const int n = model.n;
  require(es.e.size() == n && es.d.size() == n, "error state dimension mismatch");
  require(u.size() == model.m, "input dimension mismatch");

  const Eigen::VectorXd enext = model.A * es.e + model.B * u + es.d;
  Eigen::MatrixXd M(n + 1, n + 1);
  M(0, 0) = es.e.dot((spec.P - spec.Qc) * es.e);
  M.block(1, 0, n, 1) = spec.P * enext;
  M.block(0, 1, 1, n) = (spec.P * enext).transpose();
  M.block(1, 1, n, n) = spec.P;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M,
                                                     Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -1e-9;
}

double stability_radius(const StabilitySpec& spec, const Eigen::VectorXd& e) {
  // Q_c = c P makes sqrt(I - P^-1 Q_c) = sqrt(1-c) I exactly.
  return std::sqrt(1.0 - spec.contraction) * (spec.L * e).norm();
}

namespace {

struct QcqpWork {
  const CondensedQp* qp;
  Eigen::MatrixXd M;   // B'PB
  Eigen::VectorXd w;   // B'P(Ae + d)
  Eigen::VectorXd v;   // Ae + d
  double radius;
  double rho;
  const LtiModel* model;
  const StabilitySpec* spec;
};

struct Probe {
  BoxQpSolution box;
  Eigen::VectorXd enext;
  double norm;  // |L e+|
  double f;     // |L e+| (1 - mu/(2 rho)) - radius
};

Probe evaluate(const QcqpWork& wk, double mu) {
  // Scaling the subproblem keeps the minimizer and makes the box-QP
  // certificate meaningful for arbitrarily large multipliers.
  const double s = std::max(1.0, mu);
  CondensedQp sub;
  sub.H = (wk.qp->H + mu * wk.M) / s;
  sub.g = (wk.qp->g + mu * wk.w) / s;
  sub.u_min = wk.qp->u_min;
  sub.u_max = wk.qp->u_max;
  Probe p;
  p.box = solve_box_qp(sub);
  p.enext = wk.v + wk.model->B * p.box.u;
  p.norm = (wk.spec->L * p.enext).norm();
  const double shrink =
      std::isinf(wk.rho) ? 1.0 : (1.0 - mu / (2.0 * wk.rho));
  p.f = p.norm * shrink - wk.radius;
  return p;
}

// df/dmu on the current free subspace; conservative (may be an underestimate
// of the true slope magnitude when the active set is about to change).
double derivative(const QcqpWork& wk, double mu, const Probe& p) {
  std::vector<int> free_idx;
  const int m = static_cast<int>(p.box.u.size());
  for (int i = 0; i < m; ++i) {
    if (p.box.active[i] == 0) free_idx.push_back(i);
  }
  const double shrink =
      std::isinf(wk.rho) ? 1.0 : (1.0 - mu / (2.0 * wk.rho));
  double dnorm = 0.0;
  if (!free_idx.empty() && p.norm > 1e-300) {
    const int f = static_cast<int>(free_idx.size());
    Eigen::MatrixXd Hff(f, f);
    Eigen::VectorXd vf(f);
    const Eigen::VectorXd bpe = wk.model->B.transpose() * wk.spec->P * p.enext;
    for (int a = 0; a < f; ++a) {
      vf(a) = bpe(free_idx[a]);
      for (int b = 0; b < f; ++b) {
        Hff(a, b) = wk.qp->H(free_idx[a], free_idx[b]) +
                    mu * wk.M(free_idx[a], free_idx[b]);
      }
    }
    dnorm = -vf.dot(Hff.ldlt().solve(vf)) / p.norm;
  }
  double df = dnorm * shrink;
  if (!std::isinf(wk.rho)) df -= p.norm / (2.0 * wk.rho);
  return df;
}

}  // namespace

QcqpResult solve_stable_qcqp(const CondensedQp& qp, const StabilitySpec& spec,
                             const LtiModel& model, const ErrorState& es) {
  require(es.e.size() == model.n && es.d.size() == model.n,
          "error state dimension mismatch");

  QcqpWork wk;
  wk.qp = &qp;
  wk.M = model.B.transpose() * spec.P * model.B;
  wk.M = 0.5 * (wk.M + wk.M.transpose().eval());
  wk.v = model.A * es.e + es.d;
  wk.w = model.B.transpose() * spec.P * wk.v;
  wk.radius = stability_radius(spec, es.e);
  wk.rho = spec.rho;
  wk.model = &model;
  wk.spec = &spec;

  const bool hard = std::isinf(spec.rho);
  const double ftol = 1e-12 * (1.0 + wk.radius);

  QcqpResult res;
  Probe p0 = evaluate(wk, 0.0);
  if (p0.f <= ftol) {
    // Plain box solution already sits inside the stability cone.
    res.u = p0.box.u;
    res.residual = p0.norm - wk.radius;
    res.iterations = 1;
    return res;
  }

  double lo = 0.0;
  double hi;
  Probe phi;
  if (hard) {
    hi = 1.0;
    phi = evaluate(wk, hi);
    int doublings = 0;
    while (phi.f > ftol && doublings++ < 60) {
      hi *= 4.0;
      phi = evaluate(wk, hi);
    }
    if (phi.f > ftol) {
      // Even an arbitrarily weighted norm objective cannot reach the radius.
      res.u = phi.box.u;
      res.eps = 0.0;
      res.mu = std::numeric_limits<double>::infinity();
      res.residual = phi.f;
      res.iterations = doublings;
      res.status = QcqpStatus::kInfeasible;
      return res;
    }
  } else {
    // In the soft mode f(2 rho) = -radius <= 0, so the bracket is immediate.
    hi = 2.0 * spec.rho;
  }

  // Safeguarded Newton on f(mu) within the bracket [lo, hi].
  double mu = 0.5 * (lo + hi);
  Probe pm = p0;
  int iter = 0;
  for (; iter < 100; ++iter) {
    pm = evaluate(wk, mu);
    if (std::abs(pm.f) <= ftol || (hi - lo) <= 1e-14 * (1.0 + hi)) break;
    if (pm.f > 0.0) {
      lo = mu;
    } else {
      hi = mu;
    }
    double next = std::numeric_limits<double>::quiet_NaN();
    const double df = derivative(wk, mu, pm);
    if (df < 0.0 && std::isfinite(df)) next = mu - pm.f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // bisection step
    mu = next;
  }
  if (iter >= 100 && std::abs(pm.f) > 1e-6 * (1.0 + wk.radius)) {
    throw std::runtime_error(
        "solve_stable_qcqp: no convergence after 100 iterations, residual " +
        std::to_string(pm.f));
  }

  res.u = pm.box.u;
  res.eps = hard ? 0.0 : mu * pm.norm / (2.0 * spec.rho);
  res.mu = mu * pm.norm;  // norm-form multiplier: eps == mu/(2 rho)
  res.residual = pm.norm - wk.radius - res.eps;
  res.iterations = iter + 1;
  return res;
}

IssTraceResult iss_trace(const StabilitySpec& spec, const LtiModel& model,
                         const std::vector<ErrorState>& errors,
                         const std::vector<Eigen::VectorXd>& controls) {
  const std::size_t K = errors.size();
  require(K >= 1, "need at least one error sample");
  require(controls.empty() || controls.size() + 1 >= K,
          "control sequence shorter than the error sequence");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spec.P);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  const double lambda = spec.lambda;

  IssTraceResult out;
  out.value.resize(K);
  out.envelope.resize(K);
  out.error_norm.resize(K);

  const double e0 = errors[0].e.norm();
  double dsup = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    require(errors[k].e.size() == model.n, "error dimension mismatch");
    out.value(k) = errors[k].e.dot(spec.P * errors[k].e);
    out.error_norm(k) = errors[k].e.norm();
    out.envelope(k) =
        std::sqrt(lmax / lmin) *
            std::pow(1.0 - lambda, static_cast<double>(k) / 2.0) * e0 +
        (k > 0 ? dsup / std::sqrt(lmin * lambda) : 0.0);
    dsup = std::max(dsup, errors[k].d.norm());
  }
  return out;
}

}  // namespace d2oc
