#include "d2oc/kkt_full.hpp"

#include <chrono>
#include <stdexcept>
#include <vector>

namespace d2oc {

KktSystem assemble_kkt(const LtiModel& model, const HorizonData& hd,
                       const AgentState& x0) {
  if (hd.T < 1) throw std::invalid_argument("assemble_kkt: horizon must be >= 1");
  if (static_cast<int>(hd.state_penalty.size()) != hd.T ||
      static_cast<int>(hd.reference.size()) != hd.T) {
    throw std::invalid_argument("assemble_kkt: horizon data length mismatch");
  }
  if (x0.x.size() != model.n) {
    throw std::invalid_argument("assemble_kkt: state dimension mismatch");
  }

  const int T = hd.T;
  const int n = model.n;
  const int m = model.m;
  const int nl = n * T;        // offset of the co-state block
  const int nu = 2 * n * T;    // offset of the input block
  const int size = (2 * n + m) * T;

  KktSystem sys;
  sys.T = T;
  sys.n = n;
  sys.m = m;
  sys.A = model.A;
  sys.B = model.B;
  sys.R = hd.R;
  sys.state_penalty = hd.state_penalty;
  sys.E = Eigen::MatrixXd::Zero(size, size);
  sys.F = Eigen::VectorXd::Zero(size);

  const Eigen::MatrixXd At = model.A.transpose();
  const Eigen::MatrixXd Bt = model.B.transpose();
  for (int l = 0; l < T; ++l) {
    sys.E.block(l * n, l * n, n, n) = hd.state_penalty[l];  // E11
    // E12 / E21
    sys.E.block(l * n, nl + l * n, n, n) = -Eigen::MatrixXd::Identity(n, n);
    sys.E.block(nl + l * n, l * n, n, n) = -Eigen::MatrixXd::Identity(n, n);
    if (l + 1 < T) {
      sys.E.block(l * n, nl + (l + 1) * n, n, n) = At;
      sys.E.block(nl + (l + 1) * n, l * n, n, n) = model.A;
    }
    // E23 / E32
    sys.E.block(nl + l * n, nu + l * m, n, m) = model.B;
    sys.E.block(nu + l * m, nl + l * n, m, n) = Bt;
    // E33
    sys.E.block(nu + l * m, nu + l * m, m, m) = hd.R;
    // F1: penalty times lifted reference, paired as in the condensed form.
    sys.F.segment(l * n, n) = hd.state_penalty[l] * hd.reference[l];
  }
  sys.F.segment(nl, n) = -model.A * x0.x;  // F2 head; remaining blocks zero
  return sys;
}

namespace {

// One extended-precision residual r = F - E z; the products of doubles are
// exact in the 64-bit mantissa and the sums carry the extra bits, so the
// refined solution error is governed by the residual precision rather than
// the working precision alone.
Eigen::VectorXd extended_residual(const Eigen::MatrixXd& E,
                                  const Eigen::VectorXd& F,
                                  const Eigen::VectorXd& z) {
  const Eigen::Index n = E.rows();
  std::vector<long double> acc(n);
  for (Eigen::Index i = 0; i < n; ++i) acc[i] = static_cast<long double>(F(i));
  for (Eigen::Index j = 0; j < n; ++j) {  // column-major traversal
    const long double zj = static_cast<long double>(z(j));
    const double* col = E.col(j).data();
    for (Eigen::Index i = 0; i < n; ++i) {
      acc[i] -= static_cast<long double>(col[i]) * zj;
    }
  }
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r(i) = static_cast<double>(acc[i]);
  return r;
}

}  // namespace

KktSolution solve_full(const KktSystem& sys) {
  const auto t0 = std::chrono::steady_clock::now();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.E);
  Eigen::VectorXd z = lu.solve(sys.F);
  for (int it = 0; it < 2; ++it) {
    z += lu.solve(extended_residual(sys.E, sys.F, z));
  }
  const auto t1 = std::chrono::steady_clock::now();

  const double fnorm = sys.F.norm();
  double residual = (sys.E * z - sys.F).norm();
  if (!(residual <= 1e-8 * (1.0 + fnorm)) || !z.allFinite()) {
    // Retry with full pivoting before declaring the system singular.
    Eigen::FullPivLU<Eigen::MatrixXd> flu(sys.E);
    if (!flu.isInvertible()) {
      throw std::runtime_error(
          "solve_full: singular KKT factorization (rank " +
          std::to_string(flu.rank()) + " of " +
          std::to_string(sys.E.rows()) + ")");
    }
    z = flu.solve(sys.F);
    residual = (sys.E * z - sys.F).norm();
    if (!(residual <= 1e-8 * (1.0 + fnorm))) {
      throw std::runtime_error(
          "solve_full: residual " + std::to_string(residual) +
          " exceeds tolerance; system is ill-conditioned");
    }
  }

  const int nT = sys.n * sys.T;
  const int mT = sys.m * sys.T;
  KktSolution sol;
  sol.xbar = z.head(nT);
  sol.lambdabar = z.segment(nT, nT);
  sol.ubar = z.tail(mT);
  sol.residual_norm = residual;
  sol.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
  return sol;
}

namespace {

// The substitutions sweep products of A across the whole horizon, so for
// unstable dynamics the intermediates grow like rho(A)^T. Accumulating in
// extended precision keeps the reduction usable as a tight oracle in that
// regime; the algorithm and its O(T n^2 m)-per-block-column cost are
// unchanged.
using LongMatrix =
    Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

// w = E12^-T v over block vectors: row l of E12' gives  A w_{l-1} - w_l = v_l.
void solve_e12_transpose(const LongMatrix& A, std::vector<LongMatrix>& w) {
  const int T = static_cast<int>(w.size());
  w[0] = -w[0];
  for (int l = 1; l < T; ++l) w[l] = A * w[l - 1] - w[l];
}

// w = E12^-1 v over block vectors: row l of E12 gives -w_l + A' w_{l+1} = v_l.
void solve_e12(const LongMatrix& A, std::vector<LongMatrix>& w) {
  const int T = static_cast<int>(w.size());
  const LongMatrix At = A.transpose();
  w[T - 1] = -w[T - 1];
  for (int l = T - 2; l >= 0; --l) w[l] = At * w[l + 1] - w[l];
}

}  // namespace

SchurReduction schur_reduce(const KktSystem& sys) {
  const int T = sys.T;
  const int n = sys.n;
  const int m = sys.m;

  const LongMatrix A = sys.A.cast<long double>();
  const LongMatrix B = sys.B.cast<long double>();
  const LongMatrix Bt = B.transpose();
  std::vector<LongMatrix> penalty(T);
  for (int l = 0; l < T; ++l) {
    penalty[l] = sys.state_penalty[l].cast<long double>();
  }

  LongMatrix H = LongMatrix::Zero(m * T, m * T);
  LongMatrix G = LongMatrix::Zero(m * T, 1);

  // One block column of E23 at a time: H column block j is
  // E33_j + E23' E12^-1 E11 E12^-T (e_j (x) B).
  std::vector<LongMatrix> work(T);
  for (int j = 0; j < T; ++j) {
    for (int l = 0; l < T; ++l) work[l] = LongMatrix::Zero(n, m);
    work[j] = B;
    solve_e12_transpose(A, work);
    for (int l = 0; l < T; ++l) work[l] = penalty[l] * work[l];
    solve_e12(A, work);
    for (int l = 0; l < T; ++l) {
      H.block(l * m, j * m, m, m) = Bt * work[l];
    }
    H.block(j * m, j * m, m, m) += sys.R.cast<long double>();
  }

  // G = E23' E12^-1 (E11 E12^-T F2 - F1) with F2 = [-A x0; 0; ...].
  std::vector<LongMatrix> rhs(T);
  for (int l = 0; l < T; ++l) {
    rhs[l] = sys.F.segment(n * T + l * n, n).cast<long double>();
  }
  solve_e12_transpose(A, rhs);
  for (int l = 0; l < T; ++l) {
    rhs[l] = penalty[l] * rhs[l] - sys.F.segment(l * n, n).cast<long double>();
  }
  solve_e12(A, rhs);
  for (int l = 0; l < T; ++l) {
    G.block(l * m, 0, m, 1) = Bt * rhs[l];
  }

  SchurReduction red;
  red.H_full = H.cast<double>();
  red.G_full = G.col(0).cast<double>();
  return red;
}

}  // namespace d2oc
