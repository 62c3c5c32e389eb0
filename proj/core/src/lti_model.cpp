#include "d2oc/lti_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace d2oc {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument("LtiModel: " + what);
}

}  // namespace

LtiModel make_model(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C) {
  const int n = static_cast<int>(A.rows());
  require(n >= 1 && A.cols() == n, "A must be square and non-empty");
  require(B.rows() == n && B.cols() >= 1, "B must be n x m with m >= 1");
  require(C.cols() == n && C.rows() >= 1, "C must be d x n with d >= 1");
  require(A.allFinite() && B.allFinite() && C.allFinite(),
          "matrix entries must be finite");

  const int m = static_cast<int>(B.cols());
  const int d = static_cast<int>(C.rows());
  require(d <= n, "C cannot have more rows than states");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(C.transpose());
  require(qr.rank() == d, "C must have full row rank");

  return LtiModel{std::move(A), std::move(B), std::move(C), n, m, d};
}

LtiModel make_scalar(double a, double b) {
  Eigen::MatrixXd A(1, 1), B(1, 1), C(1, 1);
  A << a;
  B << b;
  C << 1.0;
  return make_model(A, B, C);
}

namespace {

// Exact discretization of a continuous chain of `size` integrators with the
// input entering at the deepest state: A(i,j) = dt^(j-i)/(j-i)!,
// b(i) = dt^(size-i)/(size-i)!.
void integrator_chain(double dt, int size, Eigen::MatrixXd& A,
                      Eigen::VectorXd& b) {
  A = Eigen::MatrixXd::Zero(size, size);
  b = Eigen::VectorXd::Zero(size);
  for (int i = 0; i < size; ++i) {
    double term = 1.0;
    for (int j = i; j < size; ++j) {
      A(i, j) = term;
      term *= dt / static_cast<double>(j - i + 1);
    }
    double fact = 1.0;
    for (int p = 1; p <= size - i; ++p) fact *= static_cast<double>(p);
    b(i) = std::pow(dt, size - i) / fact;
  }
}

LtiModel planar_chain_model(double dt, int chain) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  Eigen::MatrixXd Ax;
  Eigen::VectorXd bx;
  integrator_chain(dt, chain, Ax, bx);

  const int n = 2 * chain;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(2, n);
  A.topLeftCorner(chain, chain) = Ax;
  A.bottomRightCorner(chain, chain) = Ax;
  B.col(0).head(chain) = bx;
  B.col(1).tail(chain) = bx;
  C(0, 0) = 1.0;
  C(1, chain) = 1.0;
  return make_model(A, B, C);
}

}  // namespace

LtiModel make_double_integrator2d(double dt) { return planar_chain_model(dt, 2); }

LtiModel make_quadrotor8(double dt) { return planar_chain_model(dt, 4); }

AgentState step(const LtiModel& model, const AgentState& state,
                const Eigen::VectorXd& u) {
  require(state.x.size() == model.n, "state dimension mismatch");
  require(u.size() == model.m, "input dimension mismatch");
  require(u.allFinite() && state.x.allFinite(), "non-finite step input");
  return AgentState{model.A * state.x + model.B * u, state.k + 1};
}

Eigen::VectorXd output(const LtiModel& model, const AgentState& state) {
  require(state.x.size() == model.n, "state dimension mismatch");
  return model.C * state.x;
}

PowerSequence power_sequence(const LtiModel& model, int T) {
  require(T >= 1, "horizon must be at least 1");
  PowerSequence seq;
  seq.pow_a.reserve(T + 1);
  seq.pow_ab.reserve(T);
  seq.pow_a.push_back(Eigen::MatrixXd::Identity(model.n, model.n));
  for (int l = 0; l < T; ++l) {
    seq.pow_ab.push_back(seq.pow_a.back() * model.B);
    seq.pow_a.push_back(model.A * seq.pow_a.back());
  }
  return seq;
}

}  // namespace d2oc
