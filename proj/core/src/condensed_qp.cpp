#include "d2oc/condensed_qp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace d2oc {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(std::string("condensed_qp: ") + what);
}

void check_horizon(const LtiModel& model, const HorizonData& hd,
                   const AgentState& x0) {
  require(hd.T >= 1, "horizon must be at least 1");
  require(static_cast<int>(hd.state_penalty.size()) == hd.T &&
              static_cast<int>(hd.reference.size()) == hd.T,
          "horizon data length mismatch");
  require(x0.x.size() == model.n, "state dimension mismatch");
  require(hd.R.rows() == model.m && hd.R.cols() == model.m, "R must be m x m");
}

Eigen::VectorXd clip(const Eigen::VectorXd& u, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi) {
  return u.cwiseMax(lo).cwiseMin(hi);
}

double objective(const CondensedQp& qp, const Eigen::VectorXd& u) {
  return 0.5 * u.dot(qp.H * u) + qp.g.dot(u);
}

// Exact enumeration of the facial lattice: each coordinate is pinned at its
// lower bound, free, or pinned at its upper bound. With H PD exactly one
// face satisfies all KKT sign conditions (up to degenerate ties).
BoxQpSolution enumerate_faces(const CondensedQp& qp) {
  const int m = static_cast<int>(qp.g.size());
  const double tol = 1e-9 * (1.0 + qp.g.norm() + qp.H.norm());

  BoxQpSolution best;
  double best_obj = std::numeric_limits<double>::infinity();

  std::vector<int> face(m, -1);
  int total = 1;
  for (int i = 0; i < m; ++i) total *= 3;

  for (int code = 0; code < total; ++code) {
    int c = code;
    for (int i = 0; i < m; ++i) {
      face[i] = (c % 3) - 1;
      c /= 3;
    }

    std::vector<int> free_idx;
    Eigen::VectorXd u(m);
    for (int i = 0; i < m; ++i) {
      if (face[i] < 0) u(i) = qp.u_min(i);
      else if (face[i] > 0) u(i) = qp.u_max(i);
      else free_idx.push_back(i);
    }

    const int f = static_cast<int>(free_idx.size());
    if (f > 0) {
      Eigen::MatrixXd Hff(f, f);
      Eigen::VectorXd rhs(f);
      for (int a = 0; a < f; ++a) {
        rhs(a) = -qp.g(free_idx[a]);
        for (int b = 0; b < f; ++b) Hff(a, b) = qp.H(free_idx[a], free_idx[b]);
        for (int i = 0; i < m; ++i) {
          if (face[i] != 0) rhs(a) -= qp.H(free_idx[a], i) * u(i);
        }
      }
      const Eigen::VectorXd uf = Hff.llt().solve(rhs);
      for (int a = 0; a < f; ++a) u(free_idx[a]) = uf(a);
    }

    bool ok = true;
    const Eigen::VectorXd grad = qp.H * u + qp.g;
    for (int i = 0; i < m && ok; ++i) {
      if (face[i] == 0) {
        ok = u(i) >= qp.u_min(i) - tol && u(i) <= qp.u_max(i) + tol;
      } else if (face[i] < 0) {
        ok = grad(i) >= -tol;
      } else {
        ok = grad(i) <= tol;
      }
    }
    if (!ok) continue;

    const Eigen::VectorXd uc = clip(u, qp.u_min, qp.u_max);
    const double obj = objective(qp, uc);
    if (obj < best_obj) {
      best_obj = obj;
      best.u = uc;
      best.active = face;
    }
  }
  return best;
}

// Active-set polish / fallback for larger m: fix the working set implied by
// the current point, re-solve the free subsystem, repeat.
BoxQpSolution projected_newton(const CondensedQp& qp) {
  const int m = static_cast<int>(qp.g.size());
  Eigen::VectorXd u = clip(qp.H.llt().solve(-qp.g), qp.u_min, qp.u_max);
  BoxQpSolution sol;
  sol.active.assign(m, 0);
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::VectorXd grad = qp.H * u + qp.g;
    const Eigen::VectorXd step = u - clip(u - grad, qp.u_min, qp.u_max);
    if (step.lpNorm<Eigen::Infinity>() <= 1e-12) break;

    std::vector<int> free_idx;
    for (int i = 0; i < m; ++i) {
      const bool at_lo = u(i) <= qp.u_min(i) + 1e-12 && grad(i) > 0.0;
      const bool at_hi = u(i) >= qp.u_max(i) - 1e-12 && grad(i) < 0.0;
      sol.active[i] = at_lo ? -1 : (at_hi ? 1 : 0);
      if (sol.active[i] == 0) free_idx.push_back(i);
    }
    Eigen::VectorXd next = u;
    const int f = static_cast<int>(free_idx.size());
    if (f > 0) {
      Eigen::MatrixXd Hff(f, f);
      Eigen::VectorXd rhs(f);
      for (int a = 0; a < f; ++a) {
        rhs(a) = -qp.g(free_idx[a]);
        for (int b = 0; b < f; ++b) Hff(a, b) = qp.H(free_idx[a], free_idx[b]);
        for (int i = 0; i < m; ++i) {
          if (sol.active[i] != 0) rhs(a) -= qp.H(free_idx[a], i) * u(i);
        }
      }
      const Eigen::VectorXd uf = Hff.llt().solve(rhs);
      for (int a = 0; a < f; ++a) next(free_idx[a]) = uf(a);
    }
    for (int i = 0; i < m; ++i) {
      if (sol.active[i] < 0) next(i) = qp.u_min(i);
      if (sol.active[i] > 0) next(i) = qp.u_max(i);
    }
    u = clip(next, qp.u_min, qp.u_max);
  }
  sol.u = u;
  return sol;
}

}  // namespace

CondensedQp condense(const LtiModel& model, const HorizonData& hd,
                     const AgentState& x0, const InputBounds& bounds) {
  check_horizon(model, hd, x0);
  require(bounds.u_min.size() == model.m && bounds.u_max.size() == model.m,
          "bounds must have the input dimension");
  require((bounds.u_min.array() <= bounds.u_max.array()).all(),
          "u_min must not exceed u_max");
  Eigen::LLT<Eigen::MatrixXd> rchol(hd.R);
  require(rchol.info() == Eigen::Success, "R must be positive definite");

  CondensedQp qp;
  qp.H = hd.R;
  qp.g = Eigen::VectorXd::Zero(model.m);
  qp.u_min = bounds.u_min;
  qp.u_max = bounds.u_max;

  Eigen::MatrixXd K = model.B;           // A^l B
  Eigen::VectorXd xf = model.A * x0.x;   // A^(l+1) x0
  for (int l = 0; l < hd.T; ++l) {
    const Eigen::MatrixXd QK = hd.state_penalty[l] * K;
    qp.H.noalias() += K.transpose() * QK;
    qp.g.noalias() += QK.transpose() * (xf - hd.reference[l]);
    if (l + 1 < hd.T) {
      K = model.A * K;
      xf = model.A * xf;
    }
  }
  qp.H = 0.5 * (qp.H + qp.H.transpose().eval());
  return qp;
}

BoxQpSolution solve_box_qp(const CondensedQp& qp) {
  const int m = static_cast<int>(qp.g.size());
  require(qp.H.rows() == m && qp.H.cols() == m, "H/g size mismatch");
  require(qp.u_min.size() == m && qp.u_max.size() == m, "bounds size mismatch");
  require((qp.u_min.array() <= qp.u_max.array()).all(), "empty box");

  BoxQpSolution sol = m <= 4 ? enumerate_faces(qp) : projected_newton(qp);
  if (sol.u.size() != m) sol = projected_newton(qp);

  // Iterative refinement on the free subspace keeps the certificate tight
  // even for poorly scaled coefficients.
  std::vector<int> free_idx;
  for (int i = 0; i < m; ++i) {
    if (sol.active[i] == 0) free_idx.push_back(i);
  }
  const int f = static_cast<int>(free_idx.size());
  if (f > 0) {
    Eigen::MatrixXd Hff(f, f);
    for (int a = 0; a < f; ++a) {
      for (int b = 0; b < f; ++b) Hff(a, b) = qp.H(free_idx[a], free_idx[b]);
    }
    const auto llt = Hff.llt();
    for (int it = 0; it < 3; ++it) {
      const Eigen::VectorXd r = qp.H * sol.u + qp.g;
      Eigen::VectorXd rf(f);
      for (int a = 0; a < f; ++a) rf(a) = r(free_idx[a]);
      const Eigen::VectorXd delta = llt.solve(rf);
      for (int a = 0; a < f; ++a) sol.u(free_idx[a]) -= delta(a);
    }
    sol.u = clip(sol.u, qp.u_min, qp.u_max);
  }

  const Eigen::VectorXd grad = qp.H * sol.u + qp.g;
  const double cert =
      (sol.u - clip(sol.u - grad, qp.u_min, qp.u_max)).lpNorm<Eigen::Infinity>();
  if (!(cert <= 1e-10)) {
    throw std::runtime_error(
        "solve_box_qp: optimality certificate " + std::to_string(cert) +
        " exceeds 1e-10");
  }
  return sol;
}

double surrogate_cost(const LtiModel& model, const HorizonData& hd,
                      const AgentState& x0, const Eigen::VectorXd& u) {
  check_horizon(model, hd, x0);
  require(u.size() == model.m, "input dimension mismatch");

  double cost = 0.5 * u.dot(hd.R * u);
  Eigen::MatrixXd K = model.B;
  Eigen::VectorXd xf = model.A * x0.x;
  for (int l = 0; l < hd.T; ++l) {
    const Eigen::VectorXd z = xf + K * u - hd.reference[l];
    cost += 0.5 * z.dot(hd.state_penalty[l] * z);
    if (l + 1 < hd.T) {
      K = model.A * K;
      xf = model.A * xf;
    }
  }
  return cost;
}

}  // namespace d2oc
