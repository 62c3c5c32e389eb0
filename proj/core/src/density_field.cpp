#include "d2oc/density_field.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace d2oc {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(std::string("density_field: ") + what);
}

// Factor M with M M' = cov for sampling; accepts PSD (including singular).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov) {
  require(cov.rows() == cov.cols(), "covariance must be square");
  require(cov.isApprox(cov.transpose(), 1e-10), "covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw std::invalid_argument("density_field: covariance is not PSD");
  }
  return es.eigenvectors() *
         es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

SampleField make_gmm_field(const BoxDomain& domain,
                           const std::vector<GmmComponent>& components,
                           int n_sp, std::uint64_t seed) {
  require(n_sp >= 1, "n_sp must be at least 1");
  require(!components.empty(), "mixture needs at least one component");
  const int dim = static_cast<int>(domain.lo.size());
  require(dim >= 1 && domain.hi.size() == dim, "domain bounds mismatch");
  require((domain.hi - domain.lo).minCoeff() >= 0.0, "domain must satisfy lo <= hi");

  double wsum = 0.0;
  std::vector<Eigen::MatrixXd> factors;
  factors.reserve(components.size());
  for (const auto& c : components) {
    require(c.weight >= 0.0, "mix weights must be nonnegative");
    require(c.mean.size() == dim, "component mean dimension mismatch");
    require(c.covariance.rows() == dim, "component covariance dimension mismatch");
    wsum += c.weight;
    factors.push_back(psd_sqrt(c.covariance));
  }
  require(std::abs(wsum - 1.0) <= 1e-9, "mix weights must sum to 1");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pick(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SampleField field;
  field.positions.resize(dim, n_sp);
  field.weights = Eigen::VectorXd::Constant(n_sp, 1.0 / n_sp);
  field.domain = domain;

  for (int j = 0; j < n_sp; ++j) {
    double r = pick(rng) * wsum;
    std::size_t k = 0;
    for (; k + 1 < components.size(); ++k) {
      if (r < components[k].weight) break;
      r -= components[k].weight;
    }
    Eigen::VectorXd z(dim);
    for (int i = 0; i < dim; ++i) z(i) = gauss(rng);
    Eigen::VectorXd q = components[k].mean + factors[k] * z;
    q = q.cwiseMax(domain.lo).cwiseMin(domain.hi);
    field.positions.col(j) = q;
  }
  field.initial_mass = field.weights.sum();
  return field;
}

std::optional<LocalSelection> select_local(const SampleField& field,
                                           const Eigen::VectorXd& y,
                                           double sense_range,
                                           const LtiModel& model,
                                           const Eigen::MatrixXd& Q,
                                           int k_min) {
  require(y.size() == field.dim(), "query position dimension mismatch");
  require(model.d == field.dim(), "model output dimension mismatch");
  require(Q.rows() == model.n && Q.cols() == model.n, "Q must be n x n");

  LocalSelection sel;
  for (int j = 0; j < field.count(); ++j) {
    if (field.weights(j) <= 0.0) continue;
    if ((field.positions.col(j) - y).norm() <= sense_range) {
      sel.indices.push_back(j);
    }
  }

  if (sel.indices.empty()) {
    // Sensing disk empty: fall back to the k_min nearest surviving points so
    // the selection always carries positive mass.
    std::vector<std::pair<double, int>> alive;
    for (int j = 0; j < field.count(); ++j) {
      if (field.weights(j) > 0.0) {
        alive.emplace_back((field.positions.col(j) - y).norm(), j);
      }
    }
    if (alive.empty()) return std::nullopt;  // field exhausted
    const std::size_t take = std::min<std::size_t>(alive.size(), k_min);
    std::partial_sort(alive.begin(), alive.begin() + take, alive.end());
    for (std::size_t i = 0; i < take; ++i) sel.indices.push_back(alive[i].second);
    std::sort(sel.indices.begin(), sel.indices.end());
  }

  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(field.dim());
  for (int j : sel.indices) {
    sel.gamma_sum += field.weights(j);
    weighted += field.weights(j) * field.positions.col(j);
  }
  sel.qbar = weighted / sel.gamma_sum;
  sel.Qbar = sel.gamma_sum * (model.C.transpose() * model.C) + Q;
  return sel;
}

SampleField decay_weights(const SampleField& field, const Eigen::VectorXd& y,
                          const DecayParams& params) {
  require(params.eta >= 0.0, "eta must be nonnegative");
  require(params.sigma_c > 0.0, "sigma_c must be positive");
  require(y.size() == field.dim(), "position dimension mismatch");

  SampleField out = field;
  const double inv2s2 = 1.0 / (2.0 * params.sigma_c * params.sigma_c);
  for (int j = 0; j < out.count(); ++j) {
    const double dist2 = (out.positions.col(j) - y).squaredNorm();
    if (dist2 > params.r_c * params.r_c) continue;
    const double kernel = std::exp(-dist2 * inv2s2);
    double w = out.weights(j);
    if (params.rule == DecayRule::kGaussianTruncated) {
      w -= params.eta * kernel;
    } else {
      w *= 1.0 - std::min(1.0, params.eta * kernel);
    }
    out.weights(j) = std::max(0.0, w);
  }
  return out;
}

SampleField exchange_weights(const SampleField& local,
                             const std::vector<const SampleField*>& neighbors,
                             MergeRule rule) {
  for (const SampleField* v : neighbors) {
    require(v != nullptr, "null neighbor view");
    if (v->count() != local.count() || v->dim() != local.dim()) {
      throw std::invalid_argument(
          "density_field: neighbor views must index the same point set");
    }
  }

  SampleField out = local;
  if (rule == MergeRule::kMin) {
    for (const SampleField* v : neighbors) {
      out.weights = out.weights.cwiseMin(v->weights);
    }
  } else {
    for (const SampleField* v : neighbors) out.weights += v->weights;
    out.weights /= static_cast<double>(neighbors.size() + 1);
  }
  return out;
}

Eigen::VectorXd lift_reference(const Eigen::VectorXd& qbar,
                               const LtiModel& model) {
  require(qbar.size() == model.d, "reference dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(model.C * model.C.transpose());
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("density_field: C is rank deficient");
  }
  return model.C.transpose() * llt.solve(qbar);
}

HorizonData build_horizon_data(const SampleField& field, const LtiModel& model,
                               const AgentState& x0, int T,
                               const Eigen::MatrixXd& Q,
                               const Eigen::MatrixXd& R,
                               const RolloutParams& params) {
  require(T >= 1, "horizon must be at least 1");
  require(Q.rows() == model.n && Q.cols() == model.n, "Q must be n x n");
  require(R.rows() == model.m && R.cols() == model.m, "R must be m x m");
  Eigen::LLT<Eigen::MatrixXd> rchol(R);
  require(rchol.info() == Eigen::Success, "R must be positive definite");

  HorizonData hd;
  hd.T = T;
  hd.Q = Q;
  hd.R = R;
  hd.state_penalty.reserve(T);
  hd.reference.reserve(T);

  SampleField virt = field;  // virtual rollout never touches the real field
  AgentState xv = x0;
  for (int l = 0; l < T; ++l) {
    const Eigen::VectorXd y = model.C * xv.x;
    auto sel = select_local(virt, y, params.select.sense_range, model, Q,
                            params.select.k_min);
    if (!sel) {
      if (hd.state_penalty.empty()) {
        throw std::invalid_argument("build_horizon_data: field exhausted");
      }
      // Virtual field ran dry mid-horizon: hold the last preview pair.
      while (static_cast<int>(hd.state_penalty.size()) < T) {
        hd.state_penalty.push_back(hd.state_penalty.back());
        hd.reference.push_back(hd.reference.back());
      }
      break;
    }
    const Eigen::VectorXd r = lift_reference(sel->qbar, model);
    hd.state_penalty.push_back(sel->Qbar);
    hd.reference.push_back(r);

    virt = decay_weights(virt, y, params.decay);
    // One-step unconstrained condensed minimizer as the position predictor.
    const Eigen::MatrixXd H1 = R + model.B.transpose() * sel->Qbar * model.B;
    const Eigen::VectorXd g1 =
        model.B.transpose() * sel->Qbar * (model.A * xv.x - r);
    const Eigen::VectorXd u = -H1.ldlt().solve(g1);
    xv = step(model, xv, u);
  }
  return hd;
}

}  // namespace d2oc
