#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "d2oc/lti_model.hpp"

namespace d2oc {

/// Axis-aligned box, one (lo, hi) pair per spatial coordinate.
struct BoxDomain {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

/// One weighted sample point of the reference density.
struct SamplePoint {
  Eigen::VectorXd q;
  double gamma = 0.0;
};

/// Component of a Gaussian mixture used to generate reference fields.
struct GmmComponent {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // PSD, zero allowed (degenerate component)
  double weight = 0.0;
};

/// Reference density as a weighted sample-point cloud. Positions are fixed
/// at construction; weights only decay or are merged downward, so
/// total_mass() <= initial_mass at all times.
struct SampleField {
  Eigen::MatrixXd positions;  // dim x count, one column per point
  Eigen::VectorXd weights;
  double initial_mass = 0.0;
  BoxDomain domain;

  int count() const { return static_cast<int>(positions.cols()); }
  int dim() const { return static_cast<int>(positions.rows()); }
  double total_mass() const { return weights.sum(); }
  SamplePoint point(int j) const { return {positions.col(j), weights(j)}; }
};

/// Local sample selection around an agent position: selected indices, their
/// mass, the mass-weighted barycenter, and the induced state penalty
/// Qbar = gamma_sum * C'C + Q.
struct LocalSelection {
  std::vector<int> indices;
  double gamma_sum = 0.0;
  Eigen::VectorXd qbar;
  Eigen::MatrixXd Qbar;
};

/// Per-solve horizon preview: T state-penalty matrices and T lifted
/// state-space references, plus the constant weights (Q, R).
struct HorizonData {
  int T = 0;
  Eigen::MatrixXd Q;                           // n x n, PSD
  Eigen::MatrixXd R;                           // m x m, PD
  std::vector<Eigen::MatrixXd> state_penalty;  // Qbar sequence, length T
  std::vector<Eigen::VectorXd> reference;      // lifted references, length T
};

enum class DecayRule { kGaussianTruncated, kProportional };
enum class MergeRule { kMin, kAverage };

struct DecayParams {
  double eta = 0.02;     // mass removed per visit at zero distance
  double sigma_c = 2.5;  // kernel width [m]
  double r_c = 5.0;      // truncation radius [m]
  DecayRule rule = DecayRule::kGaussianTruncated;
};

struct SelectionParams {
  double sense_range = 10.0;  // [m]
  int k_min = 10;             // fallback size when the sensing disk is empty
};

struct RolloutParams {
  SelectionParams select;
  DecayParams decay;
};

/// Samples n_sp points from the mixture (clipped to the domain) with uniform
/// weights 1/n_sp. Deterministic for a fixed seed. Throws on a non-PSD
/// covariance or inconsistent mixture weights.
SampleField make_gmm_field(const BoxDomain& domain,
                           const std::vector<GmmComponent>& components,
                           int n_sp, std::uint64_t seed);

/// Stage A selection: all positive-weight points within sense_range of y,
/// falling back to the k_min nearest positive-weight points when the disk is
/// empty. Returns nullopt when the field carries no positive weight at all
/// ("field exhausted" -- a signal, not an error).
std::optional<LocalSelection> select_local(const SampleField& field,
                                           const Eigen::VectorXd& y,
                                           double sense_range,
                                           const LtiModel& model,
                                           const Eigen::MatrixXd& Q,
                                           int k_min = 10);

/// Stage B: returns a copy with weights within r_c of y reduced by the
/// truncated kernel (never below zero, never increased).
SampleField decay_weights(const SampleField& field, const Eigen::VectorXd& y,
                          const DecayParams& params);

/// Stage C: merges the local view with neighbor views point-by-point.
/// The default minimum merge propagates the most-covered knowledge and is a
/// lattice meet (idempotent, commutative, associative).
SampleField exchange_weights(const SampleField& local,
                             const std::vector<const SampleField*>& neighbors,
                             MergeRule rule = MergeRule::kMin);

/// Lifts a position reference into state space through the Moore-Penrose
/// right inverse of C: r = C'(CC')^-1 qbar.
Eigen::VectorXd lift_reference(const Eigen::VectorXd& qbar,
                               const LtiModel& model);

/// Builds the preview sequence (Qbar, lifted reference) by a virtual rollout
/// on a cloned field: select, record, virtually decay, and advance the
/// predicted position with the one-step unconstrained condensed minimizer.
/// The input field is never mutated. If the virtual field exhausts
/// mid-horizon the last recorded pair is repeated.
HorizonData build_horizon_data(const SampleField& field, const LtiModel& model,
                               const AgentState& x0, int T,
                               const Eigen::MatrixXd& Q,
                               const Eigen::MatrixXd& R,
                               const RolloutParams& params);

}  // namespace d2oc
