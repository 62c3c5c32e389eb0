#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "d2oc/condensed_qp.hpp"
#include "d2oc/density_field.hpp"
#include "d2oc/kkt_full.hpp"
#include "d2oc/stability.hpp"

namespace {

struct Fixture {
  d2oc::LtiModel model = d2oc::make_quadrotor8(0.1);
  d2oc::SampleField field;
  d2oc::AgentState x0;
  d2oc::InputBounds bounds;
  d2oc::RolloutParams rollout;
  d2oc::StabilitySpec stab;

  Fixture() {
    d2oc::BoxDomain domain{Eigen::Vector2d(0.0, 0.0),
                           Eigen::Vector2d(100.0, 100.0)};
    std::vector<d2oc::GmmComponent> gmm{
        {Eigen::Vector2d(30.0, 30.0), 50.0 * Eigen::Matrix2d::Identity(), 0.5},
        {Eigen::Vector2d(70.0, 65.0), 60.0 * Eigen::Matrix2d::Identity(), 0.5}};
    field = d2oc::make_gmm_field(domain, gmm, 600, 42);
    x0.x = d2oc::lift_reference(Eigen::Vector2d(50.0, 50.0), model);
    bounds.u_min = Eigen::Vector2d(-10.0, -10.0);
    bounds.u_max = Eigen::Vector2d(10.0, 10.0);
    stab = d2oc::synthesize_lyapunov(model, 0.2, 1e3);
  }

  d2oc::HorizonData horizon(int T) const {
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(model.n, model.n);
    const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(model.m, model.m);
    return d2oc::build_horizon_data(field, model, x0, T, Q, R, rollout);
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_FullKktSolve(benchmark::State& state) {
  const Fixture& f = fixture();
  const d2oc::HorizonData hd = f.horizon(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    const d2oc::KktSystem sys = d2oc::assemble_kkt(f.model, hd, f.x0);
    const d2oc::KktSolution sol = d2oc::solve_full(sys);
    benchmark::DoNotOptimize(sol.ubar.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FullKktSolve)->DenseRange(10, 60, 10)->Complexity();

void BM_CondensedSolve(benchmark::State& state) {
  const Fixture& f = fixture();
  const d2oc::HorizonData hd = f.horizon(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    const d2oc::CondensedQp qp = d2oc::condense(f.model, hd, f.x0, f.bounds);
    const d2oc::BoxQpSolution sol = d2oc::solve_box_qp(qp);
    benchmark::DoNotOptimize(sol.u.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CondensedSolve)->DenseRange(10, 60, 10)->Complexity();

void BM_CondensedStableSolve(benchmark::State& state) {
  const Fixture& f = fixture();
  const d2oc::HorizonData hd = f.horizon(static_cast<int>(state.range(0)));
  d2oc::ErrorState es;
  es.e = f.x0.x - hd.reference.front();
  es.d = Eigen::VectorXd::Zero(f.model.n);
  for (auto _ : state) {
    const d2oc::CondensedQp qp = d2oc::condense(f.model, hd, f.x0, f.bounds);
    const d2oc::QcqpResult res =
        d2oc::solve_stable_qcqp(qp, f.stab, f.model, es);
    benchmark::DoNotOptimize(res.u.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CondensedStableSolve)->DenseRange(10, 60, 10)->Complexity();

}  // namespace

BENCHMARK_MAIN();
