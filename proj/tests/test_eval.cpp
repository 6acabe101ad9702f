#include <doctest.h>

#include <cmath>
#include <numbers>

#include "vrkn/eval.hpp"

using namespace vrkn;
using namespace vrkn::eval;

TEST_CASE("probe recovers an affine read-out and calibrates its residual variance") {
  Rng rng(1);
  const Mat W = rng.normal_mat(3, 5);
  const Vec c = rng.normal_vec(3);
  const Vec noise_sd = Vec::Constant(3, 0.3);
  const int n = 20000;
  std::vector<GaussianDiag> beliefs;
  Mat states(3, n);
  for (int i = 0; i < n; ++i) {
    // The true latent is drawn from the belief, so the belief is calibrated.
    // Varying belief variances make the scale and residual identifiable.
    const double v = 0.01 + 0.5 * rng.uniform();
    const GaussianDiag b{rng.normal_vec(5), Vec::Constant(5, v)};
    const Vec z = b.mean + std::sqrt(v) * rng.normal_vec(5);
    states.col(i) = W * z + c + noise_sd.cwiseProduct(rng.normal_vec(3));
    beliefs.push_back(b);
  }
  const LinearProbe p = fit_probe(beliefs, states);
  CHECK((p.W - W).cwiseAbs().maxCoeff() < 0.03);
  CHECK((p.c - c).cwiseAbs().maxCoeff() < 0.03);
  for (int k = 0; k < 3; ++k) {
    CHECK(p.resid_var(k) == doctest::Approx(0.09).epsilon(0.15));
    CHECK(p.var_scale(k) == doctest::Approx(1.0).epsilon(0.15));
  }
  // Overstated belief variances are scaled back down.
  std::vector<GaussianDiag> wide = beliefs;
  for (auto& b : wide) b.var *= 100.0;
  const LinearProbe pw = fit_probe(wide, states);
  for (int k = 0; k < 3; ++k) CHECK(pw.var_scale(k) == doctest::Approx(0.01).epsilon(0.15));

  std::vector<GaussianDense> pred;
  for (const auto& b : beliefs) pred.push_back(p.predict(b));
  const BeliefQuality q = score(pred, states);
  CHECK(q.coverage_1sigma == doctest::Approx(std::erf(1.0 / std::numbers::sqrt2)).epsilon(0.02));
  CHECK(q.coverage_2sigma == doctest::Approx(std::erf(2.0 / std::numbers::sqrt2)).epsilon(0.01));
  CHECK(q.steps == n);
}

TEST_CASE("score: per-step log-density of a known Gaussian") {
  const std::vector<GaussianDense> b{{Vec::Zero(2), Mat::Identity(2, 2)}, {Vec::Ones(2), 4.0 * Mat::Identity(2, 2)}};
  Mat x(2, 2);
  x << 0.0, 1.0, 0.0, 3.0;
  const double lp0 = -std::log(2.0 * std::numbers::pi);
  const double lp1 = -std::log(2.0 * std::numbers::pi * 4.0) - 0.5 * 4.0 / 4.0;
  const BeliefQuality q = score(b, x);
  CHECK(q.state_logprob == doctest::Approx(0.5 * (lp0 + lp1)).epsilon(1e-12));
  CHECK(q.coverage_1sigma == doctest::Approx(1.0));
}

TEST_CASE("exact smoother of the generating linear model is calibrated") {
  tasks::TaskSpec spec = tasks::default_spec(tasks::System::LinearTracking);
  spec.missing.kind = tasks::MissingSchedule::Kind::EveryNth;
  spec.seed = 2;
  const tasks::Dataset ds = tasks::generate(spec, 300, 40, tasks::Policy::Random);
  const BeliefQuality q = exact_quality(ds);
  CHECK(q.coverage_2sigma >= 0.94);
  CHECK(q.coverage_2sigma <= 0.965);
  CHECK(q.coverage_1sigma == doctest::Approx(0.6827).epsilon(0.03));

  // A per-dimension occlusion only removes information.
  tasks::TaskSpec occluded = spec;
  occluded.missing.kind = tasks::MissingSchedule::Kind::FixedMask;
  occluded.missing.mask = {1, 0, 1, 0};
  const BeliefQuality qo = exact_quality(tasks::generate(occluded, 300, 40, tasks::Policy::Random));
  CHECK(qo.coverage_2sigma >= 0.94);
  CHECK(qo.coverage_2sigma <= 0.965);
}

TEST_CASE("exact smoother matches the unmasked library path when nothing is hidden") {
  tasks::TaskSpec spec = tasks::default_spec(tasks::System::LinearTracking);
  spec.sensors = {{"camera", 1, false}};
  const tasks::Dataset ds = tasks::generate(spec, 3, 12, tasks::Policy::Random);
  const LgssmParams params = tasks::linear_tracking_model(false);
  for (const Trajectory& tr : ds.seqs) {
    const auto mine = exact_smoothed(params, linear_obs_models(spec), tr);
    const auto lib = smooth(filter(params, tr)).smoothed;
    for (std::size_t t = 0; t < mine.size(); ++t) {
      CHECK((mine[t].mean - lib[t].mean).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((mine[t].cov - lib[t].cov).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("latent_beliefs: parallel policy reproduces the serial loop bitwise") {
  tasks::TaskSpec spec = tasks::default_spec(tasks::System::Pendulum);
  spec.missing.kind = tasks::MissingSchedule::Kind::EveryNth;
  const tasks::Dataset ds = tasks::generate(spec, 12, 30, tasks::Policy::Random);
  model::VrknConfig cfg;
  cfg.latent_dim = 4;
  cfg.hidden_width = 8;
  const model::Vrkn m(model::config_for(ds.seqs, cfg), 5);
  for (BeliefKind kind : {BeliefKind::Smoothed, BeliefKind::Filtered, BeliefKind::OpenLoop}) {
    const auto par = latent_beliefs(m, ds.seqs, kind, Exec::Parallel);
    const auto ser = latent_beliefs(m, ds.seqs, kind, Exec::Serial);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) {
      CHECK(par[i].mean == ser[i].mean);
      CHECK(par[i].var == ser[i].var);
    }
  }
}
