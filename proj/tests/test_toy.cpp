#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "vrkn/stats.hpp"
#include "vrkn/toy.hpp"

using namespace vrkn;
using namespace vrkn::toy;

namespace {

const ToyDataset& shared_data() {
  static const ToyDataset data = generate_toy_data(42);
  return data;
}

std::vector<const Trajectory*> first(const std::vector<Trajectory>& seqs, std::size_t n) {
  std::vector<const Trajectory*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&seqs[i]);
  return out;
}

ToyDataset small_data(std::uint64_t seed, int n_seq, int length, int n_test) {
  return generate_toy_data(seed, DataConfig{n_seq, length, n_test});
}

}  // namespace

TEST_CASE("toy data: sizes, determinism and policy independence") {
  const ToyDataset& d = shared_data();
  CHECK(d.train.size() == 900);
  CHECK(d.test.size() == 100);
  CHECK(d.train[0].length() == 50);
  CHECK(d.train[0].states.rows() == 4);
  const ToyDataset again = generate_toy_data(42, {}, Exec::Serial);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    CHECK((again.train[i].sensors[0].obs.array() == d.train[i].sensors[0].obs.array()).all());
    CHECK((again.train[i].states.array() == d.train[i].states.array()).all());
  }
  const ToyDataset other = generate_toy_data(43);
  CHECK((other.train[0].states.array() != d.train[0].states.array()).any());
}

TEST_CASE("toy data: initial observation variance is 1 + 0.025") {
  const ToyDataset d = small_data(42, 20000, 1, 1);
  const double n = static_cast<double>(d.train.size());
  for (Eigen::Index k = 0; k < 4; ++k) {
    double s = 0.0, s2 = 0.0;
    for (const Trajectory& t : d.train) {
      const double o = t.sensors[0].obs(k, 0);
      s += o;
      s2 += o * o;
    }
    const double var = s2 / n - (s / n) * (s / n);
    const double expect = 1.025;
    CHECK(std::abs(var - expect) < 4.0 * expect * std::sqrt(2.0 / (n - 1.0)));
  }
}

TEST_CASE("toy data: lag-one state covariance matches A times the state covariance") {
  const ToyDataset& d = shared_data();
  const Mat A = toy_ground_truth().trans_mat;
  Mat c0 = Mat::Zero(4, 4), c1 = Mat::Zero(4, 4);
  double n = 0.0;
  for (const auto& t : d.train)
    for (Eigen::Index s = 0; s + 1 < t.states.cols(); ++s) {
      c0 += t.states.col(s) * t.states.col(s).transpose();
      c1 += t.states.col(s + 1) * t.states.col(s).transpose();
      n += 1.0;
    }
  c0 /= n;
  c1 /= n;
  // c1 - A c0 is the mean of w_t z_t^T with transition noise w_t independent of z_t.
  const Mat resid = c1 - A * c0;
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(std::abs(resid(i, j)) < 3.0 * std::sqrt(0.01 * c0(j, j) / n));
}

TEST_CASE("ground-truth baselines") {
  const ToyDataset& d = shared_data();
  std::vector<Trajectory> all = d.train;
  all.insert(all.end(), d.test.begin(), d.test.end());
  const GtBaselines gt = gt_baselines(all);
  CHECK(gt.smoothed_logprob >= gt.posterior_logprob);
  const GtBaselines serial = gt_baselines(all, Exec::Serial);
  CHECK(serial.smoothed_logprob == gt.smoothed_logprob);

  // A near point mass on the true state beats any honest belief.
  std::vector<std::vector<GaussianDense>> cheat;
  for (const auto& t : all) {
    cheat.emplace_back();
    for (Eigen::Index s = 0; s < t.states.cols(); ++s)
      cheat.back().push_back({t.states.col(s), 1e-6 * Mat::Identity(4, 4)});
  }
  CHECK(state_logprob(all, cheat) > gt.smoothed_logprob);

  for (std::uint64_t seed : {7u, 8u}) {
    const ToyDataset other = generate_toy_data(seed);
    std::vector<Trajectory> o = other.train;
    o.insert(o.end(), other.test.begin(), other.test.end());
    const GtBaselines g = gt_baselines(o);
    CHECK(std::abs(g.posterior_logprob - gt.posterior_logprob) < 0.01 * std::abs(gt.posterior_logprob));
    CHECK(std::abs(g.smoothed_logprob - gt.smoothed_logprob) < 0.01 * std::abs(gt.smoothed_logprob));
  }
}

TEST_CASE("closed-form smoothing gradient equals the likelihood gradient") {
  const ToyDataset d = small_data(5, 6, 12, 2);
  const auto batch = first(d.train, 4);
  Rng rng(6);
  Dynamics dyn{0.3 * rng.normal_mat(4, 4), 0.2};
  const CfGradient g = ssm_cf_gradient(dyn, batch, Exec::Serial);
  auto loglik = [&](const Dynamics& x) {
    double s = 0.0;
    for (const Trajectory* t : batch) s += exact_loglik(x.model(), *t);
    return s;
  };
  CHECK(g.elbo == doctest::Approx(loglik(dyn)).epsilon(1e-12));
  const double eps = 1e-6;
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      Dynamics up = dyn, down = dyn;
      up.A(i, j) += eps;
      down.A(i, j) -= eps;
      const double fd = (loglik(up) - loglik(down)) / (2 * eps);
      CHECK(std::abs(g.d_A(i, j) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  Dynamics up = dyn, down = dyn;
  up.sigma += eps;
  down.sigma -= eps;
  const double fd = (loglik(up) - loglik(down)) / (2 * eps);
  CHECK(std::abs(g.d_sigma - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));

  const CfGradient par = ssm_cf_gradient(dyn, batch, Exec::Parallel);
  CHECK((par.d_A.array() == g.d_A.array()).all());
  CHECK(par.d_sigma == g.d_sigma);
}

TEST_CASE("neural learners: tape bound equals the closed-form chain bound") {
  const ToyDataset d = small_data(9, 8, 10, 2);
  for (Learner kind : {Learner::RssmNn, Learner::SsmNn}) {
    ad::ParamStore store;
    Rng rng(10);
    NnInference inf(kind, 16, store, rng);
    // Push the output layer away from its near-zero start.
    for (ad::Param* p : store.all()) p->value += 0.2 * rng.normal_mat(p->value.rows(), p->value.cols());
    const Dynamics dyn{toy_ground_truth().trans_mat + 0.05 * rng.normal_mat(4, 4), 0.03};
    Mat flat(16, 1);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) flat(i * 4 + j, 0) = dyn.A(i, j);
    ad::Tape tape;
    const auto batch = first(d.train, 5);
    const auto fwd = inf.forward(tape, tape.constant(flat), tape.constant(Mat::Constant(1, 1, dyn.sigma)), batch, true);
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const ElboBreakdown e = chain_elbo(dyn.model(), fwd.chains[b], *batch[b], ElboMode::ClosedForm);
      total += e.total;
      // Propagated marginals agree with the chain's own marginals.
      GaussianDense m = fwd.chains[b].initial;
      for (std::size_t t = 0; t < fwd.marginals[b].size(); ++t) {
        if (t > 0) {
          const auto& c = fwd.chains[b].conditionals[t - 1];
          m = {c.gain * m.mean + c.offset, c.gain * m.cov * c.gain.transpose() + c.cov};
        }
        CHECK((m.mean - fwd.marginals[b][t].mean).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((m.cov - fwd.marginals[b][t].cov).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
    CHECK(fwd.elbo_sum.scalar() == doctest::Approx(total).epsilon(1e-10));
    CHECK(fwd.neg_elbo.scalar() == doctest::Approx(-total / (5.0 * 10.0)).epsilon(1e-12));
  }
}

TEST_CASE("neural learners: composed loss passes finite-difference checks") {
  const ToyDataset d = small_data(11, 6, 6, 2);
  const auto batch = first(d.train, 3);
  for (Learner kind : {Learner::RssmNn, Learner::SsmNn}) {
    double worst = 0.0;
    std::string where;
    for (int point = 0; point < 20; ++point) {
      ad::ParamStore store;
      Rng rng(200 + static_cast<std::uint64_t>(point));
      ad::Param& a = store.add("dynamics.A", 0.5 * rng.normal_mat(16, 1));
      ad::Param& raw = store.add("dynamics.sigma_raw", rng.normal_mat(1, 1));
      NnInference inf(kind, 8, store, rng);
      for (ad::Param* p : store.all()) p->value += 0.3 * rng.normal_mat(p->value.rows(), p->value.cols());
      const auto res = oracle::grad_check(store, [&](ad::Tape& tape) {
        return inf.forward(tape, tape.param(a), ad::softplus(tape.param(raw)), batch, false).neg_elbo;
      });
      if (res.max_rel_error > worst) {
        worst = res.max_rel_error;
        where = res.worst_param;
      }
    }
    INFO(to_string(kind), " worst at ", where);
    CHECK(worst <= 1e-3);
  }
}

TEST_CASE("training: determinism, step budget and divergence diagnostics") {
  const ToyDataset d = small_data(12, 60, 20, 10);
  TrainConfig cfg;
  cfg.learner = Learner::RssmNn;
  cfg.hidden = 16;
  cfg.batch_size = 10;
  cfg.max_steps = 12;
  const TrainResult a = train_toy(cfg, d, 3);
  const TrainResult b = train_toy(cfg, d, 3, Exec::Serial);
  CHECK(a.metrics.steps == 12);
  CHECK(a.metrics.epochs == 3);
  CHECK((a.learned.A.array() == b.learned.A.array()).all());
  CHECK(a.metrics.sigma_tilde == b.metrics.sigma_tilde);
  CHECK(a.metrics.frob_dist >= 0.0);
  CHECK(a.metrics.sigma_tilde > 0.0);

  TrainConfig cf = cfg;
  cf.learner = Learner::SsmCf;
  cf.max_steps = 0;
  cf.max_epochs = 8;
  const TrainResult c = train_toy(cf, d, 3);
  CHECK(c.heldout_elbo.back() > c.heldout_elbo.front());

  ToyDataset broken = d;
  broken.train[0].sensors[0].obs(0, 3) = std::nan("");
  try {
    train_toy(cfg, broken, 3);
    FAIL("expected divergence");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("diverged at epoch") != std::string::npos);
  }
  TrainConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train_toy(bad, d, 3), ConfigError);
  CHECK_THROWS_AS(parse_learner("lstm"), ConfigError);
  CHECK(parse_learner("ssm_nn") == Learner::SsmNn);
}

TEST_CASE("frozen ground-truth dynamics stay fixed") {
  const ToyDataset d = small_data(13, 30, 15, 5);
  TrainConfig cfg;
  cfg.learner = Learner::RssmNn;
  cfg.hidden = 8;
  cfg.batch_size = 10;
  cfg.max_steps = 5;
  cfg.learn_dynamics = false;
  const TrainResult r = train_toy(cfg, d, 1);
  CHECK(r.metrics.frob_dist == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(r.metrics.sigma_tilde == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("sweep output and bootstrap summary") {
  SweepConfig cfg;
  cfg.seeds = {1, 2};
  cfg.learners = {Learner::SsmCf, Learner::RssmNn};
  cfg.data = {40, 12, 8};
  cfg.train.hidden = 8;
  cfg.train.batch_size = 8;
  cfg.train.max_steps = 6;
  const SweepResult par = run_sweep(cfg);
  const SweepResult ser = run_sweep(cfg, Exec::Serial);
  REQUIRE(par.rows.size() == 4);
  for (std::size_t i = 0; i < par.rows.size(); ++i) {
    CHECK(par.rows[i].learner == ser.rows[i].learner);
    CHECK(par.rows[i].metrics.sigma_tilde == ser.rows[i].metrics.sigma_tilde);
    CHECK(par.rows[i].metrics.gt_state_logprob == ser.rows[i].metrics.gt_state_logprob);
  }
  const std::string csv = to_csv(par);
  CHECK(csv.rfind("learner,seed,gt_state_logprob,frob_dist,sigma_tilde,elbo_final", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  const auto js = summarize(par, 1000, 0);
  CHECK(js.at("learners").contains("ssm_cf"));
  CHECK(!js.at("learners").contains("ssm_nn"));
  const auto& s = js.at("learners").at("rssm_nn").at("sigma_tilde");
  CHECK(s.at("ci95")[0].get<double>() <= s.at("mean").get<double>());
  CHECK(s.at("ci95")[1].get<double>() >= s.at("mean").get<double>());
  CHECK(js.at("baselines").contains("gt_posterior_logprob"));
}

TEST_CASE("bootstrap interval") {
  Rng rng(1);
  const Interval flat = bootstrap_mean_ci({2.0, 2.0, 2.0}, 500, rng);
  CHECK(flat.lo == 2.0);
  CHECK(flat.hi == 2.0);
  std::vector<double> xs;
  Rng draw(2);
  for (int i = 0; i < 400; ++i) xs.push_back(draw.normal());
  const Interval ci = bootstrap_mean_ci(xs, 10000, rng);
  // Close to the normal-theory interval mean +- 1.96 / sqrt(n).
  CHECK(ci.hi - ci.lo == doctest::Approx(2 * 1.96 / std::sqrt(400.0)).epsilon(0.1));
  CHECK_THROWS_AS(bootstrap_mean_ci({}, 10, rng), DimensionError);
}
