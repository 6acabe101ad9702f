#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "gradcheck.hpp"
#include "vrkn/tasks.hpp"
#include "vrkn/vrkn.hpp"

using namespace vrkn;
using namespace vrkn::model;

namespace {

tasks::Dataset pendulum_data(int n, int len, std::uint64_t seed = 3) {
  tasks::TaskSpec spec = tasks::default_spec(tasks::System::Pendulum);
  spec.action_noise_sd = 0.2;
  spec.missing.kind = tasks::MissingSchedule::Kind::EveryNth;
  spec.seed = seed;
  return tasks::generate(spec, n, len, tasks::Policy::Random);
}

VrknConfig small_config(const std::vector<Trajectory>& data) {
  VrknConfig c;
  c.latent_dim = 4;
  c.hidden_width = 8;
  return config_for(data, c);
}

std::vector<const Trajectory*> ptrs(const std::vector<Trajectory>& v) {
  std::vector<const Trajectory*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

// Copies every parameter whose name contains `from` into the one with `to` substituted.
void copy_sensor_params(ad::ParamStore& store, const std::string& from, const std::string& to) {
  for (ad::Param* p : store.all()) {
    const auto pos = p->name.find(from);
    if (pos == std::string::npos) continue;
    std::string target = p->name;
    target.replace(pos, from.size(), to);
    store.find(target)->value = p->value;
  }
}

void perturb(ad::ParamStore& store, Rng& rng, double scale) {
  for (ad::Param* p : store.all()) p->value += scale * rng.normal_mat(p->value.rows(), p->value.cols());
}

// Reference filter built from the single-step library operations.
FilterTrace<GaussianDiag> reference_filter(const Vrkn& m, const Trajectory& tr) {
  FilterTrace<GaussianDiag> ft;
  const Eigen::Index L = m.config().latent_dim;
  GaussianDiag belief{Vec::Zero(L), Vec::Ones(L)};
  Rng unused(0);
  for (int t = 0; t < tr.length(); ++t) {
    ft.priors.push_back(belief);
    for (std::size_t k = 0; k < tr.sensors.size(); ++k) {
      if (!tr.sensors[k].valid[static_cast<std::size_t>(t)]) continue;
      const EncoderOutput e = m.encode(k, tr.sensors[k].obs.col(t));
      belief = update(belief, e.w, e.var_w);
    }
    ft.posteriors.push_back(belief);
    if (t + 1 < tr.length()) {
      ft.steps.push_back(m.dynamics_phi(belief.mean, tr.action(t), unused, false));
      belief = predict(belief, ft.steps.back());
    }
  }
  return ft;
}

double max_diff(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("encoder: finite at initialization, positive variance, separate parameters per sensor") {
  const auto ds = pendulum_data(2, 10);
  Vrkn m(config_for(ds.seqs), 1);
  for (std::size_t k = 0; k < 2; ++k) {
    const EncoderOutput e = m.encode(k, Vec::Zero(m.config().sensors[k].obs_dim));
    CHECK(e.w.allFinite());
    CHECK(e.var_w.allFinite());
    CHECK(e.var_w.minCoeff() >= 1e-8);
    CHECK(e.w.size() == 32);
  }
  std::set<std::string> camera, proprio;
  for (const ad::Param* p : m.params().all()) {
    if (p->name.rfind("sensor.camera.", 0) == 0) camera.insert(p->name.substr(14));
    if (p->name.rfind("sensor.proprio.", 0) == 0) proprio.insert(p->name.substr(15));
  }
  CHECK(!camera.empty());
  CHECK(camera == proprio);  // same structure, disjoint parameters
  CHECK_THROWS_AS(m.encode(0, Vec::Constant(2, std::nan(""))), NumericalError);
  CHECK_THROWS_AS(m.encode(0, Vec::Zero(3)), DimensionError);
}

TEST_CASE("encoder: both heads pass finite-difference checks") {
  const auto ds = pendulum_data(1, 4);
  Vrkn m(small_config(ds.seqs), 2);
  Rng rng(3);
  for (int point = 0; point < 20; ++point) {
    const Mat obs = rng.normal_mat(2, 3);
    const Mat r1 = rng.normal_mat(4, 3), r2 = rng.normal_mat(4, 3);
    const auto res = oracle::grad_check(m.params(), [&](ad::Tape& tape) {
      const auto e = m.encode(tape, 0, obs, {1, 1, 1});
      return ad::add(ad::sum(ad::mul_const(e.w, r1)), ad::sum(ad::mul_const(ad::log(e.var_w), r2)));
    });
    INFO(res.worst_param);
    CHECK(res.max_rel_error <= 1e-4);
  }
}

TEST_CASE("phi: midpoint outputs at zero weights, bounded gains, dropout contract") {
  const auto ds = pendulum_data(1, 4);
  Vrkn m(config_for(ds.seqs), 4);
  Rng rng(5);
  const Vec mean = rng.normal_vec(32);
  const Vec action = rng.normal_vec(1);
  {
    // Range over 10^4 inputs, with large random heads so the bounds are exercised.
    Vrkn wide(config_for(ds.seqs), 6);
    for (ad::Param* p : wide.params().all())
      if (p->name.rfind("phi.a.", 0) == 0) p->value *= 20.0;
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const LocalStep s = wide.dynamics_phi(10.0 * rng.normal_vec(32), 3.0 * rng.normal_vec(1), rng, false);
      lo = std::min(lo, s.a_diag.minCoeff());
      hi = std::max(hi, s.a_diag.maxCoeff());
    }
    CHECK(lo > 0.1);
    CHECK(hi < 0.99);
    CHECK(lo < 0.2);   // the bounds are approached
    CHECK(hi > 0.95);
  }
  Rng r1(7), r2(8);
  const LocalStep d1 = m.dynamics_phi(mean, action, r1, true);
  const LocalStep d2 = m.dynamics_phi(mean, action, r2, true);
  CHECK((d1.b.array() != d2.b.array()).any());
  const LocalStep o1 = m.dynamics_phi(mean, action, r1, false);
  const LocalStep o2 = m.dynamics_phi(mean, action, r2, false);
  CHECK((o1.a_diag.array() == o2.a_diag.array()).all());
  CHECK((o1.b.array() == o2.b.array()).all());
  CHECK((o1.var_dyn.array() == o2.var_dyn.array()).all());

  for (ad::Param* p : m.params().all())
    if (p->name.rfind("phi.", 0) == 0) p->value.setZero();
  const LocalStep z = m.dynamics_phi(mean, action, r1, true);
  CHECK(z.a_diag.cwiseAbs().maxCoeff() == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(z.a_diag.minCoeff() == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(z.var_dyn.cwiseSqrt().maxCoeff() == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(z.var_dyn.cwiseSqrt().minCoeff() == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(z.b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("filter and smoother match the single-step library operations") {
  const auto ds = pendulum_data(4, 25);
  Vrkn m(small_config(ds.seqs), 9);
  Rng rng(10);
  perturb(m.params(), rng, 0.1);
  const auto beliefs = m.infer(ptrs(ds.seqs), true);
  for (std::size_t i = 0; i < ds.seqs.size(); ++i) {
    const auto ft = reference_filter(m, ds.seqs[i]);
    const auto st = smooth(ft);
    const auto online = m.filter_online(ds.seqs[i]);
    for (int t = 0; t < ds.seqs[i].length(); ++t) {
      const auto u = static_cast<std::size_t>(t);
      CHECK(max_diff(beliefs[i].posteriors[u].mean, ft.posteriors[u].mean) < 1e-12);
      CHECK(max_diff(beliefs[i].posteriors[u].var, ft.posteriors[u].var) < 1e-12);
      CHECK(max_diff(beliefs[i].priors[u].var, ft.priors[u].var) < 1e-12);
      CHECK(max_diff(beliefs[i].smoothed[u].mean, st.smoothed[u].mean) < 1e-10);
      CHECK(max_diff(beliefs[i].smoothed[u].var, st.smoothed[u].var) < 1e-10);
      CHECK(max_diff(online[u].mean, ft.posteriors[u].mean) < 1e-12);
    }
  }
}

TEST_CASE("online filter: same code path as training, skips invalid steps, variance bookkeeping") {
  auto ds = pendulum_data(1, 60);
  Trajectory full = ds.seqs[0];
  for (auto& s : full.sensors) std::fill(s.valid.begin(), s.valid.end(), 1);
  Vrkn m(small_config(ds.seqs), 11);
  const auto online = m.filter_online(full);
  const auto trained_path = m.infer({&full}, false)[0].posteriors;
  for (std::size_t t = 0; t < online.size(); ++t) {
    CHECK((online[t].mean.array() == trained_path[t].mean.array()).all());
    CHECK((online[t].var.array() == trained_path[t].var.array()).all());
  }

  // Camera only, so gaps carry no update at all.
  tasks::TaskSpec spec = tasks::default_spec(tasks::System::Pendulum);
  spec.sensors = {{"camera", 1, true}};
  spec.missing.kind = tasks::MissingSchedule::Kind::EveryNth;
  const auto cam = tasks::generate(spec, 1, 60, tasks::Policy::Random);
  Vrkn mc(small_config(cam.seqs), 12);
  const auto b = mc.infer(ptrs(cam.seqs), false)[0];
  const auto& valid = cam.seqs[0].sensors[0].valid;
  for (int t = 0; t < 60; ++t) {
    const auto u = static_cast<std::size_t>(t);
    if (!valid[u]) {
      CHECK((b.posteriors[u].mean.array() == b.priors[u].mean.array()).all());
      CHECK((b.posteriors[u].var.array() == b.priors[u].var.array()).all());
    } else {
      CHECK((b.posteriors[u].var.array() < b.priors[u].var.array()).all());
    }
  }
  // Flag concatenation updates at every step instead.
  VrknConfig cat = small_config(cam.seqs);
  cat.concat_flags = true;
  Vrkn mcat(cat, 12);
  const auto bc = mcat.infer(ptrs(cam.seqs), false)[0];
  for (std::size_t u = 0; u < 60; ++u) CHECK((bc.posteriors[u].var.array() < bc.priors[u].var.array()).all());
}

TEST_CASE("fusion: identical sensors, sensor order") {
  tasks::TaskSpec spec = tasks::default_spec(tasks::System::LinearTracking);
  const auto ds = tasks::generate(spec, 1, 15, tasks::Policy::Random);
  // Two copies of the camera with identical encoders equal one camera with half the variance.
  Trajectory twin = ds.seqs[0];
  twin.sensors = {ds.seqs[0].sensors[0], ds.seqs[0].sensors[0]};
  twin.sensors[1].name = "camera2";
  VrknConfig cfg = small_config({twin});
  Vrkn m(cfg, 13);
  Rng rng(14);
  perturb(m.params(), rng, 0.1);
  copy_sensor_params(m.params(), "sensor.camera.", "sensor.camera2.");
  const auto fused = m.filter_online(twin);
  GaussianDiag belief{Vec::Zero(4), Vec::Ones(4)};
  Rng unused(0);
  for (int t = 0; t < twin.length(); ++t) {
    const EncoderOutput e = m.encode(0, twin.sensors[0].obs.col(t));
    belief = update(belief, e.w, e.var_w / 2.0);
    CHECK(max_diff(fused[static_cast<std::size_t>(t)].mean, belief.mean) < 1e-9);
    CHECK(max_diff(fused[static_cast<std::size_t>(t)].var, belief.var) < 1e-9);
    if (t + 1 < twin.length()) belief = predict(belief, m.dynamics_phi(belief.mean, twin.action(t), unused, false));
  }

  // Swapping sensor order, with weights carried over by name, changes nothing beyond rounding.
  Vrkn fwd(config_for(ds.seqs, cfg), 15);
  perturb(fwd.params(), rng, 0.1);
  Trajectory swapped = ds.seqs[0];
  std::swap(swapped.sensors[0], swapped.sensors[1]);
  Vrkn rev(config_for({swapped}, cfg), 16);
  for (ad::Param* p : rev.params().all()) p->value = fwd.params().find(p->name)->value;
  const auto a = fwd.filter_online(ds.seqs[0]);
  const auto b = rev.filter_online(swapped);
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(max_diff(a[t].mean, b[t].mean) < 1e-10);
    CHECK(max_diff(a[t].var, b[t].var) < 1e-10);
  }
}

TEST_CASE("composed training loss passes finite-difference checks") {
  const auto ds = pendulum_data(2, 6, 17);
  Trajectory masked = ds.seqs[1];
  masked.sensors[0].mask = Mat::Ones(2, 6);
  masked.sensors[0].mask(1, 2) = 0.0;
  const std::vector<const Trajectory*> batch{&ds.seqs[0], &masked};
  VrknConfig cfg = small_config(ds.seqs);
  cfg.latent_dim = 3;
  cfg.hidden_width = 5;
  cfg.free_nats = 0.0;
  double worst = 0.0;
  std::string where;
  for (int point = 0; point < 20; ++point) {
    Vrkn m(cfg, 100 + static_cast<std::uint64_t>(point));
    Rng rng(200 + static_cast<std::uint64_t>(point));
    perturb(m.params(), rng, 0.2);
    const auto res = oracle::grad_check(m.params(), [&](ad::Tape& tape) {
      Rng noise(300 + static_cast<std::uint64_t>(point));
      return m.loss(tape, batch, noise);
    });
    if (res.max_rel_error > worst) {
      worst = res.max_rel_error;
      where = res.worst_param;
    }
  }
  INFO("worst at ", where);
  CHECK(worst <= 1e-3);
}

TEST_CASE("free nats zero the KL gradient, masks zero the reconstruction") {
  const auto ds = pendulum_data(3, 10, 19);
  VrknConfig cfg = small_config(ds.seqs);
  cfg.free_nats = 1e6;
  Vrkn m(cfg, 20);
  const auto batch = ptrs(ds.seqs);
  auto grads = [&](bool recon_only) {
    m.params().zero_grad();
    ad::Tape tape;
    Rng noise(21);
    const auto terms = m.loss_terms(tape, batch, noise);
    tape.backward(recon_only ? ad::scale(ad::sum(terms.recon), -1.0 / 30.0) : terms.loss);
    std::vector<Mat> g;
    for (const ad::Param* p : m.params().all()) g.push_back(p->grad);
    return g;
  };
  const auto full = grads(false), recon = grads(true);
  double diff = 0.0, mag = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    diff = std::max(diff, (full[i] - recon[i]).cwiseAbs().maxCoeff());
    mag = std::max(mag, recon[i].cwiseAbs().maxCoeff());
  }
  CHECK(mag > 0.0);
  CHECK(diff == 0.0);

  std::vector<Trajectory> hidden = ds.seqs;
  for (auto& tr : hidden)
    for (auto& s : tr.sensors) s.mask = Mat::Zero(s.dim(), tr.length());
  ad::Tape tape;
  Rng noise(22);
  LossBreakdown lb;
  m.loss(tape, ptrs(hidden), noise, &lb);
  CHECK(lb.recon == 0.0);
  CHECK(lb.kl > 0.0);
}

TEST_CASE("training: held-out bound improves, checkpoints resume bit-identically") {
  tasks::TaskSpec spec = tasks::default_spec(tasks::System::LinearTracking);
  spec.diagonal = true;
  spec.seed = 23;
  const auto train = tasks::generate(spec, 40, 30, tasks::Policy::Random);
  spec.seed = 24;
  const auto test = tasks::generate(spec, 8, 30, tasks::Policy::Random);
  VrknConfig cfg = config_for(train.seqs);
  cfg.latent_dim = 8;
  cfg.hidden_width = 16;
  Vrkn m(cfg, 25);
  Trainer tr(m, {8, 30, 3e-3, 100.0, 26});
  auto heldout = [&] {
    ad::Tape tape;
    Rng noise(27);
    LossBreakdown lb;
    m.loss(tape, ptrs(test.seqs), noise, &lb);
    return lb.elbo;
  };
  std::vector<double> curve{heldout()};
  for (int w = 0; w < 6; ++w) {
    for (int s = 0; s < 10; ++s) tr.step(train.seqs);
    curve.push_back(heldout());
  }
  CHECK(curve.back() > curve.front());
  double mid = 0.5 * (curve.size() - 1), num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    num += (static_cast<double>(i) - mid) * curve[i];
    den += (static_cast<double>(i) - mid) * (static_cast<double>(i) - mid);
  }
  CHECK(num / den > 0.0);

  const auto path = (std::filesystem::temp_directory_path() / "vrkn_test_ckpt.json").string();
  tr.save(path, {{"note", "test"}});
  tr.step(train.seqs);
  std::vector<Mat> after;
  for (const ad::Param* p : m.params().all()) after.push_back(p->value);

  Vrkn fresh(cfg, 999);
  Trainer resumed(fresh, tr.options());
  const auto meta = resumed.load(path);
  CHECK(meta.at("note") == "test");
  CHECK(meta.at("model") == to_json(cfg));
  CHECK(resumed.steps() == 60);
  resumed.step(train.seqs);
  std::size_t i = 0;
  for (const ad::Param* p : fresh.params().all()) CHECK((p->value.array() == after[i++].array()).all());
  std::filesystem::remove(path);
}

TEST_CASE("MC dropout spread and config handling") {
  const auto ds = pendulum_data(3, 12, 28);
  VrknConfig cfg = small_config(ds.seqs);
  Vrkn m(cfg, 29);
  Rng rng(30);
  CHECK(m.epistemic_variance(ptrs(ds.seqs), 30, rng) > 0.0);
  cfg.dropout_rate = 0.0;
  Vrkn still(cfg, 29);
  CHECK(still.epistemic_variance(ptrs(ds.seqs), 30, rng) < 1e-15);  // identical passes, rounding only
  CHECK(m.mean_dyn_sd(ptrs(ds.seqs)) == doctest::Approx(0.01).epsilon(0.05));

  const VrknConfig back = config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK_THROWS_AS(config_from_json({{"latent", 3}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"dropout_rate", 1.0}, {"sensors", {{{"name", "a"}, {"obs_dim", 1}}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"sensors", {{{"name", "a"}, {"obs_dim", 1}, {"loss_scale", 0.0}}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"sensors", {{{"name", "r"}, {"obs_dim", 1}, {"encode", false}}}}}), ConfigError);
}

TEST_CASE("deterministic system: learned transition sd trends toward its floor, dropout spread stays positive") {
  // Pendulum without action noise has no process noise. Free nats are off so
  // the KL term keeps pressure on the transition variance.
  tasks::TaskSpec spec = tasks::default_spec(tasks::System::Pendulum);
  spec.seed = 11;
  const auto train = tasks::generate(spec, 60, 40, tasks::Policy::Random);
  spec.seed = 12;
  const auto test = tasks::generate(spec, 20, 40, tasks::Policy::Random);
  VrknConfig cfg;
  cfg.latent_dim = 8;
  cfg.hidden_width = 16;
  cfg.free_nats = 0.0;
  Vrkn m(config_for(train.seqs, cfg), 1);
  Trainer tr(m, {16, 40, 3e-3, 100.0, 0});
  Rng rng(2);
  std::vector<double> sd;
  for (int k = 1; k <= 8000; ++k) {
    tr.step(train.seqs);
    if (k % 1600 == 0) {
      sd.push_back(m.mean_dyn_sd(ptrs(test.seqs)));
      CHECK(m.epistemic_variance(ptrs(test.seqs), 30, rng) > 0.0);
    }
  }
  for (std::size_t i = 1; i < sd.size(); ++i) CHECK(sd[i] < sd[i - 1]);
  CHECK(sd.back() < 0.6 * sd.front());
  CHECK(sd.back() > 0.001);
}
