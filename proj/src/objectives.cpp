#include "vrkn/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace vrkn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

const ObsModel& pick(const std::vector<ObsModel>& sensors, const ObsModel& fallback, std::size_t k) {
  if (sensors.empty()) return fallback;
  if (k >= sensors.size()) throw DimensionError("elbo: missing observation model for sensor");
  return sensors[k];
}

double obs_loglik_at(const Vec& obs, const Vec& z, const ObsModel& model, const Vec& mask) {
  const Vec pred = model.H.size() == 0 ? z : Vec(model.H * z);
  require_dims(pred.size(), obs.size(), "elbo observation");
  const auto r = model.obs_var.array();
  const Eigen::ArrayXd terms = -0.5 * (kLog2Pi + r.log() + (obs - pred).array().square() / r);
  if (mask.size() == 0) return terms.sum();
  return (mask.array() != 0.0).select(terms, 0.0).sum();
}

GaussianDense sample_from(const GaussianDense& g, Rng& rng) {
  auto llt = cholesky(g.cov, "elbo sample covariance");
  return {g.mean + Mat(llt.matrixL()) * rng.normal_vec(g.dim()), Mat()};
}

Vec mask_col(const SensorSeries& s, int t) { return s.has_mask() ? Vec(s.mask.col(t)) : Vec(); }

}  // namespace

double expected_obs_loglik(const Vec& obs, const GaussianDense& belief, const ObsModel& model, const Vec& mask) {
  Vec mean = belief.mean;
  Vec var = belief.cov.diagonal();
  if (model.H.size() != 0) {
    mean = model.H * belief.mean;
    var = (model.H * belief.cov * model.H.transpose()).diagonal();
  }
  GaussianDiag marg{mean, var};
  if (mask.size() == 0) return expected_gaussian_loglik(obs, marg, model.obs_var);
  return expected_gaussian_loglik(obs, marg, model.obs_var, mask);
}

// With delta(z) = (A - J) z + (b - o) and z ~ N(m, P):
//   KL[N(Jz + o, L) || N(Az + b, Q)] = 1/2 [tr(Q^-1 L) - d + ln|Q| - ln|L| + delta^T Q^-1 delta]
//   E[delta^T Q^-1 delta] = dbar^T Q^-1 dbar + tr(Q^-1 D P D^T),  dbar = D m + (b - o), D = A - J.
double expected_conditional_kl(const DenseConditional& q, const DenseTransition& p, const GaussianDense& z_prev) {
  const Eigen::Index d = q.offset.size();
  require_dims(p.b.size(), d, "expected_conditional_kl");
  require_dims(z_prev.dim(), q.gain.cols(), "expected_conditional_kl z_prev");
  auto lq_p = cholesky(p.Q, "expected_conditional_kl p covariance");
  auto lq_q = cholesky(q.cov, "expected_conditional_kl q covariance");
  const Mat D = p.A - q.gain;
  const Vec dbar = D * z_prev.mean + (p.b - q.offset);
  const double logdet_p = 2.0 * lq_p.matrixLLT().diagonal().array().log().sum();
  const double logdet_q = 2.0 * lq_q.matrixLLT().diagonal().array().log().sum();
  const double trace_l = lq_p.solve(q.cov).trace();
  const double quad = dbar.dot(lq_p.solve(dbar));
  const double spread = lq_p.solve(D * z_prev.cov * D.transpose()).trace();
  return 0.5 * (trace_l - static_cast<double>(d) + logdet_p - logdet_q + quad + spread);
}

ElboBreakdown chain_elbo(const LgssmParams& model, const InferenceChain& q, const Trajectory& traj, ElboMode mode,
                         Rng* rng, const std::vector<ObsModel>& sensors) {
  model.validate();
  validate(traj);
  const int T = traj.length();
  const ObsModel fallback = model.obs_model();
  const GaussianDense p0 = model.init_dense();
  ElboBreakdown out;
  out.recon_per_step.assign(static_cast<std::size_t>(T), 0.0);
  out.kl_per_step.assign(static_cast<std::size_t>(T), 0.0);

  auto recon_step = [&](int t, auto&& term) {
    double r = 0.0;
    for (std::size_t k = 0; k < traj.sensors.size(); ++k) {
      const auto& s = traj.sensors[k];
      if (!s.valid[static_cast<std::size_t>(t)]) continue;
      r += term(Vec(s.obs.col(t)), pick(sensors, fallback, k), mask_col(s, t));
    }
    out.recon_per_step[static_cast<std::size_t>(t)] = r;
  };

  if (mode == ElboMode::ClosedForm) {
    const auto* chain = std::get_if<LinearChain>(&q);
    if (!chain) throw Error("elbo: closed-form evaluation requires a linear-Gaussian inference chain");
    if (static_cast<int>(chain->conditionals.size()) != T - 1) throw DimensionError("elbo: chain length mismatch");
    GaussianDense marg = chain->initial;
    for (int t = 0; t < T; ++t) {
      if (t == 0) {
        out.kl_per_step[0] = kl_divergence(marg, p0);
      } else {
        const DenseConditional& c = chain->conditionals[static_cast<std::size_t>(t - 1)];
        out.kl_per_step[static_cast<std::size_t>(t)] =
            expected_conditional_kl(c, model.transition(traj.action(t - 1)), marg);
        GaussianDense next{c.gain * marg.mean + c.offset, c.gain * marg.cov * c.gain.transpose() + c.cov};
        next.cov = 0.5 * (next.cov + next.cov.transpose());
        marg = std::move(next);
      }
      recon_step(t, [&](const Vec& o, const ObsModel& m, const Vec& mask) {
        return expected_obs_loglik(o, marg, m, mask);
      });
    }
  } else {
    if (!rng) throw Error("elbo: Monte Carlo mode requires an RNG");
    GaussianDense qt = std::visit([](const auto& ch) { return ch.initial; }, q);
    Vec z = sample_from(qt, *rng).mean;
    out.kl_per_step[0] = kl_divergence(qt, p0);
    recon_step(0, [&](const Vec& o, const ObsModel& m, const Vec& mask) { return obs_loglik_at(o, z, m, mask); });
    for (int t = 1; t < T; ++t) {
      if (const auto* lin = std::get_if<LinearChain>(&q)) {
        if (static_cast<int>(lin->conditionals.size()) != T - 1) throw DimensionError("elbo: chain length mismatch");
        const DenseConditional& c = lin->conditionals[static_cast<std::size_t>(t - 1)];
        qt = {c.gain * z + c.offset, c.cov};
      } else {
        qt = std::get<NonlinearChain>(q).conditional(t, z);
      }
      const DenseTransition tr = model.transition(traj.action(t - 1));
      const GaussianDense pt{tr.A * z + tr.b, tr.Q};
      out.kl_per_step[static_cast<std::size_t>(t)] = kl_divergence(qt, pt);
      z = sample_from(qt, *rng).mean;
      recon_step(t, [&](const Vec& o, const ObsModel& m, const Vec& mask) { return obs_loglik_at(o, z, m, mask); });
    }
  }
  for (int t = 0; t < T; ++t) {
    out.recon += out.recon_per_step[static_cast<std::size_t>(t)];
    out.kl += out.kl_per_step[static_cast<std::size_t>(t)];
  }
  out.total = out.recon - out.kl;
  return out;
}

ElboBreakdown elbo_rssm(const LgssmParams& model, const InferenceChain& q, const Trajectory& traj, ElboMode mode,
                        Rng* rng, const std::vector<ObsModel>& sensors) {
  return chain_elbo(model, q, traj, mode, rng, sensors);
}

LinearChain smoothed_chain(const SmoothTrace<GaussianDense>& smoothed) {
  if (smoothed.length() == 0) throw DimensionError("elbo_ssm: empty smoothing trace");
  return {smoothed.smoothed.front(), smoothed.cond_dyn};
}

ElboBreakdown elbo_ssm(const LgssmParams& model, const SmoothTrace<GaussianDense>& smoothed, const Trajectory& traj,
                       ElboMode mode, Rng* rng, const std::vector<ObsModel>& sensors) {
  return chain_elbo(model, smoothed_chain(smoothed), traj, mode, rng, sensors);
}

std::vector<double> free_nats_kl(const std::vector<double>& kl_per_step, double free_nats) {
  if (free_nats < 0.0) throw ConfigError("free_nats_kl: free_nats must be >= 0");
  std::vector<double> out;
  out.reserve(kl_per_step.size());
  for (double k : kl_per_step) {
    if (k < 0.0) throw NumericalError("free_nats_kl: negative KL");
    out.push_back(std::max(k, free_nats));
  }
  return out;
}

}  // namespace vrkn
