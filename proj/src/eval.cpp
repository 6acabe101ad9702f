#include "vrkn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "vrkn/error.hpp"

namespace vrkn::eval {

nlohmann::json to_json(const BeliefQuality& q) {
  return {{"state_logprob", q.state_logprob},
          {"coverage_1sigma", q.coverage_1sigma},
          {"coverage_2sigma", q.coverage_2sigma},
          {"recon_mse", q.recon_mse},
          {"steps", q.steps}};
}

GaussianDense LinearProbe::predict(const GaussianDiag& belief) const {
  const Mat SW = var_scale.cwiseSqrt().asDiagonal() * W;
  Mat cov = SW * belief.var.asDiagonal() * SW.transpose();
  cov.diagonal() += resid_var;
  return {W * belief.mean + c, cov};
}

namespace {

// Minimizer of a unimodal f on [lo, hi].
template <class F>
double golden_min(F&& f, double lo, double hi, int iters = 60) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
  double fa = f(a), fb = f(b);
  for (int i = 0; i < iters; ++i) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - g * (hi - lo);
      fa = f(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + g * (hi - lo);
      fb = f(b);
    }
  }
  return 0.5 * (lo + hi);
}

// Gaussian ML of (scale, resid) for residuals r_n with variance scale * u_n + resid.
std::pair<double, double> fit_variance(const Vec& r2, const Vec& u, double floor) {
  auto nll = [&](double log_scale, double log_resid) {
    const Vec var = (std::exp(log_scale) * u).array() + std::exp(log_resid);
    return (var.array().log() + r2.array() / var.array()).sum();
  };
  const double lr_lo = std::log(floor), lr_hi = std::log(std::max(r2.maxCoeff(), floor) + floor);
  auto best_resid = [&](double ls) { return golden_min([&](double lr) { return nll(ls, lr); }, lr_lo, lr_hi, 40); };
  auto profile = [&](double ls) { return nll(ls, best_resid(ls)); };
  // Coarse grid first: the profile need not be unimodal over the whole range.
  double best = -20.0, best_val = profile(best);
  for (double ls = -19.5; ls <= 10.0; ls += 0.5) {
    const double v = profile(ls);
    if (v < best_val) {
      best = ls;
      best_val = v;
    }
  }
  const double ls = golden_min(profile, best - 0.5, best + 0.5, 30);
  return {std::exp(ls), std::exp(best_resid(ls))};
}

}  // namespace

LinearProbe fit_probe(const std::vector<GaussianDiag>& beliefs, const Mat& states, double floor) {
  if (beliefs.empty() || static_cast<Eigen::Index>(beliefs.size()) != states.cols())
    throw DimensionError("fit_probe: one belief per state column required");
  const Eigen::Index L = beliefs.front().dim(), N = states.cols(), S = states.rows();
  Mat X(L + 1, N);
  for (Eigen::Index n = 0; n < N; ++n) {
    X.col(n).head(L) = beliefs[static_cast<std::size_t>(n)].mean;
    X(L, n) = 1.0;
  }
  Mat gram = X * X.transpose();
  gram.diagonal().head(L).array() += 1e-6 * static_cast<double>(N);
  const Mat coef = gram.ldlt().solve(X * states.transpose()).transpose();  // S x (L + 1)
  LinearProbe p{coef.leftCols(L), coef.col(L), Vec::Ones(S), Vec::Zero(S)};
  const Mat resid = states - p.W * X.topRows(L) - p.c.replicate(1, N);
  const Mat w2 = p.W.array().square().matrix();
  Mat u(S, N);
  for (Eigen::Index n = 0; n < N; ++n) u.col(n) = w2 * beliefs[static_cast<std::size_t>(n)].var;
  for (Eigen::Index k = 0; k < S; ++k) {
    const auto [scale, rv] = fit_variance(resid.row(k).array().square().matrix().transpose(), u.row(k).transpose(), floor);
    p.var_scale(k) = scale;
    p.resid_var(k) = rv;
  }
  return p;
}

BeliefQuality score(const std::vector<GaussianDense>& beliefs, const Mat& states) {
  if (static_cast<Eigen::Index>(beliefs.size()) != states.cols())
    throw DimensionError("score: one belief per state column required");
  BeliefQuality q;
  double in1 = 0.0, in2 = 0.0, entries = 0.0;
  for (Eigen::Index n = 0; n < states.cols(); ++n) {
    const GaussianDense& b = beliefs[static_cast<std::size_t>(n)];
    q.state_logprob += log_density(b, states.col(n));
    for (Eigen::Index k = 0; k < states.rows(); ++k) {
      const double z = std::abs(states(k, n) - b.mean(k)) / std::sqrt(b.cov(k, k));
      in1 += z <= 1.0;
      in2 += z <= 2.0;
      entries += 1.0;
    }
  }
  q.steps = states.cols();
  if (q.steps > 0) q.state_logprob /= static_cast<double>(q.steps);
  if (entries > 0) {
    q.coverage_1sigma = in1 / entries;
    q.coverage_2sigma = in2 / entries;
  }
  return q;
}

namespace {

Mat stacked_states(const std::vector<Trajectory>& seqs) {
  Eigen::Index cols = 0;
  for (const Trajectory& tr : seqs) cols += tr.states.cols();
  if (seqs.empty() || cols == 0) throw ConfigError("eval: trajectories carry no ground-truth states");
  Mat out(seqs.front().states.rows(), cols);
  Eigen::Index at = 0;
  for (const Trajectory& tr : seqs) {
    out.middleCols(at, tr.states.cols()) = tr.states;
    at += tr.states.cols();
  }
  return out;
}

}  // namespace

std::vector<GaussianDiag> latent_beliefs(const model::Vrkn& m, const std::vector<Trajectory>& seqs, BeliefKind kind,
                                         Exec exec) {
  std::vector<std::vector<GaussianDiag>> per(seqs.size());
  for_each_index(seqs.size(), exec, [&](std::size_t i) {
    switch (kind) {
      case BeliefKind::Smoothed:
        per[i] = m.infer({&seqs[i]}, true).front().smoothed;
        break;
      case BeliefKind::Filtered:
        per[i] = m.filter_online(seqs[i]);
        break;
      case BeliefKind::OpenLoop:
        per[i] = m.open_loop(seqs[i]);
        break;
    }
  });
  std::vector<GaussianDiag> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

BeliefQuality probe_quality(const model::Vrkn& m, const std::vector<Trajectory>& train,
                            const std::vector<Trajectory>& test, BeliefKind kind, Exec exec) {
  const LinearProbe probe = fit_probe(latent_beliefs(m, train, kind, exec), stacked_states(train));
  const auto test_beliefs = latent_beliefs(m, test, kind, exec);
  std::vector<GaussianDense> predictive;
  predictive.reserve(test_beliefs.size());
  for (const GaussianDiag& b : test_beliefs) predictive.push_back(probe.predict(b));
  BeliefQuality q = score(predictive, stacked_states(test));
  q.recon_mse = recon_mse(m, test);
  return q;
}

std::vector<ObsModel> linear_obs_models(const tasks::TaskSpec& spec) {
  if (spec.system != tasks::System::LinearTracking) throw ConfigError("eval: exact reference needs linear_tracking");
  const LgssmParams p = tasks::linear_tracking_model(spec.diagonal);
  std::vector<ObsModel> out;
  for (const tasks::SensorSpec& s : spec.sensors) {
    if (s.name == "camera") {
      out.push_back({p.obs_var, Mat::Identity(4, 4)});
    } else {
      Mat H = Mat::Zero(2, 4);
      H(0, 2) = H(1, 3) = 1.0;
      out.push_back({Vec::Constant(2, tasks::kSensorVar), H});
    }
  }
  return out;
}

std::vector<GaussianDense> exact_smoothed(const LgssmParams& params, const std::vector<ObsModel>& sensors,
                                          const Trajectory& traj) {
  if (sensors.size() != traj.sensors.size()) throw DimensionError("exact_smoothed: one observation model per sensor");
  FilterTrace<GaussianDense> ft;
  GaussianDense belief = params.init_dense();
  for (int t = 0; t < traj.length(); ++t) {
    ft.priors.push_back(belief);
    for (std::size_t k = 0; k < sensors.size(); ++k) {
      const SensorSeries& s = traj.sensors[k];
      if (!s.valid[static_cast<std::size_t>(t)]) continue;
      std::vector<Eigen::Index> rows;
      for (Eigen::Index r = 0; r < s.dim(); ++r)
        if (!s.has_mask() || s.mask(r, t) != 0.0) rows.push_back(r);
      if (rows.empty()) continue;
      const auto n = static_cast<Eigen::Index>(rows.size());
      ObsModel sub{Vec(n), Mat(n, params.dim())};
      Vec obs(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index r = rows[static_cast<std::size_t>(i)];
        sub.obs_var(i) = sensors[k].obs_var(r);
        sub.H.row(i) = sensors[k].H.row(r);
        obs(i) = s.obs(r, t);
      }
      belief = update(belief, obs, sub);
    }
    ft.posteriors.push_back(belief);
    if (t + 1 < traj.length()) {
      ft.steps.push_back(params.transition(traj.action(t)));
      belief = predict(belief, ft.steps.back());
    }
  }
  return smooth(ft).smoothed;
}

BeliefQuality exact_quality(const tasks::Dataset& ds, Exec exec) {
  const LgssmParams params = tasks::linear_tracking_model(ds.spec.diagonal);
  const auto sensors = linear_obs_models(ds.spec);
  std::vector<std::vector<GaussianDense>> per(ds.seqs.size());
  for_each_index(ds.seqs.size(), exec, [&](std::size_t i) { per[i] = exact_smoothed(params, sensors, ds.seqs[i]); });
  std::vector<GaussianDense> all;
  for (auto& v : per) all.insert(all.end(), v.begin(), v.end());
  return score(all, stacked_states(ds.seqs));
}

double recon_mse(const model::Vrkn& m, const std::vector<Trajectory>& seqs) {
  double sq = 0.0, count = 0.0;
  for (const Trajectory& tr : seqs) {
    const auto smoothed = m.infer({&tr}, true).front().smoothed;
    for (std::size_t k = 0; k < tr.sensors.size(); ++k) {
      const SensorSeries& s = tr.sensors[k];
      for (int t = 0; t < tr.length(); ++t) {
        if (!s.valid[static_cast<std::size_t>(t)]) continue;
        ad::Tape tape;
        const Vec pred = m.decode(tape, k, tape.constant(smoothed[static_cast<std::size_t>(t)].mean)).value();
        for (Eigen::Index r = 0; r < s.dim(); ++r) {
          if (s.has_mask() && s.mask(r, t) == 0.0) continue;
          sq += (pred(r) - s.obs(r, t)) * (pred(r) - s.obs(r, t));
          count += 1.0;
        }
      }
    }
  }
  return count > 0 ? sq / count : 0.0;
}

}  // namespace vrkn::eval
