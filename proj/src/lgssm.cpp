#include "vrkn/lgssm.hpp"

#include <cmath>
#include <string>

namespace vrkn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

void require_positive(const Vec& v, const char* what) {
  if ((v.array() <= 0.0).any() || !v.allFinite())
    throw NumericalError(std::string(what) + ": entries must be positive and finite");
}

const ObsModel& sensor_model(const std::vector<ObsModel>& sensors, const ObsModel& fallback,
                             std::size_t k) {
  if (sensors.empty()) return fallback;
  if (k >= sensors.size()) throw DimensionError("filter: missing observation model for sensor");
  return sensors[k];
}

}  // namespace

DenseTransition LgssmParams::transition(const Vec& action) const {
  DenseTransition step{trans_mat, trans_offset, trans_var.asDiagonal()};
  if (control.size() != 0 && action.size() != 0) {
    require_dims(action.size(), control.cols(), "LgssmParams action");
    step.b += control * action;
  }
  return step;
}

LocalStep LgssmParams::local_step(const Vec& action) const {
  const Mat off = trans_mat - Mat(trans_mat.diagonal().asDiagonal());
  if (off.cwiseAbs().maxCoeff() != 0.0)
    throw DimensionError("LgssmParams: diagonal path requires a diagonal transition matrix");
  LocalStep step{trans_mat.diagonal(), trans_offset, trans_var};
  if (control.size() != 0 && action.size() != 0) step.b += control * action;
  return step;
}

void LgssmParams::validate() const {
  const Eigen::Index d = dim();
  require_dims(trans_mat.rows(), d, "LgssmParams trans_mat rows");
  require_dims(trans_mat.cols(), d, "LgssmParams trans_mat cols");
  require_dims(trans_var.size(), d, "LgssmParams trans_var");
  require_dims(obs_var.size(), d, "LgssmParams obs_var");
  require_dims(init_mean.size(), d, "LgssmParams init_mean");
  require_dims(init_var.size(), d, "LgssmParams init_var");
  if (control.size() != 0) require_dims(control.rows(), d, "LgssmParams control");
  if (!trans_mat.allFinite() || !trans_offset.allFinite() || !init_mean.allFinite())
    throw NumericalError("LgssmParams: non-finite entry");
  require_positive(trans_var, "LgssmParams trans_var");
  require_positive(obs_var, "LgssmParams obs_var");
  require_positive(init_var, "LgssmParams init_var");
}

GaussianDense predict(const GaussianDense& belief, const DenseTransition& step) {
  require_dims(step.A.cols(), belief.dim(), "predict");
  require_dims(step.b.size(), step.A.rows(), "predict offset");
  return {step.A * belief.mean + step.b, symmetrize(step.A * belief.cov * step.A.transpose() + step.Q)};
}

GaussianDiag predict(const GaussianDiag& belief, const LocalStep& step) {
  require_dims(step.a_diag.size(), belief.dim(), "predict");
  require_dims(step.b.size(), belief.dim(), "predict offset");
  require_dims(step.var_dyn.size(), belief.dim(), "predict var_dyn");
  return {step.a_diag.cwiseProduct(belief.mean) + step.b,
          step.a_diag.array().square().matrix().cwiseProduct(belief.var) + step.var_dyn};
}

GaussianDense predict(const GaussianDense& belief, const LgssmParams& params, const Vec& action) {
  return predict(belief, params.transition(action));
}

GaussianDense update(const GaussianDense& prior, const Vec& w, const Vec& var_w) {
  require_dims(w.size(), prior.dim(), "update");
  require_dims(var_w.size(), prior.dim(), "update var_w");
  require_positive(var_w, "update var_w");
  const Mat s = prior.cov + Mat(var_w.asDiagonal());
  auto llt = cholesky(s, "update innovation covariance");
  // K = Sigma S^-1 (S, Sigma symmetric)
  const Mat gain = llt.solve(prior.cov).transpose();
  return {prior.mean + gain * (w - prior.mean), symmetrize(prior.cov - gain * prior.cov)};
}

GaussianDiag update(const GaussianDiag& prior, const Vec& w, const Vec& var_w) {
  require_dims(w.size(), prior.dim(), "update");
  require_dims(var_w.size(), prior.dim(), "update var_w");
  require_positive(var_w, "update var_w");
  const Eigen::ArrayXd k = prior.var.array() / (prior.var.array() + var_w.array());
  return {prior.mean.array() + k * (w - prior.mean).array(), (1.0 - k) * prior.var.array()};
}

GaussianDense update(const GaussianDense& prior, const Vec& obs, const ObsModel& model) {
  if (model.H.size() == 0) return update(prior, obs, model.obs_var);
  require_dims(model.H.cols(), prior.dim(), "update H");
  require_dims(obs.size(), model.H.rows(), "update obs");
  require_dims(model.obs_var.size(), model.H.rows(), "update obs_var");
  require_positive(model.obs_var, "update obs_var");
  const Mat ph = prior.cov * model.H.transpose();
  const Mat s = model.H * ph + Mat(model.obs_var.asDiagonal());
  auto llt = cholesky(s, "update innovation covariance");
  const Mat gain = llt.solve(ph.transpose()).transpose();
  return {prior.mean + gain * (obs - model.H * prior.mean), symmetrize(prior.cov - gain * model.H * prior.cov)};
}

FilterTrace<GaussianDense> filter(const LgssmParams& params, const Trajectory& traj,
                                  const std::vector<ObsModel>& sensors) {
  params.validate();
  validate(traj);
  const int T = traj.length();
  const ObsModel fallback = params.obs_model();
  FilterTrace<GaussianDense> out;
  out.priors.reserve(T);
  out.posteriors.reserve(T);
  out.steps.reserve(T > 0 ? T - 1 : 0);
  for (int t = 0; t < T; ++t) {
    GaussianDense prior = t == 0 ? params.init_dense() : predict(out.posteriors.back(), out.steps.back());
    GaussianDense post = prior;
    for (std::size_t k = 0; k < traj.sensors.size(); ++k) {
      const auto& s = traj.sensors[k];
      if (!s.valid[static_cast<std::size_t>(t)]) continue;
      post = update(post, s.obs.col(t), sensor_model(sensors, fallback, k));
    }
    out.priors.push_back(std::move(prior));
    out.posteriors.push_back(std::move(post));
    if (t + 1 < T) out.steps.push_back(params.transition(traj.action(t)));
  }
  return out;
}

FilterTrace<GaussianDiag> filter_diag(const GaussianDiag& init, const StepFn& step_fn,
                                      const Trajectory& traj, const std::vector<Vec>& sensor_var) {
  validate(traj);
  validate(init);
  require_dims(static_cast<long>(sensor_var.size()), static_cast<long>(traj.sensors.size()),
               "filter_diag sensor variances");
  const int T = traj.length();
  FilterTrace<GaussianDiag> out;
  out.priors.reserve(T);
  out.posteriors.reserve(T);
  for (int t = 0; t < T; ++t) {
    GaussianDiag prior = t == 0 ? init : predict(out.posteriors.back(), out.steps.back());
    GaussianDiag post = prior;
    for (std::size_t k = 0; k < traj.sensors.size(); ++k) {
      const auto& s = traj.sensors[k];
      if (!s.valid[static_cast<std::size_t>(t)]) continue;
      post = update(post, s.obs.col(t), sensor_var[k]);
    }
    if (t + 1 < T) out.steps.push_back(step_fn(post.mean, traj.action(t), t));
    out.priors.push_back(std::move(prior));
    out.posteriors.push_back(std::move(post));
  }
  return out;
}

FilterTrace<GaussianDiag> filter_diag(const LgssmParams& params, const Trajectory& traj) {
  params.validate();
  std::vector<Vec> vars(traj.sensors.size(), params.obs_var);
  return filter_diag(params.init_diag(), [&](const Vec&, const Vec& a, int) { return params.local_step(a); },
                     traj, vars);
}

namespace {

DenseConditional dense_conditional(const GaussianDense& prev, const GaussianDense& next, const Mat& gain) {
  // Two-slice joint: Cov(z_{t-1}, z_t) = C Sigma^s_t.
  auto llt = cholesky(prev.cov, "smoothed_dynamics smoothed covariance");
  const Mat cross = gain * next.cov;
  const Mat j = llt.solve(cross).transpose();  // Sigma^s_t C^T (Sigma^s_{t-1})^-1
  return {j, next.mean - j * prev.mean, symmetrize(next.cov - j * cross)};
}

DiagConditional diag_conditional(const GaussianDiag& prev, const GaussianDiag& next, const Vec& gain) {
  if ((prev.var.array() <= 0.0).any()) throw NotPositiveDefinite("smoothed_dynamics: non-positive smoothed variance");
  const Eigen::ArrayXd cross = gain.array() * next.var.array();
  const Eigen::ArrayXd j = cross / prev.var.array().max(kVarFloor);
  return {j.matrix(), (next.mean.array() - j * prev.mean.array()).matrix(),
          (next.var.array() - j * cross).matrix()};
}

}  // namespace

SmoothTrace<GaussianDense> smooth(const FilterTrace<GaussianDense>& trace) {
  const int T = trace.length();
  if (T == 0 || static_cast<int>(trace.posteriors.size()) != T || static_cast<int>(trace.steps.size()) != T - 1)
    throw DimensionError("smooth: incomplete filter trace");
  SmoothTrace<GaussianDense> out;
  out.smoothed.resize(T);
  out.gains.resize(T - 1);
  out.cond_dyn.resize(T - 1);
  out.smoothed[T - 1] = trace.posteriors[T - 1];
  for (int t = T - 1; t >= 1; --t) {
    const Mat& a = trace.steps[t - 1].A;
    const GaussianDense& post = trace.posteriors[t - 1];
    const GaussianDense& prior = trace.priors[t];
    auto llt = cholesky(prior.cov, "smooth prior covariance");
    // C = Sigma+ A^T (Sigma-)^-1
    const Mat c = llt.solve(a * post.cov).transpose();
    const GaussianDense& next = out.smoothed[t];
    const Eigen::Index d = post.dim();
    GaussianDense cur;
    cur.mean = post.mean + c * (next.mean - prior.mean);
    cur.cov = symmetrize((Mat::Identity(d, d) - c * a) * post.cov + c * next.cov * c.transpose());
    out.smoothed[t - 1] = std::move(cur);
    out.gains[t - 1] = c;
    out.cond_dyn[t - 1] = dense_conditional(out.smoothed[t - 1], next, c);
  }
  return out;
}

SmoothTrace<GaussianDiag> smooth(const FilterTrace<GaussianDiag>& trace) {
  const int T = trace.length();
  if (T == 0 || static_cast<int>(trace.posteriors.size()) != T || static_cast<int>(trace.steps.size()) != T - 1)
    throw DimensionError("smooth: incomplete filter trace");
  SmoothTrace<GaussianDiag> out;
  out.smoothed.resize(T);
  out.gains.resize(T - 1);
  out.cond_dyn.resize(T - 1);
  out.smoothed[T - 1] = trace.posteriors[T - 1];
  for (int t = T - 1; t >= 1; --t) {
    const auto a = trace.steps[t - 1].a_diag.array();
    const GaussianDiag& post = trace.posteriors[t - 1];
    const GaussianDiag& prior = trace.priors[t];
    if ((prior.var.array() <= 0.0).any()) throw NotPositiveDefinite("smooth: non-positive prior variance");
    const Eigen::ArrayXd c = post.var.array() * a / prior.var.array().max(kVarFloor);
    const GaussianDiag& next = out.smoothed[t];
    GaussianDiag cur;
    cur.mean = (post.mean.array() + c * (next.mean - prior.mean).array()).matrix();
    cur.var = ((1.0 - c * a) * post.var.array() + c.square() * next.var.array()).matrix();
    out.smoothed[t - 1] = std::move(cur);
    out.gains[t - 1] = c.matrix();
    out.cond_dyn[t - 1] = diag_conditional(out.smoothed[t - 1], next, out.gains[t - 1]);
  }
  return out;
}

std::vector<DenseConditional> smoothed_dynamics(const SmoothTrace<GaussianDense>& trace) {
  std::vector<DenseConditional> out;
  for (int t = 0; t + 1 < trace.length(); ++t)
    out.push_back(dense_conditional(trace.smoothed[t], trace.smoothed[t + 1], trace.gains[t]));
  return out;
}

std::vector<DiagConditional> smoothed_dynamics(const SmoothTrace<GaussianDiag>& trace) {
  std::vector<DiagConditional> out;
  for (int t = 0; t + 1 < trace.length(); ++t)
    out.push_back(diag_conditional(trace.smoothed[t], trace.smoothed[t + 1], trace.gains[t]));
  return out;
}

Mat two_slice_cross_cov(const SmoothTrace<GaussianDense>& trace, int t) {
  return trace.gains.at(static_cast<std::size_t>(t)) * trace.smoothed.at(static_cast<std::size_t>(t + 1)).cov;
}

namespace {

// Sequential per-sensor innovations starting from the step prior.
double step_loglik(GaussianDense belief, const Trajectory& traj, int t, const std::vector<ObsModel>& sensors,
                   const ObsModel& fallback) {
  double total = 0.0;
  for (std::size_t k = 0; k < traj.sensors.size(); ++k) {
    const auto& s = traj.sensors[k];
    if (!s.valid[static_cast<std::size_t>(t)]) continue;
    const ObsModel& m = sensor_model(sensors, fallback, k);
    GaussianDense pred;
    if (m.H.size() == 0) {
      pred = {belief.mean, belief.cov + Mat(m.obs_var.asDiagonal())};
    } else {
      pred = {m.H * belief.mean, m.H * belief.cov * m.H.transpose() + Mat(m.obs_var.asDiagonal())};
    }
    total += log_density(pred, s.obs.col(t));
    if (k + 1 < traj.sensors.size()) belief = update(belief, s.obs.col(t), m);
  }
  return total;
}

}  // namespace

double exact_loglik(const LgssmParams& params, const Trajectory& traj, const std::vector<ObsModel>& sensors) {
  return loglik_from_trace(filter(params, traj, sensors), params, traj, sensors);
}

double loglik_from_trace(const FilterTrace<GaussianDense>& trace, const LgssmParams& params, const Trajectory& traj,
                         const std::vector<ObsModel>& sensors) {
  require_dims(trace.length(), traj.length(), "loglik_from_trace");
  const ObsModel fallback = params.obs_model();
  double total = 0.0;
  for (int t = 0; t < traj.length(); ++t) total += step_loglik(trace.priors[t], traj, t, sensors, fallback);
  return total;
}

BatchInference infer_batch(const LgssmParams& params, const std::vector<Trajectory>& trajs, Exec exec,
                           const std::vector<ObsModel>& sensors) {
  BatchInference out;
  out.filtered.resize(trajs.size());
  out.smoothed.resize(trajs.size());
  out.loglik.resize(trajs.size());
  for_each_index(trajs.size(), exec, [&](std::size_t i) {
    out.filtered[i] = filter(params, trajs[i], sensors);
    out.smoothed[i] = smooth(out.filtered[i]);
    out.loglik[i] = loglik_from_trace(out.filtered[i], params, trajs[i], sensors);
  });
  return out;
}

LgssmParams toy_ground_truth() {
  LgssmParams p;
  p.trans_mat.resize(4, 4);
  p.trans_mat << 1.0, 0.0, 0.2, 0.0,
                 0.0, 1.0, 0.0, 0.2,
                 -0.2, 0.0, 0.95, 0.0,
                 0.0, -0.2, 0.0, 0.95;
  p.trans_offset = Vec::Zero(4);
  p.trans_var = Vec::Constant(4, 0.01);
  p.obs_var = Vec::Constant(4, 0.025);
  p.init_mean = Vec::Zero(4);
  p.init_var = Vec::Ones(4);
  return p;
}

}  // namespace vrkn
