#include "oracle.hpp"

#include <cmath>

namespace vrkn::oracle {

JointGaussian::JointGaussian(const LgssmParams& params, const Trajectory& traj, const std::vector<ObsModel>& sensors)
    : d_(params.dim()), T_(traj.length()), traj_(&traj) {
  const Eigen::Index nz = d_ * T_;
  const std::size_t K = traj.sensors.size();
  // Latent block: z = L eps + m.
  Vec mz(nz);
  Mat L = Mat::Zero(nz, nz);
  Mat E = Mat::Zero(nz, nz);
  Mat A = params.trans_mat;
  for (int t = 0; t < T_; ++t) {
    if (t == 0) {
      mz.segment(0, d_) = params.init_mean;
      E.block(0, 0, d_, d_) = params.init_var.asDiagonal();
    } else {
      const DenseTransition tr = params.transition(traj.action(t - 1));
      mz.segment(t * d_, d_) = A * mz.segment((t - 1) * d_, d_) + tr.b;
      E.block(t * d_, t * d_, d_, d_) = tr.Q;
    }
    Mat power = Mat::Identity(d_, d_);
    for (int s = t; s >= 0; --s) {
      L.block(t * d_, s * d_, d_, d_) = power;
      power = power * A;
    }
  }
  const Mat cz = L * E * L.transpose();

  // Observation rows for every (t, k), valid or not.
  Eigen::Index total_obs = 0;
  obs_offset_.assign(static_cast<std::size_t>(T_) * K, -1);
  obs_dim_.assign(static_cast<std::size_t>(T_) * K, 0);
  std::vector<Mat> H(K);
  std::vector<Vec> R(K);
  for (std::size_t k = 0; k < K; ++k) {
    const ObsModel m = sensors.empty() ? params.obs_model() : sensors[k];
    H[k] = m.H.size() == 0 ? Mat(Mat::Identity(d_, d_)) : m.H;
    R[k] = m.obs_var;
  }
  for (int t = 0; t < T_; ++t)
    for (std::size_t k = 0; k < K; ++k) {
      obs_offset_[static_cast<std::size_t>(t) * K + k] = nz + total_obs;
      obs_dim_[static_cast<std::size_t>(t) * K + k] = H[k].rows();
      total_obs += H[k].rows();
    }
  // Stack G so that o = G z + v.
  Mat G = Mat::Zero(total_obs, nz);
  Vec rv(total_obs);
  obs_value_.resize(total_obs);
  for (int t = 0; t < T_; ++t)
    for (std::size_t k = 0; k < K; ++k) {
      const Eigen::Index row = obs_offset_[static_cast<std::size_t>(t) * K + k] - nz;
      G.block(row, t * d_, H[k].rows(), d_) = H[k];
      rv.segment(row, H[k].rows()) = R[k];
      obs_value_.segment(row, H[k].rows()) = traj.sensors[k].obs.col(t);
    }
  mean_.resize(nz + total_obs);
  mean_ << mz, G * mz;
  cov_.resize(nz + total_obs, nz + total_obs);
  cov_.topLeftCorner(nz, nz) = cz;
  cov_.topRightCorner(nz, total_obs) = cz * G.transpose();
  cov_.bottomLeftCorner(total_obs, nz) = G * cz;
  cov_.bottomRightCorner(total_obs, total_obs) = G * cz * G.transpose() + Mat(rv.asDiagonal());
}

std::vector<Eigen::Index> JointGaussian::obs_indices(int last_step) const {
  std::vector<Eigen::Index> idx;
  const std::size_t K = traj_->sensors.size();
  for (int t = 0; t <= last_step; ++t)
    for (std::size_t k = 0; k < K; ++k) {
      if (!traj_->sensors[k].valid[static_cast<std::size_t>(t)]) continue;
      const Eigen::Index off = obs_offset_[static_cast<std::size_t>(t) * K + k];
      for (Eigen::Index i = 0; i < obs_dim_[static_cast<std::size_t>(t) * K + k]; ++i) idx.push_back(off + i);
    }
  return idx;
}

GaussianDense JointGaussian::condition_on(const std::vector<Eigen::Index>& x, int last_step) const {
  const auto y = obs_indices(last_step);
  const Eigen::Index nx = static_cast<Eigen::Index>(x.size());
  const Eigen::Index ny = static_cast<Eigen::Index>(y.size());
  std::vector<Eigen::Index> all(x);
  all.insert(all.end(), y.begin(), y.end());
  GaussianDense joint{Vec(nx + ny), Mat(nx + ny, nx + ny)};
  for (Eigen::Index i = 0; i < nx + ny; ++i) {
    joint.mean[i] = mean_[all[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < nx + ny; ++j)
      joint.cov(i, j) = cov_(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
  }
  if (ny == 0) return {joint.mean, joint.cov};
  Vec yv(ny);
  const Eigen::Index nz = d_ * T_;
  for (Eigen::Index i = 0; i < ny; ++i) yv[i] = obs_value_[y[static_cast<std::size_t>(i)] - nz];
  return condition(joint, nx, yv);
}

GaussianDense JointGaussian::state_given_obs(int t, int last_step) const {
  std::vector<Eigen::Index> x;
  for (Eigen::Index i = 0; i < d_; ++i) x.push_back(t * d_ + i);
  return condition_on(x, last_step);
}

GaussianDense JointGaussian::two_slice(int t) const {
  std::vector<Eigen::Index> x;
  for (Eigen::Index i = 0; i < 2 * d_; ++i) x.push_back(t * d_ + i);
  return condition_on(x, T_ - 1);
}

double JointGaussian::obs_log_density() const {
  const auto y = obs_indices(T_ - 1);
  const Eigen::Index ny = static_cast<Eigen::Index>(y.size());
  if (ny == 0) return 0.0;
  GaussianDense marg{Vec(ny), Mat(ny, ny)};
  const Eigen::Index nz = d_ * T_;
  Vec yv(ny);
  for (Eigen::Index i = 0; i < ny; ++i) {
    marg.mean[i] = mean_[y[static_cast<std::size_t>(i)]];
    yv[i] = obs_value_[y[static_cast<std::size_t>(i)] - nz];
    for (Eigen::Index j = 0; j < ny; ++j) marg.cov(i, j) = cov_(y[static_cast<std::size_t>(i)], y[static_cast<std::size_t>(j)]);
  }
  return log_density(marg, yv);
}

LgssmParams random_lgssm(Rng& rng, int max_dim, bool with_control) {
  const int d = rng.uniform_int(1, max_dim);
  LgssmParams p;
  p.trans_mat = 0.5 * rng.normal_mat(d, d);
  p.trans_offset = 0.3 * rng.normal_vec(d);
  p.trans_var = (0.05 + 0.95 * Eigen::ArrayXd::NullaryExpr(d, [&] { return rng.uniform(); })).matrix();
  p.obs_var = (0.05 + 0.95 * Eigen::ArrayXd::NullaryExpr(d, [&] { return rng.uniform(); })).matrix();
  p.init_mean = rng.normal_vec(d);
  p.init_var = (0.5 + 1.5 * Eigen::ArrayXd::NullaryExpr(d, [&] { return rng.uniform(); })).matrix();
  if (with_control) p.control = 0.3 * rng.normal_mat(d, 2);
  return p;
}

Trajectory sample_trajectory(const LgssmParams& params, int length, Rng& rng, int n_sensors, double p_valid,
                             std::vector<ObsModel>* sensor_models) {
  const Eigen::Index d = params.dim();
  Trajectory traj;
  const Eigen::Index adim = params.control.size() ? params.control.cols() : 0;
  traj.actions = rng.normal_mat(adim, length);
  traj.states.resize(d, length);
  std::vector<ObsModel> models;
  for (int k = 0; k < n_sensors; ++k) {
    ObsModel m = params.obs_model();
    if (sensor_models) m.obs_var = (0.05 + 0.95 * Eigen::ArrayXd::NullaryExpr(d, [&] { return rng.uniform(); })).matrix();
    models.push_back(m);
    SensorSeries s;
    s.name = "s" + std::to_string(k);
    s.obs.resize(d, length);
    s.valid.resize(static_cast<std::size_t>(length));
    traj.sensors.push_back(std::move(s));
  }
  Vec z = params.init_mean + params.init_var.cwiseSqrt().cwiseProduct(rng.normal_vec(d));
  for (int t = 0; t < length; ++t) {
    if (t > 0) {
      const DenseTransition tr = params.transition(traj.action(t - 1));
      z = tr.A * z + tr.b + params.trans_var.cwiseSqrt().cwiseProduct(rng.normal_vec(d));
    }
    traj.states.col(t) = z;
    for (int k = 0; k < n_sensors; ++k) {
      auto& s = traj.sensors[static_cast<std::size_t>(k)];
      s.obs.col(t) = z + models[static_cast<std::size_t>(k)].obs_var.cwiseSqrt().cwiseProduct(rng.normal_vec(d));
      s.valid[static_cast<std::size_t>(t)] = rng.uniform() < p_valid ? 1 : 0;
    }
  }
  if (sensor_models) *sensor_models = models;
  return traj;
}

}  // namespace vrkn::oracle

namespace vrkn::oracle {

LinearChain filtering_chain(const LgssmParams& params, const Trajectory& traj) {
  const Eigen::Index d = params.dim();
  const int T = traj.length();
  auto fuse = [&](Mat cov, int t, Vec& info) {
    // Information form: precision adds, info vector collects R^-1 o.
    Mat prec = cov.inverse();
    info = Vec::Zero(d);
    for (const auto& s : traj.sensors) {
      if (!s.valid[static_cast<std::size_t>(t)]) continue;
      prec += Mat(params.obs_var.cwiseInverse().asDiagonal());
      info += s.obs.col(t).cwiseQuotient(params.obs_var);
    }
    return Mat(prec.inverse());
  };
  LinearChain chain;
  Vec info;
  const GaussianDense p0 = params.init_dense();
  const Mat c0 = fuse(p0.cov, 0, info);
  chain.initial = {c0 * (p0.cov.inverse() * p0.mean + info), c0};
  for (int t = 1; t < T; ++t) {
    const DenseTransition tr = params.transition(traj.action(t - 1));
    const Mat c = fuse(tr.Q, t, info);
    const Mat qinv = tr.Q.inverse();
    chain.conditionals.push_back({c * qinv * tr.A, c * (qinv * tr.b + info), c});
  }
  return chain;
}

}  // namespace vrkn::oracle
