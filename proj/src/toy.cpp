#include "vrkn/toy.hpp"

#include <cmath>

namespace vrkn::toy {

std::string_view to_string(Learner l) {
  switch (l) {
    case Learner::SsmCf: return "ssm_cf";
    case Learner::SsmNn: return "ssm_nn";
    case Learner::RssmNn: return "rssm_nn";
  }
  return "?";
}

Learner parse_learner(std::string_view s) {
  if (s == "ssm_cf") return Learner::SsmCf;
  if (s == "ssm_nn") return Learner::SsmNn;
  if (s == "rssm_nn") return Learner::RssmNn;
  throw ConfigError("unknown toy learner '" + std::string(s) + "' (expected ssm_cf, ssm_nn or rssm_nn)");
}

LgssmParams Dynamics::model() const {
  LgssmParams p = toy_ground_truth();
  p.trans_mat = A;
  p.trans_var = Vec::Constant(p.dim(), sigma);
  return p;
}

namespace {

Trajectory sample_sequence(const LgssmParams& p, int length, Rng rng) {
  const Eigen::Index d = p.dim();
  Mat states(d, length), obs(d, length);
  const Vec sd_obs = p.obs_var.cwiseSqrt(), sd_trans = p.trans_var.cwiseSqrt();
  Vec z = p.init_mean + p.init_var.cwiseSqrt().cwiseProduct(rng.normal_vec(d));
  for (int t = 0; t < length; ++t) {
    states.col(t) = z;
    obs.col(t) = z + sd_obs.cwiseProduct(rng.normal_vec(d));
    z = p.trans_mat * z + p.trans_offset + sd_trans.cwiseProduct(rng.normal_vec(d));
  }
  Trajectory traj = make_trajectory(obs);
  traj.states = std::move(states);
  return traj;
}

}  // namespace

ToyDataset generate_toy_data(std::uint64_t seed, const DataConfig& cfg, Exec exec) {
  if (cfg.n_seq <= 0 || cfg.length <= 0 || cfg.n_test < 0 || cfg.n_test >= cfg.n_seq)
    throw ConfigError("toy data: need n_seq > n_test >= 0 and length > 0");
  const LgssmParams gt = toy_ground_truth();
  const Rng root = Rng(seed).split("toy-data");
  std::vector<Trajectory> all(static_cast<std::size_t>(cfg.n_seq));
  for_each_index(all.size(), exec, [&](std::size_t i) { all[i] = sample_sequence(gt, cfg.length, root.split(i)); });
  ToyDataset ds;
  const auto n_train = static_cast<std::ptrdiff_t>(cfg.n_seq - cfg.n_test);
  ds.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + n_train));
  ds.test.assign(std::make_move_iterator(all.begin() + n_train), std::make_move_iterator(all.end()));
  return ds;
}

double state_logprob(const std::vector<Trajectory>& seqs, const std::vector<std::vector<GaussianDense>>& beliefs) {
  require_dims(static_cast<long>(beliefs.size()), static_cast<long>(seqs.size()), "state_logprob");
  double total = 0.0;
  long steps = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const Mat& z = seqs[i].states;
    if (z.cols() != static_cast<Eigen::Index>(beliefs[i].size()))
      throw DimensionError("state_logprob: belief count does not match sequence length");
    for (Eigen::Index t = 0; t < z.cols(); ++t) total += log_density(beliefs[i][static_cast<std::size_t>(t)], z.col(t));
    steps += z.cols();
  }
  return total / static_cast<double>(steps);
}

GtBaselines gt_baselines(const std::vector<Trajectory>& seqs, Exec exec) {
  const BatchInference inf = infer_batch(toy_ground_truth(), seqs, exec);
  std::vector<std::vector<GaussianDense>> post, smoothed;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    post.push_back(inf.filtered[i].posteriors);
    smoothed.push_back(inf.smoothed[i].smoothed);
  }
  return {state_logprob(seqs, smoothed), state_logprob(seqs, post)};
}

CfGradient ssm_cf_gradient(const Dynamics& dyn, const std::vector<const Trajectory*>& batch, Exec exec) {
  const LgssmParams model = dyn.model();
  const Eigen::Index d = model.dim();
  struct Stats {
    Mat prev, cross, curr;  // sums of E[z_{t-1} z_{t-1}^T], E[z_t z_{t-1}^T], E[z_t z_t^T] over t >= 1
    long transitions = 0;
    double loglik = 0.0;
  };
  std::vector<Stats> per(batch.size());
  for_each_index(batch.size(), exec, [&](std::size_t i) {
    const Trajectory& traj = *batch[i];
    const auto ft = filter(model, traj);
    const auto st = smooth(ft);
    Stats& s = per[i];
    s.prev = s.cross = s.curr = Mat::Zero(d, d);
    for (int t = 1; t < st.length(); ++t) {
      const GaussianDense& a = st.smoothed[static_cast<std::size_t>(t - 1)];
      const GaussianDense& b = st.smoothed[static_cast<std::size_t>(t)];
      s.prev += a.cov + a.mean * a.mean.transpose();
      s.curr += b.cov + b.mean * b.mean.transpose();
      s.cross += two_slice_cross_cov(st, t - 1).transpose() + b.mean * a.mean.transpose();
    }
    s.transitions = st.length() - 1;
    s.loglik = loglik_from_trace(ft, model, traj);
  });
  Mat prev = Mat::Zero(d, d), cross = Mat::Zero(d, d), curr = Mat::Zero(d, d);
  double n = 0.0;
  CfGradient g;
  for (const Stats& s : per) {
    prev += s.prev;
    cross += s.cross;
    curr += s.curr;
    n += static_cast<double>(s.transitions);
    g.elbo += s.loglik;
  }
  const Mat& A = dyn.A;
  const double resid = curr.trace() - 2.0 * (A * cross.transpose()).trace() + (A * prev * A.transpose()).trace();
  g.d_A = (cross - A * prev) / dyn.sigma;
  g.d_sigma = -n * static_cast<double>(d) / (2.0 * dyn.sigma) + resid / (2.0 * dyn.sigma * dyn.sigma);
  return g;
}

}  // namespace vrkn::toy
