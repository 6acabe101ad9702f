#pragma once

#include <vector>

#include "vrkn/lgssm.hpp"
#include "vrkn/objectives.hpp"
#include "vrkn/rng.hpp"

namespace vrkn::oracle {

/// Dense joint Gaussian over (z_0..z_{T-1}, o^{(k)}_t for every sensor k and
/// step t) of a static LGSSM. Built by unrolling z = L eps + m; it never calls
/// the filter or smoother, so it can check them.
class JointGaussian {
 public:
  JointGaussian(const LgssmParams& params, const Trajectory& traj, const std::vector<ObsModel>& sensors = {});

  /// p(z_t | valid observations at steps <= last_step).
  GaussianDense state_given_obs(int t, int last_step) const;
  /// p(z_t, z_{t+1} | all valid observations), 2d-dimensional.
  GaussianDense two_slice(int t) const;
  /// log p(all valid observations).
  double obs_log_density() const;

 private:
  std::vector<Eigen::Index> obs_indices(int last_step) const;
  GaussianDense condition_on(const std::vector<Eigen::Index>& x, int last_step) const;

  Eigen::Index d_ = 0;
  int T_ = 0;
  const Trajectory* traj_;
  std::vector<Eigen::Index> obs_offset_;  // per (t, k) start row; -1 when missing
  std::vector<Eigen::Index> obs_dim_;
  Vec mean_;
  Mat cov_;
  Vec obs_value_;
};

/// Random well-conditioned static LGSSM with d in [1, max_dim].
LgssmParams random_lgssm(Rng& rng, int max_dim, bool with_control = false);

/// Ancestral sample of a trajectory of the given length from `params`.
/// n_sensors identity sensors; each flag is valid with probability p_valid.
Trajectory sample_trajectory(const LgssmParams& params, int length, Rng& rng, int n_sensors = 1,
                             double p_valid = 1.0, std::vector<ObsModel>* sensor_models = nullptr);

}  // namespace vrkn::oracle

namespace vrkn::oracle {

/// Best member of the filtering family: q(z_0 | o_0) followed by
/// q(z_t | z_{t-1}, o_t) = p(z_t | z_{t-1}) p(o_t | z_t) / normalizer, for
/// identity-map sensors of `params`.
LinearChain filtering_chain(const LgssmParams& params, const Trajectory& traj);

}  // namespace vrkn::oracle
