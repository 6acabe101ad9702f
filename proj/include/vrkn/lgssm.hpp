#pragma once

#include <functional>
#include <vector>

#include "vrkn/gauss.hpp"
#include "vrkn/trajectory.hpp"

namespace vrkn {

/// z' = A z + b + N(0, Q), dense path.
struct DenseTransition {
  Mat A;
  Vec b;
  Mat Q;
};

/// Per-step linearized dynamics on the diagonal path: z' = a .* z + b + N(0, diag(var_dyn)).
struct LocalStep {
  Vec a_diag;
  Vec b;
  Vec var_dyn;
};

/// Linear-Gaussian conditional q(z_t | z_{t-1}) = N(gain z_{t-1} + offset, cov).
struct DenseConditional {
  Mat gain;
  Vec offset;
  Mat cov;
};

struct DiagConditional {
  Vec gain;
  Vec offset;
  Vec var;
};

template <class G>
struct BeliefTraits;

template <>
struct BeliefTraits<GaussianDense> {
  using Step = DenseTransition;
  using Gain = Mat;
  using Conditional = DenseConditional;
};

template <>
struct BeliefTraits<GaussianDiag> {
  using Step = LocalStep;
  using Gain = Vec;
  using Conditional = DiagConditional;
};

template <class G>
struct FilterTrace {
  std::vector<G> priors;
  std::vector<G> posteriors;
  std::vector<typename BeliefTraits<G>::Step> steps;  // steps[t] maps z_t to z_{t+1}

  int length() const { return static_cast<int>(priors.size()); }
};

template <class G>
struct SmoothTrace {
  std::vector<G> smoothed;
  std::vector<typename BeliefTraits<G>::Gain> gains;            // gains[t] = C_t, t < T-1
  std::vector<typename BeliefTraits<G>::Conditional> cond_dyn;  // cond_dyn[t] = q(z_{t+1} | z_t, .)

  int length() const { return static_cast<int>(smoothed.size()); }
};

/// Observation model of one sensor: o = H z + N(0, diag(obs_var)). Empty H means identity.
struct ObsModel {
  Vec obs_var;
  Mat H;
};

/// Static generative model p(z_0) prod p(z_t | z_{t-1}, a_{t-1}) prod p(o_t | z_t).
struct LgssmParams {
  Mat trans_mat;     // d x d
  Vec trans_offset;  // d
  Vec trans_var;     // d
  Mat control;       // d x action_dim; empty when the model has no inputs
  Vec obs_var;       // d, identity observation map
  Vec init_mean;
  Vec init_var;

  Eigen::Index dim() const { return trans_offset.size(); }
  DenseTransition transition(const Vec& action) const;
  LocalStep local_step(const Vec& action) const;  // requires diagonal trans_mat
  GaussianDense init_dense() const { return {init_mean, init_var.asDiagonal()}; }
  GaussianDiag init_diag() const { return {init_mean, init_var}; }
  ObsModel obs_model() const { return {obs_var, Mat()}; }
  void validate() const;
};

// Single-step operations.
GaussianDense predict(const GaussianDense& belief, const DenseTransition& step);
GaussianDiag predict(const GaussianDiag& belief, const LocalStep& step);
GaussianDense predict(const GaussianDense& belief, const LgssmParams& params, const Vec& action = {});

/// Kalman update with identity observation map.
GaussianDense update(const GaussianDense& prior, const Vec& w, const Vec& var_w);
GaussianDiag update(const GaussianDiag& prior, const Vec& w, const Vec& var_w);
/// Kalman update with general observation matrix.
GaussianDense update(const GaussianDense& prior, const Vec& obs, const ObsModel& model);

/// Dense filtering of a static model. sensors[k] is the observation model of
/// trajectory sensor k; when empty every sensor uses params.obs_model().
FilterTrace<GaussianDense> filter(const LgssmParams& params, const Trajectory& traj,
                                  const std::vector<ObsModel>& sensors = {});

/// Dynamics evaluated at the posterior mean and action of step t.
using StepFn = std::function<LocalStep(const Vec& posterior_mean, const Vec& action, int t)>;

/// Diagonal (extended) filtering with locally linear dynamics.
FilterTrace<GaussianDiag> filter_diag(const GaussianDiag& init, const StepFn& step_fn,
                                      const Trajectory& traj, const std::vector<Vec>& sensor_var);
/// Diagonal filtering of a static model whose trans_mat is diagonal.
FilterTrace<GaussianDiag> filter_diag(const LgssmParams& params, const Trajectory& traj);

/// Rauch-Tung-Striebel backward pass extended with the backward gains and the
/// smoothed dynamics q(z_t | z_{t-1}, future observations).
SmoothTrace<GaussianDense> smooth(const FilterTrace<GaussianDense>& trace);
SmoothTrace<GaussianDiag> smooth(const FilterTrace<GaussianDiag>& trace);

/// Reads the smoothed dynamics off the two-slice joint defined by the smoothed
/// marginals and backward gains.
std::vector<DenseConditional> smoothed_dynamics(const SmoothTrace<GaussianDense>& trace);
std::vector<DiagConditional> smoothed_dynamics(const SmoothTrace<GaussianDiag>& trace);

/// Cov(z_t, z_{t+1} | all observations) = C_t Sigma^s_{t+1}.
Mat two_slice_cross_cov(const SmoothTrace<GaussianDense>& trace, int t);

/// Marginal log-likelihood of the valid observations via the prediction-error decomposition.
double exact_loglik(const LgssmParams& params, const Trajectory& traj,
                    const std::vector<ObsModel>& sensors = {});

/// Toy ground truth: 4-d damped oscillator, trans var 0.01, obs var 0.025, z_0 ~ N(0, I).
LgssmParams toy_ground_truth();

}  // namespace vrkn

#include "vrkn/parallel.hpp"

namespace vrkn {

struct BatchInference {
  std::vector<FilterTrace<GaussianDense>> filtered;
  std::vector<SmoothTrace<GaussianDense>> smoothed;
  std::vector<double> loglik;  // exact marginal log-likelihood per trajectory
};

/// Filters and smooths every trajectory with the same static model.
BatchInference infer_batch(const LgssmParams& params, const std::vector<Trajectory>& trajs,
                           Exec exec = Exec::Parallel, const std::vector<ObsModel>& sensors = {});

/// Log-likelihood from an existing filter trace (prediction-error decomposition).
double loglik_from_trace(const FilterTrace<GaussianDense>& trace, const LgssmParams& params, const Trajectory& traj,
                         const std::vector<ObsModel>& sensors = {});

}  // namespace vrkn
