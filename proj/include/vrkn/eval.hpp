#pragma once

#include <vector>

#include <json.hpp>

#include "vrkn/tasks.hpp"
#include "vrkn/vrkn.hpp"

namespace vrkn::eval {

/// Belief quality against ground-truth state features, averaged per step.
struct BeliefQuality {
  double state_logprob = 0.0;  // nats per step
  double coverage_1sigma = 0.0;
  double coverage_2sigma = 0.0;
  double recon_mse = 0.0;      // decoded smoothed means vs valid, unmasked observations
  long steps = 0;
};

nlohmann::json to_json(const BeliefQuality& q);

/// Affine read-out from diagonal latent beliefs to state features. Under
/// N(mu, diag(v)) the predictive is N(W mu + c, S W diag(v) W^T S + diag(resid_var))
/// with S = diag(sqrt(var_scale)).
struct LinearProbe {
  Mat W;
  Vec c;
  Vec var_scale;
  Vec resid_var;

  GaussianDense predict(const GaussianDiag& belief) const;
};

/// Least squares on the belief means (ridge 1e-6), then per feature the
/// Gaussian maximum-likelihood (var_scale, resid_var >= floor) of the fit-set
/// residuals under variance var_scale * (W v W^T)_kk + resid_var.
LinearProbe fit_probe(const std::vector<GaussianDiag>& beliefs, const Mat& states, double floor = 1e-6);

/// Scores Gaussian beliefs over the state features against true states.
BeliefQuality score(const std::vector<GaussianDense>& beliefs, const Mat& states);

enum class BeliefKind { Smoothed, Filtered, OpenLoop };

/// Latent beliefs of every sequence, concatenated over steps.
std::vector<GaussianDiag> latent_beliefs(const model::Vrkn& m, const std::vector<Trajectory>& seqs, BeliefKind kind,
                                         Exec exec = Exec::Parallel);

/// Probe fitted on `train` beliefs of the same kind, scored on `test`.
BeliefQuality probe_quality(const model::Vrkn& m, const std::vector<Trajectory>& train,
                            const std::vector<Trajectory>& test, BeliefKind kind, Exec exec = Exec::Parallel);

/// Observation models of the ground-truth linear_tracking sensors.
std::vector<ObsModel> linear_obs_models(const tasks::TaskSpec& spec);

/// Exact dense smoother of the generating model with per-dimension masks honoured.
std::vector<GaussianDense> exact_smoothed(const LgssmParams& params, const std::vector<ObsModel>& sensors,
                                          const Trajectory& traj);

/// Quality of the exact smoother of linear_tracking on its own data.
BeliefQuality exact_quality(const tasks::Dataset& ds, Exec exec = Exec::Parallel);

/// Mean squared error of decoding the smoothed latent means, per valid and unmasked entry.
double recon_mse(const model::Vrkn& m, const std::vector<Trajectory>& seqs);

}  // namespace vrkn::eval
