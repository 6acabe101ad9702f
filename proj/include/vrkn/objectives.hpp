#pragma once

#include <functional>
#include <variant>
#include <vector>

#include "vrkn/lgssm.hpp"
#include "vrkn/rng.hpp"

namespace vrkn {

enum class ElboMode { ClosedForm, MonteCarlo };

struct ElboBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;  // recon - kl
  std::vector<double> recon_per_step;
  std::vector<double> kl_per_step;  // kl_per_step[0] is KL[q(z_0) || p(z_0)]
};

/// Variational distribution q(z_0) prod_t q(z_t | z_{t-1}) with linear-Gaussian
/// conditionals; conditionals[t-1] produces z_t.
struct LinearChain {
  GaussianDense initial;
  std::vector<DenseConditional> conditionals;
};

/// Same factorization with arbitrary Gaussian conditionals (sampling only).
struct NonlinearChain {
  GaussianDense initial;
  std::function<GaussianDense(int t, const Vec& z_prev)> conditional;
};

using InferenceChain = std::variant<LinearChain, NonlinearChain>;

/// sum_t E_q[log p(o_t | z_t)] - KL[q(z_0) || p(z_0)] - sum_{t>=1} E_{q(z_{t-1})} KL[q(z_t | z_{t-1}) || p(z_t | z_{t-1})].
/// ClosedForm propagates marginals analytically (LinearChain only); MonteCarlo
/// draws one reparameterized z-chain from `rng`.
ElboBreakdown chain_elbo(const LgssmParams& model, const InferenceChain& q, const Trajectory& traj, ElboMode mode,
                         Rng* rng = nullptr, const std::vector<ObsModel>& sensors = {});

/// Filtering-style bound: q(z_t | z_{t-1}, o_t) ignores observations after t.
ElboBreakdown elbo_rssm(const LgssmParams& model, const InferenceChain& q, const Trajectory& traj, ElboMode mode,
                        Rng* rng = nullptr, const std::vector<ObsModel>& sensors = {});

/// Smoothing bound: q is the smoothed marginal of z_0 followed by the smoothed dynamics.
ElboBreakdown elbo_ssm(const LgssmParams& model, const SmoothTrace<GaussianDense>& smoothed, const Trajectory& traj,
                       ElboMode mode, Rng* rng = nullptr, const std::vector<ObsModel>& sensors = {});

LinearChain smoothed_chain(const SmoothTrace<GaussianDense>& smoothed);

/// Closed-form E_{z ~ z_prev}[KL[N(J z + o, L) || N(A z + b, Q)]].
double expected_conditional_kl(const DenseConditional& q, const DenseTransition& p, const GaussianDense& z_prev);

/// E_{z ~ belief}[log N(obs | H z, diag(obs_var))] over dimensions with mask != 0.
double expected_obs_loglik(const Vec& obs, const GaussianDense& belief, const ObsModel& model, const Vec& mask = {});

/// Per-step loss contributions max(kl_t, free_nats). Throws on negative KL.
std::vector<double> free_nats_kl(const std::vector<double>& kl_per_step, double free_nats);

}  // namespace vrkn
