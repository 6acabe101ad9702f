#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vrkn/ad/layers.hpp"
#include "vrkn/lgssm.hpp"
#include "vrkn/objectives.hpp"
#include "vrkn/parallel.hpp"

namespace vrkn::toy {

enum class Learner { SsmCf, SsmNn, RssmNn };

std::string_view to_string(Learner l);
Learner parse_learner(std::string_view s);

/// Sequences from the ground-truth model; true latent states live in Trajectory::states.
struct ToyDataset {
  std::vector<Trajectory> train;
  std::vector<Trajectory> test;
};

struct DataConfig {
  int n_seq = 1000;
  int length = 50;
  int n_test = 100;  // held out from n_seq
};

ToyDataset generate_toy_data(std::uint64_t seed, const DataConfig& cfg = {}, Exec exec = Exec::Parallel);

/// Learned part of the generative model: transition matrix and isotropic
/// transition variance. Everything else is fixed to the ground truth.
struct Dynamics {
  Mat A;
  double sigma = 1.0;

  LgssmParams model() const;
};

struct TrainConfig {
  Learner learner = Learner::SsmCf;
  int max_epochs = 150;
  int batch_size = 50;
  double lr = 0.005;
  double init_a_var = 0.05;
  double init_sigma = 1.0;
  double early_stop_tol = 1e-4;  // nats per step per epoch, between consecutive window means
  int early_stop_window = 10;
  long max_steps = 0;            // 0 = bounded by epochs only
  int hidden = 64;
  std::optional<double> clip_norm;
  bool learn_dynamics = true;    // false freezes A and sigma at the ground truth
};

struct ToyMetrics {
  double gt_state_logprob = 0.0;        // held-out, nats per step
  double gt_state_logprob_train = 0.0;  // training split, nats per step
  double frob_dist = 0.0;
  double sigma_tilde = 0.0;
  double elbo_final = 0.0;              // held-out bound, nats per step
  int epochs = 0;
  long steps = 0;
};

struct TrainResult {
  ToyMetrics metrics;
  Dynamics learned;
  std::vector<double> heldout_elbo;  // per epoch, nats per step
};

/// Trains one learner; divergence throws NumericalError with the epoch and step.
TrainResult train_toy(const TrainConfig& cfg, const ToyDataset& data, std::uint64_t seed, Exec exec = Exec::Parallel);

/// Mean per-step log density of the true states under the given beliefs.
double state_logprob(const std::vector<Trajectory>& seqs, const std::vector<std::vector<GaussianDense>>& beliefs);

struct GtBaselines {
  double smoothed_logprob = 0.0;
  double posterior_logprob = 0.0;
};

/// Exact filter and smoother under the ground-truth model.
GtBaselines gt_baselines(const std::vector<Trajectory>& seqs, Exec exec = Exec::Parallel);

// Closed-form smoothing learner.

struct CfGradient {
  double elbo = 0.0;  // summed over the batch; equals the exact log-likelihood
  Mat d_A;            // d elbo / d A
  double d_sigma = 0.0;
};

/// Gradient of the smoothing bound with q fixed to the exact smoother. Since
/// the bound is tight there, this is the score E_q[grad log p(z, o)]:
///   d/dA     = sum_t (E[z_t z_{t-1}^T] - A E[z_{t-1} z_{t-1}^T]) / sigma
///   d/dsigma = sum_t (-d / (2 sigma) + E|z_t - A z_{t-1}|^2 / (2 sigma^2))
CfGradient ssm_cf_gradient(const Dynamics& dyn, const std::vector<const Trajectory*>& batch, Exec exec);

// Neural inference learners.

/// Emits q(z_t | z_{t-1}, .) = N(C_t z_{t-1} + c_t, diag(s_t)) from the
/// previous marginal mean and a per-step feature: the observation (filtering)
/// or a backward GRU summary of o_{>=t} (smoothing). Marginals are propagated
/// in closed form, so the bound is deterministic.
class NnInference {
 public:
  NnInference(Learner kind, int hidden, ad::ParamStore& store, Rng& rng);

  struct Forward {
    ad::Var neg_elbo;  // -(sum of bounds) / (batch * T)
    ad::Var elbo_sum;
    std::vector<LinearChain> chains;                 // filled when requested
    std::vector<std::vector<GaussianDense>> marginals;
  };

  /// a_flat is A row-major as 16 x 1, sigma is 1 x 1 (already positive).
  Forward forward(ad::Tape& tape, ad::Var a_flat, ad::Var sigma, const std::vector<const Trajectory*>& batch,
                  bool collect) const;

  Learner kind() const { return kind_; }

 private:
  Learner kind_;
  ad::Mlp net_;
  ad::GruCell gru_;
};

// Seed sweep.

struct SweepConfig {
  std::vector<Learner> learners{Learner::SsmCf, Learner::SsmNn, Learner::RssmNn};
  std::vector<std::uint64_t> seeds;
  DataConfig data;
  TrainConfig train;
};

struct SweepRow {
  Learner learner;
  std::uint64_t seed;
  ToyMetrics metrics;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::pair<std::uint64_t, GtBaselines>> baselines;  // held-out split per seed
};

/// Runs every (learner, seed) pair; runs are independent and parallel under Exec::Parallel.
SweepResult run_sweep(const SweepConfig& cfg, Exec exec = Exec::Parallel);

/// Columns: learner, seed, gt_state_logprob, frob_dist, sigma_tilde, elbo_final, gt_state_logprob_train, epochs, steps.
std::string to_csv(const SweepResult& res);

/// Per-learner means with bootstrap 95% intervals plus the ground-truth baselines.
nlohmann::json summarize(const SweepResult& res, int resamples = 10000, std::uint64_t seed = 0);

}  // namespace vrkn::toy
