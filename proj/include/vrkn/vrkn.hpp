#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vrkn/ad/adam.hpp"
#include "vrkn/ad/layers.hpp"
#include "vrkn/lgssm.hpp"

namespace vrkn::model {

struct SensorConfig {
  std::string name;
  Eigen::Index obs_dim = 0;
  double loss_scale = 1.0;  // weight of this sensor's reconstruction term
  bool encode = true;       // false: decoder-only target such as a reward
};

struct VrknConfig {
  Eigen::Index latent_dim = 32;
  Eigen::Index hidden_width = 64;
  double dropout_rate = 0.1;
  double free_nats = 3.0;
  std::vector<SensorConfig> sensors;
  Eigen::Index action_dim = 0;
  bool concat_flags = false;  // encoders see the validity flag and every step is updated

  void validate() const;
};

nlohmann::json to_json(const VrknConfig& cfg);
/// Rejects unknown keys and invalid values with ConfigError.
VrknConfig config_from_json(const nlohmann::json& j);

struct EncoderOutput {
  Vec w;
  Vec var_w;  // >= 1e-8
};

enum class DropoutMode { Off, Sampled };

struct LossBreakdown {
  double recon = 0.0;     // per step, summed over sensors
  double kl = 0.0;        // per step, before the free-nats floor
  double elbo = 0.0;      // recon - kl
  double loss = 0.0;      // minimized value: -(recon - max(kl_t, free_nats)) per step
  double grad_norm = 0.0;
};

/// Beliefs over the latent state, one entry per step.
struct Beliefs {
  std::vector<GaussianDiag> priors;
  std::vector<GaussianDiag> posteriors;
  std::vector<GaussianDiag> smoothed;  // empty unless requested
};

/// Latent Kalman model with per-sensor encoders and decoders and a locally
/// linear transition z' = a .* z + b + N(0, var_dyn) emitted by phi at the
/// posterior mean. Columns of every tape value are sequences of a batch.
class Vrkn {
 public:
  Vrkn(VrknConfig cfg, std::uint64_t seed);

  const VrknConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }

  EncoderOutput encode(std::size_t sensor, const Vec& obs, bool valid = true) const;
  LocalStep dynamics_phi(const Vec& posterior_mean, const Vec& action, Rng& rng, bool dropout_on) const;

  // Tape-level building blocks.
  struct Encoded {
    ad::Var w, var_w;
  };
  Encoded encode(ad::Tape& tape, std::size_t sensor, const Mat& obs, const std::vector<std::uint8_t>& valid) const;
  struct Step {
    ad::Var a, b, var_dyn;
  };
  Step phi(ad::Tape& tape, ad::Var mean, const Mat& actions, Rng* rng, bool dropout_on) const;
  ad::Var decode(ad::Tape& tape, std::size_t sensor, ad::Var z) const;

  /// Single-sample smoothing bound with free nats. Returns the per-step loss;
  /// `out` receives the breakdown.
  ad::Var loss(ad::Tape& tape, const std::vector<const Trajectory*>& batch, Rng& rng, LossBreakdown* out = nullptr) const;

  struct LossTerms {
    ad::Var loss;
    ad::Var recon;  // 1 x batch, summed over steps and sensors
    ad::Var kl;     // 1 x batch, summed over steps, without the floor
  };
  LossTerms loss_terms(ad::Tape& tape, const std::vector<const Trajectory*>& batch, Rng& rng,
                       LossBreakdown* out = nullptr) const;

  /// Posterior beliefs with sequential per-sensor updates; invalid sensors are skipped.
  std::vector<GaussianDiag> filter_online(const Trajectory& traj, DropoutMode mode = DropoutMode::Off,
                                          Rng* rng = nullptr) const;
  /// Filter (and optionally smooth) a batch of equal-length sequences with dropout off.
  std::vector<Beliefs> infer(const std::vector<const Trajectory*>& batch, bool smooth) const;
  /// Prior rollout from p(z_0) without any update.
  std::vector<GaussianDiag> open_loop(const Trajectory& traj) const;

  /// Mean across-pass variance of the decoded one-step prediction of sensor 0,
  /// with phi evaluated at the posterior means under M sampled dropout masks.
  double epistemic_variance(const std::vector<const Trajectory*>& batch, int passes, Rng& rng) const;

  /// Mean transition standard deviation emitted along the posterior means.
  double mean_dyn_sd(const std::vector<const Trajectory*>& batch) const;

 private:
  struct Pass;
  Pass run_filter(ad::Tape& tape, const std::vector<const Trajectory*>& batch, bool updates, Rng* rng,
                  bool dropout_on) const;
  void check_batch(const std::vector<const Trajectory*>& batch) const;

  VrknConfig cfg_;
  ad::ParamStore store_;
  struct SensorNets {
    ad::Mlp trunk;
    ad::Linear mean, var;
    ad::Mlp decoder;
  };
  std::vector<SensorNets> sensors_;
  ad::Linear phi_in_, phi_hidden_, phi_a_, phi_b_, phi_sd_;
  ad::GruCell phi_gru_;
};

struct TrainOptions {
  int batch_size = 32;
  int seq_len = 50;
  double lr = 1e-3;
  double clip_norm = 100.0;
  std::uint64_t seed = 0;
};

/// Draws random equal-length windows and takes Adam steps. All randomness of
/// step k comes from a stream keyed by (seed, k), so a run resumed from a
/// checkpoint continues bit-identically.
class Trainer {
 public:
  Trainer(Vrkn& model, TrainOptions opts);

  LossBreakdown step(const std::vector<Trajectory>& data);
  long steps() const { return adam_.steps(); }
  const TrainOptions& options() const { return opts_; }

  void save(const std::string& path, const nlohmann::json& meta = {}) const;
  /// Restores parameters, optimizer moments and the step counter.
  nlohmann::json load(const std::string& path);

 private:
  Vrkn& model_;
  TrainOptions opts_;
  ad::Adam adam_;
};

/// Cuts [start, start + len) out of a trajectory.
Trajectory window(const Trajectory& traj, int start, int len);

/// Model configuration matching a task's sensors and actions.
VrknConfig config_for(const std::vector<Trajectory>& data, VrknConfig base = {});

}  // namespace vrkn::model
