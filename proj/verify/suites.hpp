#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vrkn/toy.hpp"

namespace vrkn::oracle {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  nlohmann::json metrics = nlohmann::json::object();
};

/// Filter posteriors and priors, smoothed marginals and two-slice moments
/// against dense joint conditioning on random static models (d <= 4, T <= 6), tol 1e-8.
SuiteResult oracle_equivalence(int instances = 200, std::uint64_t seed = 1);

/// Smoothing bound with the exact smoother equals the exact log-likelihood
/// within 1e-6 per sequence.
SuiteResult bound_tightness(int instances = 50, std::uint64_t seed = 2);

/// The filtering-family learner trained against frozen ground-truth dynamics
/// stays below the exact held-out log-likelihood by more than 0.01 nats per step.
SuiteResult restricted_family_gap(long steps = 2000, std::uint64_t seed = 3);

/// Central differences against the tape on every layer and on the composed
/// toy and VRKN losses, 20 random points each, tol 1e-3.
SuiteResult gradient_integrity(int points = 20, std::uint64_t seed = 4);

/// Each smoothed-dynamics conditional, marginalized over the previous smoothed
/// marginal, reproduces the next smoothed marginal within 1e-10 (dense and diagonal paths).
SuiteResult extended_rts_consistency(int instances = 100, std::uint64_t seed = 5);

/// Sensor-order invariance (1e-10), invalid steps leave posterior = prior
/// exactly, K identical sensors equal one with variance / K (1e-9); for the
/// static filter and for VRKN.
SuiteResult fusion_contracts(int instances = 50, std::uint64_t seed = 6);

/// Toy replication bands on per-learner means over the seeds of a sweep.
SuiteResult toy_replication_checks(const toy::SweepResult& sweep);
SuiteResult toy_replication(const toy::SweepConfig& cfg);

struct VrknRunConfig {
  long steps = 20000;
  int n_train = 500;
  int n_test = 100;
  int length = 100;
  std::uint64_t seed = 7;
};

/// Pendulum with every-nth missing camera frames and action noise 0.2:
/// smoothed beliefs beat the open-loop baseline by >= 2 nats per step on
/// held-out ground-truth states, with 2-sigma coverage in [0.85, 0.99].
SuiteResult vrkn_missing_data(const VrknRunConfig& cfg = {});

struct EpistemicConfig {
  std::vector<int> n_train{20, 60, 200};  // grows 10x
  long steps = 3000;
  int length = 50;
  int n_test = 50;
  int passes = 30;
  std::uint64_t seed = 8;
};

/// MC-dropout predictive spread on held-out inputs is positive and decreases
/// with every increase of the training set on the linear task.
SuiteResult epistemic_signal(const EpistemicConfig& cfg = {});

/// The suites that run in minutes: oracle, tightness, gradients, extended RTS, fusion.
std::vector<SuiteResult> quick_suites();

}  // namespace vrkn::oracle
