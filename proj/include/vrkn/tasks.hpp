#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "vrkn/lgssm.hpp"
#include "vrkn/parallel.hpp"

namespace vrkn::tasks {

enum class System { LinearTracking, Pendulum };
enum class Policy { Random, Sinusoid };

struct MissingSchedule {
  enum class Kind { None, EveryNth, FixedMask };
  Kind kind = Kind::None;
  int n_lo = 4;  // EveryNth: gap to the next valid frame ~ U{n_lo..n_hi}
  int n_hi = 8;
  std::vector<std::uint8_t> mask;  // FixedMask: per-dimension, 0 = occluded
};

struct SensorSpec {
  std::string name;       // pendulum: camera | proprio; linear_tracking: camera | velocity
  int rate = 1;           // valid only at steps divisible by rate
  bool scheduled = false; // subject to the missing schedule
};

struct TaskSpec {
  System system = System::Pendulum;
  bool diagonal = false;  // linear_tracking: diagonal transition matrix
  double action_noise_sd = 0.0;
  MissingSchedule missing;
  std::vector<SensorSpec> sensors;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Camera at full rate under the schedule plus an every-step proprioceptive sensor.
TaskSpec default_spec(System system);

nlohmann::json to_json(const TaskSpec& spec);
/// Rejects unknown keys and invalid values with ConfigError.
TaskSpec spec_from_json(const nlohmann::json& j);

std::string to_string(System s);
System parse_system(const std::string& s);
Policy parse_policy(const std::string& s);

// Pendulum: theta'' = -g sin(theta) + u, semi-implicit Euler.
inline constexpr double kGravity = 9.81;
inline constexpr double kPendulumDt = 0.05;
inline constexpr double kSensorVar = 0.01;

struct PendulumState {
  double theta = 0.0;
  double omega = 0.0;
};

PendulumState pendulum_step(const PendulumState& s, double u);
double pendulum_energy(const PendulumState& s);

/// Ground-truth model of linear_tracking: identity camera with variance 0.025,
/// actions push the last two coordinates.
LgssmParams linear_tracking_model(bool diagonal);

/// Sensor observation dimension for a system.
Eigen::Index sensor_dim(System system, const std::string& sensor);
Eigen::Index action_dim(System system);
/// Stored ground-truth state features: (sin theta, cos theta, omega) or z.
Eigen::Index state_dim(System system);

struct Dataset {
  TaskSpec spec;
  std::vector<Trajectory> seqs;
};

/// Recorded actions are the commanded ones; execution adds N(0, action_noise_sd^2).
/// Sequence i uses streams split from (spec.seed, i) only, so results do not
/// depend on the execution policy. Schedules draw from their own stream.
Dataset generate(const TaskSpec& spec, int n_seq, int length, Policy policy, Exec exec = Exec::Parallel);

// Binary container, little-endian:
//   "VRKNDS01"  u64 header_bytes  header JSON {spec, n_seq, length, sensors[{name, dim}], action_dim, state_dim}
//   per sequence, per sensor: obs f64[dim*T] column-major, valid u8[T], has_mask u8, mask f64[dim*T] if has_mask
//   then actions f64[action_dim*T], states f64[state_dim*T]
void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace vrkn::tasks
