#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vrkn/gauss.hpp"

namespace vrkn {

/// One sensor's observation stream. Column t of obs is the observation at step t.
struct SensorSeries {
  std::string name;
  Mat obs;                          // obs_dim x T
  std::vector<std::uint8_t> valid;  // length T; 0 = missing
  Mat mask;                         // obs_dim x T reconstruction mask; empty = all observed

  Eigen::Index dim() const { return obs.rows(); }
  bool has_mask() const { return mask.size() != 0; }
};

struct Trajectory {
  std::vector<SensorSeries> sensors;
  Mat actions;  // action_dim x T, zero rows when the system has no inputs
  Mat states;   // ground-truth state features x T, empty when unknown

  int length() const { return sensors.empty() ? static_cast<int>(actions.cols())
                                              : static_cast<int>(sensors.front().obs.cols()); }
  Eigen::Index action_dim() const { return actions.rows(); }
  Vec action(int t) const { return actions.rows() ? Vec(actions.col(t)) : Vec(); }
};

/// Single-sensor, always-valid trajectory from an observation matrix.
Trajectory make_trajectory(const Mat& obs, const std::string& sensor = "obs");

/// Throws DimensionError on inconsistent lengths and NumericalError on
/// non-finite valid observations or actions.
void validate(const Trajectory& traj);

}  // namespace vrkn
