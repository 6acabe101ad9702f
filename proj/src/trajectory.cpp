#include "vrkn/trajectory.hpp"

namespace vrkn {

Trajectory make_trajectory(const Mat& obs, const std::string& sensor) {
  Trajectory traj;
  SensorSeries s;
  s.name = sensor;
  s.obs = obs;
  s.valid.assign(static_cast<std::size_t>(obs.cols()), 1);
  traj.sensors.push_back(std::move(s));
  traj.actions = Mat(0, obs.cols());
  return traj;
}

void validate(const Trajectory& traj) {
  const int T = traj.length();
  if (T <= 0) throw DimensionError("trajectory: empty");
  for (const auto& s : traj.sensors) {
    require_dims(s.obs.cols(), T, "trajectory sensor length");
    require_dims(static_cast<long>(s.valid.size()), T, "trajectory validity flags");
    if (s.has_mask()) {
      require_dims(s.mask.rows(), s.obs.rows(), "trajectory mask rows");
      require_dims(s.mask.cols(), T, "trajectory mask cols");
    }
    for (int t = 0; t < T; ++t)
      if (s.valid[static_cast<std::size_t>(t)] && !s.obs.col(t).allFinite())
        throw NumericalError("trajectory: non-finite observation in sensor " + s.name);
  }
  if (traj.actions.rows() > 0) {
    require_dims(traj.actions.cols(), T, "trajectory actions");
    if (!traj.actions.allFinite()) throw NumericalError("trajectory: non-finite action");
  }
}

}  // namespace vrkn
