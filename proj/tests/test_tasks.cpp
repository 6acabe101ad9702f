#include <doctest.h>

#include <cmath>
#include <sstream>

#include "vrkn/tasks.hpp"

using namespace vrkn;
using namespace vrkn::tasks;

namespace {

TaskSpec pendulum_missing(double noise_sd) {
  TaskSpec s = default_spec(System::Pendulum);
  s.action_noise_sd = noise_sd;
  s.missing.kind = MissingSchedule::Kind::EveryNth;
  s.seed = 5;
  return s;
}

bool same(const Trajectory& a, const Trajectory& b) {
  if (a.sensors.size() != b.sensors.size()) return false;
  for (std::size_t k = 0; k < a.sensors.size(); ++k) {
    if (a.sensors[k].valid != b.sensors[k].valid) return false;
    if (!(a.sensors[k].obs.array() == b.sensors[k].obs.array()).all()) return false;
    if (a.sensors[k].mask.size() != b.sensors[k].mask.size()) return false;
    if (a.sensors[k].has_mask() && !(a.sensors[k].mask.array() == b.sensors[k].mask.array()).all()) return false;
  }
  return (a.actions.array() == b.actions.array()).all() && (a.states.array() == b.states.array()).all();
}

}  // namespace

TEST_CASE("pendulum energy has no secular drift under semi-implicit Euler") {
  // The integrator conserves a nearby modified energy, so the true energy
  // oscillates with O(dt^2) amplitude but does not trend.
  for (PendulumState s : {PendulumState{1.0, 0.0}, PendulumState{2.5, 1.0}, PendulumState{-0.3, 0.5}}) {
    const int n = 20000;
    std::vector<double> e(n);
    for (int i = 0; i < n; ++i) {
      e[static_cast<std::size_t>(i)] = pendulum_energy(s);
      s = pendulum_step(s, 0.0);
    }
    double st = 0, se = 0, stt = 0, ste = 0;
    for (int i = 0; i < n; ++i) {
      st += i;
      se += e[static_cast<std::size_t>(i)];
      stt += double(i) * i;
      ste += double(i) * e[static_cast<std::size_t>(i)];
    }
    const double slope = (n * ste - st * se) / (n * stt - st * st);
    CHECK(std::abs(slope) < 1e-6);
    auto range = [&](int lo, int hi) {
      const auto [mn, mx] = std::minmax_element(e.begin() + lo, e.begin() + hi);
      return *mx - *mn;
    };
    CHECK(range(3 * n / 4, n) < 1.1 * range(0, n / 4) + 1e-12);
  }
}

TEST_CASE("pendulum states follow the integrator under the recorded actions") {
  TaskSpec spec = pendulum_missing(0.0);
  const Dataset ds = generate(spec, 3, 80, Policy::Sinusoid);
  for (const Trajectory& tr : ds.seqs) {
    PendulumState s{std::atan2(tr.states(0, 0), tr.states(1, 0)), tr.states(2, 0)};
    for (int t = 1; t < tr.length(); ++t) {
      s = pendulum_step(s, tr.actions(0, t - 1));
      CHECK(std::abs(std::sin(s.theta) - tr.states(0, t)) < 1e-9);
      CHECK(std::abs(s.omega - tr.states(2, t)) < 1e-9);
    }
  }
  // Noisy execution leaves the recorded actions unchanged but moves the states.
  const Dataset noisy = generate(pendulum_missing(0.2), 3, 80, Policy::Sinusoid);
  CHECK((noisy.seqs[0].actions.array() == ds.seqs[0].actions.array()).all());
  CHECK((noisy.seqs[0].states.array() != ds.seqs[0].states.array()).any());
  // Schedules do not depend on anything but their own stream.
  CHECK(noisy.seqs[0].sensors[0].valid == ds.seqs[0].sensors[0].valid);
}

TEST_CASE("every-nth schedule") {
  const Dataset ds = generate(pendulum_missing(0.2), 200, 100, Policy::Random);
  double valid = 0, total = 0;
  for (const Trajectory& tr : ds.seqs) {
    const auto& v = tr.sensors[0].valid;
    CHECK(v[0] == 1);
    int last = 0;
    for (int t = 1; t < tr.length(); ++t)
      if (v[static_cast<std::size_t>(t)]) {
        CHECK(t - last >= 4);
        CHECK(t - last <= 8);
        last = t;
      }
    CHECK(tr.length() - last <= 8);
    for (auto f : v) valid += f;
    total += static_cast<double>(v.size());
    // The unscheduled rate-1 sensor is valid everywhere.
    for (auto f : tr.sensors[1].valid) CHECK(f == 1);
  }
  const double frac = valid / total;
  CHECK(frac >= 1.0 / 8.0);
  CHECK(frac <= 1.0 / 4.0);
  // Mean gap is 6.
  CHECK(frac == doctest::Approx(1.0 / 6.0).epsilon(0.05));
}

TEST_CASE("rate divisors and fixed masks") {
  TaskSpec spec = default_spec(System::LinearTracking);
  spec.sensors = {{"camera", 1, true}, {"velocity", 3, false}};
  spec.missing.kind = MissingSchedule::Kind::FixedMask;
  spec.missing.mask = {1, 0, 1, 0};
  const Dataset ds = generate(spec, 4, 30, Policy::Random);
  for (const Trajectory& tr : ds.seqs) {
    for (int t = 0; t < tr.length(); ++t) {
      CHECK(tr.sensors[0].valid[static_cast<std::size_t>(t)] == 1);
      CHECK(tr.sensors[1].valid[static_cast<std::size_t>(t)] == (t % 3 == 0 ? 1 : 0));
    }
    REQUIRE(tr.sensors[0].has_mask());
    CHECK(tr.sensors[0].mask.row(1).sum() == 0.0);
    CHECK(tr.sensors[0].mask.row(0).sum() == 30.0);
    CHECK(tr.sensors[0].obs.row(3).cwiseAbs().sum() == 0.0);
    CHECK(!tr.sensors[1].has_mask());
    CHECK_NOTHROW(validate(tr));
  }
}

TEST_CASE("linear tracking: transition residuals have the model's noise") {
  for (bool diagonal : {false, true}) {
    TaskSpec spec = default_spec(System::LinearTracking);
    spec.diagonal = diagonal;
    const LgssmParams p = linear_tracking_model(diagonal);
    CHECK(p.trans_mat.isDiagonal() == diagonal);
    const Dataset ds = generate(spec, 300, 40, Policy::Random);
    Mat s = Mat::Zero(4, 4);
    double n = 0;
    for (const Trajectory& tr : ds.seqs)
      for (int t = 0; t + 1 < tr.length(); ++t) {
        const Vec w = tr.states.col(t + 1) - p.trans_mat * tr.states.col(t) - p.control * tr.actions.col(t);
        s += w * w.transpose();
        n += 1;
      }
    s /= n;
    for (int i = 0; i < 4; ++i) {
      CHECK(std::abs(s(i, i) - 0.01) < 3.0 * 0.01 * std::sqrt(2.0 / n));
      for (int j = 0; j < i; ++j) CHECK(std::abs(s(i, j)) < 3.0 * 0.01 / std::sqrt(n));
    }
  }
}

TEST_CASE("pendulum sensors carry variance 0.01") {
  const Dataset ds = generate(default_spec(System::Pendulum), 100, 50, Policy::Random);
  double s2 = 0, n = 0;
  for (const Trajectory& tr : ds.seqs)
    for (int t = 0; t < tr.length(); ++t) {
      const Vec r = tr.sensors[0].obs.col(t) - tr.states.col(t).head(2);
      s2 += r.squaredNorm();
      n += 2;
    }
  CHECK(std::abs(s2 / n - kSensorVar) < 3.0 * kSensorVar * std::sqrt(2.0 / n));
}

TEST_CASE("generation is deterministic and policy independent") {
  const TaskSpec spec = pendulum_missing(0.2);
  const Dataset a = generate(spec, 20, 30, Policy::Random);
  const Dataset b = generate(spec, 20, 30, Policy::Random, Exec::Serial);
  for (std::size_t i = 0; i < a.seqs.size(); ++i) CHECK(same(a.seqs[i], b.seqs[i]));
  TaskSpec other = spec;
  other.seed = 6;
  CHECK(!same(generate(other, 1, 30, Policy::Random).seqs[0], a.seqs[0]));
}

TEST_CASE("dataset container round-trips bit-exactly") {
  TaskSpec spec = default_spec(System::LinearTracking);
  spec.missing.kind = MissingSchedule::Kind::FixedMask;
  spec.missing.mask = {0, 1, 1, 1};
  spec.action_noise_sd = 0.1;
  const Dataset ds = generate(spec, 5, 12, Policy::Sinusoid);
  std::stringstream buf;
  write_dataset(buf, ds);
  const Dataset back = read_dataset(buf);
  CHECK(to_json(back.spec) == to_json(ds.spec));
  REQUIRE(back.seqs.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(same(back.seqs[i], ds.seqs[i]));

  std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS_AS(read_dataset(truncated), ConfigError);
  bytes[0] = 'X';
  std::stringstream bad(bytes);
  CHECK_THROWS_AS(read_dataset(bad), ConfigError);
}

TEST_CASE("task spec JSON") {
  const TaskSpec spec = pendulum_missing(0.2);
  const TaskSpec back = spec_from_json(to_json(spec));
  CHECK(to_json(back) == to_json(spec));
  CHECK_THROWS_AS(spec_from_json({{"system", "pendulum"}, {"colour", 3}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"system", "cartpole"}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"action_noise_sd", -1.0}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"sensors", {{{"name", "camera"}, {"rate", 0}}}}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"sensors", {{{"name", "lidar"}}}}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"missing", {{"kind", "fixed_mask"}, {"mask", {1}}}}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"missing", {{"kind", "every_nth"}, {"n_lo", 5}, {"n_hi", 4}}}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"seed", "abc"}}), ConfigError);
}
