#include "vrkn/tasks.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>

#include "vrkn/config_json.hpp"
#include "vrkn/rng.hpp"

namespace vrkn::tasks {

using nlohmann::json;

namespace {

constexpr double kLinearObsVar = 0.025;
constexpr double kLinearTransVar = 0.01;
constexpr double kPendulumMaxTorque = 2.0;
constexpr double kLinearMaxAction = 1.0;
constexpr char kMagic[8] = {'V', 'R', 'K', 'N', 'D', 'S', '0', '1'};

std::string schedule_name(MissingSchedule::Kind k) {
  switch (k) {
    case MissingSchedule::Kind::None: return "none";
    case MissingSchedule::Kind::EveryNth: return "every_nth";
    case MissingSchedule::Kind::FixedMask: return "fixed_mask";
  }
  return "?";
}

MissingSchedule::Kind parse_schedule(const std::string& s) {
  if (s == "none") return MissingSchedule::Kind::None;
  if (s == "every_nth") return MissingSchedule::Kind::EveryNth;
  if (s == "fixed_mask") return MissingSchedule::Kind::FixedMask;
  throw ConfigError("missing.kind: unknown schedule '" + s + "' (expected none, every_nth or fixed_mask)");
}

double policy_action(Policy policy, double amp, double freq, double phase, double t_sec, Rng& rng, double max_u) {
  if (policy == Policy::Random) return max_u * (2.0 * rng.uniform() - 1.0);
  return amp * std::sin(2.0 * std::numbers::pi * freq * t_sec + phase);
}

std::vector<std::uint8_t> schedule_flags(const MissingSchedule& m, int T, Rng rng) {
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(T), 1);
  if (m.kind != MissingSchedule::Kind::EveryNth) return valid;
  std::fill(valid.begin(), valid.end(), 0);
  for (int t = 0; t < T; t += rng.uniform_int(m.n_lo, m.n_hi)) valid[static_cast<std::size_t>(t)] = 1;
  return valid;
}

Trajectory simulate(const TaskSpec& spec, int T, Policy policy, Rng root) {
  Rng init = root.split("init"), pol = root.split("policy"), act_noise = root.split("action-noise");
  Rng process = root.split("process"), obs_noise = root.split("obs"), sched = root.split("schedule");
  const Eigen::Index du = action_dim(spec.system);
  const double max_u = spec.system == System::Pendulum ? kPendulumMaxTorque : kLinearMaxAction;
  const double dt = spec.system == System::Pendulum ? kPendulumDt : 0.1;
  Vec amp(du), freq(du), phase(du);
  for (Eigen::Index k = 0; k < du; ++k) {
    amp[k] = max_u * (0.5 + 0.5 * pol.uniform());
    freq[k] = 0.1 + 0.9 * pol.uniform();
    phase[k] = 2.0 * std::numbers::pi * pol.uniform();
  }

  Trajectory traj;
  traj.actions = Mat(du, T);
  traj.states = Mat(state_dim(spec.system), T);
  for (int t = 0; t < T; ++t)
    for (Eigen::Index k = 0; k < du; ++k)
      traj.actions(k, t) = policy_action(policy, amp[k], freq[k], phase[k], t * dt, pol, max_u);
  auto executed = [&](int t) {
    Vec u = traj.actions.col(t);
    for (Eigen::Index k = 0; k < du; ++k) u[k] += spec.action_noise_sd * act_noise.normal();
    return u;
  };

  if (spec.system == System::Pendulum) {
    PendulumState s{std::numbers::pi * (2.0 * init.uniform() - 1.0), 2.0 * init.uniform() - 1.0};
    for (int t = 0; t < T; ++t) {
      traj.states.col(t) << std::sin(s.theta), std::cos(s.theta), s.omega;
      s = pendulum_step(s, executed(t)[0]);
    }
  } else {
    const LgssmParams p = linear_tracking_model(spec.diagonal);
    Vec z = p.init_mean + p.init_var.cwiseSqrt().cwiseProduct(init.normal_vec(p.dim()));
    for (int t = 0; t < T; ++t) {
      traj.states.col(t) = z;
      z = p.trans_mat * z + p.control * executed(t) + p.trans_var.cwiseSqrt().cwiseProduct(process.normal_vec(p.dim()));
    }
  }

  const std::vector<std::uint8_t> scheduled = schedule_flags(spec.missing, T, sched);
  for (const SensorSpec& ss : spec.sensors) {
    SensorSeries s;
    s.name = ss.name;
    const Eigen::Index dim = sensor_dim(spec.system, ss.name);
    s.obs = Mat(dim, T);
    s.valid.assign(static_cast<std::size_t>(T), 1);
    Vec var;
    for (int t = 0; t < T; ++t) {
      Vec clean;
      if (spec.system == System::Pendulum) {
        clean = ss.name == "camera" ? Vec(traj.states.col(t).head(2)) : Vec(traj.states.col(t).tail(1));
        var = Vec::Constant(dim, kSensorVar);
      } else {
        clean = ss.name == "camera" ? Vec(traj.states.col(t)) : Vec(traj.states.col(t).tail(2));
        var = Vec::Constant(dim, ss.name == "camera" ? kLinearObsVar : kSensorVar);
      }
      s.obs.col(t) = clean + var.cwiseSqrt().cwiseProduct(obs_noise.normal_vec(dim));
      bool ok = t % ss.rate == 0;
      if (ss.scheduled) ok = ok && scheduled[static_cast<std::size_t>(t)];
      s.valid[static_cast<std::size_t>(t)] = ok ? 1 : 0;
    }
    if (ss.scheduled && spec.missing.kind == MissingSchedule::Kind::FixedMask) {
      s.mask = Mat(dim, T);
      for (Eigen::Index k = 0; k < dim; ++k) {
        const double keep = spec.missing.mask[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        s.mask.row(k).setConstant(keep);
        if (keep == 0.0) s.obs.row(k).setZero();  // occluded dimensions carry no signal
      }
    }
    traj.sensors.push_back(std::move(s));
  }
  return traj;
}

void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw ConfigError("dataset: write failed");
}

void read_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) throw ConfigError("dataset: truncated file");
}

void write_mat(std::ostream& out, const Mat& m) { write_bytes(out, m.data(), sizeof(double) * static_cast<std::size_t>(m.size())); }

Mat read_mat(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  read_bytes(in, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  return m;
}

}  // namespace

std::string to_string(System s) { return s == System::Pendulum ? "pendulum" : "linear_tracking"; }

System parse_system(const std::string& s) {
  if (s == "pendulum") return System::Pendulum;
  if (s == "linear_tracking") return System::LinearTracking;
  throw ConfigError("system: unknown '" + s + "' (expected pendulum or linear_tracking)");
}

Policy parse_policy(const std::string& s) {
  if (s == "random") return Policy::Random;
  if (s == "sinusoid") return Policy::Sinusoid;
  throw ConfigError("policy: unknown '" + s + "' (expected random or sinusoid)");
}

Eigen::Index sensor_dim(System system, const std::string& sensor) {
  if (system == System::Pendulum) {
    if (sensor == "camera") return 2;
    if (sensor == "proprio") return 1;
  } else {
    if (sensor == "camera") return 4;
    if (sensor == "velocity") return 2;
  }
  throw ConfigError("sensor '" + sensor + "' does not exist for system " + to_string(system));
}

Eigen::Index action_dim(System system) { return system == System::Pendulum ? 1 : 2; }
Eigen::Index state_dim(System system) { return system == System::Pendulum ? 3 : 4; }

void TaskSpec::validate() const {
  if (!std::isfinite(action_noise_sd) || action_noise_sd < 0.0) throw ConfigError("action_noise_sd must be finite and >= 0");
  if (sensors.empty()) throw ConfigError("sensors: at least one sensor required");
  std::set<std::string> names;
  for (const SensorSpec& s : sensors) {
    sensor_dim(system, s.name);
    if (!names.insert(s.name).second) throw ConfigError("sensors: duplicate sensor '" + s.name + "'");
    if (s.rate < 1) throw ConfigError("sensors: rate of '" + s.name + "' must be >= 1");
    if (s.scheduled && missing.kind == MissingSchedule::Kind::FixedMask &&
        static_cast<Eigen::Index>(missing.mask.size()) != sensor_dim(system, s.name))
      throw ConfigError("missing.mask: length must equal the dimension of sensor '" + s.name + "'");
  }
  if (missing.kind == MissingSchedule::Kind::EveryNth && (missing.n_lo < 1 || missing.n_hi < missing.n_lo))
    throw ConfigError("missing: need 1 <= n_lo <= n_hi");
}

TaskSpec default_spec(System system) {
  TaskSpec s;
  s.system = system;
  s.sensors = {{"camera", 1, true}, {system == System::Pendulum ? "proprio" : "velocity", 1, false}};
  return s;
}

json to_json(const TaskSpec& spec) {
  json sensors = json::array();
  for (const SensorSpec& s : spec.sensors) sensors.push_back({{"name", s.name}, {"rate", s.rate}, {"scheduled", s.scheduled}});
  json missing = {{"kind", schedule_name(spec.missing.kind)}, {"n_lo", spec.missing.n_lo}, {"n_hi", spec.missing.n_hi}};
  if (!spec.missing.mask.empty()) missing["mask"] = spec.missing.mask;
  return {{"system", to_string(spec.system)}, {"diagonal", spec.diagonal}, {"action_noise_sd", spec.action_noise_sd},
          {"missing", missing}, {"sensors", sensors}, {"seed", spec.seed}};
}

TaskSpec spec_from_json(const json& j) {
  check_keys(j, {"system", "diagonal", "action_noise_sd", "missing", "sensors", "seed"}, "task");
  TaskSpec spec = default_spec(parse_system(get_or<std::string>(j, "system", "pendulum", "task")));
  spec.diagonal = get_or(j, "diagonal", false, "task");
  spec.action_noise_sd = get_or(j, "action_noise_sd", 0.0, "task");
  spec.seed = get_or<std::uint64_t>(j, "seed", 0, "task");
  if (j.contains("missing")) {
    const json& m = j.at("missing");
    check_keys(m, {"kind", "n_lo", "n_hi", "mask"}, "task.missing");
    spec.missing.kind = parse_schedule(get_or<std::string>(m, "kind", "none", "task.missing"));
    spec.missing.n_lo = get_or(m, "n_lo", 4, "task.missing");
    spec.missing.n_hi = get_or(m, "n_hi", 8, "task.missing");
    spec.missing.mask = get_or(m, "mask", std::vector<std::uint8_t>{}, "task.missing");
  }
  if (j.contains("sensors")) {
    if (!j.at("sensors").is_array()) throw ConfigError("task.sensors: expected an array");
    spec.sensors.clear();
    for (const json& s : j.at("sensors")) {
      check_keys(s, {"name", "rate", "scheduled"}, "task.sensors[]");
      if (!s.contains("name")) throw ConfigError("task.sensors[]: missing 'name'");
      SensorSpec ss{get_or<std::string>(s, "name", "", "task.sensors[]"), get_or(s, "rate", 1, "task.sensors[]"), false};
      ss.scheduled = get_or(s, "scheduled", ss.name == "camera", "task.sensors[]");
      spec.sensors.push_back(ss);
    }
  }
  spec.validate();
  return spec;
}

PendulumState pendulum_step(const PendulumState& s, double u) {
  PendulumState n;
  n.omega = s.omega + kPendulumDt * (-kGravity * std::sin(s.theta) + u);
  n.theta = s.theta + kPendulumDt * n.omega;
  return n;
}

double pendulum_energy(const PendulumState& s) { return 0.5 * s.omega * s.omega - kGravity * std::cos(s.theta); }

LgssmParams linear_tracking_model(bool diagonal) {
  LgssmParams p = toy_ground_truth();
  if (diagonal) p.trans_mat = Vec((Vec(4) << 0.99, 0.97, 0.95, 0.9).finished()).asDiagonal();
  p.control = Mat::Zero(4, 2);
  p.control(2, 0) = 0.1;
  p.control(3, 1) = 0.1;
  p.trans_var = Vec::Constant(4, kLinearTransVar);
  p.obs_var = Vec::Constant(4, kLinearObsVar);
  return p;
}

Dataset generate(const TaskSpec& spec, int n_seq, int length, Policy policy, Exec exec) {
  spec.validate();
  if (n_seq <= 0 || length <= 0) throw ConfigError("generate: n_seq and length must be positive");
  const Rng root = Rng(spec.seed).split("task");
  Dataset ds{spec, std::vector<Trajectory>(static_cast<std::size_t>(n_seq))};
  for_each_index(ds.seqs.size(), exec, [&](std::size_t i) { ds.seqs[i] = simulate(spec, length, policy, root.split(i)); });
  return ds;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  const int T = ds.seqs.empty() ? 0 : ds.seqs.front().length();
  json sensors = json::array();
  for (const SensorSpec& s : ds.spec.sensors) sensors.push_back({{"name", s.name}, {"dim", sensor_dim(ds.spec.system, s.name)}});
  const json header = {{"spec", to_json(ds.spec)},
                       {"n_seq", ds.seqs.size()},
                       {"length", T},
                       {"sensors", sensors},
                       {"action_dim", action_dim(ds.spec.system)},
                       {"state_dim", state_dim(ds.spec.system)}};
  const std::string h = header.dump();
  const std::uint64_t n = h.size();
  write_bytes(out, kMagic, sizeof kMagic);
  write_bytes(out, &n, sizeof n);
  write_bytes(out, h.data(), h.size());
  for (const Trajectory& tr : ds.seqs) {
    if (tr.length() != T || tr.sensors.size() != ds.spec.sensors.size())
      throw DimensionError("dataset: sequences must share length and sensors");
    for (const SensorSeries& s : tr.sensors) {
      write_mat(out, s.obs);
      write_bytes(out, s.valid.data(), s.valid.size());
      const std::uint8_t has_mask = s.has_mask() ? 1 : 0;
      write_bytes(out, &has_mask, 1);
      if (has_mask) write_mat(out, s.mask);
    }
    write_mat(out, tr.actions);
    write_mat(out, tr.states);
  }
}

Dataset read_dataset(std::istream& in) {
  char magic[sizeof kMagic];
  read_bytes(in, magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ConfigError("dataset: bad magic");
  std::uint64_t n = 0;
  read_bytes(in, &n, sizeof n);
  std::string h(n, '\0');
  read_bytes(in, h.data(), n);
  json header;
  try {
    header = json::parse(h);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset: bad header: ") + e.what());
  }
  Dataset ds;
  ds.spec = spec_from_json(header.at("spec"));
  const int T = header.at("length").get<int>();
  const auto n_seq = header.at("n_seq").get<std::size_t>();
  const auto du = header.at("action_dim").get<Eigen::Index>();
  const auto ds_dim = header.at("state_dim").get<Eigen::Index>();
  ds.seqs.resize(n_seq);
  for (Trajectory& tr : ds.seqs) {
    for (const json& sj : header.at("sensors")) {
      SensorSeries s;
      s.name = sj.at("name").get<std::string>();
      s.obs = read_mat(in, sj.at("dim").get<Eigen::Index>(), T);
      s.valid.resize(static_cast<std::size_t>(T));
      read_bytes(in, s.valid.data(), s.valid.size());
      std::uint8_t has_mask = 0;
      read_bytes(in, &has_mask, 1);
      if (has_mask) s.mask = read_mat(in, s.obs.rows(), T);
      tr.sensors.push_back(std::move(s));
    }
    tr.actions = read_mat(in, du, T);
    tr.states = read_mat(in, ds_dim, T);
  }
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("dataset: cannot open " + path + " for writing");
  write_dataset(out, ds);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("dataset: cannot open " + path);
  return read_dataset(in);
}

}  // namespace vrkn::tasks
