#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "suites.hpp"
#include "vrkn/ad/checkpoint.hpp"
#include "vrkn/config_json.hpp"
#include "vrkn/eval.hpp"
#include "vrkn/parallel.hpp"
#include "vrkn/tasks.hpp"
#include "vrkn/toy.hpp"
#include "vrkn/vrkn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vrkn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out = "results";
  bool smoke = false;
  bool resume = false;
};

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config '" + path + "': top level must be an object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

// FNV-1a over the canonical dump (object keys are sorted); smoke runs hash differently.
std::string config_hash(const json& cfg, bool smoke) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : cfg.dump() + (smoke ? "smoke" : "")) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Hash of everything that shapes a training trajectory; the step budget and
// logging cadence may change between a run and its resumption.
std::string resume_key(json cfg, bool smoke) {
  if (cfg.contains("train"))
    for (const char* k : {"steps", "checkpoint_every", "log_every"}) cfg["train"].erase(k);
  cfg.erase("eval");
  cfg.erase("seeds");
  return config_hash(cfg, smoke);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<std::uint64_t> seeds_from(const json& cfg, const Options& opt, std::vector<std::uint64_t> fallback) {
  if (!opt.seeds.empty()) return opt.seeds;
  if (cfg.contains("seeds")) return get_or(cfg, "seeds", fallback, "config");
  return fallback;
}

// Toy replication.

toy::SweepConfig toy_config(const json& cfg, const Options& opt) {
  check_keys(cfg, {"seeds", "learners", "data", "train", "resamples"}, "toy");
  std::vector<std::uint64_t> ten(10);
  std::iota(ten.begin(), ten.end(), 1);
  toy::SweepConfig s;
  s.seeds = seeds_from(cfg, opt, ten);
  if (cfg.contains("learners")) {
    s.learners.clear();
    for (const auto& name : get_or(cfg, "learners", std::vector<std::string>{}, "toy")) {
      try {
        s.learners.push_back(toy::parse_learner(name));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("toy.learners: ") + e.what());
      }
    }
  }
  if (cfg.contains("data")) {
    const json& d = cfg.at("data");
    check_keys(d, {"n_seq", "length", "n_test"}, "toy.data");
    s.data.n_seq = get_or(d, "n_seq", s.data.n_seq, "toy.data");
    s.data.length = get_or(d, "length", s.data.length, "toy.data");
    s.data.n_test = get_or(d, "n_test", s.data.n_test, "toy.data");
  }
  if (cfg.contains("train")) {
    const json& t = cfg.at("train");
    check_keys(t, {"max_epochs", "batch_size", "lr", "init_a_var", "init_sigma", "early_stop_tol",
                   "early_stop_window", "max_steps", "hidden", "clip_norm"},
               "toy.train");
    toy::TrainConfig& c = s.train;
    c.max_epochs = get_or(t, "max_epochs", c.max_epochs, "toy.train");
    c.batch_size = get_or(t, "batch_size", c.batch_size, "toy.train");
    c.lr = get_or(t, "lr", c.lr, "toy.train");
    c.init_a_var = get_or(t, "init_a_var", c.init_a_var, "toy.train");
    c.init_sigma = get_or(t, "init_sigma", c.init_sigma, "toy.train");
    c.early_stop_tol = get_or(t, "early_stop_tol", c.early_stop_tol, "toy.train");
    c.early_stop_window = get_or(t, "early_stop_window", c.early_stop_window, "toy.train");
    c.max_steps = get_or(t, "max_steps", c.max_steps, "toy.train");
    c.hidden = get_or(t, "hidden", c.hidden, "toy.train");
    if (t.contains("clip_norm")) c.clip_norm = get_or(t, "clip_norm", 0.0, "toy.train");
  }
  if (s.seeds.empty()) throw ConfigError("toy: no seeds");
  if (s.data.n_test <= 0 || s.data.n_test >= s.data.n_seq || s.data.length <= 0)
    throw ConfigError("toy.data: need 0 < n_test < n_seq and length > 0");
  if (s.train.max_epochs <= 0 || s.train.batch_size <= 0 || !(s.train.lr > 0))
    throw ConfigError("toy.train: max_epochs, batch_size and lr must be positive");
  if (opt.smoke) {
    s.seeds.resize(1);
    s.train.max_epochs = std::min(s.train.max_epochs, 20);
  }
  return s;
}

int cmd_toy(const Options& opt) {
  const json raw = read_config(opt.config_path);
  const toy::SweepConfig cfg = toy_config(raw, opt);
  const std::string hash = config_hash(raw, opt.smoke);
  const int resamples = get_or(raw, "resamples", 10000, "toy");
  std::cerr << "toy: " << cfg.seeds.size() << " seed(s), " << cfg.learners.size() << " learner(s), "
            << thread_count() << " thread(s)\n";
  const toy::SweepResult res = toy::run_sweep(cfg);

  std::istringstream csv(toy::to_csv(res));
  std::string line, out_csv;
  for (bool header = true; std::getline(csv, line); header = false)
    out_csv += line + (header ? ",config_hash" : "," + hash) + "\n";
  const fs::path dir(opt.out);
  write_text(dir / "toy_results.csv", out_csv);

  json summary = toy::summarize(res, resamples);
  const oracle::SuiteResult check = oracle::toy_replication_checks(res);
  summary["config_hash"] = hash;
  summary["seeds"] = cfg.seeds;
  summary["smoke"] = opt.smoke;
  summary["acceptance"] = check.metrics;
  summary["acceptance"]["passed"] = check.passed;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  std::cout << (check.passed ? "PASS " : "FAIL ") << check.detail << "\n";
  if (opt.smoke) {
    std::cout << "smoke run: bands reported, not enforced\n";
    return kExitOk;
  }
  return check.passed ? kExitOk : kExitAssertion;
}

// VRKN on synthetic tasks.

struct RunConfig {
  tasks::TaskSpec task;
  int n_train = 500;
  int n_test = 100;
  int length = 100;
  tasks::Policy policy = tasks::Policy::Random;
  json model = json::object();
  model::TrainOptions train;
  long steps = 20000;
  long checkpoint_every = 1000;
  long log_every = 100;
  int passes = 30;
};

RunConfig run_config(const json& cfg, const Options& opt) {
  check_keys(cfg, {"task", "data", "model", "train", "eval", "seeds"}, "config");
  RunConfig r;
  r.task = tasks::spec_from_json(cfg.value("task", json::object()));
  if (cfg.contains("data")) {
    const json& d = cfg.at("data");
    check_keys(d, {"n_train", "n_test", "length", "policy"}, "data");
    r.n_train = get_or(d, "n_train", r.n_train, "data");
    r.n_test = get_or(d, "n_test", r.n_test, "data");
    r.length = get_or(d, "length", r.length, "data");
    r.policy = tasks::parse_policy(get_or<std::string>(d, "policy", "random", "data"));
  }
  if (cfg.contains("model")) r.model = cfg.at("model");
  if (cfg.contains("train")) {
    const json& t = cfg.at("train");
    check_keys(t, {"steps", "batch_size", "seq_len", "lr", "clip_norm", "checkpoint_every", "log_every"}, "train");
    r.steps = get_or(t, "steps", r.steps, "train");
    r.train.batch_size = get_or(t, "batch_size", r.train.batch_size, "train");
    r.train.seq_len = get_or(t, "seq_len", r.train.seq_len, "train");
    r.train.lr = get_or(t, "lr", r.train.lr, "train");
    r.train.clip_norm = get_or(t, "clip_norm", r.train.clip_norm, "train");
    r.checkpoint_every = get_or(t, "checkpoint_every", r.checkpoint_every, "train");
    r.log_every = get_or(t, "log_every", r.log_every, "train");
  }
  if (cfg.contains("eval")) {
    check_keys(cfg.at("eval"), {"passes"}, "eval");
    r.passes = get_or(cfg.at("eval"), "passes", r.passes, "eval");
  }
  if (r.n_train <= 0 || r.n_test <= 0 || r.length <= 0) throw ConfigError("data: sizes must be positive");
  if (r.steps < 0 || r.checkpoint_every <= 0 || r.log_every <= 0) throw ConfigError("train: invalid step counts");
  if (r.passes < 2) throw ConfigError("eval.passes must be at least 2");
  if (opt.smoke) {
    r.n_train = std::min(r.n_train, 20);
    r.n_test = std::min(r.n_test, 10);
    r.steps = std::min(r.steps, 20L);
    r.passes = std::min(r.passes, 5);
  }
  return r;
}

struct Data {
  tasks::Dataset train, test;
};

// Training and test sets come from disjoint seed streams of the task.
Data make_data(const RunConfig& rc) {
  Data d;
  d.train = tasks::generate(rc.task, rc.n_train, rc.length, rc.policy);
  tasks::TaskSpec test_spec = rc.task;
  test_spec.seed = rc.task.seed + 1000003;
  d.test = tasks::generate(test_spec, rc.n_test, rc.length, rc.policy);
  return d;
}

// Model config with sensors and action size filled in from the data.
model::VrknConfig model_config(const RunConfig& rc, const std::vector<Trajectory>& data) {
  json m = rc.model;
  const model::VrknConfig derived = model::config_for(data);
  const json dj = model::to_json(derived);
  if (!m.contains("sensors")) m["sensors"] = dj.at("sensors");
  if (!m.contains("action_dim")) m["action_dim"] = dj.at("action_dim");
  return model::config_from_json(m);
}

fs::path seed_dir(const Options& opt, std::uint64_t seed) { return fs::path(opt.out) / ("seed_" + std::to_string(seed)); }

// Keeps the header and rows up to `last_step` of an existing loss log.
std::string truncate_log(const fs::path& path, long last_step) {
  std::ifstream in(path);
  std::string line, out;
  for (bool header = true; std::getline(in, line); header = false) {
    if (header || std::stol(line.substr(0, line.find(','))) <= last_step) out += line + "\n";
  }
  return out;
}

int cmd_train(const Options& opt) {
  const json raw = read_config(opt.config_path);
  const RunConfig rc = run_config(raw, opt);
  const std::string hash = config_hash(raw, opt.smoke);
  const Data data = make_data(rc);
  const model::VrknConfig mc = model_config(rc, data.train.seqs);
  for (std::uint64_t seed : seeds_from(raw, opt, {0})) {
    const fs::path dir = seed_dir(opt, seed);
    fs::create_directories(dir);
    model::Vrkn m(mc, seed);
    model::TrainOptions to = rc.train;
    to.seed = seed;
    model::Trainer trainer(m, to);
    const fs::path ckpt = dir / "checkpoint.json";
    const std::string key = resume_key(raw, opt.smoke);
    const json meta{{"config_hash", hash}, {"resume_key", key}, {"seed", seed}, {"config", raw}};
    std::string log = "step,loss,recon,kl,elbo,grad_norm\n";
    if (opt.resume && fs::exists(ckpt)) {
      const json got = trainer.load(ckpt.string());
      if (got.value("resume_key", "") != key) throw ConfigError("resume: checkpoint was written by a different config");
      log = truncate_log(dir / "loss.csv", trainer.steps());
      std::cerr << "seed " << seed << ": resumed at step " << trainer.steps() << "\n";
    }
    std::ofstream csv(dir / "loss.csv");
    csv << log << std::flush;
    while (trainer.steps() < rc.steps) {
      const model::LossBreakdown lb = trainer.step(data.train.seqs);
      const long s = trainer.steps();
      if (s % rc.log_every == 0 || s == rc.steps) {
        csv << s << "," << lb.loss << "," << lb.recon << "," << lb.kl << "," << lb.elbo << "," << lb.grad_norm << "\n"
            << std::flush;
        std::cerr << "seed " << seed << " step " << s << " loss " << lb.loss << "\n";
      }
      if (s % rc.checkpoint_every == 0 || s == rc.steps) trainer.save(ckpt.string(), meta);
    }
    if (rc.steps == 0) trainer.save(ckpt.string(), meta);
    json summary{{"config_hash", hash}, {"seed", seed}, {"steps", trainer.steps()}, {"model", model::to_json(mc)},
                 {"task", tasks::to_json(rc.task)}};
    write_text(dir / "train_summary.json", summary.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_eval(const Options& opt) {
  const json raw = read_config(opt.config_path);
  const RunConfig rc = run_config(raw, opt);
  const std::string hash = config_hash(raw, opt.smoke);
  const Data data = make_data(rc);
  const model::VrknConfig mc = model_config(rc, data.train.seqs);
  for (std::uint64_t seed : seeds_from(raw, opt, {0})) {
    const fs::path dir = seed_dir(opt, seed);
    const fs::path ckpt = dir / "checkpoint.json";
    if (!fs::exists(ckpt)) throw ConfigError("eval: no checkpoint at '" + ckpt.string() + "'; run train first");
    model::Vrkn m(mc, seed);
    const json meta = ad::load_checkpoint(ckpt.string(), m.params());
    if (meta.value("resume_key", "") != resume_key(raw, opt.smoke))
      throw ConfigError("eval: checkpoint was written by a different config");
    json out{{"config_hash", hash}, {"seed", seed}, {"checkpoint_config_hash", meta.value("config_hash", "")}};
    for (auto [name, kind] : {std::pair{"smoothed", eval::BeliefKind::Smoothed},
                              std::pair{"filtered", eval::BeliefKind::Filtered},
                              std::pair{"open_loop", eval::BeliefKind::OpenLoop}})
      out["belief_quality"][name] = eval::to_json(eval::probe_quality(m, data.train.seqs, data.test.seqs, kind));
    std::vector<const Trajectory*> test;
    for (const Trajectory& t : data.test.seqs) test.push_back(&t);
    Rng rng = Rng(seed).split("eval-epistemic");
    out["epistemic_variance"] = m.epistemic_variance(test, rc.passes, rng);
    out["mc_passes"] = rc.passes;
    out["mean_dyn_sd"] = m.mean_dyn_sd(test);
    if (rc.task.system == tasks::System::LinearTracking)
      out["exact_reference"] = eval::to_json(eval::exact_quality(data.test));
    write_text(dir / "eval.json", out.dump(2) + "\n");
    std::cout << "seed " << seed << ": " << out["belief_quality"].dump() << "\n";
  }
  return kExitOk;
}

int cmd_verify(const Options& opt) {
  const json raw = read_config(opt.config_path);
  check_keys(raw, {}, "verify");
  const auto results = opt.smoke ? std::vector<oracle::SuiteResult>{oracle::oracle_equivalence(20),
                                                                    oracle::bound_tightness(10),
                                                                    oracle::gradient_integrity(2),
                                                                    oracle::extended_rts_consistency(10),
                                                                    oracle::fusion_contracts(5)}
                                 : oracle::quick_suites();
  bool all = true;
  json out = json::array();
  std::printf("%-28s %-6s %8s  %s\n", "suite", "result", "seconds", "detail");
  for (const auto& r : results) {
    std::printf("%-28s %-6s %8.1f  %s\n", r.name.c_str(), r.passed ? "pass" : "FAIL", r.seconds, r.detail.c_str());
    all = all && r.passed;
    out.push_back({{"suite", r.name}, {"passed", r.passed}, {"seconds", r.seconds}, {"detail", r.detail},
                   {"metrics", r.metrics}});
  }
  write_text(fs::path(opt.out) / "verify.json",
             json{{"config_hash", config_hash(raw, opt.smoke)}, {"suites", out}, {"passed", all}}.dump(2) + "\n");
  return all ? kExitOk : kExitAssertion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational latent Kalman models: toy replication, training, evaluation and verification"};
  app.require_subcommand(1);
  Options opt;
  std::string seeds;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config; defaults apply to omitted keys");
    sub->add_option("--seeds", seeds, "Comma-separated seeds, overriding the config");
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_flag("--smoke", opt.smoke, "Tiny budget for a quick end-to-end check");
  };
  CLI::App* toy_cmd = app.add_subcommand("toy", "Toy LGSSM replication over seeds");
  CLI::App* train_cmd = app.add_subcommand("train", "Train VRKN on a synthetic task");
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a trained VRKN checkpoint");
  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the property suites");
  for (CLI::App* sub : {toy_cmd, train_cmd, eval_cmd, verify_cmd}) add_common(sub);
  train_cmd->add_flag("--resume", opt.resume, "Continue from the checkpoint in the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    configure_threads_from_env();
    if (!seeds.empty()) {
      std::stringstream ss(seeds);
      for (std::string item; std::getline(ss, item, ',');) {
        try {
          std::size_t used = 0;
          opt.seeds.push_back(std::stoull(item, &used));
          if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
          throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
        }
      }
    }
    if (toy_cmd->parsed()) return cmd_toy(opt);
    if (train_cmd->parsed()) return cmd_train(opt);
    if (eval_cmd->parsed()) return cmd_eval(opt);
    return cmd_verify(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NotPositiveDefinite& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}
