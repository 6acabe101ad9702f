#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "vrkn/ad/adam.hpp"
#include "vrkn/stats.hpp"
#include "vrkn/toy.hpp"

namespace vrkn::toy {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double softplus_inv(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Mat flatten_row_major(const Mat& a) {
  RowMajor r = a;
  return Eigen::Map<const Mat>(r.data(), r.size(), 1);
}

Mat unflatten_row_major(const Mat& flat, Eigen::Index n) { return Eigen::Map<const RowMajor>(flat.data(), n, n); }

std::vector<const Trajectory*> pointers(const std::vector<Trajectory>& seqs, std::size_t begin, std::size_t end) {
  std::vector<const Trajectory*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&seqs[i]);
  return out;
}

long total_steps(const std::vector<Trajectory>& seqs) {
  long n = 0;
  for (const auto& s : seqs) n += s.length();
  return n;
}

// True when the mean held-out bound of the last `window` epochs exceeds the
// mean of the `window` epochs before by less than `tol` per epoch. Window
// means average out the epoch-to-epoch jitter of stochastic training.
bool stalled(const std::vector<double>& history, int window, double tol) {
  const auto w = static_cast<std::ptrdiff_t>(std::max(window, 0));
  if (w == 0 || static_cast<std::ptrdiff_t>(history.size()) < 2 * w) return false;
  const auto end = history.end();
  const double last = std::accumulate(end - w, end, 0.0) / static_cast<double>(w);
  const double prev = std::accumulate(end - 2 * w, end - w, 0.0) / static_cast<double>(w);
  return (last - prev) / static_cast<double>(w) < tol;
}

// Everything the learner needs across epochs.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::uint64_t seed, Exec exec) : cfg_(cfg), exec_(exec), root_(Rng(seed).split("toy-train")) {
    Rng init = root_.split("init-dynamics");
    const LgssmParams gt = toy_ground_truth();
    Mat A = cfg.learn_dynamics ? Mat(std::sqrt(cfg.init_a_var) * init.normal_mat(4, 4)) : gt.trans_mat;
    const double sigma = cfg.learn_dynamics ? cfg.init_sigma : gt.trans_var[0];
    if (!(sigma > 0.0)) throw ConfigError("toy: init_sigma must be positive");
    a_ = &store_.add("dynamics.A", flatten_row_major(A));
    raw_ = &store_.add("dynamics.sigma_raw", Mat::Constant(1, 1, softplus_inv(sigma)));
    if (cfg.learner != Learner::SsmCf) {
      Rng net_rng = root_.split("inference-init");
      inference_.emplace(cfg.learner, cfg.hidden, store_, net_rng);
    }
    for (ad::Param* p : store_.all())
      if (cfg.learn_dynamics || p->name.rfind("dynamics.", 0) != 0) trainable_.push_back(p);
    ad::AdamConfig ac;
    ac.lr = cfg.lr;
    ac.clip_norm = cfg.clip_norm;
    adam_ = ad::Adam(ac);
  }

  Dynamics dynamics() const { return {unflatten_row_major(a_->value, 4), softplus(raw_->value(0, 0))}; }

  /// One optimizer step on the batch; returns the loss (negative bound per step).
  double step(const std::vector<const Trajectory*>& batch) {
    store_.zero_grad();
    double loss = 0.0;
    const double norm = static_cast<double>(batch.size()) * batch.front()->length();
    if (!inference_) {
      const Dynamics dyn = dynamics();
      const CfGradient g = ssm_cf_gradient(dyn, batch, exec_);
      a_->grad = -flatten_row_major(g.d_A) / norm;
      raw_->grad(0, 0) = -g.d_sigma * sigmoid(raw_->value(0, 0)) / norm;
      loss = -g.elbo / norm;
    } else {
      ad::Tape tape;
      const auto fwd = inference_->forward(tape, tape.param(*a_), ad::softplus(tape.param(*raw_)), batch, false);
      loss = fwd.neg_elbo.scalar();
      if (std::isfinite(loss)) tape.backward(fwd.neg_elbo);
    }
    if (!std::isfinite(loss)) throw NumericalError("non-finite loss");
    adam_.step(trainable_);
    return loss;
  }

  /// Bound per step and beliefs on a set of sequences, without gradients.
  double evaluate(const std::vector<Trajectory>& seqs, std::vector<std::vector<GaussianDense>>* beliefs) {
    if (beliefs) beliefs->clear();
    double elbo = 0.0;
    if (!inference_) {
      const BatchInference inf = infer_batch(dynamics().model(), seqs, exec_);
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        elbo += inf.loglik[i];
        if (beliefs) beliefs->push_back(inf.smoothed[i].smoothed);
      }
    } else {
      constexpr std::size_t kChunk = 100;
      for (std::size_t b = 0; b < seqs.size(); b += kChunk) {
        ad::Tape tape;
        const auto fwd = inference_->forward(tape, tape.constant(a_->value), tape.constant(Mat::Constant(1, 1, dynamics().sigma)),
                                             pointers(seqs, b, std::min(seqs.size(), b + kChunk)), beliefs != nullptr);
        elbo += fwd.elbo_sum.scalar();
        if (beliefs) beliefs->insert(beliefs->end(), fwd.marginals.begin(), fwd.marginals.end());
      }
    }
    return elbo / static_cast<double>(total_steps(seqs));
  }

  const Rng& root() const { return root_; }
  long steps() const { return adam_.steps(); }

 private:
  TrainConfig cfg_;
  Exec exec_;
  Rng root_;
  ad::ParamStore store_;
  ad::Param* a_ = nullptr;
  ad::Param* raw_ = nullptr;
  std::optional<NnInference> inference_;
  std::vector<ad::Param*> trainable_;
  ad::Adam adam_;
};

}  // namespace

TrainResult train_toy(const TrainConfig& cfg, const ToyDataset& data, std::uint64_t seed, Exec exec) {
  if (cfg.batch_size <= 0 || cfg.max_epochs <= 0) throw ConfigError("toy: batch_size and max_epochs must be positive");
  if (data.train.empty() || data.test.empty()) throw ConfigError("toy: dataset needs training and held-out sequences");
  Trainer trainer(cfg, seed, exec);
  TrainResult res;
  std::vector<std::size_t> order(data.train.size());
  bool budget_left = true;
  for (int epoch = 0; epoch < cfg.max_epochs && budget_left; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = trainer.root().split("shuffle").split(static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const Trajectory*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size)); ++i)
        batch.push_back(&data.train[order[i]]);
      try {
        trainer.step(batch);
      } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << "toy " << to_string(cfg.learner) << " diverged at epoch " << epoch << ", step " << trainer.steps()
            << " (seed " << seed << ", sigma " << trainer.dynamics().sigma << "): " << e.what();
        throw NumericalError(msg.str());
      }
      if (cfg.max_steps > 0 && trainer.steps() >= cfg.max_steps) {
        budget_left = false;
        break;
      }
    }
    res.heldout_elbo.push_back(trainer.evaluate(data.test, nullptr));
    res.metrics.epochs = epoch + 1;
    if (stalled(res.heldout_elbo, cfg.early_stop_window, cfg.early_stop_tol)) break;
  }
  std::vector<std::vector<GaussianDense>> beliefs;
  res.metrics.elbo_final = trainer.evaluate(data.test, &beliefs);
  res.metrics.gt_state_logprob = state_logprob(data.test, beliefs);
  trainer.evaluate(data.train, &beliefs);
  res.metrics.gt_state_logprob_train = state_logprob(data.train, beliefs);
  res.learned = trainer.dynamics();
  res.metrics.frob_dist = (res.learned.A - toy_ground_truth().trans_mat).norm();
  res.metrics.sigma_tilde = res.learned.sigma;
  res.metrics.steps = trainer.steps();
  return res;
}

SweepResult run_sweep(const SweepConfig& cfg, Exec exec) {
  if (cfg.seeds.empty() || cfg.learners.empty()) throw ConfigError("toy sweep: need at least one seed and learner");
  std::vector<ToyDataset> data(cfg.seeds.size());
  SweepResult res;
  res.baselines.resize(cfg.seeds.size());
  for_each_index(cfg.seeds.size(), exec, [&](std::size_t i) {
    data[i] = generate_toy_data(cfg.seeds[i], cfg.data, Exec::Serial);
    res.baselines[i] = {cfg.seeds[i], gt_baselines(data[i].test, Exec::Serial)};
  });
  const std::size_t n_runs = cfg.seeds.size() * cfg.learners.size();
  res.rows.resize(n_runs);
  // Runs are independent; inner kernels stay serial so results do not depend on the policy.
  for_each_index(n_runs, exec, [&](std::size_t r) {
    const std::size_t si = r / cfg.learners.size();
    TrainConfig tc = cfg.train;
    tc.learner = cfg.learners[r % cfg.learners.size()];
    res.rows[r] = {tc.learner, cfg.seeds[si], train_toy(tc, data[si], cfg.seeds[si], Exec::Serial).metrics};
  });
  return res;
}

std::string to_csv(const SweepResult& res) {
  std::ostringstream out;
  out << "learner,seed,gt_state_logprob,frob_dist,sigma_tilde,elbo_final,gt_state_logprob_train,epochs,steps\n";
  out << std::setprecision(10);
  for (const SweepRow& r : res.rows) {
    const ToyMetrics& m = r.metrics;
    out << to_string(r.learner) << ',' << r.seed << ',' << m.gt_state_logprob << ',' << m.frob_dist << ','
        << m.sigma_tilde << ',' << m.elbo_final << ',' << m.gt_state_logprob_train << ',' << m.epochs << ','
        << m.steps << '\n';
  }
  return out.str();
}

nlohmann::json summarize(const SweepResult& res, int resamples, std::uint64_t seed) {
  using nlohmann::json;
  Rng rng = Rng(seed).split("bootstrap");
  auto interval = [&](const std::vector<double>& xs) {
    const Interval ci = bootstrap_mean_ci(xs, resamples, rng);
    return json{{"mean", ci.mean}, {"ci95", {ci.lo, ci.hi}}, {"values", xs}};
  };
  json out;
  out["resamples"] = resamples;
  out["learners"] = json::object();
  for (Learner l : {Learner::SsmCf, Learner::SsmNn, Learner::RssmNn}) {
    std::vector<double> lp, lpt, fd, sg, el;
    for (const SweepRow& r : res.rows) {
      if (r.learner != l) continue;
      lp.push_back(r.metrics.gt_state_logprob);
      lpt.push_back(r.metrics.gt_state_logprob_train);
      fd.push_back(r.metrics.frob_dist);
      sg.push_back(r.metrics.sigma_tilde);
      el.push_back(r.metrics.elbo_final);
    }
    if (lp.empty()) continue;
    out["learners"][std::string(to_string(l))] = {{"gt_state_logprob", interval(lp)},
                                                  {"gt_state_logprob_train", interval(lpt)},
                                                  {"frob_dist", interval(fd)},
                                                  {"sigma_tilde", interval(sg)},
                                                  {"elbo_final", interval(el)},
                                                  {"n_seeds", lp.size()}};
  }
  std::vector<double> post, sm;
  for (const auto& [s, b] : res.baselines) {
    post.push_back(b.posterior_logprob);
    sm.push_back(b.smoothed_logprob);
  }
  out["baselines"] = {{"gt_posterior_logprob", interval(post)}, {"gt_smoothed_logprob", interval(sm)}};
  return out;
}

}  // namespace vrkn::toy
