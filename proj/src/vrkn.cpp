#include "vrkn/vrkn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vrkn/ad/checkpoint.hpp"
#include "vrkn/config_json.hpp"

namespace vrkn::model {

using ad::Tape;
using ad::Var;
using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
const ad::BoundedSigmoid kTransitionGain(0.1, 0.99, 0.9);
const ad::BoundedSigmoid kTransitionSd(0.001, 0.1, 0.01);
constexpr double kHeadInitScale = 0.01;

// Per-step smoothed quantities; cond_* describe q(z_{t+1} | z_t) and have T - 1 entries.
struct Smoothed {
  std::vector<Var> mean, var;
  std::vector<Var> cond_gain, cond_offset, cond_var;
};

Mat column_flags(const std::vector<const Trajectory*>& batch, std::size_t sensor, int t, std::vector<std::uint8_t>& valid) {
  const auto B = static_cast<Eigen::Index>(batch.size());
  Mat obs(batch.front()->sensors[sensor].dim(), B);
  valid.resize(batch.size());
  for (Eigen::Index b = 0; b < B; ++b) {
    const SensorSeries& s = batch[static_cast<std::size_t>(b)]->sensors[sensor];
    valid[static_cast<std::size_t>(b)] = s.valid[static_cast<std::size_t>(t)];
    // Missing observations may hold garbage; they must not reach any graph.
    if (valid[static_cast<std::size_t>(b)]) {
      obs.col(b) = s.obs.col(t);
    } else {
      obs.col(b).setZero();
    }
  }
  return obs;
}

Mat action_block(const std::vector<const Trajectory*>& batch, Eigen::Index du, int t) {
  Mat a(du, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) a.col(static_cast<Eigen::Index>(b)) = batch[b]->actions.col(t);
  return a;
}

GaussianDiag column(const Var& m, const Var& v, Eigen::Index b) { return {m.value().col(b), v.value().col(b)}; }

}  // namespace

void VrknConfig::validate() const {
  if (latent_dim <= 0 || hidden_width <= 0) throw ConfigError("vrkn: latent_dim and hidden_width must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("vrkn: dropout_rate must lie in [0, 1)");
  if (!(free_nats >= 0.0)) throw ConfigError("vrkn: free_nats must be >= 0");
  if (action_dim < 0) throw ConfigError("vrkn: action_dim must be >= 0");
  if (sensors.empty()) throw ConfigError("vrkn: at least one sensor required");
  std::set<std::string> names;
  bool any_encoded = false;
  for (const SensorConfig& s : sensors) {
    if (s.name.empty() || !names.insert(s.name).second) throw ConfigError("vrkn: sensor names must be unique and non-empty");
    if (s.obs_dim <= 0) throw ConfigError("vrkn: sensor '" + s.name + "' needs obs_dim > 0");
    if (!(s.loss_scale > 0.0)) throw ConfigError("vrkn: sensor '" + s.name + "' needs loss_scale > 0");
    any_encoded = any_encoded || s.encode;
  }
  if (!any_encoded) throw ConfigError("vrkn: at least one sensor must be encoded");
}

json to_json(const VrknConfig& cfg) {
  json sensors = json::array();
  for (const SensorConfig& s : cfg.sensors)
    sensors.push_back({{"name", s.name}, {"obs_dim", s.obs_dim}, {"loss_scale", s.loss_scale}, {"encode", s.encode}});
  return {{"latent_dim", cfg.latent_dim},     {"hidden_width", cfg.hidden_width}, {"dropout_rate", cfg.dropout_rate},
          {"free_nats", cfg.free_nats},       {"sensors", sensors},               {"action_dim", cfg.action_dim},
          {"concat_flags", cfg.concat_flags}};
}

VrknConfig config_from_json(const json& j) {
  check_keys(j, {"latent_dim", "hidden_width", "dropout_rate", "free_nats", "sensors", "action_dim", "concat_flags"},
             "model");
  VrknConfig c;
  c.latent_dim = get_or(j, "latent_dim", c.latent_dim, "model");
  c.hidden_width = get_or(j, "hidden_width", c.hidden_width, "model");
  c.dropout_rate = get_or(j, "dropout_rate", c.dropout_rate, "model");
  c.free_nats = get_or(j, "free_nats", c.free_nats, "model");
  c.action_dim = get_or(j, "action_dim", c.action_dim, "model");
  c.concat_flags = get_or(j, "concat_flags", c.concat_flags, "model");
  if (j.contains("sensors")) {
    if (!j.at("sensors").is_array()) throw ConfigError("model.sensors: expected an array");
    for (const json& s : j.at("sensors")) {
      check_keys(s, {"name", "obs_dim", "loss_scale", "encode"}, "model.sensors[]");
      c.sensors.push_back({get_or<std::string>(s, "name", "", "model.sensors[]"),
                           get_or<Eigen::Index>(s, "obs_dim", 0, "model.sensors[]"),
                           get_or(s, "loss_scale", 1.0, "model.sensors[]"), get_or(s, "encode", true, "model.sensors[]")});
    }
  }
  c.validate();
  return c;
}

Vrkn::Vrkn(VrknConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng = Rng(seed).split("vrkn-init");
  const Eigen::Index L = cfg_.latent_dim, W = cfg_.hidden_width;
  for (const SensorConfig& s : cfg_.sensors) {
    SensorNets n;
    const std::string p = "sensor." + s.name;
    if (s.encode) {
      const Eigen::Index in = s.obs_dim + (cfg_.concat_flags ? 1 : 0);
      n.trunk = ad::Mlp(store_, p + ".encoder", {in, W, W}, ad::Activation::Relu, ad::Activation::Relu, rng);
      n.mean = ad::Linear(store_, p + ".encoder.mean", W, L, rng);
      n.var = ad::Linear(store_, p + ".encoder.var", W, L, rng);
    }
    n.decoder = ad::Mlp(store_, p + ".decoder", {L, W, W, s.obs_dim}, ad::Activation::Relu, ad::Activation::Identity, rng);
    sensors_.push_back(std::move(n));
  }
  phi_in_ = ad::Linear(store_, "phi.in", L + cfg_.action_dim, W, rng);
  phi_gru_ = ad::GruCell(store_, "phi.gru", W, L, rng);
  phi_hidden_ = ad::Linear(store_, "phi.hidden", L, W, rng);
  phi_a_ = ad::Linear(store_, "phi.a", W, L, rng);
  phi_b_ = ad::Linear(store_, "phi.b", W, L, rng);
  phi_sd_ = ad::Linear(store_, "phi.sd", W, L, rng);
  // Heads start near their midpoints: a = 0.9, b = 0, sd = 0.01. Spread-out
  // gains would let the smoother amplify innovations by up to 1 / a per step.
  for (ad::Linear* head : {&phi_a_, &phi_b_, &phi_sd_}) head->weight().value *= kHeadInitScale;
}

Vrkn::Encoded Vrkn::encode(Tape& tape, std::size_t sensor, const Mat& obs, const std::vector<std::uint8_t>& valid) const {
  const SensorNets& n = sensors_.at(sensor);
  if (!cfg_.sensors[sensor].encode) throw ConfigError("vrkn: sensor '" + cfg_.sensors[sensor].name + "' is decoder-only");
  require_dims(obs.rows(), cfg_.sensors[sensor].obs_dim, "vrkn encoder input");
  Mat in = obs;
  if (cfg_.concat_flags) {
    in.conservativeResize(obs.rows() + 1, Eigen::NoChange);
    for (Eigen::Index b = 0; b < obs.cols(); ++b) in(obs.rows(), b) = valid[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
  }
  const Var h = n.trunk(tape, tape.constant(std::move(in)));
  return {n.mean(tape, h), ad::add_scalar(ad::softplus(n.var(tape, h)), kVarFloor)};
}

Vrkn::Step Vrkn::phi(Tape& tape, Var mean, const Mat& actions, Rng* rng, bool dropout_on) const {
  if (dropout_on && !rng) throw ConfigError("vrkn: dropout needs a random stream");
  const double rate = cfg_.dropout_rate;
  auto drop = [&](Var x) { return dropout_on ? ad::dropout(x, rate, *rng, true) : x; };
  const Var x = cfg_.action_dim > 0 ? ad::concat_rows({mean, tape.constant(actions)}) : mean;
  const Var h1 = drop(ad::relu(phi_in_(tape, x)));
  // The gated cell carries the posterior mean as its memory.
  const Var g = drop(phi_gru_(tape, h1, mean));
  const Var h2 = drop(ad::relu(phi_hidden_(tape, g)));
  const Var sd = kTransitionSd(phi_sd_(tape, h2));
  return {kTransitionGain(phi_a_(tape, h2)), phi_b_(tape, h2), ad::square(sd)};
}

Var Vrkn::decode(Tape& tape, std::size_t sensor, Var z) const { return sensors_.at(sensor).decoder(tape, z); }

EncoderOutput Vrkn::encode(std::size_t sensor, const Vec& obs, bool valid) const {
  if (!obs.allFinite()) throw NumericalError("vrkn: non-finite encoder input for sensor " + cfg_.sensors.at(sensor).name);
  Tape tape;
  const Encoded e = encode(tape, sensor, obs, {static_cast<std::uint8_t>(valid)});
  return {e.w.value().col(0), e.var_w.value().col(0)};
}

LocalStep Vrkn::dynamics_phi(const Vec& posterior_mean, const Vec& action, Rng& rng, bool dropout_on) const {
  require_dims(posterior_mean.size(), cfg_.latent_dim, "vrkn phi mean");
  require_dims(action.size(), cfg_.action_dim, "vrkn phi action");
  Tape tape;
  const Step s = phi(tape, tape.constant(posterior_mean), action, &rng, dropout_on);
  return {s.a.value().col(0), s.b.value().col(0), s.var_dyn.value().col(0)};
}

void Vrkn::check_batch(const std::vector<const Trajectory*>& batch) const {
  if (batch.empty()) throw DimensionError("vrkn: empty batch");
  const int T = batch.front()->length();
  for (const Trajectory* tr : batch) {
    if (tr->length() != T) throw DimensionError("vrkn: sequences in a batch must share a length");
    if (tr->sensors.size() != cfg_.sensors.size()) throw DimensionError("vrkn: trajectory sensors do not match the model");
    for (std::size_t k = 0; k < cfg_.sensors.size(); ++k) {
      if (tr->sensors[k].name != cfg_.sensors[k].name)
        throw DimensionError("vrkn: expected sensor '" + cfg_.sensors[k].name + "', got '" + tr->sensors[k].name + "'");
      require_dims(tr->sensors[k].dim(), cfg_.sensors[k].obs_dim, "vrkn sensor dimension");
    }
    require_dims(tr->action_dim(), cfg_.action_dim, "vrkn action dimension");
    validate(*tr);
  }
}

struct Vrkn::Pass {
  std::vector<Var> prior_m, prior_v, post_m, post_v;
  std::vector<Step> steps;  // steps[t] maps z_t to z_{t+1}
};

Vrkn::Pass Vrkn::run_filter(Tape& tape, const std::vector<const Trajectory*>& batch, bool updates, Rng* rng,
                            bool dropout_on) const {
  check_batch(batch);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const int T = batch.front()->length();
  const Eigen::Index L = cfg_.latent_dim;
  Pass p;
  Var m = tape.constant(Mat::Zero(L, B));
  Var v = tape.constant(Mat::Ones(L, B));
  std::vector<std::uint8_t> valid;
  for (int t = 0; t < T; ++t) {
    p.prior_m.push_back(m);
    p.prior_v.push_back(v);
    for (std::size_t k = 0; updates && k < cfg_.sensors.size(); ++k) {
      if (!cfg_.sensors[k].encode) continue;
      const Mat obs = column_flags(batch, k, t, valid);
      if (cfg_.concat_flags) {
        const Encoded e = encode(tape, k, obs, valid);
        const Var denom = ad::add(v, e.var_w);
        m = ad::add(m, ad::mul(ad::div(v, denom), ad::sub(e.w, m)));
        v = ad::div(ad::mul(v, e.var_w), denom);
        continue;
      }
      if (std::none_of(valid.begin(), valid.end(), [](std::uint8_t f) { return f != 0; })) continue;
      const Encoded e = encode(tape, k, obs, valid);
      const Var denom = ad::add(v, e.var_w);
      const Var m_up = ad::add(m, ad::mul(ad::div(v, denom), ad::sub(e.w, m)));
      const Var v_up = ad::div(ad::mul(v, e.var_w), denom);
      const bool all = std::all_of(valid.begin(), valid.end(), [](std::uint8_t f) { return f != 0; });
      m = all ? m_up : ad::select_cols(valid, m_up, m);
      v = all ? v_up : ad::select_cols(valid, v_up, v);
    }
    p.post_m.push_back(m);
    p.post_v.push_back(v);
    if (t + 1 < T) {
      const Step s = phi(tape, m, action_block(batch, cfg_.action_dim, t), rng, dropout_on);
      p.steps.push_back(s);
      m = ad::add(ad::mul(s.a, m), s.b);
      v = ad::add(ad::mul(ad::square(s.a), v), s.var_dyn);
    }
  }
  return p;
}

namespace {

// Diagonal RTS pass in a form whose variances are sums and products of
// positive terms: with the backward conditional variance
// P_b = P+_t var_dyn / P-_{t+1}, the smoothed variance is P_b + C^2 P^s_{t+1}
// and q(z_{t+1} | z_t) has variance P^s_{t+1} P_b / P^s_t.
template <class PassT>
Smoothed smooth_pass(const PassT& p) {
  const std::size_t T = p.post_m.size();
  Smoothed s;
  s.mean.resize(T);
  s.var.resize(T);
  s.cond_gain.resize(T - 1);
  s.cond_offset.resize(T - 1);
  s.cond_var.resize(T - 1);
  s.mean[T - 1] = p.post_m[T - 1];
  s.var[T - 1] = p.post_v[T - 1];
  for (std::size_t t = T - 1; t-- > 0;) {
    const Var inv_prior = ad::div(p.post_v[t], p.prior_v[t + 1]);
    const Var C = ad::mul(inv_prior, p.steps[t].a);
    const Var Pb = ad::mul(inv_prior, p.steps[t].var_dyn);
    s.mean[t] = ad::add(p.post_m[t], ad::mul(C, ad::sub(s.mean[t + 1], p.prior_m[t + 1])));
    s.var[t] = ad::add(Pb, ad::mul(ad::square(C), s.var[t + 1]));
    const Var ratio = ad::div(s.var[t + 1], s.var[t]);
    s.cond_gain[t] = ad::mul(C, ratio);
    s.cond_offset[t] = ad::sub(s.mean[t + 1], ad::mul(s.cond_gain[t], s.mean[t]));
    s.cond_var[t] = ad::mul(Pb, ratio);
  }
  return s;
}

// Sum over rows of KL[N(mq, vq) || N(mp, vp)].
Var diag_kl(Var mq, Var vq, Var mp, Var vp) {
  const Var mass = ad::div(ad::add(vq, ad::square(ad::sub(mq, mp))), vp);
  const Var logs = ad::sub(ad::log(vp), ad::log(vq));
  return ad::scale(ad::sum_rows(ad::add_scalar(ad::add(mass, logs), -1.0)), 0.5);
}

}  // namespace

Var Vrkn::loss(Tape& tape, const std::vector<const Trajectory*>& batch, Rng& rng, LossBreakdown* out) const {
  return loss_terms(tape, batch, rng, out).loss;
}

Vrkn::LossTerms Vrkn::loss_terms(Tape& tape, const std::vector<const Trajectory*>& batch, Rng& rng,
                                 LossBreakdown* out) const {
  const Pass p = run_filter(tape, batch, true, &rng, true);
  const Smoothed s = smooth_pass(p);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const int T = batch.front()->length();
  const Eigen::Index L = cfg_.latent_dim;

  Var z = ad::reparam_sample(s.mean[0], ad::sqrt(s.var[0]), rng.normal_mat(L, B));
  Var kl_floor = ad::clamp_min(diag_kl(s.mean[0], s.var[0], tape.constant(Mat::Zero(L, B)), tape.constant(Mat::Ones(L, B))),
                               cfg_.free_nats);
  Var kl_sum = diag_kl(s.mean[0], s.var[0], tape.constant(Mat::Zero(L, B)), tape.constant(Mat::Ones(L, B)));
  Var recon = tape.constant(Mat::Zero(1, B));
  std::vector<std::uint8_t> valid;
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      const auto u = static_cast<std::size_t>(t - 1);
      const Var mq = ad::add(ad::mul(s.cond_gain[u], z), s.cond_offset[u]);
      const Var mp = ad::add(ad::mul(p.steps[u].a, z), p.steps[u].b);
      const Var kl = diag_kl(mq, s.cond_var[u], mp, p.steps[u].var_dyn);
      kl_sum = ad::add(kl_sum, kl);
      kl_floor = ad::add(kl_floor, ad::clamp_min(kl, cfg_.free_nats));
      z = ad::reparam_sample(mq, ad::sqrt(s.cond_var[u]), rng.normal_mat(L, B));
    }
    for (std::size_t k = 0; k < cfg_.sensors.size(); ++k) {
      const Mat obs = column_flags(batch, k, t, valid);
      Mat mask(obs.rows(), B);
      for (Eigen::Index b = 0; b < B; ++b) {
        const SensorSeries& ss = batch[static_cast<std::size_t>(b)]->sensors[k];
        mask.col(b).setConstant(valid[static_cast<std::size_t>(b)] ? 1.0 : 0.0);
        if (ss.has_mask()) mask.col(b) = mask.col(b).cwiseProduct(ss.mask.col(t));
      }
      if (mask.sum() == 0.0) continue;
      // Unit-variance Gaussian decoder: -(err^2 + log 2 pi) / 2 per observed dimension.
      const Var err = ad::mul_const(ad::square(ad::sub(tape.constant(obs), decode(tape, k, z))), mask);
      const Var ll = ad::add(ad::sum_rows(err), tape.constant(kLog2Pi * mask.colwise().sum()));
      recon = ad::add(recon, ad::scale(ll, -0.5 * cfg_.sensors[k].loss_scale));
    }
  }
  const double norm = 1.0 / static_cast<double>(B * T);
  const Var loss = ad::scale(ad::sum(ad::sub(recon, kl_floor)), -norm);
  LossBreakdown lb;
  lb.recon = recon.value().sum() * norm;
  lb.kl = kl_sum.value().sum() * norm;
  lb.elbo = lb.recon - lb.kl;
  lb.loss = loss.scalar();
  if (!std::isfinite(lb.loss))
    throw NumericalError("vrkn: non-finite loss (recon " + std::to_string(lb.recon) + ", kl " + std::to_string(lb.kl) + ")");
  if (out) *out = lb;
  return {loss, recon, kl_sum};
}

std::vector<GaussianDiag> Vrkn::filter_online(const Trajectory& traj, DropoutMode mode, Rng* rng) const {
  Tape tape;
  const Pass p = run_filter(tape, {&traj}, true, rng, mode == DropoutMode::Sampled);
  std::vector<GaussianDiag> out;
  for (std::size_t t = 0; t < p.post_m.size(); ++t) out.push_back(column(p.post_m[t], p.post_v[t], 0));
  return out;
}

std::vector<Beliefs> Vrkn::infer(const std::vector<const Trajectory*>& batch, bool smooth) const {
  Tape tape;
  const Pass p = run_filter(tape, batch, true, nullptr, false);
  std::vector<Beliefs> out(batch.size());
  const Smoothed s = smooth ? smooth_pass(p) : Smoothed{};
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto j = static_cast<Eigen::Index>(b);
    for (std::size_t t = 0; t < p.post_m.size(); ++t) {
      out[b].priors.push_back(column(p.prior_m[t], p.prior_v[t], j));
      out[b].posteriors.push_back(column(p.post_m[t], p.post_v[t], j));
      if (smooth) out[b].smoothed.push_back(column(s.mean[t], s.var[t], j));
    }
  }
  return out;
}

std::vector<GaussianDiag> Vrkn::open_loop(const Trajectory& traj) const {
  Tape tape;
  const Pass p = run_filter(tape, {&traj}, false, nullptr, false);
  std::vector<GaussianDiag> out;
  for (std::size_t t = 0; t < p.post_m.size(); ++t) out.push_back(column(p.post_m[t], p.post_v[t], 0));
  return out;
}

double Vrkn::epistemic_variance(const std::vector<const Trajectory*>& batch, int passes, Rng& rng) const {
  if (passes < 2) throw ConfigError("vrkn: epistemic variance needs at least two passes");
  Tape base;
  const Pass p = run_filter(base, batch, true, nullptr, false);
  const int T = batch.front()->length();
  std::vector<Mat> sum(static_cast<std::size_t>(T - 1)), sq(static_cast<std::size_t>(T - 1));
  for (int m = 0; m < passes; ++m) {
    Tape tape;
    for (int t = 0; t + 1 < T; ++t) {
      const Var mean = tape.constant(p.post_m[static_cast<std::size_t>(t)].value());
      const Step s = phi(tape, mean, action_block(batch, cfg_.action_dim, t), &rng, true);
      const Mat pred = decode(tape, 0, ad::add(ad::mul(s.a, mean), s.b)).value();
      auto& su = sum[static_cast<std::size_t>(t)];
      auto& sqq = sq[static_cast<std::size_t>(t)];
      if (m == 0) {
        su = pred;
        sqq = pred.cwiseProduct(pred);
      } else {
        su += pred;
        sqq += pred.cwiseProduct(pred);
      }
    }
  }
  double total = 0.0, count = 0.0;
  const double M = passes;
  for (std::size_t t = 0; t < sum.size(); ++t) {
    const Mat var = (sq[t] - sum[t].cwiseProduct(sum[t]) / M) / (M - 1.0);
    total += var.sum();
    count += static_cast<double>(var.size());
  }
  return total / count;
}

double Vrkn::mean_dyn_sd(const std::vector<const Trajectory*>& batch) const {
  Tape tape;
  const Pass p = run_filter(tape, batch, true, nullptr, false);
  double total = 0.0, count = 0.0;
  for (const Step& s : p.steps) {
    total += s.var_dyn.value().cwiseSqrt().sum();
    count += static_cast<double>(s.var_dyn.value().size());
  }
  return count > 0.0 ? total / count : 0.0;
}

Trajectory window(const Trajectory& traj, int start, int len) {
  if (start < 0 || len <= 0 || start + len > traj.length()) throw DimensionError("window: out of range");
  Trajectory w;
  for (const SensorSeries& s : traj.sensors) {
    SensorSeries c;
    c.name = s.name;
    c.obs = s.obs.middleCols(start, len);
    c.valid.assign(s.valid.begin() + start, s.valid.begin() + start + len);
    if (s.has_mask()) c.mask = s.mask.middleCols(start, len);
    w.sensors.push_back(std::move(c));
  }
  w.actions = traj.actions.middleCols(start, len);
  if (traj.states.size() != 0) w.states = traj.states.middleCols(start, len);
  return w;
}

VrknConfig config_for(const std::vector<Trajectory>& data, VrknConfig base) {
  if (data.empty()) throw ConfigError("vrkn: empty dataset");
  base.sensors.clear();
  for (const SensorSeries& s : data.front().sensors) base.sensors.push_back({s.name, s.dim(), 1.0, true});
  base.action_dim = data.front().action_dim();
  base.validate();
  return base;
}

Trainer::Trainer(Vrkn& model, TrainOptions opts)
    : model_(model), opts_(opts), adam_(ad::AdamConfig{opts.lr, 0.9, 0.999, 1e-8, opts.clip_norm}) {
  if (opts.batch_size <= 0 || opts.seq_len <= 0) throw ConfigError("vrkn train: batch_size and seq_len must be positive");
}

LossBreakdown Trainer::step(const std::vector<Trajectory>& data) {
  if (data.empty()) throw ConfigError("vrkn train: empty dataset");
  Rng rng = Rng(opts_.seed).split("vrkn-train").split(static_cast<std::uint64_t>(adam_.steps()));
  std::vector<Trajectory> windows;
  for (int b = 0; b < opts_.batch_size; ++b) {
    const Trajectory& tr = data[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(data.size()) - 1))];
    if (tr.length() < opts_.seq_len) throw ConfigError("vrkn train: sequences shorter than seq_len");
    windows.push_back(window(tr, rng.uniform_int(0, tr.length() - opts_.seq_len), opts_.seq_len));
  }
  std::vector<const Trajectory*> batch;
  for (const Trajectory& w : windows) batch.push_back(&w);
  Tape tape;
  LossBreakdown lb;
  try {
    const Var loss = model_.loss(tape, batch, rng, &lb);
    model_.params().zero_grad();
    tape.backward(loss);
    lb.grad_norm = adam_.step(model_.params().all());
  } catch (const NumericalError& e) {
    throw NumericalError("vrkn train step " + std::to_string(adam_.steps()) + ": " + e.what());
  }
  return lb;
}

void Trainer::save(const std::string& path, const json& meta) const {
  json m = meta.is_null() ? json::object() : meta;
  m["model"] = to_json(model_.config());
  m["train"] = {{"batch_size", opts_.batch_size}, {"seq_len", opts_.seq_len}, {"lr", opts_.lr},
                {"clip_norm", opts_.clip_norm}, {"seed", opts_.seed}};
  ad::save_checkpoint(path, model_.params(), &adam_, m);
}

json Trainer::load(const std::string& path) { return ad::load_checkpoint(path, model_.params(), &adam_); }

}  // namespace vrkn::model
