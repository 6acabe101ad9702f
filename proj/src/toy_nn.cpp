#include <cmath>

#include "vrkn/toy.hpp"

namespace vrkn::toy {

using ad::Var;

namespace {

constexpr Eigen::Index kDim = 4;
constexpr double kObsVar = 0.025;
constexpr double kOutputInitScale = 0.01;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat block(const Mat& flat, Eigen::Index col, Eigen::Index n) {
  return Eigen::Map<const RowMajor>(flat.col(col).data(), n, n);
}

}  // namespace

NnInference::NnInference(Learner kind, int hidden, ad::ParamStore& store, Rng& rng) : kind_(kind) {
  if (kind == Learner::SsmCf) throw ConfigError("NnInference: ssm_cf has no inference network");
  if (hidden <= 0) throw ConfigError("NnInference: hidden width must be positive");
  const Eigen::Index feature = kind == Learner::SsmNn ? hidden : kDim;
  if (kind == Learner::SsmNn) gru_ = ad::GruCell(store, "inference.gru", kDim, hidden, rng);
  net_ = ad::Mlp(store, "inference.mlp", {feature + kDim, hidden, hidden, kDim * kDim + 2 * kDim},
                 ad::Activation::Relu, ad::Activation::Identity, rng);
  // Emitted dynamics start near zero so marginals stay bounded over long sequences.
  net_.layers().back().weight().value *= kOutputInitScale;
}

NnInference::Forward NnInference::forward(ad::Tape& tape, Var a_flat, Var sigma,
                                          const std::vector<const Trajectory*>& batch, bool collect) const {
  if (batch.empty()) throw DimensionError("NnInference: empty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const int T = batch.front()->length();
  for (const Trajectory* tr : batch) {
    if (tr->length() != T) throw DimensionError("NnInference: sequences in a batch must share a length");
    if (tr->sensors.size() != 1 || tr->sensors[0].dim() != kDim) throw DimensionError("NnInference: expects one 4-d sensor");
    for (auto v : tr->sensors[0].valid)
      if (!v) throw ConfigError("NnInference: toy learners require fully observed sequences");
  }

  std::vector<Var> obs, feats;
  for (int t = 0; t < T; ++t) {
    Mat o(kDim, B);
    for (Eigen::Index b = 0; b < B; ++b) o.col(b) = batch[static_cast<std::size_t>(b)]->sensors[0].obs.col(t);
    obs.push_back(tape.constant(std::move(o)));
  }
  if (kind_ == Learner::SsmNn) {
    feats.resize(static_cast<std::size_t>(T));
    Var h = tape.constant(Mat::Zero(gru_.hidden(), B));
    for (int t = T - 1; t >= 0; --t) {
      h = gru_(tape, obs[static_cast<std::size_t>(t)], h);
      feats[static_cast<std::size_t>(t)] = h;
    }
  } else {
    feats = obs;
  }

  Mat sel = Mat::Zero(kDim * kDim, kDim);
  for (Eigen::Index i = 0; i < kDim; ++i) sel(i * (kDim + 1), i) = 1.0;
  const Var scatter = tape.constant(sel);
  const std::vector<Eigen::Index> diag_idx{0, 5, 10, 15};
  const Var a_exp = ad::expand(a_flat, kDim * kDim, B);
  const Var sig = ad::expand(sigma, 1, B);
  const Var log_sig_d = ad::expand(ad::scale(ad::log(sigma), static_cast<double>(kDim)), 1, B);
  const double recon_const = -0.5 * static_cast<double>(kDim) * (kLog2Pi + std::log(kObsVar));

  Var m = tape.constant(Mat::Zero(kDim, B));
  Var P = tape.constant(Mat::Zero(kDim * kDim, B));
  Var elbo = tape.constant(Mat::Zero(1, B));
  Forward fwd;
  if (collect) {
    fwd.chains.resize(batch.size());
    fwd.marginals.resize(batch.size());
  }

  for (int t = 0; t < T; ++t) {
    // The previous mean enters squashed; unbounded it would make C_t grow with m and m with C_t.
    const Var out = net_(tape, ad::concat_rows({feats[static_cast<std::size_t>(t)], ad::tanh(m)}));
    const Var C = ad::rows(out, 0, kDim * kDim);
    const Var c = ad::rows(out, kDim * kDim, kDim);
    const Var s = ad::add_scalar(ad::softplus(ad::rows(out, kDim * kDim + kDim, kDim)), kVarFloor);

    // Expected KL of N(C z + c, diag s) against the prior conditional over the
    // previous marginal N(m, P). At t = 0 the previous state is a point mass
    // at zero and the prior is N(0, I).
    const Var D = t == 0 ? ad::neg(C) : ad::sub(a_exp, C);
    const Var delta = ad::sub(ad::bmm(D, m, kDim, kDim, 1), c);
    const Var spread = ad::sum_rows(ad::mul(ad::bmm(D, P, kDim, kDim, kDim), D));  // tr(D P D^T)
    const Var mass = ad::add(ad::add(ad::sum_rows(s), ad::sum_rows(ad::square(delta))), spread);
    const Var log_s = ad::sum_rows(ad::log(s));
    Var kl;
    if (t == 0) {
      kl = ad::scale(ad::sub(ad::add_scalar(mass, -static_cast<double>(kDim)), log_s), 0.5);
    } else {
      kl = ad::scale(ad::sub(ad::add(ad::add_scalar(ad::div(mass, sig), -static_cast<double>(kDim)), log_sig_d), log_s),
                     0.5);
    }

    m = ad::add(ad::bmm(C, m, kDim, kDim, 1), c);
    P = ad::add(ad::bmm(ad::bmm(C, P, kDim, kDim, kDim), ad::btranspose(C, kDim, kDim), kDim, kDim, kDim),
                ad::matmul(scatter, s));

    const Var err = ad::add(ad::square(ad::sub(obs[static_cast<std::size_t>(t)], m)), ad::gather_rows(P, diag_idx));
    const Var recon = ad::add_scalar(ad::scale(ad::sum_rows(err), -0.5 / kObsVar), recon_const);
    elbo = ad::add(elbo, ad::sub(recon, kl));

    if (collect) {
      for (Eigen::Index b = 0; b < B; ++b) {
        auto& chain = fwd.chains[static_cast<std::size_t>(b)];
        const Mat var = s.value().col(b).asDiagonal();
        if (t == 0) {
          chain.initial = {c.value().col(b), var};
        } else {
          chain.conditionals.push_back({block(C.value(), b, kDim), c.value().col(b), var});
        }
        Mat cov = block(P.value(), b, kDim);
        fwd.marginals[static_cast<std::size_t>(b)].push_back({m.value().col(b), 0.5 * (cov + cov.transpose())});
      }
    }
  }
  fwd.elbo_sum = ad::sum(elbo);
  fwd.neg_elbo = ad::scale(fwd.elbo_sum, -1.0 / static_cast<double>(B * T));
  return fwd;
}

}  // namespace vrkn::toy
