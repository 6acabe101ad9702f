#include "vrkn/gauss.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace vrkn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2*pi)

void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string(what) + ": non-finite entry");
}

}  // namespace

GaussianDense to_dense(const GaussianDiag& g) { return {g.mean, g.var.asDiagonal()}; }

void validate(const GaussianDense& g) {
  require_dims(g.cov.rows(), g.dim(), "GaussianDense cov rows");
  require_dims(g.cov.cols(), g.dim(), "GaussianDense cov cols");
  require_finite(g.mean, "GaussianDense mean");
  if (!g.cov.allFinite()) throw NumericalError("GaussianDense cov: non-finite entry");
  if ((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw NumericalError("GaussianDense cov: not symmetric");
  cholesky(g.cov, "GaussianDense cov");
}

void validate(const GaussianDiag& g) {
  require_dims(g.var.size(), g.dim(), "GaussianDiag var");
  require_finite(g.mean, "GaussianDiag mean");
  require_finite(g.var, "GaussianDiag var");
  if ((g.var.array() <= 0.0).any()) throw NotPositiveDefinite("GaussianDiag var: non-positive entry");
}

Eigen::LLT<Mat> cholesky(const Mat& m, const char* what) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(std::string(what) + ": Cholesky failed");
  return llt;
}

Vec floor_var(const Vec& v) { return v.cwiseMax(kVarFloor); }

double log_density(const GaussianDense& g, const Vec& x) {
  require_dims(x.size(), g.dim(), "log_density");
  auto llt = cholesky(g.cov, "log_density");
  const Vec r = llt.matrixL().solve(x - g.mean);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(g.dim()) * kLog2Pi + logdet + r.squaredNorm());
}

double log_density(const GaussianDiag& g, const Vec& x) {
  require_dims(x.size(), g.dim(), "log_density");
  if ((g.var.array() <= 0.0).any()) throw NotPositiveDefinite("log_density: non-positive variance");
  const auto d = (x - g.mean).array();
  return -0.5 * (kLog2Pi + g.var.array().log() + d.square() / g.var.array()).sum();
}

double kl_divergence(const GaussianDiag& q, const GaussianDiag& p) {
  require_dims(p.dim(), q.dim(), "kl_divergence");
  const auto vq = q.var.array();
  const auto vp = p.var.array();
  const auto dm = (q.mean - p.mean).array();
  return (0.5 * (vp / vq).log() + (vq + dm.square()) / (2.0 * vp) - 0.5).sum();
}

double kl_divergence(const GaussianDense& q, const GaussianDense& p) {
  require_dims(p.dim(), q.dim(), "kl_divergence");
  auto lp = cholesky(p.cov, "kl_divergence p");
  auto lq = cholesky(q.cov, "kl_divergence q");
  const Mat lp_inv_lq = lp.matrixL().solve(Mat(lq.matrixL()));
  const Vec r = lp.matrixL().solve(q.mean - p.mean);
  const double logdet_p = 2.0 * lp.matrixLLT().diagonal().array().log().sum();
  const double logdet_q = 2.0 * lq.matrixLLT().diagonal().array().log().sum();
  return 0.5 * (lp_inv_lq.squaredNorm() + r.squaredNorm() - static_cast<double>(q.dim()) +
                logdet_p - logdet_q);
}

GaussianDense condition(const GaussianDense& joint, Eigen::Index x_dim, const Vec& y_obs) {
  const Eigen::Index n = joint.dim();
  const Eigen::Index y_dim = n - x_dim;
  if (x_dim <= 0 || y_dim <= 0) throw DimensionError("condition: empty block");
  require_dims(y_obs.size(), y_dim, "condition y_obs");
  const Mat syy = joint.cov.bottomRightCorner(y_dim, y_dim);
  auto llt = cholesky(syy, "condition y-block");
  const Mat sxy = joint.cov.topRightCorner(x_dim, y_dim);
  // K = Sxy Syy^-1
  const Mat gain = llt.solve(sxy.transpose()).transpose();
  GaussianDense out;
  out.mean = joint.mean.head(x_dim) + gain * (y_obs - joint.mean.tail(y_dim));
  out.cov = joint.cov.topLeftCorner(x_dim, x_dim) - gain * sxy.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

double expected_gaussian_loglik(const Vec& obs, const GaussianDiag& belief, const Vec& obs_var) {
  require_dims(belief.dim(), obs.size(), "expected_gaussian_loglik belief");
  require_dims(obs_var.size(), obs.size(), "expected_gaussian_loglik obs_var");
  const auto r = obs_var.array();
  const auto d = (obs - belief.mean).array();
  return -0.5 * (kLog2Pi + r.log() + (d.square() + belief.var.array()) / r).sum();
}

double expected_gaussian_loglik(const Vec& obs, const GaussianDense& belief, const Vec& obs_var) {
  require_dims(belief.dim(), obs.size(), "expected_gaussian_loglik belief");
  return expected_gaussian_loglik(obs, GaussianDiag{belief.mean, belief.cov.diagonal()}, obs_var);
}

double expected_gaussian_loglik(const Vec& obs, const GaussianDiag& belief, const Vec& obs_var,
                                const Vec& mask) {
  require_dims(mask.size(), obs.size(), "expected_gaussian_loglik mask");
  require_dims(belief.dim(), obs.size(), "expected_gaussian_loglik belief");
  require_dims(obs_var.size(), obs.size(), "expected_gaussian_loglik obs_var");
  const auto r = obs_var.array();
  const auto d = (obs - belief.mean).array();
  const Eigen::ArrayXd terms = -0.5 * (kLog2Pi + r.log() + (d.square() + belief.var.array()) / r);
  return (mask.array() != 0.0).select(terms, 0.0).sum();
}

}  // namespace vrkn
