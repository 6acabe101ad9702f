#pragma once

#include <Eigen/Dense>

#include "vrkn/error.hpp"

namespace vrkn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Variance floor for beliefs built from learned outputs.
inline constexpr double kVarFloor = 1e-8;

struct GaussianDense {
  Vec mean;
  Mat cov;

  Eigen::Index dim() const { return mean.size(); }
};

/// Diagonal-covariance Gaussian. Stores variances, never standard deviations.
struct GaussianDiag {
  Vec mean;
  Vec var;

  Eigen::Index dim() const { return mean.size(); }
};

GaussianDense to_dense(const GaussianDiag& g);

/// Throws DimensionError / NotPositiveDefinite / NumericalError when the
/// belief violates its invariants (symmetric within 1e-10, PD, finite).
void validate(const GaussianDense& g);
void validate(const GaussianDiag& g);

/// Cholesky factor with failure reported as NotPositiveDefinite.
Eigen::LLT<Mat> cholesky(const Mat& m, const char* what);

/// Elementwise max(v, kVarFloor).
Vec floor_var(const Vec& v);

double log_density(const GaussianDense& g, const Vec& x);
double log_density(const GaussianDiag& g, const Vec& x);

double kl_divergence(const GaussianDiag& q, const GaussianDiag& p);
double kl_divergence(const GaussianDense& q, const GaussianDense& p);

/// Conditions a joint over (x, y) with x occupying the first x_dim coordinates
/// on y = y_obs and returns the Gaussian over x.
GaussianDense condition(const GaussianDense& joint, Eigen::Index x_dim, const Vec& y_obs);

/// E_{z ~ belief}[log N(obs | z, diag(obs_var))], closed form.
double expected_gaussian_loglik(const Vec& obs, const GaussianDiag& belief, const Vec& obs_var);
double expected_gaussian_loglik(const Vec& obs, const GaussianDense& belief, const Vec& obs_var);

/// Same, restricted to dimensions with mask(i) != 0.
double expected_gaussian_loglik(const Vec& obs, const GaussianDiag& belief, const Vec& obs_var,
                                const Vec& mask);

}  // namespace vrkn
