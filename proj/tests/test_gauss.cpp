#include <doctest.h>

#include <cmath>

#include "vrkn/gauss.hpp"
#include "vrkn/rng.hpp"

using namespace vrkn;

namespace {

constexpr double kPi = 3.14159265358979323846;

Mat random_spd(Rng& rng, int d) {
  const Mat a = rng.normal_mat(d, d);
  return a * a.transpose() + 0.5 * Mat::Identity(d, d);
}

// Textbook Cholesky-Banachiewicz, independent of Eigen's LLT.
Mat naive_cholesky(const Mat& a) {
  const Eigen::Index n = a.rows();
  Mat l = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = i == j ? std::sqrt(s) : s / l(j, j);
    }
  return l;
}

double oracle_log_density(const Vec& mean, const Mat& cov, const Vec& x) {
  const Mat l = naive_cholesky(cov);
  const Eigen::Index n = x.size();
  Vec r = x - mean;
  Vec y(n);  // forward substitution
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = r[i];
    for (Eigen::Index k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(l(i, i));
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * kPi) + logdet + y.squaredNorm());
}

template <class F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

double normal_pdf(double x, double m, double var) {
  return std::exp(-0.5 * (x - m) * (x - m) / var) / std::sqrt(2.0 * kPi * var);
}

}  // namespace

TEST_CASE("log_density closed-form cases") {
  GaussianDiag g1{Vec::Zero(1), Vec::Ones(1)};
  CHECK(log_density(g1, Vec::Zero(1)) == doctest::Approx(-0.5 * std::log(2.0 * kPi)).epsilon(1e-14));
  CHECK(log_density(g1, Vec::Zero(1)) == doctest::Approx(-0.918939).epsilon(1e-6));
  GaussianDense g2{Vec::Zero(2), Mat::Identity(2, 2)};
  CHECK(log_density(g2, Vec::Ones(2)) == doctest::Approx(-std::log(2.0 * kPi) - 1.0).epsilon(1e-14));
  CHECK(log_density(g2, Vec::Ones(2)) == doctest::Approx(-2.837877).epsilon(1e-6));
}

TEST_CASE("log_density dense matches independent Cholesky oracle") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    GaussianDense g{rng.normal_vec(3), random_spd(rng, 3)};
    const Vec x = rng.normal_vec(3);
    CHECK(log_density(g, x) == doctest::Approx(oracle_log_density(g.mean, g.cov, x)).epsilon(1e-12));
  }
}

TEST_CASE("log_density errors") {
  GaussianDense g{Vec::Zero(2), Mat::Identity(2, 2)};
  CHECK_THROWS_AS(log_density(g, Vec::Zero(3)), DimensionError);
  Mat bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(log_density(GaussianDense{Vec::Zero(2), bad}, Vec::Zero(2)), NotPositiveDefinite);
  CHECK_THROWS_AS(validate(GaussianDense{Vec::Zero(2), bad}), NotPositiveDefinite);
  CHECK_THROWS_AS(validate(GaussianDiag{Vec::Zero(2), Vec::Zero(2)}), NotPositiveDefinite);
}

TEST_CASE("kl_divergence examples") {
  auto g = [](double m, double v) { return GaussianDiag{Vec::Constant(1, m), Vec::Constant(1, v)}; };
  CHECK(kl_divergence(g(0, 1), g(0, 1)) == doctest::Approx(0.0));
  CHECK(kl_divergence(g(1, 1), g(0, 1)) == doctest::Approx(0.5).epsilon(1e-14));

  // Quadrature oracle of int q ln(q/p) for q = N(0, 2^2), p = N(1, 3^2).
  const double quad = simpson(
      [](double x) {
        const double q = normal_pdf(x, 0.0, 4.0);
        return q > 0.0 ? q * std::log(q / normal_pdf(x, 1.0, 9.0)) : 0.0;
      },
      -40.0, 40.0, 40000);
  CHECK(std::abs(kl_divergence(g(0, 4), g(1, 9)) - quad) < 1e-6);
}

TEST_CASE("kl_divergence property: non-negative, zero iff equal") {
  Rng rng(3);
  for (int rep = 0; rep < 500; ++rep) {
    const int d = rng.uniform_int(1, 6);
    GaussianDiag q{rng.normal_vec(d), (rng.normal_vec(d).array().exp()).matrix()};
    GaussianDiag p{rng.normal_vec(d), (rng.normal_vec(d).array().exp()).matrix()};
    CHECK(kl_divergence(q, p) > 0.0);
    CHECK(kl_divergence(q, q) == doctest::Approx(0.0).epsilon(1e-14));
    // dense route agrees
    CHECK(kl_divergence(to_dense(q), to_dense(p)) == doctest::Approx(kl_divergence(q, p)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(kl_divergence(GaussianDiag{Vec::Zero(1), Vec::Ones(1)}, GaussianDiag{Vec::Zero(2), Vec::Ones(2)}),
                  DimensionError);
}

TEST_CASE("log_density integrates to one in 1-D") {
  for (double var : {0.1, 1.0, 7.5}) {
    GaussianDiag g{Vec::Constant(1, 0.3), Vec::Constant(1, var)};
    const double mass = simpson([&](double x) { return std::exp(log_density(g, Vec::Constant(1, x))); },
                                -60.0, 60.0, 60000);
    CHECK(std::abs(mass - 1.0) < 1e-4);
  }
}

TEST_CASE("condition examples") {
  // Independent blocks.
  GaussianDense joint{Vec(3), Mat::Zero(3, 3)};
  joint.mean << 1.0, 2.0, 3.0;
  joint.cov.topLeftCorner(2, 2) << 2.0, 0.3, 0.3, 1.0;
  joint.cov(2, 2) = 4.0;
  const GaussianDense c = condition(joint, 2, Vec::Constant(1, 10.0));
  CHECK((c.mean - joint.mean.head(2)).norm() < 1e-15);
  CHECK((c.cov - joint.cov.topLeftCorner(2, 2)).norm() < 1e-15);

  // Perfect correlation.
  GaussianDense perfect{Vec(2), Mat::Ones(2, 2)};
  perfect.mean << 0.5, -1.0;
  const GaussianDense cp = condition(perfect, 1, Vec::Constant(1, 2.0));
  CHECK(cp.cov(0, 0) == doctest::Approx(0.0));
  CHECK(cp.mean[0] == doctest::Approx(0.5 + (2.0 - (-1.0))));

  GaussianDense singular{Vec::Zero(3), Mat::Identity(3, 3)};
  singular.cov(2, 2) = 0.0;
  CHECK_THROWS_AS(condition(singular, 2, Vec::Zero(1)), NotPositiveDefinite);
}

TEST_CASE("condition matches precision-form oracle") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    GaussianDense joint{rng.normal_vec(4), random_spd(rng, 4)};
    const Vec y = rng.normal_vec(2);
    const GaussianDense c = condition(joint, 2, y);
    const Mat prec = joint.cov.inverse();
    const Mat lxx = prec.topLeftCorner(2, 2);
    const Mat lxy = prec.topRightCorner(2, 2);
    const Mat cov = lxx.inverse();
    const Vec mean = joint.mean.head(2) - cov * lxy * (y - joint.mean.tail(2));
    CHECK((c.mean - mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((c.cov - cov).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("condition then re-marginalize recovers x-marginal (MC)") {
  Rng rng(17);
  GaussianDense joint{rng.normal_vec(3), random_spd(rng, 3)};
  const Mat l = joint.cov.llt().matrixL();
  const int n = 20000;
  Vec mean_acc = Vec::Zero(1);
  double second = 0.0;
  GaussianDense c0;
  std::vector<double> cond_means;
  for (int i = 0; i < n; ++i) {
    const Vec s = joint.mean + l * rng.normal_vec(3);
    const GaussianDense c = condition(joint, 1, s.tail(2));
    cond_means.push_back(c.mean[0]);
    mean_acc[0] += c.mean[0];
    c0 = c;
  }
  const double m = mean_acc[0] / n;
  for (double v : cond_means) second += (v - m) * (v - m);
  const double var_of_means = second / (n - 1);
  // E[mean] = mu_x ; Var[mean] + E[cov] = Sigma_xx
  const double se_mean = std::sqrt(var_of_means / n);
  CHECK(std::abs(m - joint.mean[0]) < 3.0 * se_mean);
  const double total = var_of_means + c0.cov(0, 0);
  // standard error of a sample variance ~ var * sqrt(2/(n-1))
  CHECK(std::abs(total - joint.cov(0, 0)) < 3.0 * var_of_means * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("expected_gaussian_loglik") {
  Rng rng(9);
  const Vec obs = rng.normal_vec(3);
  GaussianDiag point{rng.normal_vec(3), Vec::Zero(3)};
  const Vec r = Vec::Constant(3, 0.7);
  CHECK(expected_gaussian_loglik(obs, point, r) ==
        doctest::Approx(log_density(GaussianDiag{point.mean, r}, obs)).epsilon(1e-14));

  GaussianDiag unit{Vec::Zero(1), Vec::Ones(1)};
  CHECK(expected_gaussian_loglik(Vec::Zero(1), unit, Vec::Ones(1)) ==
        doctest::Approx(-0.5 * std::log(2.0 * kPi) - 0.5).epsilon(1e-14));

  // Monte Carlo oracle, 1e6 samples, 3 standard errors.
  GaussianDiag b{rng.normal_vec(4), (0.5 * rng.normal_vec(4)).array().exp().matrix()};
  const Vec o = rng.normal_vec(4);
  const Vec ov = (0.3 * rng.normal_vec(4)).array().exp().matrix();
  const int n = 1000000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec z = b.mean + b.var.cwiseSqrt().cwiseProduct(rng.normal_vec(4));
    const double v = log_density(GaussianDiag{z, ov}, o);
    acc += v;
    acc2 += v * v;
  }
  const double mc = acc / n;
  const double se = std::sqrt((acc2 / n - mc * mc) / n);
  CHECK(std::abs(expected_gaussian_loglik(o, b, ov) - mc) < 3.0 * se);

  CHECK_THROWS_AS(expected_gaussian_loglik(Vec::Zero(2), unit, Vec::Ones(2)), DimensionError);
}

TEST_CASE("dense and diagonal paths agree for diagonal covariance") {
  Rng rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    GaussianDiag g{rng.normal_vec(4), rng.normal_vec(4).array().exp().matrix()};
    const Vec x = rng.normal_vec(4);
    CHECK(std::abs(log_density(g, x) - log_density(to_dense(g), x)) <= 1e-12);
    const Vec ov = Vec::Constant(4, 0.3);
    CHECK(std::abs(expected_gaussian_loglik(x, g, ov) - expected_gaussian_loglik(x, to_dense(g), ov)) <= 1e-12);
  }
}
