#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gmje/gaussian.hpp"
#include "test_helpers.hpp"

using namespace gmje;
using namespace gmje::testing;

namespace {
constexpr double kLn2Pi = 1.8378770664093454835606594728112;
}

TEST_CASE("chol_logdet: identity and scaling") {
  auto [l3, ld3] = chol_logdet(MatrixXd::Identity(3, 3), 0.0);
  CHECK(ld3 == doctest::Approx(0.0).epsilon(1e-14));
  auto [l2, ld2] = chol_logdet(2.0 * MatrixXd::Identity(2, 2), 0.0);
  CHECK(ld2 == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("chol_logdet: matches eigenvalue oracle on random SPD 8x8") {
  CounterRng rng(7);
  MatrixXd cov = random_spd(8, rng);
  auto [factor, logdet] = chol_logdet(cov, 0.0);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  double oracle = es.eigenvalues().array().log().sum();
  CHECK(logdet == doctest::Approx(oracle).epsilon(1e-10));
  CHECK((factor * factor.transpose() - cov).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("chol_logdet: non-PD matrix throws after jitter") {
  MatrixXd bad = -MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(chol_logdet(bad, 1e-6), NotPositiveDefinite);
}

TEST_CASE("condition: independent blocks return the target marginal") {
  CounterRng rng(11);
  MatrixXd cc = random_spd(2, rng);
  MatrixXd tt = random_spd(3, rng);
  JointGaussian joint(random_vector(2, rng), random_vector(3, rng), cc, MatrixXd::Zero(2, 3),
                      MatrixXd::Zero(3, 2), tt);
  Gaussian cond = condition(joint, VectorXd::Constant(2, 4.2));
  CHECK((cond.mean - joint.mean_t).norm() < 1e-12);
  CHECK((cond.cov - joint.cov_tt).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("condition: 2D closed-form Schur values") {
  MatrixXd one(1, 1), half(1, 1);
  one << 1.0;
  half << 0.5;
  JointGaussian joint(VectorXd::Zero(1), VectorXd::Zero(1), one, half, half, one);
  Gaussian cond = condition(joint, VectorXd::Constant(1, 1.0));
  CHECK(cond.mean(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cond.cov(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("condition: density-ratio oracle on a random 4D joint") {
  CounterRng rng(13);
  JointGaussian joint = random_joint(2, 2, rng);
  VectorXd zc = random_vector(2, rng);
  Gaussian cond = condition(joint, zc);
  Gaussian joint_flat = joint.full_gaussian();
  Gaussian marg_c = marginalize(joint, Block::context);
  for (int i = 0; i < 100; ++i) {
    VectorXd zt = cond.mean + random_vector(2, rng);
    VectorXd full(4);
    full << zc, zt;
    double log_ratio = -mvn_nll(full, joint_flat) + mvn_nll(zc, marg_c);
    CHECK(log_ratio == doctest::Approx(-mvn_nll(zt, cond)).epsilon(1e-9));
  }
}

TEST_CASE("marginalize: projections and symmetry") {
  CounterRng rng(17);
  JointGaussian joint = random_joint(3, 2, rng);
  Gaussian mt = marginalize(joint, Block::target);
  CHECK((mt.mean - joint.mean_t).norm() == 0.0);
  CHECK((mt.cov - joint.cov_tt).cwiseAbs().maxCoeff() < 1e-12);

  MatrixXd blk = random_spd(2, rng);
  MatrixXd cross = 0.1 * random_matrix(2, 2, rng);
  cross = MatrixXd(0.5 * (cross + cross.transpose()));
  VectorXd mu = random_vector(2, rng);
  JointGaussian sym(mu, mu, blk, cross, cross.transpose(), blk);
  Gaussian a = marginalize(sym, Block::context);
  Gaussian b = marginalize(sym, Block::target);
  CHECK((a.mean - b.mean).norm() < 1e-12);
  CHECK((a.cov - b.cov).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("marginalize: quadrature over the context recovers the marginal") {
  CounterRng rng(19);
  JointGaussian joint = random_joint(1, 1, rng);
  Gaussian marg_t = marginalize(joint, Block::target);
  Gaussian joint_flat = joint.full_gaussian();
  double sc = std::sqrt(joint.cov_cc(0, 0));
  int steps = 400;
  double lo = joint.mean_c(0) - 9.0 * sc, hi = joint.mean_c(0) + 9.0 * sc;
  double h = (hi - lo) / steps;
  for (int p = 0; p < 20; ++p) {
    double zt = marg_t.mean(0) + (p - 10) * 0.3 * std::sqrt(marg_t.cov(0, 0));
    double integral = 0.0;
    for (int i = 0; i <= steps; ++i) {
      VectorXd x(2);
      x << lo + i * h, zt;
      double w = (i == 0 || i == steps) ? 0.5 : 1.0;
      integral += w * std::exp(-mvn_nll(x, joint_flat));
    }
    integral *= h;
    VectorXd t1(1);
    t1 << zt;
    CHECK(integral == doctest::Approx(std::exp(-mvn_nll(t1, marg_t))).epsilon(1e-4));
  }
}

TEST_CASE("mvn_nll: closed-form values") {
  for (int d : {1, 3, 5}) {
    Gaussian g(VectorXd::Zero(d), MatrixXd::Identity(d, d));
    CHECK(mvn_nll(VectorXd::Zero(d), g) == doctest::Approx(d / 2.0 * kLn2Pi).epsilon(1e-12));
  }
  Gaussian g1(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
  CHECK(mvn_nll(VectorXd::Constant(1, 1.0), g1) ==
        doctest::Approx(0.5 + 0.5 * kLn2Pi).epsilon(1e-12));
}

TEST_CASE("mvn_nll: density integrates to one on a random 3D Gaussian") {
  CounterRng rng(23);
  Gaussian g(random_vector(3, rng), random_spd(3, rng));
  double smax = std::sqrt(g.cov.diagonal().maxCoeff());
  int steps = 64;
  double half = 8.0 * smax;
  double h = 2.0 * half / steps;
  double integral = 0.0;
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; j <= steps; ++j) {
      for (int k = 0; k <= steps; ++k) {
        VectorXd x(3);
        x << g.mean(0) - half + i * h, g.mean(1) - half + j * h, g.mean(2) - half + k * h;
        double w = ((i == 0 || i == steps) ? 0.5 : 1.0) * ((j == 0 || j == steps) ? 0.5 : 1.0) *
                   ((k == 0 || k == steps) ? 0.5 : 1.0);
        integral += w * std::exp(-mvn_nll(x, g));
      }
    }
  }
  integral *= h * h * h;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("sample: degenerate spread, large-sample moments, determinism") {
  CounterRng rng(29);
  VectorXd mu = random_vector(2, rng);
  Gaussian tight(mu, 1e-12 * MatrixXd::Identity(2, 2));
  MatrixXd s = sample(tight, 50, rng);
  CHECK((s.rowwise() - mu.transpose()).cwiseAbs().maxCoeff() < 1e-4);

  Gaussian std2(VectorXd::Zero(2), MatrixXd::Identity(2, 2));
  CounterRng rng2(31);
  MatrixXd big = sample(std2, 100000, rng2);
  VectorXd mean = big.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
  MatrixXd centered = big.rowwise() - mean.transpose();
  MatrixXd cov = centered.transpose() * centered / big.rows();
  CHECK((cov - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.02);

  CounterRng ra(43), rb(43);
  MatrixXd sa = sample(std2, 64, ra), sb = sample(std2, 64, rb);
  CHECK((sa - sb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampling moments within 5 standard errors") {
  CounterRng rng(37);
  Gaussian g(random_vector(3, rng), random_spd(3, rng));
  int n = 100000;
  MatrixXd s = sample(g, n, rng);
  VectorXd mean = s.colwise().mean();
  MatrixXd centered = s.rowwise() - mean.transpose();
  MatrixXd cov = centered.transpose() * centered / n;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      // Var of a sample covariance entry: (S_ii S_jj + S_ij^2) / n.
      double se = std::sqrt((g.cov(i, i) * g.cov(j, j) + g.cov(i, j) * g.cov(i, j)) / n);
      CHECK(std::abs(cov(i, j) - g.cov(i, j)) < 5.0 * se);
    }
  }
}

TEST_CASE("entropy: standard normal, scaling law, MC oracle") {
  Gaussian g1(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
  CHECK(entropy(g1) == doctest::Approx(0.5 * (1.0 + kLn2Pi)).epsilon(1e-12));

  CounterRng rng(41);
  MatrixXd cov = random_spd(3, rng);
  Gaussian g(VectorXd::Zero(3), cov);
  double c = 2.7;
  Gaussian gc(VectorXd::Zero(3), MatrixXd(c * cov));
  CHECK(entropy(gc) - entropy(g) == doctest::Approx(1.5 * std::log(c)).epsilon(1e-10));

  Gaussian g2(random_vector(2, rng), random_spd(2, rng));
  int n = 1000000;
  MatrixXd s = sample(g2, n, rng);
  double mc = 0.0;
  for (int i = 0; i < n; ++i) mc += mvn_nll(s.row(i).transpose(), g2);
  mc /= n;
  CHECK(mc == doctest::Approx(entropy(g2)).epsilon(0.01));
}

TEST_CASE("mutual_information: independence, bivariate closed form, entropy decomposition") {
  CounterRng rng(47);
  MatrixXd cc = random_spd(2, rng), tt = random_spd(2, rng);
  JointGaussian indep(VectorXd::Zero(2), VectorXd::Zero(2), cc, MatrixXd::Zero(2, 2),
                      MatrixXd::Zero(2, 2), tt);
  CHECK(std::abs(mutual_information(indep)) < 1e-12);

  MatrixXd one(1, 1), rho(1, 1);
  one << 1.0;
  rho << 0.5;
  JointGaussian corr(VectorXd::Zero(1), VectorXd::Zero(1), one, rho, rho, one);
  CHECK(mutual_information(corr) == doctest::Approx(-0.5 * std::log(0.75)).epsilon(1e-12));

  JointGaussian joint = random_joint(2, 3, rng);
  double via_entropy = entropy(marginalize(joint, Block::context)) +
                       entropy(marginalize(joint, Block::target)) -
                       entropy(joint.full_gaussian());
  CHECK(std::abs(mutual_information(joint) - via_entropy) < 1e-10);
  CHECK(mutual_information(joint) >= -1e-10);
}

TEST_CASE("kl_divergence: identity, zero-mean form, MC oracle, bits conversion") {
  CounterRng rng(53);
  Gaussian g(random_vector(2, rng), random_spd(2, rng));
  CHECK(std::abs(kl_divergence(g, g)) < 1e-12);

  MatrixXd s0 = random_spd(2, rng), s1 = random_spd(2, rng);
  Gaussian z0(VectorXd::Zero(2), s0), z1(VectorXd::Zero(2), s1);
  Eigen::LLT<MatrixXd> llt1(s1);
  double simplified = 0.5 * (llt1.solve(s0).trace() - 2.0 +
                             std::log(s1.determinant() / s0.determinant()));
  CHECK(kl_divergence(z0, z1) == doctest::Approx(simplified).epsilon(1e-10));

  Gaussian a(random_vector(2, rng), random_spd(2, rng));
  Gaussian b(random_vector(2, rng), random_spd(2, rng));
  int n = 1000000;
  MatrixXd s = sample(a, n, rng);
  double mc = 0.0;
  for (int i = 0; i < n; ++i) {
    VectorXd x = s.row(i).transpose();
    mc += mvn_nll(x, b) - mvn_nll(x, a);
  }
  mc /= n;
  CHECK(mc == doctest::Approx(kl_divergence(a, b)).epsilon(0.01));
  CHECK(kl_divergence_bits(a, b) ==
        doctest::Approx(kl_divergence(a, b) / std::log(2.0)).epsilon(1e-12));
  CHECK(kl_divergence(a, b) >= 0.0);
}

TEST_CASE("block_invert: block-diagonal, closed-form 2x2, dense-inverse oracle") {
  CounterRng rng(59);
  MatrixXd cc = random_spd(2, rng), tt = random_spd(2, rng);
  JointGaussian indep(VectorXd::Zero(2), VectorXd::Zero(2), cc, MatrixXd::Zero(2, 2),
                      MatrixXd::Zero(2, 2), tt);
  PrecisionBlocks pb = block_invert(indep);
  CHECK((pb.lambda_cc - cc.inverse()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(pb.lambda_ct.cwiseAbs().maxCoeff() < 1e-12);

  MatrixXd one(1, 1), half(1, 1);
  one << 1.0;
  half << 0.5;
  JointGaussian scalar(VectorXd::Zero(1), VectorXd::Zero(1), one, half, half, one);
  PrecisionBlocks ps = block_invert(scalar);
  CHECK(ps.lambda_cc(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(ps.lambda_ct(0, 0) == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
  CHECK(ps.lambda_tt(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));

  JointGaussian joint = random_joint(3, 3, rng);
  PrecisionBlocks p6 = block_invert(joint);
  MatrixXd lambda(6, 6);
  lambda << p6.lambda_cc, p6.lambda_ct, p6.lambda_tc, p6.lambda_tt;
  CHECK((lambda * joint.full_cov() - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("conditioning matches the precision-block form on zero-mean joints") {
  CounterRng rng(61);
  for (int trial = 0; trial < 5; ++trial) {
    JointGaussian joint = random_joint(2, 2, rng, /*zero_mean=*/true);
    VectorXd zc = random_vector(2, rng);
    Gaussian cond = condition(joint, zc);
    PrecisionBlocks pb = block_invert(joint);
    MatrixXd ltt_inv = pb.lambda_tt.inverse();
    VectorXd mean_via_precision = -ltt_inv * pb.lambda_tc * zc;
    CHECK((cond.mean - mean_via_precision).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((cond.cov - ltt_inv).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("homoscedasticity: conditional covariance identical across observations") {
  CounterRng rng(67);
  JointGaussian joint = random_joint(3, 2, rng);
  Gaussian c1 = condition(joint, random_vector(3, rng));
  Gaussian c2 = condition(joint, random_vector(3, rng));
  CHECK((c1.cov - c2.cov).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("construction guards: asymmetric cross blocks and bad covariances") {
  MatrixXd one(1, 1), a(1, 1), b(1, 1);
  one << 1.0;
  a << 0.5;
  b << 0.7;
  CHECK_THROWS_AS(JointGaussian(VectorXd::Zero(1), VectorXd::Zero(1), one, a, b, one),
                  std::invalid_argument);
  CHECK_THROWS_AS(Gaussian(VectorXd::Zero(2), -MatrixXd::Identity(2, 2)), NotPositiveDefinite);
}
