#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <deque>

#include "gmje/smc.hpp"
#include "test_helpers.hpp"

using namespace gmje;
using namespace gmje::testing;

namespace {

MatrixXd random_unit_rows(int m, int d, CounterRng& rng) {
  MatrixXd out(m, d);
  for (int i = 0; i < m; ++i) {
    VectorXd v = random_vector(d, rng);
    out.row(i) = v.normalized().transpose();
  }
  return out;
}

}  // namespace

TEST_CASE("weighted_infonce: uniform reduction, one-hot zero, log-space oracle") {
  CounterRng rng(501);
  int m = 32, d = 8;
  MatrixXd particles = random_unit_rows(m, d, rng);
  VectorXd zc = random_vector(d, rng).normalized();
  VectorXd zt = random_vector(d, rng).normalized();

  ParticleBank bank = ParticleBank::init_isotropic(particles, 0.5);
  // Unweighted InfoNCE over the bank.
  VectorXd sims = particles * zc / bank.tau;
  double mx = sims.maxCoeff();
  double unweighted = -(zc.dot(zt) / bank.tau - (mx + std::log((sims.array() - mx).exp().sum())));
  CHECK(weighted_infonce(zc, zt, bank) - unweighted ==
        doctest::Approx(std::log(1.0 / m)).epsilon(1e-12));

  // One-hot weight on a particle equal to the positive.
  ParticleBank hot = bank;
  hot.particles.row(0) = zt.transpose();
  hot.weights.setZero();
  hot.weights(0) = 1.0;
  CHECK(std::abs(weighted_infonce(zc, zt, hot)) < 1e-12);

  // Direct-exponential oracle at tau = 0.5.
  double denom = 0.0;
  for (int i = 0; i < m; ++i) {
    denom += bank.weights(i) * std::exp(particles.row(i).dot(zc) / 0.5);
  }
  double direct = -std::log(std::exp(zc.dot(zt) / 0.5) / denom);
  CHECK(weighted_infonce(zc, zt, bank) == doctest::Approx(direct).epsilon(1e-10));

  CHECK_THROWS_AS(weighted_infonce(VectorXd::Constant(d, 1.0), zt, bank), NotNormalized);
}

TEST_CASE("importance_update: constant likelihood preserves prior proportions") {
  CounterRng rng(503);
  int m = 4, d = 8;
  // Orthonormal bank and an incoming/query direction orthogonal to everything.
  MatrixXd particles = MatrixXd::Zero(m, d);
  for (int i = 0; i < m; ++i) particles(i, i) = 1.0;
  ParticleBank bank = ParticleBank::init_isotropic(particles, 0.1);
  bank.weights << 0.4, 0.3, 0.2, 0.1;

  MatrixXd incoming = MatrixXd::Zero(1, d);
  incoming(0, 5) = 1.0;
  MatrixXd queries = MatrixXd::Zero(1, d);
  queries(0, 6) = 1.0;  // orthogonal to every pool particle: all sims equal 0
  ParticleBank pool = importance_update(bank, incoming, &queries);
  // Old entries keep their relative proportions.
  for (int i = 1; i < m; ++i) {
    CHECK(pool.weights(i) / pool.weights(0) ==
          doctest::Approx(bank.weights(i) / bank.weights(0)).epsilon(1e-12));
  }
  CHECK(pool.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pool.size() == m + 1);
}

TEST_CASE("importance_update: near-zero temperature concentrates on the matching particle") {
  CounterRng rng(509);
  int m = 6, d = 16;
  MatrixXd particles = random_unit_rows(m, d, rng);
  ParticleBank bank = ParticleBank::init_isotropic(particles, 0.005);
  MatrixXd incoming = random_unit_rows(1, d, rng);
  MatrixXd queries(1, d);
  queries.row(0) = particles.row(2);
  ParticleBank pool = importance_update(bank, incoming, &queries);
  CHECK(pool.weights(2) > 0.999);
}

TEST_CASE("importance_update: matches a direct dense oracle with prior scaling") {
  CounterRng rng(521);
  int m = 8, b = 3, d = 6;
  double tau = 0.2;
  ParticleBank bank = ParticleBank::init_isotropic(random_unit_rows(m, d, rng), tau);
  VectorXd w = random_vector(m, rng).array().abs() + 0.1;
  bank.weights = w / w.sum();
  MatrixXd incoming = random_unit_rows(b, d, rng);

  ParticleBank pool = importance_update(bank, incoming);

  // Dense oracle in plain arithmetic.
  MatrixXd all(m + b, d);
  all << bank.particles, incoming;
  VectorXd prior(m + b);
  prior.head(m) = bank.weights * (double(m) / double(m + b));
  prior.tail(b).setConstant(1.0 / double(m + b));
  VectorXd unnorm(m + b);
  for (int i = 0; i < m + b; ++i) {
    double lik = 0.0;
    for (int q = 0; q < b; ++q) lik += std::exp(all.row(i).dot(incoming.row(q)) / tau);
    unnorm(i) = prior(i) * lik / b;
  }
  VectorXd oracle = unnorm / unnorm.sum();
  CHECK((pool.weights - oracle).cwiseAbs().maxCoeff() < 1e-12);

  // Scaling every likelihood by a shared constant cannot change the result
  // (the oracle shows the constant cancels in normalization).
  VectorXd scaled = (unnorm * 137.0) / (unnorm * 137.0).sum();
  CHECK((scaled - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("general_importance_update: reduces to the isotropic update when Sigma = tau I") {
  CounterRng rng(523);
  int m = 8, b = 3, d = 6;
  double tau = 0.3;
  MatrixXd particles = random_unit_rows(m, d, rng);
  MatrixXd incoming = random_unit_rows(b, d, rng);

  ParticleBank iso = ParticleBank::init_isotropic(particles, tau);
  ParticleBank full = ParticleBank::init_full_cov(particles, MatrixXd(tau * MatrixXd::Identity(d, d)));
  ParticleBank pool_iso = importance_update(iso, incoming);
  ParticleBank pool_full = general_importance_update(full, incoming);
  CHECK((pool_iso.weights - pool_full.weights).cwiseAbs().maxCoeff() < 1e-10);

  // A query exactly at a particle's mean maximizes that particle's weight.
  MatrixXd at_mean(1, d);
  at_mean.row(0) = particles.row(4);
  ParticleBank pm = general_importance_update(full, at_mean);
  int argmax;
  pm.weights.head(m).maxCoeff(&argmax);
  CHECK(argmax == 4);

  // Equal Mahalanobis distances stay equal under covariance scaling: no
  // determinant term enters the weights.
  MatrixXd two = MatrixXd::Zero(2, d);
  two(0, 0) = 1.0;
  two(1, 0) = -1.0;
  MatrixXd probe = MatrixXd::Zero(1, d);
  probe(0, 1) = 1.0;  // equidistant from both particles
  for (double c : {0.5, 1.0, 8.0}) {
    ParticleBank fb = ParticleBank::init_full_cov(two, MatrixXd(c * MatrixXd::Identity(d, d)));
    ParticleBank pp = general_importance_update(fb, probe);
    CHECK(pp.weights(0) == doctest::Approx(pp.weights(1)).epsilon(1e-12));
  }
}

TEST_CASE("ess: closed-form values and range") {
  CHECK(ess(VectorXd::Constant(16, 1.0 / 16.0)) == doctest::Approx(16.0).epsilon(1e-12));
  VectorXd onehot = VectorXd::Zero(5);
  onehot(2) = 1.0;
  CHECK(ess(onehot) == doctest::Approx(1.0).epsilon(1e-12));
  VectorXd w(3);
  w << 0.5, 0.25, 0.25;
  CHECK(ess(w) == doctest::Approx(2.667).epsilon(1e-3));
}

TEST_CASE("resample: one-hot copies, systematic identity under uniformity, reset weights") {
  CounterRng rng(541);
  int m = 8, d = 4;
  ParticleBank bank = ParticleBank::init_isotropic(random_unit_rows(m, d, rng), 0.1);

  ParticleBank hot = bank;
  hot.weights.setZero();
  hot.weights(3) = 1.0;
  ParticleBank all3 = resample(hot, m, rng);
  for (int i = 0; i < m; ++i) {
    CHECK((all3.particles.row(i) - bank.particles.row(3)).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(all3.weights(0) == doctest::Approx(1.0 / m).epsilon(1e-12));
  CHECK(ess(all3.weights) == doctest::Approx(double(m)).epsilon(1e-12));

  // Uniform pool + systematic scheme: every particle exactly once, in order.
  ParticleBank uni = resample(bank, m, rng, ResampleScheme::systematic);
  CHECK((uni.particles - bank.particles).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("resample: multinomial multiplicities are unbiased (3 sigma)") {
  CounterRng rng(547);
  int d = 4;
  MatrixXd particles = random_unit_rows(2, d, rng);
  ParticleBank pool = ParticleBank::init_isotropic(particles, 0.1);
  pool.weights << 0.7, 0.3;
  int m = 10, trials = 10000;
  long total_first = 0;
  for (int t = 0; t < trials; ++t) {
    ParticleBank res = resample(pool, m, rng, ResampleScheme::multinomial);
    for (int i = 0; i < m; ++i) {
      if ((res.particles.row(i) - particles.row(0)).cwiseAbs().maxCoeff() == 0.0) ++total_first;
    }
  }
  double mean_mult = double(total_first) / trials;
  double se = std::sqrt(m * 0.7 * 0.3 / trials);
  CHECK(std::abs(mean_mult - 0.7 * m) < 3.0 * se);
}

TEST_CASE("fifo_push: eviction order, exact fill, deque oracle") {
  int m = 4, d = 2;
  MatrixXd zero = MatrixXd::Zero(m, d);
  FifoBank bank = FifoBank::init(zero);
  for (int i = 0; i < m + 1; ++i) {
    MatrixXd one(1, d);
    one << double(i), double(i);
    bank = fifo_push(bank, one);
  }
  // After M+1 single pushes the buffer holds items 1..M (item 0 evicted).
  double min_seen = 1e300;
  for (int i = 0; i < m; ++i) min_seen = std::min(min_seen, bank.queue(i, 0));
  CHECK(min_seen == 1.0);

  CounterRng rng(557);
  MatrixXd batch = random_matrix(m, d, rng);
  FifoBank fresh = fifo_push(FifoBank::init(zero), batch);
  CHECK((fresh.queue - batch).cwiseAbs().maxCoeff() == 0.0);

  // Interleaved pushes against a reference deque simulation.
  FifoBank ring = FifoBank::init(zero);
  std::deque<VectorXd> ref;
  for (int i = 0; i < m; ++i) ref.push_back(VectorXd::Zero(d));
  for (int round = 0; round < 7; ++round) {
    int k = 1 + round % 3;
    MatrixXd chunk = random_matrix(k, d, rng);
    ring = fifo_push(ring, chunk);
    for (int i = 0; i < k; ++i) {
      ref.pop_front();
      ref.push_back(chunk.row(i).transpose());
    }
  }
  // Ring content equals deque content as multisets in ring order.
  std::vector<bool> used(m, false);
  for (int i = 0; i < m; ++i) {
    bool found = false;
    for (int j = 0; j < m; ++j) {
      if (!used[j] && (ring.queue.row(i).transpose() - ref[j]).cwiseAbs().maxCoeff() == 0.0) {
        used[j] = true;
        found = true;
        break;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("smc_simulation: balanced stream keeps ESS near M and occupancy near uniform") {
  StreamConfig stream;
  stream.n_classes = 5;
  stream.rare_freq = 1.0 / 5.0;  // balanced
  stream.dim = 16;
  stream.batch = 16;
  stream.steps = 200;
  BankConfig bank;
  bank.m = 64;
  bank.tau = 1.0;  // high temperature: weak concentration signal
  CounterRng rng(563);
  auto metrics = smc_simulation(stream, bank, rng);
  REQUIRE(metrics.size() == 200);
  double avg_pool_ess = 0.0;
  for (const auto& m : metrics) {
    CHECK(m.smc_ess_post == doctest::Approx(64.0).epsilon(1e-9));
    CHECK(m.smc_ess_pool >= 1.0);
    CHECK(m.smc_ess_pool <= 64.0 + 16.0);
    avg_pool_ess += m.smc_ess_pool;
  }
  avg_pool_ess /= metrics.size();
  CHECK(avg_pool_ess > 0.5 * 64.0);

  // Occupancy near uniform over the tail of the run.
  VectorXd counts = VectorXd::Zero(5);
  int tail = 0;
  for (std::size_t t = 100; t < metrics.size(); ++t) {
    for (int c = 0; c < 5; ++c) counts(c) += metrics[t].smc_class_counts[c];
    ++tail;
  }
  counts /= double(tail) * 64.0;
  CHECK((counts.array() - 0.2).abs().maxCoeff() < 0.15);
}
