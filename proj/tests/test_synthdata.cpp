#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "gmje/synthdata.hpp"
#include "test_helpers.hpp"

using namespace gmje;

TEST_CASE("branch functions: closed-form spot checks") {
  CHECK(branch_a(0, 0.5) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(branch_a(1, 0.5) == doctest::Approx(-0.75).epsilon(1e-15));
  CHECK(branch_a(2, 0.5) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(branch_b(0, 0.4) == doctest::Approx(std::sin(1.2)).epsilon(1e-15));
  CHECK(branch_b(1, 0.4) == doctest::Approx(-std::sin(1.2)).epsilon(1e-15));
  CHECK(branch_b(2, 0.4) == 0.0);
  CHECK(branch_value(SyntheticDataset::Kind::A, 2, -0.3) == branch_a(2, -0.3));
  CHECK(branch_value(SyntheticDataset::Kind::B, 1, -0.3) == branch_b(1, -0.3));
}

TEST_CASE("branches of Dataset B intersect at x = 0; Dataset A stays separated") {
  CHECK(branch_b(0, 0.0) == 0.0);
  CHECK(branch_b(1, 0.0) == 0.0);
  CHECK(branch_b(2, 0.0) == 0.0);
  // Dataset A branch gap: min over the grid of the up/down separation is 1.
  double min_gap = 1e300;
  VectorXd grid = eval_grid(201);
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    min_gap = std::min(min_gap, branch_a(0, grid(i)) - branch_a(2, grid(i)));
  }
  CHECK(min_gap >= 0.25);
}

TEST_CASE("conditional mean averages the three branches") {
  for (double x : {-0.9, -0.2, 0.0, 0.4, 1.0}) {
    double mean_a = (branch_a(0, x) + branch_a(1, x) + branch_a(2, x)) / 3.0;
    CHECK(conditional_mean(SyntheticDataset::Kind::A, x) == doctest::Approx(mean_a).epsilon(1e-15));
    // For A the quadratics cancel: the mean is x^3 / 3.
    CHECK(conditional_mean(SyntheticDataset::Kind::A, x) ==
          doctest::Approx(x * x * x / 3.0).epsilon(1e-15));
    // For B all three cancel to zero.
    CHECK(std::abs(conditional_mean(SyntheticDataset::Kind::B, x)) < 1e-15);
  }
}

TEST_CASE("generation: determinism, support, on-curve when noiseless") {
  CounterRng r1(777), r2(777);
  SyntheticDataset a1 = gen_dataset_a(500, 0.05, r1);
  SyntheticDataset a2 = gen_dataset_a(500, 0.05, r2);
  CHECK((a1.x_c - a2.x_c).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a1.x_t - a2.x_t).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a1.branch_id == a2.branch_id);
  CHECK(a1.n() == 500);
  CHECK(a1.x_c.minCoeff() >= -1.0);
  CHECK(a1.x_c.maxCoeff() <= 1.0);

  CounterRng r3(778);
  SyntheticDataset clean = gen_dataset_b(300, 0.0, r3);
  for (Eigen::Index i = 0; i < clean.n(); ++i) {
    CHECK(clean.x_t(i) ==
          doctest::Approx(branch_b(clean.branch_id[i], clean.x_c(i))).epsilon(1e-15));
  }
}

TEST_CASE("generation: branch choice is uniform (chi-square, 1% level)") {
  CounterRng rng(779);
  SyntheticDataset data = gen_dataset_a(30000, 0.05, rng);
  double counts[3] = {0, 0, 0};
  for (int b : data.branch_id) counts[b] += 1.0;
  double expected = 10000.0;
  double chi2 = 0.0;
  for (int b = 0; b < 3; ++b) chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
  CHECK(chi2 < 9.21);  // chi-square critical value, 2 dof, 1% level
}

TEST_CASE("generation: residual noise matches the configured sigma within 5%") {
  CounterRng rng(781);
  SyntheticDataset data = gen_dataset_a(30000, 0.05, rng);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    double resid = data.x_t(i) - branch_a(data.branch_id[i], data.x_c(i));
    ss += resid * resid;
  }
  double sigma_hat = std::sqrt(ss / data.n());
  CHECK(sigma_hat == doctest::Approx(0.05).epsilon(0.05));
}

TEST_CASE("eval_grid: endpoints and spacing") {
  VectorXd g2 = eval_grid(2);
  CHECK(g2(0) == -1.0);
  CHECK(g2(1) == 1.0);
  VectorXd g3 = eval_grid(3);
  CHECK(g3(1) == 0.0);
  VectorXd g300 = eval_grid(300);
  CHECK(g300.size() == 300);
  CHECK(g300(0) == -1.0);
  CHECK(g300(299) == doctest::Approx(1.0).epsilon(1e-15));
  for (int i = 1; i < 300; ++i) {
    CHECK(g300(i) - g300(i - 1) == doctest::Approx(2.0 / 299.0).epsilon(1e-12));
  }
}

TEST_CASE("CSV round-trip preserves every field") {
  CounterRng rng(787);
  SyntheticDataset data = gen_dataset_b(200, 0.05, rng);
  std::string path = "test_synthdata_roundtrip.csv";
  write_dataset_csv(data, path);
  SyntheticDataset back =
      read_dataset_csv(path, SyntheticDataset::Kind::B, data.noise_sigma, data.seed);
  CHECK(back.n() == data.n());
  CHECK((back.x_c - data.x_c).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.x_t - data.x_t).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.branch_id == data.branch_id);
  CHECK(back.kind == SyntheticDataset::Kind::B);
  std::remove(path.c_str());
}
