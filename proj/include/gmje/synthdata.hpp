#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gmje/rng.hpp"

namespace gmje {

using Eigen::VectorXd;

/// Synthetic ambiguous-alignment dataset: context x_c ~ U(-1,1), a uniformly
/// chosen branch f, and target x_t = f(x_c) + N(0, noise^2). The generating
/// branch is recorded for evaluation only; models never see it.
struct SyntheticDataset {
  enum class Kind { A, B };

  Kind kind;
  VectorXd x_c;
  VectorXd x_t;
  std::vector<int> branch_id;  // 0..2
  double noise_sigma;
  std::uint64_t seed;

  Eigen::Index n() const { return x_c.size(); }
};

/// Branch functions of Dataset A (separated): {x^2 + 0.5, -x^2 - 0.5, x^3}.
double branch_a(int branch, double x);
/// Branch functions of Dataset B (intersecting): {sin 3x, -sin 3x, 0}.
double branch_b(int branch, double x);
/// Dispatch on dataset kind.
double branch_value(SyntheticDataset::Kind kind, int branch, double x);

/// Pointwise conditional mean E[x_t | x_c] (average of the three branches).
double conditional_mean(SyntheticDataset::Kind kind, double x);

SyntheticDataset gen_dataset_a(int n, double noise, CounterRng& rng);
SyntheticDataset gen_dataset_b(int n, double noise, CounterRng& rng);

/// Evenly spaced evaluation grid on [-1, 1], endpoints included.
VectorXd eval_grid(int count);

/// CSV with header "x_c,x_t,branch_id".
void write_dataset_csv(const SyntheticDataset& data, const std::string& path);
SyntheticDataset read_dataset_csv(const std::string& path, SyntheticDataset::Kind kind,
                                  double noise_sigma, std::uint64_t seed);

}  // namespace gmje
