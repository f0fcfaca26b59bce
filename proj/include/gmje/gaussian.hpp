#pragma once

#include <Eigen/Dense>
#include <utility>

#include "gmje/errors.hpp"
#include "gmje/rng.hpp"

namespace gmje {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Jitter policy shared across the library: try the raw matrix first, then
/// retry with 1e-8 on the diagonal, then 1e-6, then give up.
inline constexpr double kJitterFirst = 1e-8;
inline constexpr double kJitterSecond = 1e-6;

/// Symmetrize a nominally-symmetric matrix: (A + A^T) / 2.
inline MatrixXd symmetrized(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

/// Cholesky factorization with an explicit jitter: factor * factor^T = cov + jitter*I.
/// Returns (lower-triangular factor, log-determinant of the jittered matrix).
/// Throws NotPositiveDefinite if the factorization fails at this jitter.
std::pair<MatrixXd, double> chol_logdet(const MatrixXd& cov, double jitter);

/// Cholesky under the library jitter policy (0 -> 1e-8 -> 1e-6 -> error).
/// If used_jitter is non-null it receives the jitter that succeeded.
Eigen::LLT<MatrixXd> chol_auto(const MatrixXd& cov, double* used_jitter = nullptr);

/// Multivariate normal N(mean, cov). The covariance is symmetrized on
/// construction and must be positive definite under the jitter policy.
struct Gaussian {
  VectorXd mean;
  MatrixXd cov;

  Gaussian(VectorXd mean_in, MatrixXd cov_in);
  Eigen::Index dim() const { return mean.size(); }
};

/// Joint Gaussian over concatenated context/target blocks [z_c; z_t].
/// Off-diagonal blocks must be transposes of each other; the diagonal blocks
/// are symmetrized on construction. Positive definiteness of the assembled
/// covariance is checked by the operations that require it (an empirical
/// covariance with N < d is legitimately singular until jittered downstream).
struct JointGaussian {
  VectorXd mean_c;
  VectorXd mean_t;
  MatrixXd cov_cc;
  MatrixXd cov_ct;
  MatrixXd cov_tc;
  MatrixXd cov_tt;

  JointGaussian(VectorXd mean_c_in, VectorXd mean_t_in, MatrixXd cov_cc_in,
                MatrixXd cov_ct_in, MatrixXd cov_tc_in, MatrixXd cov_tt_in);

  Eigen::Index dim_c() const { return mean_c.size(); }
  Eigen::Index dim_t() const { return mean_t.size(); }
  Eigen::Index dim() const { return dim_c() + dim_t(); }

  /// Assembled full mean [mu_c; mu_t].
  VectorXd full_mean() const;
  /// Assembled full covariance [[cc, ct], [tc, tt]].
  MatrixXd full_cov() const;
  /// The joint as a single flat Gaussian (validates positive definiteness).
  Gaussian full_gaussian() const;
};

/// Blockwise inverse (precision) of a JointGaussian covariance.
struct PrecisionBlocks {
  MatrixXd lambda_cc;
  MatrixXd lambda_ct;
  MatrixXd lambda_tc;
  MatrixXd lambda_tt;
};

enum class Block { context, target };

/// Conditional p(z_t | z_c = observed_zc):
///   mean = mu_t + S_tc S_cc^-1 (z_c - mu_c),  cov = S_tt - S_tc S_cc^-1 S_ct.
/// The covariance (Schur complement) does not depend on the observation.
Gaussian condition(const JointGaussian& joint, const VectorXd& observed_zc);

/// Marginal of one block: simply (mu_block, Sigma_block,block).
Gaussian marginalize(const JointGaussian& joint, Block block);

/// Negative log-density: 0.5 * [logdet Sigma + (x-mu)^T Sigma^-1 (x-mu) + d ln 2pi].
double mvn_nll(const VectorXd& x, const Gaussian& g);

/// Draw n samples (rows) via mu + L eps with L the Cholesky factor.
MatrixXd sample(const Gaussian& g, int n, CounterRng& rng);

/// Differential entropy in nats: (d/2)(1 + ln 2pi) + 0.5 logdet Sigma.
double entropy(const Gaussian& g);

/// Mutual information between the blocks in nats:
///   0.5 * ln(det S_cc * det S_tt / det S).
double mutual_information(const JointGaussian& joint);

/// KL(g0 || g1) in nats:
///   0.5 * [tr(S1^-1 S0) + (mu1-mu0)^T S1^-1 (mu1-mu0) - d + ln(det S1 / det S0)].
/// Divide by ln 2 for bits (see kl_divergence_bits).
double kl_divergence(const Gaussian& g0, const Gaussian& g1);

/// KL divergence converted to bits: kl_divergence / ln 2.
double kl_divergence_bits(const Gaussian& g0, const Gaussian& g1);

/// Blockwise inversion of the assembled covariance. Both Schur forms agree;
/// the returned blocks satisfy Lambda * Sigma = I and
/// lambda_tt = (S_tt - S_tc S_cc^-1 S_ct)^-1.
PrecisionBlocks block_invert(const JointGaussian& joint);

}  // namespace gmje
