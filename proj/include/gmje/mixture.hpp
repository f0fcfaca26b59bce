#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "gmje/gaussian.hpp"
#include "gmje/rng.hpp"

namespace gmje {

/// K-component Gaussian mixture over concatenated joint embeddings Z = [z_c; z_t].
struct JointMixture {
  VectorXd weights;                      // simplex, length K
  std::vector<JointGaussian> components; // shared (d_c, d_t) partition

  JointMixture(VectorXd weights_in, std::vector<JointGaussian> components_in);

  int k() const { return static_cast<int>(components.size()); }
  Eigen::Index dim_c() const { return components.front().dim_c(); }
  Eigen::Index dim_t() const { return components.front().dim_t(); }
};

/// Input-dependent conditional mixture p(z_t | z_c).
struct ConditionalMixture {
  VectorXd responsibilities;        // gamma_k(z_c), simplex
  std::vector<VectorXd> cond_means; // mu_{t|c,k}
  std::vector<MatrixXd> cond_covs;  // Sigma_{t|c,k}

  int k() const { return static_cast<int>(cond_means.size()); }
};

/// Learnable global prototypes: K joint means with a shared covariance or
/// per-component covariances, and unconstrained log-weights (softmax at use).
struct PrototypeSet {
  MatrixXd prototypes;                               // K x D joint means
  std::optional<MatrixXd> shared_cov;                // D x D
  std::optional<std::vector<MatrixXd>> per_component_covs;  // K matrices, D x D
  VectorXd log_weights;                              // K, unconstrained

  int k() const { return static_cast<int>(prototypes.rows()); }
  /// softmax(log_weights) as log-probabilities.
  VectorXd log_pi() const;
};

/// Posterior routing + per-component conditionals:
///   gamma_k(z_c) = pi_k N(z_c | mu_ck, S_cck) / sum_j pi_j N(z_c | mu_cj, S_ccj)
/// computed in log-space; conditionals via exact Gaussian conditioning.
/// Throws AllZeroLikelihood when every component log-density is non-finite.
ConditionalMixture conditional_mixture(const JointMixture& mix, const VectorXd& zc);

/// Marginal mixture of one block: same weights, per-component block marginals.
std::pair<VectorXd, std::vector<Gaussian>> marginal_mixture(const JointMixture& mix, Block block);

/// Log-density of the joint mixture at [zc; zt].
double joint_mixture_logpdf(const JointMixture& mix, const VectorXd& zc, const VectorXd& zt);

/// Log-density of a weighted Gaussian mixture at x.
double mixture_logpdf(const VectorXd& weights, const std::vector<Gaussian>& comps,
                      const VectorXd& x);

/// Prototypical LSE loss with a shared covariance (constants dropped):
///   0.5 log|S| - LSE_k(log pi_k - 0.5 (Z - mu_k)^T S^-1 (Z - mu_k)).
double proto_nll_shared(const VectorXd& z_joint, const PrototypeSet& protos);

/// Fully general prototypical loss with per-component covariances:
///   -LSE_k(log pi_k - 0.5 Mahal_k - 0.5 log|S_k|).
/// Reduces exactly to proto_nll_shared when all S_k are equal.
double proto_nll_full(const VectorXd& z_joint, const PrototypeSet& protos);

/// EM fit of a full-covariance joint GMM with k-means initialization.
/// d_c gives the context-block width of the resulting components (default:
/// half the data dimension). Log-likelihood is monotone non-decreasing;
/// convergence when the relative change drops below tol.
JointMixture em_fit(const MatrixXd& data, int k, int max_iters, double tol, CounterRng& rng,
                    int d_c = -1);

/// Per-iteration average log-likelihood trace of the most recent em_fit call
/// (useful for CLI training curves); see em_fit_with_trace.
JointMixture em_fit_with_trace(const MatrixXd& data, int k, int max_iters, double tol,
                               CounterRng& rng, int d_c, std::vector<double>* loglik_trace);

/// Law of total variance collapse of a conditional mixture:
///   mu_total = sum gamma_k mu_k,
///   S_total  = sum gamma_k S_k + sum gamma_k (mu_k - mu_total)(mu_k - mu_total)^T.
std::pair<VectorXd, MatrixXd> total_variance(const ConditionalMixture& cm);

/// Two-step mixture sampling: categorical draw on the weights, then a
/// Cholesky-based Gaussian draw from the selected component.
MatrixXd sample_mixture(const VectorXd& weights, const std::vector<Gaussian>& components, int n,
                        CounterRng& rng);

/// Sample (component index, point) pairs; indices returned for occupancy tests.
std::pair<std::vector<int>, MatrixXd> sample_mixture_labeled(const VectorXd& weights,
                                                             const std::vector<Gaussian>& components,
                                                             int n, CounterRng& rng);

/// Non-parametric (memory-bank) conditional NLL, the InfoNCE bridge value:
///   -log[ exp(z_c . z_t / tau) / sum_m exp(z_c . z_t^(m) / tau) ].
/// All vectors must be L2-normalized. Throws NotNormalized otherwise.
double dam_conditional_nll(const VectorXd& zc, const VectorXd& zt, const MatrixXd& bank,
                           double tau);

}  // namespace gmje
