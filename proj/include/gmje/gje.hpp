#pragma once

#include <Eigen/Dense>

#include "gmje/gaussian.hpp"
#include "gmje/rng.hpp"

namespace gmje {

/// A batch of N paired context/target embeddings (rows).
struct BatchEmbeddings {
  MatrixXd z_c;  // N x d_c
  MatrixXd z_t;  // N x d_t

  BatchEmbeddings(MatrixXd z_c_in, MatrixXd z_t_in);

  Eigen::Index n() const { return z_c.rows(); }
  Eigen::Index dim_c() const { return z_c.cols(); }
  Eigen::Index dim_t() const { return z_t.cols(); }
  Eigen::Index dim() const { return dim_c() + dim_t(); }

  /// Concatenated joint matrix Z = [Z_c  Z_t], N x (d_c + d_t).
  MatrixXd joint() const;
};

/// Kernel choice for the dual (sample-space) view.
struct KernelSpec {
  enum class Kind { linear, rbf };
  Kind kind = Kind::linear;
  double length_scale = 1.0;  // rbf only
  double noise = 0.0;         // observation noise sigma^2, merged onto the Gram diagonal

  static KernelSpec linear(double noise = 0.0);
  static KernelSpec rbf(double length_scale, double noise = 0.0);
};

/// Random Fourier feature projection for the RBF kernel:
///   psi(x) = sqrt(2/D) cos(x^T Omega + b), Omega ~ N(0, l^-2 I), b ~ U[0, 2pi).
struct RffProjection {
  MatrixXd frequencies;  // d_c x D
  VectorXd phases;       // D
  double bandwidth;      // RBF length scale l
  int feature_count;     // D

  static RffProjection make(int dim_c, int feature_count, double length_scale, CounterRng& rng);
};

/// Kernel Gram matrix k(x_i, x_j) over the rows of a and b.
MatrixXd gram(const MatrixXd& a, const MatrixXd& b, const KernelSpec& kernel);

/// Single kernel evaluation k(x, y).
double kernel_eval(const VectorXd& x, const VectorXd& y, const KernelSpec& kernel);

/// Zero-mean empirical joint covariance C = Z^T Z / N, partitioned into blocks.
JointGaussian empirical_joint_cov(const BatchEmbeddings& batch);

/// Primal joint NLL (constants dropped):
///   (1/2N) sum_i z_i^T C^-1 z_i + 0.5 logdet C, with C = Z^T Z / N + jitter I.
double primal_joint_nll(const BatchEmbeddings& batch, double jitter);

/// The Mahalanobis data-fit term alone, evaluated with zero jitter against the
/// batch's own empirical covariance. Algebraically a dead constant: Tr(C^-1 C)
/// cancellation forces the value to d/2 and kills its gradient.
/// Requires N > d and a full-rank batch (throws RankDeficient otherwise).
double trace_trap_datafit(const BatchEmbeddings& batch);

/// Explicit entropy-maximization remedy: -0.5 logdet(C + jitter I).
double entropy_max_loss(const BatchEmbeddings& batch, double jitter);

/// Optimal linear readout from a (zero-mean) joint covariance:
///   mean = C_tc C_cc^-1 z_c*,  cov = C_tt - C_tc C_cc^-1 C_ct.
Gaussian primal_predict(const JointGaussian& cov, const VectorXd& zc_star);

/// Dual (GP-view) objective over target channels:
///   0.5 Tr(Z_t^T K^-1 Z_t) + (d_t/2) logdet K,
/// with K the context Gram matrix plus (noise + jitter) on the diagonal.
double dual_nll(const BatchEmbeddings& batch, const KernelSpec& kernel, double jitter);

/// GP predictive distribution at a new context point:
///   mean = k_*c K^-1 Z_t; scalar variance k_** - k_*c K^-1 k_c* broadcast
///   isotropically over the d_t target channels.
Gaussian dual_predict(const BatchEmbeddings& train, const KernelSpec& kernel,
                      const VectorXd& zc_star, double jitter);

/// Linear-kernel primal-dual identity residual on the joint embedding Z:
///   | [0.5 Tr(Z^T (ZZ^T + eps I)^-1 Z) + 0.5 log|ZZ^T + eps I|]
///     - [0.5 (log|C| - eps tr C^-1) + d/2 + ((N-d)/2) ln eps] |,
/// with C = Z^T Z + eps I. Exact algebra; the contract is residual <= 1e-6.
double primal_dual_residual(const BatchEmbeddings& batch, double jitter);

/// Random Fourier features psi = sqrt(2/D) cos(Z_c Omega + b), N x D.
MatrixXd rff_features(const MatrixXd& z_c, const RffProjection& proj);

/// Dual NLL through the Woodbury / Weinstein-Aronszajn identities:
///   K = Psi Psi^T + eps I_N is never materialized;
///   K^-1 via eps^-1 I - eps^-1 Psi C^-1 Psi^T and log|K| = log|C| + (N-D) ln eps,
///   with C = Psi^T Psi + eps I_D.
double rff_dual_nll(const MatrixXd& features, const MatrixXd& z_t, double epsilon);

/// Empirical HSIC: Tr(K_c H K_t H) / (N-1)^2 with H = I - (1/N) 11^T.
double hsic(const MatrixXd& z_c, const MatrixXd& z_t, const KernelSpec& kernel_c,
            const KernelSpec& kernel_t);

/// RBF length scale from the median pairwise distance heuristic.
double median_pairwise_distance(const MatrixXd& x);

/// EMA blend used by the dual training harness: target <- m*target + (1-m)*online.
void ema_blend(MatrixXd& target, const MatrixXd& online, double momentum = 0.99);

}  // namespace gmje
