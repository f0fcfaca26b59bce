#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "gmje/errors.hpp"
#include "gmje/gaussian.hpp"
#include "gmje/rng.hpp"

namespace gmje {

enum class ResampleScheme { systematic, multinomial };

/// Weighted particle memory bank. In isotropic mode the particles are
/// L2-normalized target embeddings scored by exp(z_c . z / tau); in full_cov
/// mode they are joint means scored by exp(-0.5 Mahalanobis) under a shared
/// covariance (whose normalization constant cancels and is never evaluated).
struct ParticleBank {
  enum class Mode { isotropic, full_cov };

  MatrixXd particles;          // M x d (isotropic) or M x 2d (full_cov)
  VectorXd weights;            // simplex, length M
  double tau = 0.1;
  Mode mode = Mode::isotropic;
  std::optional<MatrixXd> shared_cov;  // full_cov mode only
  std::vector<int> labels;     // optional class labels carried through updates

  static ParticleBank init_isotropic(MatrixXd particles, double tau,
                                     std::vector<int> labels = {});
  static ParticleBank init_full_cov(MatrixXd particles, MatrixXd shared_cov,
                                    std::vector<int> labels = {});

  Eigen::Index size() const { return particles.rows(); }
  void validate() const;
};

/// FIFO (MoCo-style) ring-buffer baseline.
struct FifoBank {
  MatrixXd queue;  // M x d
  Eigen::Index head = 0;
  std::vector<int> labels;

  static FifoBank init(MatrixXd initial, std::vector<int> labels = {});
};

/// SMC-weighted InfoNCE in log-space:
///   -log[ exp(z_c . z_t / tau) / sum_m W^(m) exp(z_c . z^(m) / tau) ].
double weighted_infonce(const VectorXd& zc, const VectorXd& zt_pos, const ParticleBank& bank);

/// Recursive importance update (isotropic mode). Pools the bank with the
/// incoming particles (size M+B), sets prior weights (old entries scaled by
/// M/(M+B), new entries 1/(M+B)), multiplies by the batch-mean
/// likelihood (1/B) sum_q exp(z_q . z^(m) / tau), and normalizes.
/// queries defaults to the incoming particles themselves when null.
ParticleBank importance_update(const ParticleBank& bank, const MatrixXd& incoming,
                               const MatrixXd* queries = nullptr,
                               const std::vector<int>* incoming_labels = nullptr);

/// Full-covariance generalization of the importance update: likelihood
/// exp(-0.5 (Z - mu_m)^T Sigma^-1 (Z - mu_m)); the log-determinant cancels in
/// normalization and is deliberately never computed.
ParticleBank general_importance_update(const ParticleBank& bank, const MatrixXd& incoming,
                                       const std::vector<int>* incoming_labels = nullptr);

/// Effective sample size 1 / sum W^2, in [1, M].
double ess(const VectorXd& weights);

/// Sequential importance resampling: draw target_size particles with
/// replacement proportional to the pool weights, then reset to uniform 1/M.
ParticleBank resample(const ParticleBank& pool, int target_size, CounterRng& rng,
                      ResampleScheme scheme = ResampleScheme::systematic);

/// Ring-buffer push overwriting the oldest entries first.
FifoBank fifo_push(const FifoBank& bank, const MatrixXd& incoming,
                   const std::vector<int>* incoming_labels = nullptr);

/// Synthetic embedding stream: Gaussian clusters around unit mean directions,
/// samples renormalized to the sphere; class draws are i.i.d. per the
/// configured frequencies.
struct StreamConfig {
  int n_classes = 10;
  int dim = 16;
  double rare_freq = 0.01;  // frequency of class 0; the rest split evenly
  double cluster_sigma = 0.1;
  double query_sigma = 0.1;  // augmentation noise between query and key views
  int batch = 32;
  int steps = 50000;
};

struct BankConfig {
  int m = 256;
  double tau = 0.1;
  ResampleScheme scheme = ResampleScheme::systematic;
};

struct SmcStepMetrics {
  long step = 0;
  double smc_ess_pool = 0.0;       // ESS of the pooled weights before resampling
  double smc_ess_post = 0.0;       // ESS after resample-and-reset (== M)
  std::vector<int> smc_class_counts;
  std::vector<int> fifo_class_counts;
  int smc_rare_count = 0;
  int fifo_rare_count = 0;
};

/// Loop-B-only paired simulation: the same stream feeds an SMC bank and a
/// FIFO bank; per-step metrics record ESS and per-class occupancy.
std::vector<SmcStepMetrics> smc_simulation(const StreamConfig& stream, const BankConfig& bank_cfg,
                                           CounterRng& rng);

}  // namespace gmje
