#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gmje/gaussian.hpp"
#include "gmje/rng.hpp"

namespace gmje {

/// Fixed-architecture feed-forward network (affine + ReLU stack) with exact
/// manual backpropagation. ReLU is applied after every layer except the last;
/// relu_on_output turns it on for the last layer too (MDN trunk).
struct Mlp {
  std::vector<int> layer_dims;     // e.g. {1, 64, 64, 1}
  std::vector<MatrixXd> weights;   // layer l: (in_l x out_l)
  std::vector<VectorXd> biases;    // layer l: out_l
  bool relu_on_output = false;

  static Mlp init(const std::vector<int>& dims, CounterRng& rng, bool relu_on_output = false);

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }
};

/// Forward-pass cache sufficient for exact backprop.
struct MlpCache {
  MatrixXd input;
  std::vector<MatrixXd> pre;  // pre-activations per layer
  std::vector<MatrixXd> act;  // post-activations per layer
};

/// Parameter gradients plus the gradient w.r.t. the network input.
struct MlpGrads {
  std::vector<MatrixXd> d_weights;
  std::vector<VectorXd> d_biases;
  MatrixXd d_input;
};

std::pair<MatrixXd, MlpCache> mlp_forward(const Mlp& net, const MatrixXd& x);
MlpGrads mlp_backward(const Mlp& net, const MlpCache& cache, const MatrixXd& grad_output);

/// Adam state for an Mlp (first/second moments per parameter tensor).
struct AdamState {
  std::vector<MatrixXd> m_w, v_w;
  std::vector<VectorXd> m_b, v_b;
  long step = 0;

  static AdamState init(const Mlp& net);
};

/// One Adam update with bias correction (defaults per the experiment setup).
void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state, double lr = 1e-2,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Generic Adam over a flat parameter vector (used for tests and small heads).
struct AdamVec {
  VectorXd m, v;
  long step = 0;

  explicit AdamVec(Eigen::Index n) : m(VectorXd::Zero(n)), v(VectorXd::Zero(n)) {}
  void update(VectorXd& params, const VectorXd& grad, double lr = 1e-2, double beta1 = 0.9,
              double beta2 = 0.999, double eps = 1e-8);
};

struct TrainConfig {
  int epochs = 1200;
  double lr = 1e-2;
  std::uint64_t seed = 111;
  int hidden = 64;
};

/// Classic JEPA baseline: 1 -> 64 -> 64 -> 1 MLP trained with full-batch MSE.
/// Returns the trained network; loss_trace (optional) records the per-epoch
/// MSE. Throws Diverged on non-finite loss.
Mlp jepa_mse_train(const VectorXd& x_c, const VectorXd& x_t, const TrainConfig& config,
                   std::vector<double>* loss_trace = nullptr);

/// Mixture-density head: one linear layer hidden -> (K logits, K*d_t means,
/// K log-sigmas), with alpha = softmax(logits) and sigma = exp(.) + floor
/// (isotropic per component).
struct MdnHead {
  int component_count = 3;
  int dim_t = 1;
  double sigma_floor = 1e-5;
  Mlp linear;  // single affine layer, hidden -> K + K*d_t + K

  static MdnHead init(int hidden, int component_count, int dim_t, double sigma_floor,
                      CounterRng& rng);
};

/// Per-sample mixture parameters produced by the MDN.
struct MdnParams {
  MatrixXd alpha;  // N x K
  MatrixXd mu;     // N x (K * d_t), component-major
  MatrixXd sigma;  // N x K
};

/// Full MDN model with the conditional information bottleneck baked in: the
/// trunk may only observe the context view (input width d_c), never the joint.
struct MdnModel {
  int dim_c = 1;
  int dim_t = 1;
  Mlp trunk;     // d_c -> hidden -> hidden, ReLU throughout
  MdnHead head;

  static MdnModel init(int dim_c, int dim_t, int hidden, int component_count, double sigma_floor,
                       CounterRng& rng);
};

/// EMA-tracked context covariance for the marginal regularizer.
struct EmaCovariance {
  MatrixXd cov;
  double momentum = 0.99;
};

/// Marginal-regularizer variants: the literal objective (+0.5 Mahalanobis
/// +0.5 log|Sigma_EMA|) or the explicit entropy-maximization remedy
/// (-0.5 log|Sigma_EMA|, no Mahalanobis barrier).
enum class MarginalMode { objective, entropy_max };

MdnParams mdn_forward(const Mlp& trunk, const MdnHead& head, const MatrixXd& x);

/// Negative mean log mixture likelihood, computed by log-sum-exp.
double mdn_nll(const MdnParams& params, const MatrixXd& targets);

/// GMJE-MDN objective: batch mean of the marginal term (per MarginalMode, with
/// Sigma_EMA held constant within the step) plus the conditional MDN NLL.
/// Enforces the context-only bottleneck: zc must have model.dim_c columns.
double gmje_mdn_loss(const MdnModel& model, const MatrixXd& zc, const MatrixXd& zt,
                     const EmaCovariance& ema, MarginalMode mode = MarginalMode::objective);

/// Analytic gradient of the marginal Mahalanobis term w.r.t. one z_c row:
/// Sigma_EMA^-1 z_c (the EMA covariance is frozen within the step).
VectorXd gmje_mdn_marginal_grad_zc(const EmaCovariance& ema, const VectorXd& zc);

/// EMA covariance update: cov <- m*cov + (1-m)*(Zc^T Zc / N), jitter-floored
/// only if the blend loses positive definiteness.
EmaCovariance ema_cov_update(const EmaCovariance& ema, const MatrixXd& zc_batch);

/// Analytic parameter gradients of the conditional NLL term of the objective
/// (the marginal term is parameter-constant because Sigma_EMA is frozen and
/// z_c is data at this scale). Returns (trunk grads, head grads); exposed for
/// finite-difference verification.
std::pair<MlpGrads, MlpGrads> mdn_loss_grads(const MdnModel& model, const MatrixXd& zc,
                                             const MatrixXd& zt);

/// Full-batch Adam training of the MDN on (zc, zt) pairs minimizing the
/// GMJE-MDN objective (marginal term per mode; only the conditional NLL
/// carries parameter gradients since Sigma_EMA is frozen per step and z_c is
/// data at this scale). loss_trace records the per-epoch objective.
void mdn_train(MdnModel& model, const MatrixXd& zc, const MatrixXd& zt, const TrainConfig& config,
               MarginalMode mode = MarginalMode::objective,
               std::vector<double>* loss_trace = nullptr);

}  // namespace gmje
