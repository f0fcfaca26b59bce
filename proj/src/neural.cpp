#include "gmje/neural.hpp"

#include <cmath>

namespace gmje {

namespace {
constexpr double kLn2Pi = 1.8378770664093454835606594728112;
}

Mlp Mlp::init(const std::vector<int>& dims, CounterRng& rng, bool relu_on_output) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least one layer");
  Mlp net;
  net.layer_dims = dims;
  net.relu_on_output = relu_on_output;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    int fan_in = dims[l];
    int fan_out = dims[l + 1];
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    MatrixXd w(fan_in, fan_out);
    for (int i = 0; i < fan_in; ++i) {
      for (int j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(VectorXd::Zero(fan_out));
  }
  return net;
}

std::pair<MatrixXd, MlpCache> mlp_forward(const Mlp& net, const MatrixXd& x) {
  if (x.cols() != net.input_dim()) throw std::invalid_argument("mlp_forward: input width mismatch");
  MlpCache cache;
  cache.input = x;
  MatrixXd h = x;
  for (int l = 0; l < net.layer_count(); ++l) {
    MatrixXd pre = (h * net.weights[l]).rowwise() + net.biases[l].transpose();
    bool relu = (l + 1 < net.layer_count()) || net.relu_on_output;
    MatrixXd act = relu ? pre.cwiseMax(0.0).eval() : pre;
    cache.pre.push_back(pre);
    cache.act.push_back(act);
    h = act;
  }
  return {h, std::move(cache)};
}

MlpGrads mlp_backward(const Mlp& net, const MlpCache& cache, const MatrixXd& grad_output) {
  MlpGrads grads;
  grads.d_weights.resize(net.layer_count());
  grads.d_biases.resize(net.layer_count());
  MatrixXd delta = grad_output;
  for (int l = net.layer_count() - 1; l >= 0; --l) {
    bool relu = (l + 1 < net.layer_count()) || net.relu_on_output;
    if (relu) {
      delta = ((cache.pre[l].array() > 0.0).cast<double>() * delta.array()).matrix();
    }
    const MatrixXd& below = (l == 0) ? cache.input : cache.act[l - 1];
    grads.d_weights[l] = below.transpose() * delta;
    grads.d_biases[l] = delta.colwise().sum().transpose();
    delta = delta * net.weights[l].transpose();
  }
  grads.d_input = delta;
  return grads;
}

AdamState AdamState::init(const Mlp& net) {
  AdamState st;
  for (int l = 0; l < net.layer_count(); ++l) {
    st.m_w.push_back(MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    st.v_w.push_back(MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    st.m_b.push_back(VectorXd::Zero(net.biases[l].size()));
    st.v_b.push_back(VectorXd::Zero(net.biases[l].size()));
  }
  return st;
}

void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  state.step += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (int l = 0; l < net.layer_count(); ++l) {
    state.m_w[l] = beta1 * state.m_w[l] + (1.0 - beta1) * grads.d_weights[l];
    state.v_w[l] =
        beta2 * state.v_w[l].array() + (1.0 - beta2) * grads.d_weights[l].array().square();
    net.weights[l].array() -=
        lr * (state.m_w[l].array() / bc1) / ((state.v_w[l].array() / bc2).sqrt() + eps);

    state.m_b[l] = beta1 * state.m_b[l] + (1.0 - beta1) * grads.d_biases[l];
    state.v_b[l] =
        beta2 * state.v_b[l].array() + (1.0 - beta2) * grads.d_biases[l].array().square();
    net.biases[l].array() -=
        lr * (state.m_b[l].array() / bc1) / ((state.v_b[l].array() / bc2).sqrt() + eps);
  }
}

void AdamVec::update(VectorXd& params, const VectorXd& grad, double lr, double beta1, double beta2,
                     double eps) {
  step += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v.array() + (1.0 - beta2) * grad.array().square();
  params.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

Mlp jepa_mse_train(const VectorXd& x_c, const VectorXd& x_t, const TrainConfig& config,
                   std::vector<double>* loss_trace) {
  if (x_c.size() != x_t.size()) throw std::invalid_argument("jepa_mse_train: size mismatch");
  const double n = static_cast<double>(x_c.size());
  CounterRng rng(config.seed);
  Mlp net = Mlp::init({1, config.hidden, config.hidden, 1}, rng);
  AdamState st = AdamState::init(net);
  MatrixXd x = x_c;
  MatrixXd y = x_t;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto [pred, cache] = mlp_forward(net, x);
    MatrixXd resid = pred - y;
    double loss = resid.squaredNorm() / n;
    if (!std::isfinite(loss)) throw Diverged("jepa_mse_train: non-finite loss");
    if (loss_trace) loss_trace->push_back(loss);
    MlpGrads grads = mlp_backward(net, cache, (2.0 / n) * resid);
    adam_step(net, grads, st, config.lr);
  }
  return net;
}

MdnHead MdnHead::init(int hidden, int component_count, int dim_t, double sigma_floor,
                      CounterRng& rng) {
  MdnHead head;
  head.component_count = component_count;
  head.dim_t = dim_t;
  head.sigma_floor = sigma_floor;
  head.linear = Mlp::init({hidden, component_count * (2 + dim_t)}, rng);
  return head;
}

MdnModel MdnModel::init(int dim_c, int dim_t, int hidden, int component_count, double sigma_floor,
                        CounterRng& rng) {
  MdnModel model;
  model.dim_c = dim_c;
  model.dim_t = dim_t;
  model.trunk = Mlp::init({dim_c, hidden, hidden}, rng, /*relu_on_output=*/true);
  model.head = MdnHead::init(hidden, component_count, dim_t, sigma_floor, rng);
  return model;
}

namespace {

MdnParams slice_head_output(const MatrixXd& raw, const MdnHead& head) {
  const int k = head.component_count;
  const int dt = head.dim_t;
  MdnParams p;
  // alpha = softmax(logits), row-wise with max shift.
  MatrixXd logits = raw.leftCols(k);
  VectorXd row_max = logits.rowwise().maxCoeff();
  MatrixXd shifted = ((logits.colwise() - row_max).array().exp()).matrix();
  p.alpha = (shifted.array().colwise() / shifted.rowwise().sum().array()).matrix();
  p.mu = raw.middleCols(k, k * dt);
  p.sigma = (raw.rightCols(k).array().exp() + head.sigma_floor).matrix();
  return p;
}

/// Per-sample mixture NLL pieces shared by loss and gradient paths.
struct MdnEval {
  double nll = 0.0;          // mean over batch
  MatrixXd posterior;        // N x K responsibilities r_k
};

MdnEval mdn_eval(const MdnParams& p, const MatrixXd& targets, int dt) {
  const Eigen::Index n = p.alpha.rows();
  const int k = static_cast<int>(p.alpha.cols());
  MdnEval ev;
  ev.posterior.resize(n, k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    VectorXd scores(k);
    for (int j = 0; j < k; ++j) {
      double sigma = p.sigma(i, j);
      double sq = (targets.row(i) - p.mu.row(i).segment(j * dt, dt)).squaredNorm();
      scores(j) = std::log(p.alpha(i, j)) - dt * std::log(sigma) - 0.5 * sq / (sigma * sigma) -
                  0.5 * dt * kLn2Pi;
    }
    double m = scores.maxCoeff();
    double lse = m + std::log((scores.array() - m).exp().sum());
    total -= lse;
    ev.posterior.row(i) = (scores.array() - lse).exp();
  }
  ev.nll = total / static_cast<double>(n);
  return ev;
}

/// Gradient of the mean mixture NLL w.r.t. the raw head outputs.
MatrixXd mdn_raw_grad(const MdnParams& p, const MdnEval& ev, const MatrixXd& targets,
                      const MdnHead& head) {
  const Eigen::Index n = p.alpha.rows();
  const int k = head.component_count;
  const int dt = head.dim_t;
  MatrixXd grad = MatrixXd::Zero(n, k * (2 + dt));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      double r = ev.posterior(i, j);
      double sigma = p.sigma(i, j);
      Eigen::RowVectorXd diff = p.mu.row(i).segment(j * dt, dt) - targets.row(i);
      // d/d logit
      grad(i, j) = (p.alpha(i, j) - r) * inv_n;
      // d/d mu
      grad.row(i).segment(k + j * dt, dt) = (r / (sigma * sigma)) * diff * inv_n;
      // d/d log-sigma (sigma = exp(s) + floor, so dsigma/ds = sigma - floor)
      double dsq = diff.squaredNorm();
      double dl_dsigma = r * (dt / sigma - dsq / (sigma * sigma * sigma));
      grad(i, k + k * dt + j) = dl_dsigma * (sigma - head.sigma_floor) * inv_n;
    }
  }
  return grad;
}

}  // namespace

MdnParams mdn_forward(const Mlp& trunk, const MdnHead& head, const MatrixXd& x) {
  auto [hidden, trunk_cache] = mlp_forward(trunk, x);
  auto [raw, head_cache] = mlp_forward(head.linear, hidden);
  (void)trunk_cache;
  (void)head_cache;
  return slice_head_output(raw, head);
}

double mdn_nll(const MdnParams& params, const MatrixXd& targets) {
  if (params.alpha.rows() != targets.rows()) {
    throw std::invalid_argument("mdn_nll: batch size mismatch");
  }
  int dt = static_cast<int>(params.mu.cols() / params.alpha.cols());
  return mdn_eval(params, targets, dt).nll;
}

VectorXd gmje_mdn_marginal_grad_zc(const EmaCovariance& ema, const VectorXd& zc) {
  Eigen::LLT<MatrixXd> llt = chol_auto(ema.cov);
  return llt.solve(zc);
}

static double marginal_term(const EmaCovariance& ema, const MatrixXd& zc, MarginalMode mode) {
  Eigen::LLT<MatrixXd> llt = chol_auto(ema.cov);
  double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  if (mode == MarginalMode::entropy_max) return -0.5 * logdet;
  double mahal =
      (zc.array() * llt.solve(zc.transpose()).transpose().array()).sum() / zc.rows();
  return 0.5 * mahal + 0.5 * logdet;
}

double gmje_mdn_loss(const MdnModel& model, const MatrixXd& zc, const MatrixXd& zt,
                     const EmaCovariance& ema, MarginalMode mode) {
  if (zc.cols() != model.dim_c) {
    throw std::invalid_argument(
        "gmje_mdn_loss: context width mismatch - the parameter network only accepts the context "
        "view (identity-collapse guard)");
  }
  if (zt.cols() != model.dim_t) throw std::invalid_argument("gmje_mdn_loss: target width mismatch");
  MdnParams params = mdn_forward(model.trunk, model.head, zc);
  return marginal_term(ema, zc, mode) + mdn_nll(params, zt);
}

EmaCovariance ema_cov_update(const EmaCovariance& ema, const MatrixXd& zc_batch) {
  if (zc_batch.rows() < 2) throw std::invalid_argument("ema_cov_update: need N >= 2");
  MatrixXd batch_cov =
      zc_batch.transpose() * zc_batch / static_cast<double>(zc_batch.rows());
  EmaCovariance out;
  out.momentum = ema.momentum;
  out.cov = symmetrized(ema.momentum * ema.cov + (1.0 - ema.momentum) * batch_cov);
  Eigen::LLT<MatrixXd> llt(out.cov);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all()) {
    out.cov.diagonal().array() += kJitterFirst;  // jitter floor
  }
  return out;
}

std::pair<MlpGrads, MlpGrads> mdn_loss_grads(const MdnModel& model, const MatrixXd& zc,
                                             const MatrixXd& zt) {
  auto [hidden, trunk_cache] = mlp_forward(model.trunk, zc);
  auto [raw, head_cache] = mlp_forward(model.head.linear, hidden);
  MdnParams params = slice_head_output(raw, model.head);
  MdnEval ev = mdn_eval(params, zt, model.head.dim_t);
  MatrixXd raw_grad = mdn_raw_grad(params, ev, zt, model.head);
  MlpGrads head_grads = mlp_backward(model.head.linear, head_cache, raw_grad);
  MlpGrads trunk_grads = mlp_backward(model.trunk, trunk_cache, head_grads.d_input);
  return {std::move(trunk_grads), std::move(head_grads)};
}

void mdn_train(MdnModel& model, const MatrixXd& zc, const MatrixXd& zt, const TrainConfig& config,
               MarginalMode mode, std::vector<double>* loss_trace) {
  if (zc.cols() != model.dim_c) {
    throw std::invalid_argument(
        "mdn_train: context width mismatch - the parameter network only accepts the context view "
        "(identity-collapse guard)");
  }
  if (zt.cols() != model.dim_t) throw std::invalid_argument("mdn_train: target width mismatch");

  AdamState trunk_state = AdamState::init(model.trunk);
  AdamState head_state = AdamState::init(model.head.linear);
  EmaCovariance ema{MatrixXd::Identity(model.dim_c, model.dim_c), 0.99};

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto [hidden, trunk_cache] = mlp_forward(model.trunk, zc);
    auto [raw, head_cache] = mlp_forward(model.head.linear, hidden);
    MdnParams params = slice_head_output(raw, model.head);
    MdnEval ev = mdn_eval(params, zt, model.head.dim_t);
    double loss = marginal_term(ema, zc, mode) + ev.nll;
    if (!std::isfinite(loss)) throw Diverged("mdn_train: non-finite loss");
    if (loss_trace) loss_trace->push_back(loss);

    MatrixXd raw_grad = mdn_raw_grad(params, ev, zt, model.head);
    MlpGrads head_grads = mlp_backward(model.head.linear, head_cache, raw_grad);
    MlpGrads trunk_grads = mlp_backward(model.trunk, trunk_cache, head_grads.d_input);
    adam_step(model.head.linear, head_grads, head_state, config.lr);
    adam_step(model.trunk, trunk_grads, trunk_state, config.lr);

    // The EMA covariance is frozen within the step and refreshed afterwards.
    ema = ema_cov_update(ema, zc);
  }
}

}  // namespace gmje
