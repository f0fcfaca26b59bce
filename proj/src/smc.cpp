#include "gmje/smc.hpp"

#include <cmath>

namespace gmje {

namespace {

double logsumexp(const VectorXd& v) {
  double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

void check_rows_normalized(const MatrixXd& rows, const char* what) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if (std::abs(rows.row(i).norm() - 1.0) > 1e-6) {
      throw NotNormalized(std::string(what) + ": row not L2-normalized");
    }
  }
}

}  // namespace

ParticleBank ParticleBank::init_isotropic(MatrixXd particles, double tau,
                                          std::vector<int> labels) {
  if (tau <= 0.0) throw std::invalid_argument("ParticleBank: tau must be > 0");
  check_rows_normalized(particles, "ParticleBank");
  ParticleBank bank;
  const Eigen::Index m = particles.rows();
  bank.particles = std::move(particles);
  bank.weights = VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  bank.tau = tau;
  bank.mode = Mode::isotropic;
  bank.labels = std::move(labels);
  return bank;
}

ParticleBank ParticleBank::init_full_cov(MatrixXd particles, MatrixXd shared_cov,
                                         std::vector<int> labels) {
  ParticleBank bank;
  const Eigen::Index m = particles.rows();
  bank.particles = std::move(particles);
  bank.weights = VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  bank.mode = Mode::full_cov;
  bank.shared_cov = std::move(shared_cov);
  bank.labels = std::move(labels);
  chol_auto(*bank.shared_cov);
  return bank;
}

void ParticleBank::validate() const {
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-10) {
    throw std::invalid_argument("ParticleBank: weights are not a simplex");
  }
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != particles.rows()) {
    throw std::invalid_argument("ParticleBank: label count mismatch");
  }
}

double weighted_infonce(const VectorXd& zc, const VectorXd& zt_pos, const ParticleBank& bank) {
  if (bank.mode != ParticleBank::Mode::isotropic) {
    throw std::invalid_argument("weighted_infonce: isotropic mode required");
  }
  if (std::abs(zc.norm() - 1.0) > 1e-6 || std::abs(zt_pos.norm() - 1.0) > 1e-6) {
    throw NotNormalized("weighted_infonce: inputs must be L2-normalized");
  }
  // log sum_m W^(m) exp(s_m / tau) = LSE_m(log W^(m) + s_m / tau), in log-space.
  VectorXd scores = (bank.particles * zc / bank.tau).array() + bank.weights.array().log();
  return -(zc.dot(zt_pos) / bank.tau - logsumexp(scores));
}

namespace {

/// Shared pooling pipeline: concatenate, set prior weights per the literal
/// algorithm lines, multiply by the given per-particle likelihoods, normalize.
ParticleBank pool_and_reweight(const ParticleBank& bank, const MatrixXd& incoming,
                               const VectorXd& log_likelihood,
                               const std::vector<int>* incoming_labels) {
  const Eigen::Index m = bank.size();
  const Eigen::Index b = incoming.rows();
  ParticleBank pool = bank;
  pool.particles.conservativeResize(m + b, Eigen::NoChange);
  pool.particles.bottomRows(b) = incoming;
  if (!bank.labels.empty()) {
    if (!incoming_labels || static_cast<Eigen::Index>(incoming_labels->size()) != b) {
      throw std::invalid_argument("importance_update: incoming labels required");
    }
    pool.labels.insert(pool.labels.end(), incoming_labels->begin(), incoming_labels->end());
  }
  const double scale = static_cast<double>(m) / static_cast<double>(m + b);
  VectorXd log_prior(m + b);
  log_prior.head(m) = (bank.weights.array() * scale).log();
  log_prior.tail(b).setConstant(-std::log(static_cast<double>(m + b)));
  VectorXd log_w = log_prior + log_likelihood;
  pool.weights = (log_w.array() - logsumexp(log_w)).exp();
  pool.weights /= pool.weights.sum();  // kill residual round-off
  return pool;
}

}  // namespace

ParticleBank importance_update(const ParticleBank& bank, const MatrixXd& incoming,
                               const MatrixXd* queries, const std::vector<int>* incoming_labels) {
  if (bank.mode != ParticleBank::Mode::isotropic) {
    throw std::invalid_argument("importance_update: isotropic mode required");
  }
  check_rows_normalized(incoming, "importance_update");
  const MatrixXd& q = queries ? *queries : incoming;
  check_rows_normalized(q, "importance_update queries");
  const Eigen::Index m = bank.size();
  const Eigen::Index b = incoming.rows();
  const double inv_b = 1.0 / static_cast<double>(q.rows());

  // Likelihood of each pool particle under the batch queries, in log-space:
  // log[(1/B) sum_q exp(z_q . z^(m) / tau)].
  VectorXd log_lik(m + b);
  MatrixXd sims_old = bank.particles * q.transpose() / bank.tau;  // M x B
  MatrixXd sims_new = incoming * q.transpose() / bank.tau;        // B x B
  for (Eigen::Index i = 0; i < m; ++i) {
    log_lik(i) = logsumexp(sims_old.row(i).transpose()) + std::log(inv_b);
  }
  for (Eigen::Index i = 0; i < b; ++i) {
    log_lik(m + i) = logsumexp(sims_new.row(i).transpose()) + std::log(inv_b);
  }
  return pool_and_reweight(bank, incoming, log_lik, incoming_labels);
}

ParticleBank general_importance_update(const ParticleBank& bank, const MatrixXd& incoming,
                                       const std::vector<int>* incoming_labels) {
  if (bank.mode != ParticleBank::Mode::full_cov || !bank.shared_cov) {
    throw std::invalid_argument("general_importance_update: full_cov mode required");
  }
  Eigen::LLT<MatrixXd> llt = chol_auto(*bank.shared_cov);
  const Eigen::Index m = bank.size();
  const Eigen::Index b = incoming.rows();
  const double inv_b = 1.0 / static_cast<double>(b);

  // log[(1/B) sum_q exp(-0.5 (Z_q - mu_m)^T Sigma^-1 (Z_q - mu_m))].
  // No log-determinant: it cancels in the weight normalization.
  auto log_lik_of = [&](const Eigen::RowVectorXd& mu) {
    VectorXd scores(b);
    for (Eigen::Index qi = 0; qi < b; ++qi) {
      VectorXd r = (incoming.row(qi) - mu).transpose();
      scores(qi) = -0.5 * r.dot(llt.solve(r));
    }
    return logsumexp(scores) + std::log(inv_b);
  };
  VectorXd log_lik(m + b);
  for (Eigen::Index i = 0; i < m; ++i) log_lik(i) = log_lik_of(bank.particles.row(i));
  for (Eigen::Index i = 0; i < b; ++i) log_lik(m + i) = log_lik_of(incoming.row(i));
  return pool_and_reweight(bank, incoming, log_lik, incoming_labels);
}

double ess(const VectorXd& weights) {
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-10) {
    throw std::invalid_argument("ess: weights are not a simplex");
  }
  return 1.0 / weights.array().square().sum();
}

ParticleBank resample(const ParticleBank& pool, int target_size, CounterRng& rng,
                      ResampleScheme scheme) {
  if (pool.size() < 1) throw std::invalid_argument("resample: empty pool");
  std::vector<Eigen::Index> picks;
  picks.reserve(target_size);
  const Eigen::Index n = pool.size();
  if (scheme == ResampleScheme::systematic) {
    double u0 = rng.uniform() / target_size;
    double cum = pool.weights(0);
    Eigen::Index j = 0;
    for (int i = 0; i < target_size; ++i) {
      double u = u0 + static_cast<double>(i) / target_size;
      while (cum < u && j + 1 < n) cum += pool.weights(++j);
      picks.push_back(j);
    }
  } else {
    VectorXd cdf(n);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      acc += pool.weights(j);
      cdf(j) = acc;
    }
    for (int i = 0; i < target_size; ++i) {
      double u = rng.uniform();
      Eigen::Index j = 0;
      while (j + 1 < n && cdf(j) <= u) ++j;
      picks.push_back(j);
    }
  }
  ParticleBank out = pool;
  out.particles.resize(target_size, pool.particles.cols());
  if (!pool.labels.empty()) out.labels.resize(target_size);
  for (int i = 0; i < target_size; ++i) {
    out.particles.row(i) = pool.particles.row(picks[i]);
    if (!pool.labels.empty()) out.labels[i] = pool.labels[picks[i]];
  }
  out.weights = VectorXd::Constant(target_size, 1.0 / target_size);
  return out;
}

FifoBank FifoBank::init(MatrixXd initial, std::vector<int> labels) {
  FifoBank bank;
  bank.queue = std::move(initial);
  bank.labels = std::move(labels);
  return bank;
}

FifoBank fifo_push(const FifoBank& bank, const MatrixXd& incoming,
                   const std::vector<int>* incoming_labels) {
  if (incoming.rows() > bank.queue.rows()) {
    throw std::invalid_argument("fifo_push: batch larger than the queue");
  }
  FifoBank out = bank;
  for (Eigen::Index i = 0; i < incoming.rows(); ++i) {
    out.queue.row(out.head) = incoming.row(i);
    if (!out.labels.empty()) {
      if (!incoming_labels) throw std::invalid_argument("fifo_push: labels required");
      out.labels[out.head] = (*incoming_labels)[i];
    }
    out.head = (out.head + 1) % out.queue.rows();
  }
  return out;
}

std::vector<SmcStepMetrics> smc_simulation(const StreamConfig& stream, const BankConfig& bank_cfg,
                                           CounterRng& rng) {
  const int k = stream.n_classes;
  const int d = stream.dim;

  // Class mean directions on the unit sphere.
  MatrixXd means(k, d);
  for (int c = 0; c < k; ++c) {
    for (int j = 0; j < d; ++j) means(c, j) = rng.normal();
    means.row(c).normalize();
  }
  VectorXd freq(k);
  freq(0) = stream.rare_freq;
  freq.tail(k - 1).setConstant((1.0 - stream.rare_freq) / (k - 1));
  VectorXd cdf(k);
  double acc = 0.0;
  for (int c = 0; c < k; ++c) {
    acc += freq(c);
    cdf(c) = acc;
  }

  auto draw_class = [&]() {
    double u = rng.uniform();
    int c = 0;
    while (c + 1 < k && cdf(c) <= u) ++c;
    return c;
  };
  auto draw_point = [&](int c, double sigma) {
    VectorXd v = means.row(c).transpose();
    for (int j = 0; j < d; ++j) v(j) += sigma * rng.normal();
    v.normalize();
    return v;
  };

  // Shared warm-up fill: both banks start from the same M stream samples.
  const int m = bank_cfg.m;
  MatrixXd initial(m, d);
  std::vector<int> initial_labels(m);
  for (int i = 0; i < m; ++i) {
    int c = draw_class();
    initial_labels[i] = c;
    initial.row(i) = draw_point(c, stream.cluster_sigma).transpose();
  }
  ParticleBank smc = ParticleBank::init_isotropic(initial, bank_cfg.tau, initial_labels);
  FifoBank fifo = FifoBank::init(initial, initial_labels);

  std::vector<SmcStepMetrics> out;
  out.reserve(stream.steps);
  MatrixXd keys(stream.batch, d);
  MatrixXd queries(stream.batch, d);
  std::vector<int> batch_labels(stream.batch);

  for (int t = 0; t < stream.steps; ++t) {
    for (int i = 0; i < stream.batch; ++i) {
      int c = draw_class();
      batch_labels[i] = c;
      keys.row(i) = draw_point(c, stream.cluster_sigma).transpose();
      // Query is an augmented view of the same underlying sample.
      VectorXd q = keys.row(i).transpose();
      for (int j = 0; j < d; ++j) q(j) += stream.query_sigma * rng.normal();
      q.normalize();
      queries.row(i) = q.transpose();
    }

    ParticleBank pool = importance_update(smc, keys, &queries, &batch_labels);
    SmcStepMetrics metrics;
    metrics.step = t;
    metrics.smc_ess_pool = ess(pool.weights);
    smc = resample(pool, m, rng, bank_cfg.scheme);
    metrics.smc_ess_post = ess(smc.weights);
    fifo = fifo_push(fifo, keys, &batch_labels);

    metrics.smc_class_counts.assign(k, 0);
    metrics.fifo_class_counts.assign(k, 0);
    for (int label : smc.labels) ++metrics.smc_class_counts[label];
    for (int label : fifo.labels) ++metrics.fifo_class_counts[label];
    metrics.smc_rare_count = metrics.smc_class_counts[0];
    metrics.fifo_rare_count = metrics.fifo_class_counts[0];
    out.push_back(std::move(metrics));
  }
  return out;
}

}  // namespace gmje
