#include "gmje/mixture.hpp"

#include <cmath>
#include <limits>

namespace gmje {

namespace {
constexpr double kLn2Pi = 1.8378770664093454835606594728112;

double logsumexp(const VectorXd& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

double log_gaussian(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
  Eigen::LLT<MatrixXd> llt = chol_auto(cov);
  VectorXd r = x - mean;
  double mahal = r.dot(llt.solve(r));
  double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (logdet + mahal + static_cast<double>(x.size()) * kLn2Pi);
}
}  // namespace

JointMixture::JointMixture(VectorXd weights_in, std::vector<JointGaussian> components_in)
    : weights(std::move(weights_in)), components(std::move(components_in)) {
  if (components.empty()) throw std::invalid_argument("JointMixture: no components");
  if (weights.size() != static_cast<Eigen::Index>(components.size())) {
    throw std::invalid_argument("JointMixture: weight/component count mismatch");
  }
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-10) {
    throw std::invalid_argument("JointMixture: weights must be a simplex");
  }
  for (const auto& c : components) {
    if (c.dim_c() != components.front().dim_c() || c.dim_t() != components.front().dim_t()) {
      throw std::invalid_argument("JointMixture: components disagree on (d_c, d_t)");
    }
  }
}

VectorXd PrototypeSet::log_pi() const {
  double lse = logsumexp(log_weights);
  return log_weights.array() - lse;
}

ConditionalMixture conditional_mixture(const JointMixture& mix, const VectorXd& zc) {
  const int k = mix.k();
  VectorXd log_gamma(k);
  for (int j = 0; j < k; ++j) {
    const auto& comp = mix.components[j];
    log_gamma(j) = std::log(mix.weights(j)) + log_gaussian(zc, comp.mean_c, comp.cov_cc);
  }
  double lse = logsumexp(log_gamma);
  if (!std::isfinite(lse)) {
    throw AllZeroLikelihood("conditional_mixture: all component log-densities underflowed");
  }
  ConditionalMixture out;
  out.responsibilities = (log_gamma.array() - lse).exp();
  out.cond_means.reserve(k);
  out.cond_covs.reserve(k);
  for (int j = 0; j < k; ++j) {
    Gaussian cond = condition(mix.components[j], zc);
    out.cond_means.push_back(std::move(cond.mean));
    out.cond_covs.push_back(std::move(cond.cov));
  }
  return out;
}

std::pair<VectorXd, std::vector<Gaussian>> marginal_mixture(const JointMixture& mix, Block block) {
  std::vector<Gaussian> comps;
  comps.reserve(mix.components.size());
  for (const auto& c : mix.components) comps.push_back(marginalize(c, block));
  return {mix.weights, std::move(comps)};
}

double joint_mixture_logpdf(const JointMixture& mix, const VectorXd& zc, const VectorXd& zt) {
  VectorXd terms(mix.k());
  VectorXd z(zc.size() + zt.size());
  z << zc, zt;
  for (int j = 0; j < mix.k(); ++j) {
    const auto& c = mix.components[j];
    terms(j) = std::log(mix.weights(j)) + log_gaussian(z, c.full_mean(), c.full_cov());
  }
  return logsumexp(terms);
}

double mixture_logpdf(const VectorXd& weights, const std::vector<Gaussian>& comps,
                      const VectorXd& x) {
  VectorXd terms(weights.size());
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    terms(j) = std::log(weights(j)) + log_gaussian(x, comps[j].mean, comps[j].cov);
  }
  return logsumexp(terms);
}

double proto_nll_shared(const VectorXd& z_joint, const PrototypeSet& protos) {
  if (!protos.shared_cov) throw std::invalid_argument("proto_nll_shared: shared_cov missing");
  Eigen::LLT<MatrixXd> llt = chol_auto(*protos.shared_cov);
  double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  VectorXd log_pi = protos.log_pi();
  VectorXd scores(protos.k());
  for (int j = 0; j < protos.k(); ++j) {
    VectorXd r = z_joint - protos.prototypes.row(j).transpose();
    scores(j) = log_pi(j) - 0.5 * r.dot(llt.solve(r));
  }
  return 0.5 * logdet - logsumexp(scores);
}

double proto_nll_full(const VectorXd& z_joint, const PrototypeSet& protos) {
  if (!protos.per_component_covs) {
    throw std::invalid_argument("proto_nll_full: per_component_covs missing");
  }
  const auto& covs = *protos.per_component_covs;
  if (static_cast<int>(covs.size()) != protos.k()) {
    throw std::invalid_argument("proto_nll_full: covariance count mismatch");
  }
  VectorXd log_pi = protos.log_pi();
  VectorXd scores(protos.k());
  for (int j = 0; j < protos.k(); ++j) {
    Eigen::LLT<MatrixXd> llt = chol_auto(covs[j]);
    double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    VectorXd r = z_joint - protos.prototypes.row(j).transpose();
    scores(j) = log_pi(j) - 0.5 * r.dot(llt.solve(r)) - 0.5 * logdet;
  }
  return -logsumexp(scores);
}

namespace {

/// Plain Lloyd k-means with seeded random distinct-point initialization.
MatrixXd kmeans_centers(const MatrixXd& data, int k, CounterRng& rng, int iters = 25) {
  const Eigen::Index n = data.rows();
  MatrixXd centers(k, data.cols());
  // Draw k distinct row indices.
  std::vector<Eigen::Index> chosen;
  while (static_cast<int>(chosen.size()) < k) {
    Eigen::Index idx = static_cast<Eigen::Index>(rng.uniform_index(n));
    bool dup = false;
    for (Eigen::Index c : chosen) dup = dup || (c == idx);
    if (!dup) chosen.push_back(idx);
  }
  for (int j = 0; j < k; ++j) centers.row(j) = data.row(chosen[j]);

  std::vector<int> assign(n, 0);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (data.row(i) - centers.row(0)).squaredNorm();
      for (int j = 1; j < k; ++j) {
        double dist = (data.row(i) - centers.row(j)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = j;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    for (int j = 0; j < k; ++j) {
      VectorXd sum = VectorXd::Zero(data.cols());
      int count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (assign[i] == j) {
          sum += data.row(i).transpose();
          ++count;
        }
      }
      if (count > 0) centers.row(j) = (sum / count).transpose();
    }
    if (!changed) break;
  }
  return centers;
}

JointGaussian make_joint_component(const VectorXd& mean, const MatrixXd& cov, int d_c) {
  const Eigen::Index d = mean.size();
  return JointGaussian(mean.head(d_c), mean.tail(d - d_c), cov.topLeftCorner(d_c, d_c),
                       cov.topRightCorner(d_c, d - d_c), cov.bottomLeftCorner(d - d_c, d_c),
                       cov.bottomRightCorner(d - d_c, d - d_c));
}

}  // namespace

JointMixture em_fit_with_trace(const MatrixXd& data, int k, int max_iters, double tol,
                               CounterRng& rng, int d_c, std::vector<double>* loglik_trace) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  if (n < k) throw std::invalid_argument("em_fit: need N >= k");
  if (d_c < 0) d_c = static_cast<int>(d) / 2;
  if (d_c < 1 || d_c >= d) throw std::invalid_argument("em_fit: invalid context width");
  constexpr double kVarianceFloor = 1e-6;

  // k-means initialization (hard assignments seed the first M-step).
  MatrixXd centers = kmeans_centers(data, k, rng);
  MatrixXd resp = MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = (data.row(i) - centers.row(0)).squaredNorm();
    for (int j = 1; j < k; ++j) {
      double dist = (data.row(i) - centers.row(j)).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = j;
      }
    }
    resp(i, best) = 1.0;
  }

  VectorXd weights(k);
  std::vector<VectorXd> means(k);
  std::vector<MatrixXd> covs(k);

  auto m_step = [&]() {
    for (int j = 0; j < k; ++j) {
      double nk = resp.col(j).sum();
      if (nk < 1e-9) {
        throw DegenerateComponent("em_fit: component " + std::to_string(j) + " became empty");
      }
      weights(j) = nk / static_cast<double>(n);
      VectorXd mu = (resp.col(j).transpose() * data).transpose() / nk;
      MatrixXd centered = data.rowwise() - mu.transpose();
      MatrixXd sigma =
          (centered.transpose() * resp.col(j).asDiagonal() * centered) / nk;
      sigma = symmetrized(sigma);
      for (Eigen::Index q = 0; q < d; ++q) {
        if (sigma(q, q) < kVarianceFloor) sigma(q, q) = kVarianceFloor;
      }
      means[j] = std::move(mu);
      covs[j] = std::move(sigma);
    }
  };

  m_step();

  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iters; ++it) {
    // E-step in log space.
    MatrixXd log_r(n, k);
    for (int j = 0; j < k; ++j) {
      Eigen::LLT<MatrixXd> llt = chol_auto(covs[j]);
      double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      MatrixXd centered = data.rowwise() - means[j].transpose();
      VectorXd mahal = (centered.array() * llt.solve(centered.transpose()).transpose().array())
                           .rowwise()
                           .sum();
      log_r.col(j) = (std::log(weights(j)) -
                      0.5 * (logdet + static_cast<double>(d) * kLn2Pi)) -
                     0.5 * mahal.array();
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double lse = logsumexp(log_r.row(i).transpose());
      ll += lse;
      resp.row(i) = (log_r.row(i).array() - lse).exp();
    }
    if (loglik_trace) loglik_trace->push_back(ll / static_cast<double>(n));
    m_step();
    if (std::isfinite(prev_ll) &&
        std::abs(ll - prev_ll) < tol * (std::abs(prev_ll) + 1.0)) {
      break;
    }
    prev_ll = ll;
  }

  std::vector<JointGaussian> comps;
  comps.reserve(k);
  for (int j = 0; j < k; ++j) comps.push_back(make_joint_component(means[j], covs[j], d_c));
  // Renormalize against accumulated round-off so the simplex invariant holds.
  weights /= weights.sum();
  return JointMixture(std::move(weights), std::move(comps));
}

JointMixture em_fit(const MatrixXd& data, int k, int max_iters, double tol, CounterRng& rng,
                    int d_c) {
  return em_fit_with_trace(data, k, max_iters, tol, rng, d_c, nullptr);
}

std::pair<VectorXd, MatrixXd> total_variance(const ConditionalMixture& cm) {
  const int k = cm.k();
  const Eigen::Index d = cm.cond_means.front().size();
  VectorXd mean = VectorXd::Zero(d);
  for (int j = 0; j < k; ++j) mean += cm.responsibilities(j) * cm.cond_means[j];
  MatrixXd cov = MatrixXd::Zero(d, d);
  for (int j = 0; j < k; ++j) {
    VectorXd dm = cm.cond_means[j] - mean;
    cov += cm.responsibilities(j) * (cm.cond_covs[j] + dm * dm.transpose());
  }
  return {std::move(mean), symmetrized(cov)};
}

std::pair<std::vector<int>, MatrixXd> sample_mixture_labeled(
    const VectorXd& weights, const std::vector<Gaussian>& components, int n, CounterRng& rng) {
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-10) {
    throw std::invalid_argument("sample_mixture: weights must be a simplex");
  }
  const Eigen::Index d = components.front().dim();
  MatrixXd out(n, d);
  std::vector<int> labels(n);
  VectorXd cdf(weights.size());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    acc += weights(j);
    cdf(j) = acc;
  }
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    int pick = 0;
    while (pick + 1 < static_cast<int>(weights.size()) && cdf(pick) <= u) ++pick;
    labels[i] = pick;
    out.row(i) = sample(components[pick], 1, rng).row(0);
  }
  return {std::move(labels), std::move(out)};
}

MatrixXd sample_mixture(const VectorXd& weights, const std::vector<Gaussian>& components, int n,
                        CounterRng& rng) {
  return sample_mixture_labeled(weights, components, n, rng).second;
}

double dam_conditional_nll(const VectorXd& zc, const VectorXd& zt, const MatrixXd& bank,
                           double tau) {
  if (tau <= 0.0) throw std::invalid_argument("dam_conditional_nll: tau must be > 0");
  auto check_unit = [](const VectorXd& v, const char* what) {
    if (std::abs(v.norm() - 1.0) > 1e-8) {
      throw NotNormalized(std::string("dam_conditional_nll: ") + what + " not L2-normalized");
    }
  };
  check_unit(zc, "z_c");
  check_unit(zt, "z_t");
  for (Eigen::Index m = 0; m < bank.rows(); ++m) {
    check_unit(bank.row(m).transpose(), "bank row");
  }
  VectorXd sims = bank * zc / tau;
  return -(zc.dot(zt) / tau - logsumexp(sims));
}

}  // namespace gmje
