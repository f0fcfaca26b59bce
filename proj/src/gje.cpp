#include "gmje/gje.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gmje {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

double logdet_of(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}
}  // namespace

BatchEmbeddings::BatchEmbeddings(MatrixXd z_c_in, MatrixXd z_t_in)
    : z_c(std::move(z_c_in)), z_t(std::move(z_t_in)) {
  if (z_c.rows() != z_t.rows()) {
    throw std::invalid_argument("BatchEmbeddings: row counts differ");
  }
  if (z_c.rows() < 2) throw std::invalid_argument("BatchEmbeddings: need N >= 2");
  if (!z_c.allFinite() || !z_t.allFinite()) {
    throw std::invalid_argument("BatchEmbeddings: non-finite entries");
  }
}

MatrixXd BatchEmbeddings::joint() const {
  MatrixXd z(n(), dim());
  z << z_c, z_t;
  return z;
}

KernelSpec KernelSpec::linear(double noise) {
  KernelSpec k;
  k.kind = Kind::linear;
  k.noise = noise;
  return k;
}

KernelSpec KernelSpec::rbf(double length_scale, double noise) {
  if (length_scale <= 0.0) throw std::invalid_argument("KernelSpec: length_scale must be > 0");
  KernelSpec k;
  k.kind = Kind::rbf;
  k.length_scale = length_scale;
  k.noise = noise;
  return k;
}

RffProjection RffProjection::make(int dim_c, int feature_count, double length_scale,
                                  CounterRng& rng) {
  if (feature_count < 1) throw std::invalid_argument("RffProjection: D must be >= 1");
  if (length_scale <= 0.0) throw std::invalid_argument("RffProjection: length scale must be > 0");
  RffProjection proj;
  proj.frequencies.resize(dim_c, feature_count);
  for (int j = 0; j < feature_count; ++j) {
    for (int i = 0; i < dim_c; ++i) proj.frequencies(i, j) = rng.normal() / length_scale;
  }
  proj.phases.resize(feature_count);
  for (int j = 0; j < feature_count; ++j) proj.phases(j) = rng.uniform(0.0, kTwoPi);
  proj.bandwidth = length_scale;
  proj.feature_count = feature_count;
  return proj;
}

double kernel_eval(const VectorXd& x, const VectorXd& y, const KernelSpec& kernel) {
  if (kernel.kind == KernelSpec::Kind::linear) return x.dot(y);
  double sq = (x - y).squaredNorm();
  return std::exp(-0.5 * sq / (kernel.length_scale * kernel.length_scale));
}

MatrixXd gram(const MatrixXd& a, const MatrixXd& b, const KernelSpec& kernel) {
  if (a.cols() != b.cols()) throw std::invalid_argument("gram: dimension mismatch");
  if (kernel.kind == KernelSpec::Kind::linear) return a * b.transpose();
  MatrixXd sq = (-2.0 * a * b.transpose()).rowwise() + b.rowwise().squaredNorm().transpose();
  sq.colwise() += a.rowwise().squaredNorm();
  return (-0.5 * sq / (kernel.length_scale * kernel.length_scale)).array().exp();
}

JointGaussian empirical_joint_cov(const BatchEmbeddings& batch) {
  MatrixXd z = batch.joint();
  MatrixXd c = z.transpose() * z / static_cast<double>(batch.n());
  const Eigen::Index dc = batch.dim_c();
  const Eigen::Index dt = batch.dim_t();
  return JointGaussian(VectorXd::Zero(dc), VectorXd::Zero(dt), c.topLeftCorner(dc, dc),
                       c.topRightCorner(dc, dt), c.bottomLeftCorner(dt, dc),
                       c.bottomRightCorner(dt, dt));
}

double primal_joint_nll(const BatchEmbeddings& batch, double jitter) {
  MatrixXd z = batch.joint();
  const double n = static_cast<double>(batch.n());
  MatrixXd c = symmetrized(z.transpose() * z / n);
  c.diagonal().array() += jitter;
  Eigen::LLT<MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("primal_joint_nll: empirical covariance not PD at given jitter");
  }
  // (1/2N) sum_i z_i^T C^-1 z_i = (1/2N) Tr(Z C^-1 Z^T)
  double datafit = 0.5 / n * (z.array() * llt.solve(z.transpose()).transpose().array()).sum();
  return datafit + 0.5 * logdet_of(llt);
}

double trace_trap_datafit(const BatchEmbeddings& batch) {
  MatrixXd z = batch.joint();
  const Eigen::Index d = z.cols();
  if (batch.n() <= d) throw RankDeficient("trace_trap_datafit: requires N > d");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(z);
  if (qr.rank() < d) throw RankDeficient("trace_trap_datafit: batch is rank-deficient");
  const double n = static_cast<double>(batch.n());
  MatrixXd c = symmetrized(z.transpose() * z / n);
  Eigen::LLT<MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    throw RankDeficient("trace_trap_datafit: empirical covariance not factorizable");
  }
  return 0.5 / n * (z.array() * llt.solve(z.transpose()).transpose().array()).sum();
}

double entropy_max_loss(const BatchEmbeddings& batch, double jitter) {
  MatrixXd z = batch.joint();
  MatrixXd c = symmetrized(z.transpose() * z / static_cast<double>(batch.n()));
  auto [factor, logdet] = chol_logdet(c, jitter);
  (void)factor;
  return -0.5 * logdet;
}

Gaussian primal_predict(const JointGaussian& cov, const VectorXd& zc_star) {
  return condition(cov, zc_star);
}

double dual_nll(const BatchEmbeddings& batch, const KernelSpec& kernel, double jitter) {
  MatrixXd k = gram(batch.z_c, batch.z_c, kernel);
  k.diagonal().array() += kernel.noise + jitter;
  Eigen::LLT<MatrixXd> llt(symmetrized(k));
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("dual_nll: Gram matrix not positive definite");
  }
  double datafit =
      0.5 * (batch.z_t.array() * llt.solve(batch.z_t).array()).sum();
  return datafit + 0.5 * static_cast<double>(batch.dim_t()) * logdet_of(llt);
}

Gaussian dual_predict(const BatchEmbeddings& train, const KernelSpec& kernel,
                      const VectorXd& zc_star, double jitter) {
  if (zc_star.size() != train.dim_c()) {
    throw std::invalid_argument("dual_predict: test point dimension mismatch");
  }
  MatrixXd k = gram(train.z_c, train.z_c, kernel);
  k.diagonal().array() += kernel.noise + jitter;
  Eigen::LLT<MatrixXd> llt(symmetrized(k));
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("dual_predict: Gram matrix not positive definite");
  }
  MatrixXd kstar = gram(zc_star.transpose(), train.z_c, kernel);  // 1 x N
  VectorXd alpha = llt.solve(kstar.transpose());
  VectorXd mean = train.z_t.transpose() * alpha;
  double var = kernel_eval(zc_star, zc_star, kernel) - kstar.row(0).dot(alpha);
  var = std::max(var, 0.0);
  // Open question resolved: the scalar GP variance is broadcast isotropically
  // over the d_t target channels.
  MatrixXd cov = var * MatrixXd::Identity(train.dim_t(), train.dim_t());
  return Gaussian(std::move(mean), std::move(cov));
}

double primal_dual_residual(const BatchEmbeddings& batch, double jitter) {
  const double eps = jitter;
  if (eps <= 0.0) throw std::invalid_argument("primal_dual_residual: jitter must be > 0");
  MatrixXd z = batch.joint();
  const Eigen::Index n = z.rows();
  const Eigen::Index d = z.cols();
  if (n <= d) throw RankDeficient("primal_dual_residual: requires N > d");

  // Dual side, linear kernel on the joint embedding: K = Z Z^T + eps I_N.
  MatrixXd k = z * z.transpose();
  k.diagonal().array() += eps;
  Eigen::LLT<MatrixXd> llt_k(symmetrized(k));
  if (llt_k.info() != Eigen::Success) {
    throw NotPositiveDefinite("primal_dual_residual: dual Gram not positive definite");
  }
  double dual = 0.5 * (z.array() * llt_k.solve(z).array()).sum() + 0.5 * logdet_of(llt_k);

  // Primal side: C = Z^T Z + eps I_d.
  MatrixXd c = z.transpose() * z;
  c.diagonal().array() += eps;
  Eigen::LLT<MatrixXd> llt_c(symmetrized(c));
  if (llt_c.info() != Eigen::Success) {
    throw NotPositiveDefinite("primal_dual_residual: primal covariance not positive definite");
  }
  double tr_cinv = llt_c.solve(MatrixXd::Identity(d, d)).trace();
  double primal = 0.5 * (logdet_of(llt_c) - eps * tr_cinv) + 0.5 * static_cast<double>(d) +
                  0.5 * static_cast<double>(n - d) * std::log(eps);
  return std::abs(dual - primal);
}

MatrixXd rff_features(const MatrixXd& z_c, const RffProjection& proj) {
  if (z_c.cols() != proj.frequencies.rows()) {
    throw std::invalid_argument("rff_features: input dimension mismatch");
  }
  MatrixXd phase = (z_c * proj.frequencies).rowwise() + proj.phases.transpose();
  return std::sqrt(2.0 / proj.feature_count) * phase.array().cos();
}

double rff_dual_nll(const MatrixXd& features, const MatrixXd& z_t, double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("rff_dual_nll: epsilon must be > 0");
  if (features.rows() != z_t.rows()) throw std::invalid_argument("rff_dual_nll: row mismatch");
  const Eigen::Index n = features.rows();
  const Eigen::Index d_feat = features.cols();
  const double dt = static_cast<double>(z_t.cols());

  // C = Psi^T Psi + eps I_D (D x D; the N x N Gram is never formed).
  MatrixXd c = features.transpose() * features;
  c.diagonal().array() += epsilon;
  Eigen::LLT<MatrixXd> llt(symmetrized(c));
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("rff_dual_nll: feature covariance not positive definite");
  }
  // Woodbury: Tr(Z^T K^-1 Z) = (||Z||_F^2 - Tr(T^T C^-1 T)) / eps, T = Psi^T Z.
  MatrixXd t = features.transpose() * z_t;  // D x d_t
  double trace_term = (z_t.squaredNorm() - (t.array() * llt.solve(t).array()).sum()) / epsilon;
  // Weinstein-Aronszajn: log|K| = log|C| + (N - D) ln eps.
  double logdet_k =
      logdet_of(llt) + static_cast<double>(n - d_feat) * std::log(epsilon);
  return 0.5 * trace_term + 0.5 * dt * logdet_k;
}

double hsic(const MatrixXd& z_c, const MatrixXd& z_t, const KernelSpec& kernel_c,
            const KernelSpec& kernel_t) {
  if (z_c.rows() != z_t.rows()) throw std::invalid_argument("hsic: row mismatch");
  const Eigen::Index n = z_c.rows();
  if (n < 2) throw std::invalid_argument("hsic: need N >= 2");
  MatrixXd kc = gram(z_c, z_c, kernel_c);
  MatrixXd kt = gram(z_t, z_t, kernel_t);
  // Center both Grams: HKH with H = I - (1/N) 11^T.
  auto center = [n](MatrixXd& k) {
    VectorXd row_mean = k.rowwise().mean();
    double total_mean = row_mean.mean();
    k.colwise() -= row_mean;
    k.rowwise() -= row_mean.transpose().eval();
    k.array() += total_mean;
  };
  center(kc);
  center(kt);
  double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
  return (kc.array() * kt.transpose().array()).sum() / denom;
}

double median_pairwise_distance(const MatrixXd& x) {
  std::vector<double> dists;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      dists.push_back((x.row(i) - x.row(j)).norm());
    }
  }
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  return dists[dists.size() / 2];
}

void ema_blend(MatrixXd& target, const MatrixXd& online, double momentum) {
  target = momentum * target + (1.0 - momentum) * online;
}

}  // namespace gmje
