#include "gmje/gaussian.hpp"

#include <cmath>

namespace gmje {

namespace {
constexpr double kLn2Pi = 1.8378770664093454835606594728112;
constexpr double kLn2 = 0.69314718055994530941723212145818;

double logdet_from_llt(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}
}  // namespace

std::pair<MatrixXd, double> chol_logdet(const MatrixXd& cov, double jitter) {
  if (cov.rows() != cov.cols()) throw NotPositiveDefinite("chol_logdet: matrix not square");
  if (jitter < 0.0) throw NotPositiveDefinite("chol_logdet: negative jitter");
  MatrixXd a = symmetrized(cov);
  a.diagonal().array() += jitter;
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("chol_logdet: Cholesky failed at jitter " + std::to_string(jitter));
  }
  MatrixXd factor = llt.matrixL();
  return {factor, 2.0 * factor.diagonal().array().log().sum()};
}

Eigen::LLT<MatrixXd> chol_auto(const MatrixXd& cov, double* used_jitter) {
  MatrixXd a = symmetrized(cov);
  for (double jitter : {0.0, kJitterFirst, kJitterSecond}) {
    MatrixXd b = a;
    b.diagonal().array() += jitter;
    Eigen::LLT<MatrixXd> llt(b);
    if (llt.info() == Eigen::Success) {
      // Guard against LLT "succeeding" on a matrix with a non-positive pivot
      // (Eigen only reports NumericalIssue on hard failures).
      if ((llt.matrixLLT().diagonal().array() > 0.0).all()) {
        if (used_jitter) *used_jitter = jitter;
        return llt;
      }
    }
  }
  throw NotPositiveDefinite("matrix not positive definite after jitter retries (1e-8, 1e-6)");
}

Gaussian::Gaussian(VectorXd mean_in, MatrixXd cov_in)
    : mean(std::move(mean_in)), cov(symmetrized(cov_in)) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw std::invalid_argument("Gaussian: covariance shape does not match mean");
  }
  chol_auto(cov);  // validates positive definiteness under the jitter policy
}

JointGaussian::JointGaussian(VectorXd mean_c_in, VectorXd mean_t_in, MatrixXd cov_cc_in,
                             MatrixXd cov_ct_in, MatrixXd cov_tc_in, MatrixXd cov_tt_in)
    : mean_c(std::move(mean_c_in)),
      mean_t(std::move(mean_t_in)),
      cov_cc(symmetrized(cov_cc_in)),
      cov_ct(std::move(cov_ct_in)),
      cov_tc(std::move(cov_tc_in)),
      cov_tt(symmetrized(cov_tt_in)) {
  if (cov_cc.rows() != mean_c.size() || cov_tt.rows() != mean_t.size() ||
      cov_ct.rows() != mean_c.size() || cov_ct.cols() != mean_t.size() ||
      cov_tc.rows() != mean_t.size() || cov_tc.cols() != mean_c.size()) {
    throw std::invalid_argument("JointGaussian: block shapes inconsistent");
  }
  double scale = std::max(1.0, cov_ct.cwiseAbs().maxCoeff());
  if ((cov_tc - cov_ct.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("JointGaussian: cov_tc is not the transpose of cov_ct");
  }
  // Enforce exact consistency of the off-diagonal blocks.
  cov_tc = 0.5 * (cov_tc + cov_ct.transpose().eval());
  cov_ct = cov_tc.transpose();
}

VectorXd JointGaussian::full_mean() const {
  VectorXd m(dim());
  m << mean_c, mean_t;
  return m;
}

MatrixXd JointGaussian::full_cov() const {
  MatrixXd s(dim(), dim());
  s.topLeftCorner(dim_c(), dim_c()) = cov_cc;
  s.topRightCorner(dim_c(), dim_t()) = cov_ct;
  s.bottomLeftCorner(dim_t(), dim_c()) = cov_tc;
  s.bottomRightCorner(dim_t(), dim_t()) = cov_tt;
  return s;
}

Gaussian JointGaussian::full_gaussian() const { return Gaussian(full_mean(), full_cov()); }

Gaussian condition(const JointGaussian& joint, const VectorXd& observed_zc) {
  if (observed_zc.size() != joint.dim_c()) {
    throw std::invalid_argument("condition: observation dimension mismatch");
  }
  Eigen::LLT<MatrixXd> llt = chol_auto(joint.cov_cc);
  VectorXd mean = joint.mean_t + joint.cov_tc * llt.solve(observed_zc - joint.mean_c);
  MatrixXd cov = joint.cov_tt - joint.cov_tc * llt.solve(joint.cov_ct);
  return Gaussian(std::move(mean), std::move(cov));
}

Gaussian marginalize(const JointGaussian& joint, Block block) {
  if (block == Block::context) return Gaussian(joint.mean_c, joint.cov_cc);
  return Gaussian(joint.mean_t, joint.cov_tt);
}

double mvn_nll(const VectorXd& x, const Gaussian& g) {
  if (x.size() != g.dim()) throw std::invalid_argument("mvn_nll: dimension mismatch");
  Eigen::LLT<MatrixXd> llt = chol_auto(g.cov);
  VectorXd r = x - g.mean;
  double mahal = r.dot(llt.solve(r));
  return 0.5 * (logdet_from_llt(llt) + mahal + static_cast<double>(g.dim()) * kLn2Pi);
}

MatrixXd sample(const Gaussian& g, int n, CounterRng& rng) {
  Eigen::LLT<MatrixXd> llt = chol_auto(g.cov);
  MatrixXd factor = llt.matrixL();
  const Eigen::Index d = g.dim();
  MatrixXd out(n, d);
  VectorXd eps(d);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) eps(j) = rng.normal();
    out.row(i) = (g.mean + factor * eps).transpose();
  }
  return out;
}

double entropy(const Gaussian& g) {
  Eigen::LLT<MatrixXd> llt = chol_auto(g.cov);
  const double d = static_cast<double>(g.dim());
  return 0.5 * d * (1.0 + kLn2Pi) + 0.5 * logdet_from_llt(llt);
}

double mutual_information(const JointGaussian& joint) {
  double logdet_cc = logdet_from_llt(chol_auto(joint.cov_cc));
  double logdet_tt = logdet_from_llt(chol_auto(joint.cov_tt));
  double logdet_full = logdet_from_llt(chol_auto(joint.full_cov()));
  return 0.5 * (logdet_cc + logdet_tt - logdet_full);
}

double kl_divergence(const Gaussian& g0, const Gaussian& g1) {
  if (g0.dim() != g1.dim()) throw std::invalid_argument("kl_divergence: dimension mismatch");
  Eigen::LLT<MatrixXd> llt1 = chol_auto(g1.cov);
  Eigen::LLT<MatrixXd> llt0 = chol_auto(g0.cov);
  const double d = static_cast<double>(g0.dim());
  double trace_term = llt1.solve(g0.cov).trace();
  VectorXd dm = g1.mean - g0.mean;
  double mahal = dm.dot(llt1.solve(dm));
  double logdet_ratio = logdet_from_llt(llt1) - logdet_from_llt(llt0);
  return 0.5 * (trace_term + mahal - d + logdet_ratio);
}

double kl_divergence_bits(const Gaussian& g0, const Gaussian& g1) {
  return kl_divergence(g0, g1) / kLn2;
}

PrecisionBlocks block_invert(const JointGaussian& joint) {
  Eigen::LLT<MatrixXd> llt_cc = chol_auto(joint.cov_cc);
  // Schur complement of the context block: S = S_tt - S_tc S_cc^-1 S_ct.
  MatrixXd schur = symmetrized(joint.cov_tt - joint.cov_tc * llt_cc.solve(joint.cov_ct));
  Eigen::LLT<MatrixXd> llt_s = chol_auto(schur);

  const Eigen::Index dc = joint.dim_c();
  const Eigen::Index dt = joint.dim_t();
  MatrixXd cc_inv_ct = llt_cc.solve(joint.cov_ct);  // S_cc^-1 S_ct (dc x dt)

  PrecisionBlocks out;
  out.lambda_tt = llt_s.solve(MatrixXd::Identity(dt, dt));
  out.lambda_tc = -out.lambda_tt * cc_inv_ct.transpose();
  out.lambda_ct = out.lambda_tc.transpose();
  out.lambda_cc =
      llt_cc.solve(MatrixXd::Identity(dc, dc)) + cc_inv_ct * out.lambda_tt * cc_inv_ct.transpose();
  out.lambda_cc = symmetrized(out.lambda_cc);
  out.lambda_tt = symmetrized(out.lambda_tt);
  return out;
}

}  // namespace gmje
