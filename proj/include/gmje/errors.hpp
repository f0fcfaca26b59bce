#pragma once

#include <stdexcept>
#include <string>

namespace gmje {

/// Thrown when a matrix that must be (numerically) positive definite fails
/// Cholesky factorization even after the documented jitter policy.
class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when an operation requires a full-rank batch (N > d, rank d) and the
/// input does not satisfy it.
class RankDeficient : public std::runtime_error {
 public:
  explicit RankDeficient(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown by contrastive/bank operations that require L2-normalized inputs.
class NotNormalized : public std::runtime_error {
 public:
  explicit NotNormalized(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown by EM fitting when a component covariance collapses below the
/// variance floor (empty or degenerate cluster).
class DegenerateComponent : public std::runtime_error {
 public:
  explicit DegenerateComponent(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a GNG graph is seeded with two identical points.
class DegenerateSeed : public std::runtime_error {
 public:
  explicit DegenerateSeed(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when every mixture component's log-density underflows even in
/// log-space (pathological inputs to a conditional mixture).
class AllZeroLikelihood : public std::runtime_error {
 public:
  explicit AllZeroLikelihood(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when iterative training produces a non-finite loss.
class Diverged : public std::runtime_error {
 public:
  explicit Diverged(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gmje
