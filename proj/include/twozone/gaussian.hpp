#pragma once

// Multivariate normal machinery: the conditional law of the terminal state,
// exponential tilting, linear images, and box probabilities P(a <= Y <= b).

#include <Eigen/Dense>

#include <cstdint>

#include "twozone/model.hpp"

namespace twozone {

struct GaussianLaw {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  int dim() const { return static_cast<int>(mean.size()); }
  /// Throws NumericsError unless the covariance is symmetric PSD
  /// (smallest eigenvalue >= -1e-10 * trace).
  void validate() const;
  bool degenerate() const { return covariance.cwiseAbs().maxCoeff() == 0.0; }
};

/// Box constraints lower <= matrix * X <= upper; bounds may be infinite.
struct LinearConstraints {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::MatrixXd matrix;

  int rows() const { return static_cast<int>(matrix.rows()); }
  void add_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, double lo, double hi);
};

struct ProbabilityEstimate {
  double value = 0.0;
  double error = 0.0;
  std::int64_t samples_or_points = 0;
};

double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double p);

/// Law of V_T given V_t under independent-parameter OU dynamics for the log
/// fuel costs and the demand deviations.
GaussianLaw conditional_law(const StateVector& state, double t, double maturity, const ScenarioSpec& scenario);

struct TiltResult {
  double factor = 1.0;
  double log_factor = 0.0;
  GaussianLaw tilted;
};

/// E[exp(lambda'X + eta) f(X)] = factor * E[f(X~)], X~ ~ N(mu + Sigma lambda, Sigma).
TiltResult exponential_tilt(const GaussianLaw& law, const Eigen::Ref<const Eigen::VectorXd>& lambda, double eta);

/// Law of Y = M X with rows cleaned up: vacuous rows dropped, zero-variance
/// rows decided, and rows that are affine copies of another merged into it.
struct ProjectedBox {
  GaussianLaw law;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  bool empty = false;  // some deterministic or merged constraint is infeasible
};

inline constexpr double kDegenerateVariance = 1e-12;

ProjectedBox project(const GaussianLaw& law, const LinearConstraints& constraints);

struct QuadratureOptions {
  double abs_tolerance = 1e-4;
  int shifts = 12;
  std::int64_t initial_points = 256;
  std::int64_t max_points = 1 << 16;  // per shift
  std::uint64_t seed = 0;
};

/// Separation-of-variables transform with prioritized variable ordering,
/// integrated by a randomly shifted Kronecker lattice with a tent
/// periodization. The error is three standard errors across shifts.
/// Rank-deficient laws are handled by folding dependent rows into the bounds
/// of the last variable they load on.
ProbabilityEstimate rectangle_probability(const GaussianLaw& law, const Eigen::Ref<const Eigen::VectorXd>& lower,
                                          const Eigen::Ref<const Eigen::VectorXd>& upper,
                                          const QuadratureOptions& options = {});

/// project() followed by rectangle_probability().
ProbabilityEstimate box_probability(const GaussianLaw& law, const LinearConstraints& constraints,
                                    const QuadratureOptions& options = {});

/// Cheap upper bound: min over rows of the one-dimensional band probability.
double box_probability_bound(const ProjectedBox& box);

/// Plain Monte Carlo: fraction of exact Gaussian draws inside the box.
ProbabilityEstimate mc_rectangle_probability(const GaussianLaw& law, const Eigen::Ref<const Eigen::VectorXd>& lower,
                                             const Eigen::Ref<const Eigen::VectorXd>& upper, std::int64_t n,
                                             std::uint64_t seed);

/// A with A A' = covariance, from a symmetric eigendecomposition.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& covariance);

}  // namespace twozone
