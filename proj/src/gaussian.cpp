#include "twozone/gaussian.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "twozone/errors.hpp"
#include "twozone/rng.hpp"

namespace twozone {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kRankTolerance = 1e-10;
constexpr double kMergeCorrelation = 1.0 - 1e-10;

constexpr std::array<int, 40> kPrimes = {2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,  43,
                                         47,  53,  59,  61,  67,  71,  73,  79,  83,  89,  97,  101, 103, 107,
                                         109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173};

// Truncated standard normal on (lo, hi): returns the band mass and, if
// requested, the draw at uniform position w. Upper-tail bands are reflected
// so both masses stay accurate far from the origin.
double truncated_draw(double lo, double hi, double w, double* y) {
  if (lo > 0.0) {
    const double pl = normal_cdf(-hi);
    const double ph = normal_cdf(-lo);
    const double mass = ph - pl;
    if (y) *y = -normal_quantile(pl + w * mass);
    return mass;
  }
  const double pl = normal_cdf(lo);
  const double ph = normal_cdf(hi);
  const double mass = ph - pl;
  if (y) *y = normal_quantile(pl + w * mass);
  return mass;
}

double band_mass(double lo, double hi) { return hi > lo ? truncated_draw(lo, hi, 0.0, nullptr) : 0.0; }

double truncated_mean(double lo, double hi) {
  const double mass = band_mass(lo, hi);
  if (mass > 1e-300) {
    const double plo = std::isfinite(lo) ? normal_pdf(lo) : 0.0;
    const double phi = std::isfinite(hi) ? normal_pdf(hi) : 0.0;
    return (plo - phi) / mass;
  }
  if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
  return std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0);
}

// Cholesky-based factorization of a standardized box problem.
struct SovProblem {
  int dim = 0;   // number of rows
  int rank = 0;  // number of integration variables
  Eigen::MatrixXd chol;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  // attached[i]: dependent rows whose last nonzero loading is on variable i.
  std::vector<std::vector<int>> attached;
};

SovProblem factorize(const Eigen::MatrixXd& corr, Eigen::VectorXd lower, Eigen::VectorXd upper) {
  const int m = static_cast<int>(corr.rows());
  SovProblem p;
  p.dim = m;
  Eigen::MatrixXd r = corr;
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd resid = r.diagonal();
  Eigen::VectorXd ybar = Eigen::VectorXd::Zero(m);

  auto swap_rows = [&](int i, int j) {
    if (i == j) return;
    r.row(i).swap(r.row(j));
    r.col(i).swap(r.col(j));
    l.row(i).swap(l.row(j));
    std::swap(resid(i), resid(j));
    std::swap(lower(i), lower(j));
    std::swap(upper(i), upper(j));
  };

  int rank = 0;
  for (int i = 0; i < m; ++i) {
    int best = -1;
    double best_mass = kInf;
    for (int j = i; j < m; ++j) {
      if (resid(j) <= kRankTolerance) continue;
      const double s = std::sqrt(resid(j));
      const double shift = l.row(j).head(i).dot(ybar.head(i));
      const double mass = band_mass((lower(j) - shift) / s, (upper(j) - shift) / s);
      if (mass < best_mass) {
        best_mass = mass;
        best = j;
      }
    }
    if (best < 0) break;
    swap_rows(i, best);
    const double pivot = std::sqrt(resid(i));
    l(i, i) = pivot;
    for (int j = i + 1; j < m; ++j) {
      l(j, i) = (r(j, i) - l.row(j).head(i).dot(l.row(i).head(i))) / pivot;
      resid(j) -= l(j, i) * l(j, i);
      if (resid(j) < -1e-8) throw NumericsError("rectangle_probability: covariance is not positive semidefinite");
    }
    const double shift = l.row(i).head(i).dot(ybar.head(i));
    ybar(i) = truncated_mean((lower(i) - shift) / pivot, (upper(i) - shift) / pivot);
    rank = i + 1;
  }

  p.rank = rank;
  p.attached.assign(std::max(rank, 1), {});
  for (int j = rank; j < m; ++j) {
    const double norm = l.row(j).head(rank).cwiseAbs().maxCoeff();
    int last = -1;
    for (int k = rank - 1; k >= 0; --k) {
      if (std::abs(l(j, k)) > 1e-12 * norm) {
        last = k;
        break;
      }
    }
    if (last < 0) throw NumericsError("rectangle_probability: dependent row with zero loading");
    p.attached[last].push_back(j);
  }
  p.chol = std::move(l);
  p.lower = std::move(lower);
  p.upper = std::move(upper);
  return p;
}

// Integrand of the separated problem at w in [0,1]^(rank-1).
double sov_integrand(const SovProblem& p, const double* w, double* y) {
  double value = 1.0;
  for (int i = 0; i < p.rank; ++i) {
    double shift = 0.0;
    for (int k = 0; k < i; ++k) shift += p.chol(i, k) * y[k];
    const double pivot = p.chol(i, i);
    double lo = (p.lower(i) - shift) / pivot;
    double hi = (p.upper(i) - shift) / pivot;
    for (int j : p.attached[i]) {
      double s = 0.0;
      for (int k = 0; k < i; ++k) s += p.chol(j, k) * y[k];
      const double c = p.chol(j, i);
      double jl = (p.lower(j) - s) / c;
      double jh = (p.upper(j) - s) / c;
      if (c < 0.0) std::swap(jl, jh);
      lo = std::max(lo, jl);
      hi = std::min(hi, jh);
    }
    if (!(hi > lo)) return 0.0;
    const bool last = i + 1 == p.rank;
    const double mass = truncated_draw(lo, hi, last ? 0.0 : w[i], last ? nullptr : &y[i]);
    value *= mass;
    if (value <= 0.0) return 0.0;
  }
  return value;
}

// Lattice integration of P(lo <= Z <= hi) for Z with unit-variance
// covariance `corr`.
ProbabilityEstimate integrate_standardized(const Eigen::MatrixXd& corr, const Eigen::VectorXd& lo,
                                           const Eigen::VectorXd& hi, const QuadratureOptions& options) {
  ProbabilityEstimate out;
  const SovProblem prob = factorize(corr, lo, hi);
  const int dims = prob.rank - 1;
  std::vector<double> y(std::max(prob.rank, 1));
  if (dims <= 0) {
    out.value = std::clamp(sov_integrand(prob, nullptr, y.data()), 0.0, 1.0);
    out.samples_or_points = 1;
    return out;
  }
  if (dims > static_cast<int>(kPrimes.size()))
    throw NumericsError("rectangle_probability: dimension above supported lattice size");

  std::vector<double> gen(dims);
  for (int d = 0; d < dims; ++d) {
    const double s = std::sqrt(static_cast<double>(kPrimes[d]));
    gen[d] = s - std::floor(s);
  }
  const int shifts = std::max(options.shifts, 2);
  std::mt19937_64 engine(options.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::vector<double>> delta(shifts, std::vector<double>(dims));
  for (auto& dv : delta)
    for (auto& v : dv) v = unif(engine);

  std::vector<double> sums(shifts, 0.0);
  std::vector<double> w(dims);
  std::int64_t done = 0;
  std::int64_t target = std::max<std::int64_t>(options.initial_points, 1);
  double mean = 0.0;
  double err = 0.0;
  while (true) {
    for (int s = 0; s < shifts; ++s) {
      double acc = 0.0;
      for (std::int64_t j = done + 1; j <= target; ++j) {
        for (int d = 0; d < dims; ++d) {
          double x = delta[s][d] + static_cast<double>(j) * gen[d];
          x -= std::floor(x);
          w[d] = std::abs(2.0 * x - 1.0);
        }
        acc += sov_integrand(prob, w.data(), y.data());
      }
      sums[s] += acc;
    }
    done = target;
    mean = 0.0;
    for (double sm : sums) mean += sm / static_cast<double>(done);
    mean /= shifts;
    double var = 0.0;
    for (double sm : sums) {
      const double dv = sm / static_cast<double>(done) - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(shifts) * (shifts - 1);
    err = 3.0 * std::sqrt(var);
    if (err <= options.abs_tolerance || done >= options.max_points) break;
    target = std::min(2 * done, options.max_points);
  }
  out.value = std::clamp(mean, 0.0, 1.0);
  out.error = err;
  out.samples_or_points = done * shifts;
  return out;
}

// Sides violated with marginal probability below kSplitMass are split off:
// P(core and all sides) = P(core) - sum_i P(core, sides before i, side i
// violated). Each correction puts the rare violation first in the variable
// order, so a thin region that lattice points would miss is integrated
// exactly. Sides below kDropMass are dropped and charged to the error.
constexpr double kSplitMass = 1e-2;
constexpr double kDropMass = 1e-14;

ProbabilityEstimate split_and_integrate(const Eigen::MatrixXd& corr, const Eigen::VectorXd& lo,
                                        const Eigen::VectorXd& hi, const QuadratureOptions& options) {
  const int n = static_cast<int>(lo.size());
  struct Side {
    int row;
    bool upper;
  };
  std::vector<Side> split;
  Eigen::VectorXd core_lo = lo;
  Eigen::VectorXd core_hi = hi;
  double dropped = 0.0;
  for (int i = 0; i < n; ++i) {
    const double below = std::isfinite(lo(i)) ? normal_cdf(lo(i)) : 0.0;
    const double above = std::isfinite(hi(i)) ? normal_cdf(-hi(i)) : 0.0;
    if (below > 0.0 && below < kSplitMass) {
      core_lo(i) = -kInf;
      if (below < kDropMass)
        dropped += below;
      else
        split.push_back({i, false});
    }
    if (above > 0.0 && above < kSplitMass) {
      core_hi(i) = kInf;
      if (above < kDropMass)
        dropped += above;
      else
        split.push_back({i, true});
    }
  }
  if (split.empty() && dropped == 0.0) return integrate_standardized(corr, lo, hi, options);

  ProbabilityEstimate total = integrate_standardized(corr, core_lo, core_hi, options);
  Eigen::VectorXd run_lo = core_lo;
  Eigen::VectorXd run_hi = core_hi;
  auto sub = options;
  for (std::size_t k = 0; k < split.size(); ++k) {
    const auto [i, upper] = split[k];
    Eigen::VectorXd term_lo = run_lo;
    Eigen::VectorXd term_hi = run_hi;
    if (upper) {
      term_lo(i) = std::max(run_lo(i), hi(i));
      term_hi(i) = kInf;
      run_hi(i) = hi(i);
    } else {
      term_lo(i) = -kInf;
      term_hi(i) = std::min(run_hi(i), lo(i));
      run_lo(i) = lo(i);
    }
    sub.seed = options.seed + 0x9e3779b97f4a7c15ULL * (k + 1);
    if (!(term_hi(i) > term_lo(i))) continue;
    const auto piece = integrate_standardized(corr, term_lo, term_hi, sub);
    total.value -= piece.value;
    total.error += piece.error;
    total.samples_or_points += piece.samples_or_points;
  }
  total.value = std::clamp(total.value, 0.0, 1.0);
  total.error += dropped;
  return total;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return -kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

void GaussianLaw::validate() const {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
    throw NumericsError("GaussianLaw: covariance shape does not match mean");
  if (mean.size() == 0) return;
  const double scale = std::max(covariance.cwiseAbs().maxCoeff(), 1e-300);
  if (!covariance.isApprox(covariance.transpose(), 1e-12) &&
      (covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NumericsError("GaussianLaw: covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(covariance.trace(), 1e-300))
    throw NumericsError("GaussianLaw: covariance is not positive semidefinite");
}

void LinearConstraints::add_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, double lo, double hi) {
  const auto r = matrix.rows();
  if (r == 0 && matrix.cols() == 0) matrix.resize(0, row.size());
  matrix.conservativeResize(r + 1, row.size());
  matrix.row(r) = row;
  lower.conservativeResize(r + 1);
  upper.conservativeResize(r + 1);
  lower(r) = lo;
  upper(r) = hi;
}

GaussianLaw conditional_law(const StateVector& state, double t, double maturity, const ScenarioSpec& scenario) {
  if (maturity < t) throw std::invalid_argument("conditional_law: maturity before valuation time");
  const int n = scenario.fuel_count();
  const int m = n + 2;
  const double tau = maturity - t;

  Eigen::VectorXd speed(m), vol(m);
  GaussianLaw law;
  law.mean.resize(m);
  for (int i = 0; i < n; ++i) {
    const auto& fuel = scenario.fuels[i];
    speed(i) = fuel.mean_reversion;
    vol(i) = fuel.volatility;
    const double decay = std::exp(-fuel.mean_reversion * tau);
    law.mean(i) = state.log_fuels(i) * decay + fuel.long_run_log_mean * (1.0 - decay);
  }
  for (Zone z : {Zone::A, Zone::B}) {
    const auto& mk = scenario.market(z);
    const int i = z == Zone::A ? n : n + 1;
    speed(i) = mk.demand_mean_reversion;
    vol(i) = mk.demand_volatility;
    const double deviation = state.demand(z) - seasonal_demand_mean(mk, t);
    law.mean(i) = seasonal_demand_mean(mk, maturity) + deviation * std::exp(-mk.demand_mean_reversion * tau);
  }
  law.covariance.resize(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double a = speed(i) + speed(j);
      law.covariance(i, j) = scenario.correlation(i, j) * vol(i) * vol(j) * (-std::expm1(-a * tau)) / a;
    }
  }
  return law;
}

TiltResult exponential_tilt(const GaussianLaw& law, const Eigen::Ref<const Eigen::VectorXd>& lambda, double eta) {
  if (lambda.size() != law.mean.size()) throw std::invalid_argument("exponential_tilt: dimension mismatch");
  TiltResult out;
  const Eigen::VectorXd shift = law.covariance * lambda;
  out.log_factor = 0.5 * lambda.dot(shift) + lambda.dot(law.mean) + eta;
  out.factor = std::exp(out.log_factor);
  out.tilted.mean = law.mean + shift;
  out.tilted.covariance = law.covariance;
  return out;
}

ProjectedBox project(const GaussianLaw& law, const LinearConstraints& constraints) {
  const auto& mat = constraints.matrix;
  if (mat.rows() > 0 && mat.cols() != law.mean.size()) throw std::invalid_argument("project: dimension mismatch");
  ProjectedBox box;
  const int r = static_cast<int>(mat.rows());
  const Eigen::VectorXd mu = r > 0 ? Eigen::VectorXd(mat * law.mean) : Eigen::VectorXd();
  const Eigen::MatrixXd cov = r > 0 ? Eigen::MatrixXd(mat * law.covariance * mat.transpose()) : Eigen::MatrixXd();
  const Eigen::VectorXd sd = law.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();

  std::vector<int> keep;
  std::vector<double> lo, hi;
  for (int i = 0; i < r; ++i) {
    double a = constraints.lower(i);
    double b = constraints.upper(i);
    if (a > b) {
      box.empty = true;
      return box;
    }
    if (a == -kInf && b == kInf) continue;
    const double scale = mat.row(i).cwiseAbs().dot(sd);
    if (cov(i, i) <= kDegenerateVariance * scale * scale) {
      if (mu(i) < a || mu(i) > b) {
        box.empty = true;
        return box;
      }
      continue;
    }
    // Merge into an earlier row if perfectly correlated with it.
    bool merged = false;
    for (std::size_t q = 0; q < keep.size(); ++q) {
      const int j = keep[q];
      const double corr = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
      if (std::abs(corr) < kMergeCorrelation) continue;
      const double c = std::copysign(std::sqrt(cov(i, i) / cov(j, j)), corr);
      const double d = mu(i) - c * mu(j);
      double na = (a - d) / c;
      double nb = (b - d) / c;
      if (c < 0.0) std::swap(na, nb);
      lo[q] = std::max(lo[q], na);
      hi[q] = std::min(hi[q], nb);
      if (lo[q] > hi[q]) {
        box.empty = true;
        return box;
      }
      merged = true;
      break;
    }
    if (merged) continue;
    keep.push_back(i);
    lo.push_back(a);
    hi.push_back(b);
  }

  const int k = static_cast<int>(keep.size());
  box.law.mean.resize(k);
  box.law.covariance.resize(k, k);
  box.lower.resize(k);
  box.upper.resize(k);
  for (int p = 0; p < k; ++p) {
    box.law.mean(p) = mu(keep[p]);
    box.lower(p) = lo[p];
    box.upper(p) = hi[p];
    for (int q = 0; q < k; ++q) box.law.covariance(p, q) = cov(keep[p], keep[q]);
  }
  return box;
}

double box_probability_bound(const ProjectedBox& box) {
  if (box.empty) return 0.0;
  double bound = 1.0;
  for (int i = 0; i < box.law.dim(); ++i) {
    const double s = std::sqrt(box.law.covariance(i, i));
    const double m = box.law.mean(i);
    bound = std::min(bound, band_mass((box.lower(i) - m) / s, (box.upper(i) - m) / s));
  }
  return bound;
}

ProbabilityEstimate rectangle_probability(const GaussianLaw& law, const Eigen::Ref<const Eigen::VectorXd>& lower,
                                          const Eigen::Ref<const Eigen::VectorXd>& upper,
                                          const QuadratureOptions& options) {
  const int m = law.dim();
  if (lower.size() != m || upper.size() != m) throw std::invalid_argument("rectangle_probability: bounds mismatch");
  ProbabilityEstimate out;
  if (m == 0) {
    out.value = 1.0;
    return out;
  }

  // Standardize; zero-variance rows are decided on the spot.
  std::vector<int> live;
  for (int i = 0; i < m; ++i) {
    if (law.covariance(i, i) < 0.0) throw NumericsError("rectangle_probability: negative variance");
    if (law.covariance(i, i) == 0.0) {
      if (law.mean(i) < lower(i) || law.mean(i) > upper(i)) return out;
      continue;
    }
    live.push_back(i);
  }
  const int n = static_cast<int>(live.size());
  if (n == 0) {
    out.value = 1.0;
    return out;
  }
  Eigen::MatrixXd corr(n, n);
  Eigen::VectorXd lo(n), hi(n);
  for (int p = 0; p < n; ++p) {
    const double sp = std::sqrt(law.covariance(live[p], live[p]));
    lo(p) = (lower(live[p]) - law.mean(live[p])) / sp;
    hi(p) = (upper(live[p]) - law.mean(live[p])) / sp;
    if (!(hi(p) > lo(p))) return out;
    for (int q = 0; q < n; ++q) {
      corr(p, q) = law.covariance(live[p], live[q]) /
                   (sp * std::sqrt(law.covariance(live[q], live[q])));
    }
  }

  return split_and_integrate(corr, lo, hi, options);
}

ProbabilityEstimate box_probability(const GaussianLaw& law, const LinearConstraints& constraints,
                                    const QuadratureOptions& options) {
  const auto box = project(law, constraints);
  if (box.empty) return {};
  return rectangle_probability(box.law, box.lower, box.upper, options);
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& covariance) {
  const auto m = covariance.rows();
  if (m == 0) return {};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
  if (eig.info() != Eigen::Success) throw NumericsError("psd_factor: eigendecomposition failed");
  const double floor = -1e-10 * std::max(covariance.trace(), 1e-300);
  if (eig.eigenvalues().minCoeff() < floor) throw NumericsError("psd_factor: covariance is not positive semidefinite");
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

ProbabilityEstimate mc_rectangle_probability(const GaussianLaw& law, const Eigen::Ref<const Eigen::VectorXd>& lower,
                                             const Eigen::Ref<const Eigen::VectorXd>& upper, std::int64_t n,
                                             std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("mc_rectangle_probability: need at least one sample");
  const int m = law.dim();
  ProbabilityEstimate out;
  out.samples_or_points = n;
  if ((lower.array() == -kInf).all() && (upper.array() == kInf).all()) {
    out.value = 1.0;
    return out;
  }
  const Eigen::MatrixXd factor = psd_factor(law.covariance);
  Eigen::VectorXd z(m), x(m);
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    for (int d = 0; d < m; ++d) z(d) = normal_quantile(rng.uniform());
    x.noalias() = law.mean + factor * z;
    if ((x.array() >= lower.array()).all() && (x.array() <= upper.array()).all()) ++hits;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(n);
  out.value = p;
  out.error = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  return out;
}

}  // namespace twozone
