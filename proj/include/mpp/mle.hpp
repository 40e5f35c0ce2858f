#pragma once

// Grid maximum likelihood on finite supports, Hellinger distance and the
// transformed likelihood-ratio class g_theta = sqrt(f_theta / f_theta0) - 1.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mpp/bernstein.hpp"
#include "mpp/chaining.hpp"

namespace mpp {

class ParametricFamily {
 public:
  /// densities(i, y): f_{theta_i}(support_y).
  ParametricFamily(Eigen::VectorXd support, Eigen::VectorXd theta, Eigen::MatrixXd densities, Index theta0);

  /// Bernoulli(theta) on {0, 1} for theta = lo, lo + step, ..., hi.
  static ParametricFamily bernoulli_grid(double lo, double hi, double step, double theta0);
  /// f_t(y) proportional to base(y) e^{t y} on {0, 1, ..., base.size() - 1}.
  static ParametricFamily categorical_tilt(const Eigen::VectorXd& base, const Eigen::VectorXd& tilts, double theta0);

  const Eigen::VectorXd& support() const { return support_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  const Eigen::MatrixXd& densities() const { return densities_; }
  Eigen::VectorXd density(Index i) const { return densities_.row(i).transpose(); }
  Index theta0() const { return theta0_; }
  Index size() const { return theta_.size(); }

 private:
  Eigen::VectorXd support_;
  Eigen::VectorXd theta_;
  Eigen::MatrixXd densities_;
  Index theta0_;
};

/// h^2(f, g) = (1/2) sum (sqrt f - sqrt g)^2, clamped to [0, 1].
template <typename A, typename B>
double hellinger(const Eigen::MatrixBase<A>& f, const Eigen::MatrixBase<B>& g) {
  if (f.size() != g.size()) throw DataError("hellinger: densities live on different supports");
  double s = 0.0;
  for (Index i = 0; i < f.size(); ++i) {
    const double d = std::sqrt(f(i)) - std::sqrt(g(i));
    s += d * d;
  }
  return std::min(1.0, 0.5 * s);
}

/// 1 - sum sqrt(f g); equal to hellinger() for probability vectors.
template <typename A, typename B>
double hellinger_affinity(const Eigen::MatrixBase<A>& f, const Eigen::MatrixBase<B>& g) {
  if (f.size() != g.size()) throw DataError("hellinger: densities live on different supports");
  double s = 0.0;
  for (Index i = 0; i < f.size(); ++i) s += std::sqrt(f(i) * g(i));
  return 1.0 - s;
}

/// Grid MLE from symbol counts; ties go to the smallest index.
Index fit_counts(const Eigen::VectorXi& counts, const ParametricFamily& family);
/// Grid MLE from observed support values.
Index fit(std::span<const double> sample, const ParametricFamily& family);

struct GClass {
  /// g(i, y) = sqrt(f_i(y) / f_theta0(y)) - 1.
  Eigen::MatrixXd g;
  FiniteMetricSpace d1;
  FiniteMetricSpace d2;
  /// Smallest K with E|g| <= K and E|g|^m <= (m!/2) K^{m-2} E g^2 for every theta.
  ConditionVerdict condition;
};

GClass g_class(const ParametricFamily& family, int m_max = 8);

struct MleRow {
  Index n = 0;
  double median = 0.0;
  double mean = 0.0;
  double q90 = 0.0;
  double q99 = 0.0;
  /// Replicates violating  int g_hat d(P_n - P_0) >= h^2(f_hat, f_0).
  std::size_t proof_violations = 0;
};

struct MleTailPoint {
  Index n = 0;
  double u = 0.0;
  std::size_t hits = 0;
  double empirical = 0.0;
  double cp99_upper = 1.0;
  double bound = 0.0;
};

struct MleOptions {
  std::size_t replicates = 10000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  Index exact_cap = kDefaultExactCap;
  int m_max = 8;
  double slope_target = -1.0;
  double slope_tolerance = 0.3;
};

struct MleReport {
  bool conditioned = true;
  double k = 0.0;
  GammaResult gamma1, gamma2;
  std::vector<MleRow> rows;
  std::vector<MleTailPoint> tail;
  /// Smallest shared C with cp99 <= C exp(-n u / (2 C (sqrt(n) gamma_2 + gamma_1))) everywhere.
  double c = 0.0;
  bool median_nonincreasing = true;
  /// log-log slope of the median over the n with positive median.
  double slope = 0.0;
  std::size_t slope_points = 0;
  bool slope_ok = true;
  std::size_t replicates = 0;
  bool pass = false;
};

MleReport verify_theorem5(const ParametricFamily& family, std::span<const Index> n_grid,
                          std::span<const double> u_grid, const MleOptions& options);

}  // namespace mpp
