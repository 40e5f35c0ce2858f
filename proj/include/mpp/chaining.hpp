#pragma once

// gamma_alpha functionals of finite metric spaces, the chaining series p(u)
// and Monte-Carlo checks of the uniform tail over an indexed integrand family.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "mpp/point_process.hpp"

namespace mpp {

struct MetricChecks {
  bool triangle = true;
  /// d(i, j) = 0 only for i = j.
  bool separation = true;
};

class FiniteMetricSpace {
 public:
  using Checks = MetricChecks;

  explicit FiniteMetricSpace(Eigen::MatrixXd distances, std::vector<std::string> ids = {},
                             Checks checks = Checks{});

  Index size() const { return d_.rows(); }
  double operator()(Index i, Index j) const { return d_(i, j); }
  const Eigen::MatrixXd& distances() const { return d_; }
  const std::vector<std::string>& ids() const { return ids_; }
  double diameter() const { return d_.size() ? d_.maxCoeff() : 0.0; }

  FiniteMetricSpace scaled(double c) const;
  FiniteMetricSpace subspace(const std::vector<Index>& points) const;

 private:
  Eigen::MatrixXd d_;
  std::vector<std::string> ids_;
  Checks checks_;
};

/// levels[n][i]: cell of point i at level n, numbered by first appearance.
struct PartitionSequence {
  std::vector<std::vector<int>> levels;
};

/// Cell-count cap of level n: 2^{2^n}, saturated far above any point count.
std::uint64_t level_capacity(std::size_t n);

/// Level 0 is one cell, levels refine, level n has at most 2^{2^n} cells and
/// the last level is all singletons. Reports the first violation in `why`.
bool is_admissible(const PartitionSequence& seq, Index points, std::string* why = nullptr);

struct GammaResult {
  double value = 0.0;
  PartitionSequence witness;
  /// sum_n 2^{n/alpha} diam(A_n(i)).
  Eigen::VectorXd per_point;
  bool exact = false;
};

GammaResult evaluate_gamma(const FiniteMetricSpace& space, const PartitionSequence& seq, int alpha);

inline constexpr Index kDefaultExactCap = 6;

/// Exhaustive minimum over admissible sequences; SizeError above `cap`
/// (at most 16 points).
GammaResult exact_gamma(const FiniteMetricSpace& space, int alpha, Index cap = kDefaultExactCap);
/// Farthest-point partition tree: an admissible witness, hence an upper bound.
GammaResult greedy_gamma(const FiniteMetricSpace& space, int alpha);
/// exact_gamma when the space fits under `cap`, greedy_gamma otherwise.
GammaResult gamma(const FiniteMetricSpace& space, int alpha, Index cap = kDefaultExactCap);

/// p(u) = sum_{n>=1} 2 * 2^{2^{n+1}} exp(-u 2^{n-1}), summed until a term
/// falls below `tolerance` times the partial sum. Diverges for u <= 4 ln 2.
double chain_tail(double u, double tolerance = 1e-16);

nlohmann::json to_json(const FiniteMetricSpace& space);
nlohmann::json to_json(const PartitionSequence& seq);
FiniteMetricSpace metric_space_from_json(const nlohmann::json& j);

struct TailPoint {
  double u = 0.0;
  double threshold = 0.0;
  std::size_t hits = 0;
  double empirical = 0.0;
  double cp99_upper = 1.0;
  /// c * e^{-u/2} at the fitted c.
  double bound = 0.0;
};

struct TailFit {
  /// Smallest c with cp99(P(sup >= c u scale)) <= c e^{-u/2} on every u (inf if none).
  double c = 0.0;
  std::vector<TailPoint> points;
  /// Least-squares slope of log(empirical) against u over points with hits.
  double slope = 0.0;
  std::size_t slope_points = 0;
};

TailFit fit_uniform_tail(std::span<const double> sups, double scale, std::span<const double> u_grid);

struct IndexedFamily {
  std::vector<std::string> names;
  std::vector<Integrand> members;
};

struct UniformReport {
  std::vector<std::string> names;
  double k_common = 0.0;
  bool conditioned = true;
  /// Symmetrized d1 and its raw one-sided values d1_raw(i, j) = Xi(W_i - W_j).
  Eigen::MatrixXd d1, d1_raw, d2;
  GammaResult gamma1, gamma2;
  double scale = 0.0;
  TailFit tail;
  double mean_sup = 0.0;
  /// mean of sup_psi X^psi_T over scale.
  double expectation_constant = 0.0;
  std::size_t replicates = 0;
  bool pass = false;
};

struct UniformOptions {
  std::size_t replicates = 10000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  Index exact_cap = kDefaultExactCap;
  int m_max = 8;
  double slope_limit = -0.4;
};

UniformReport verify_uniform(const IndexedFamily& family, const CompensatorModel& model, double horizon,
                             std::span<const double> u_grid, const UniformOptions& options);

}  // namespace mpp
