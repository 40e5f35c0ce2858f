#pragma once

// Functional-index empirical processes of finite-alphabet time series:
// X_n^psi = sum_{k<=n} (psi(Y_k) - E[psi(Y_k) | F_{k-1}]), realized as a
// point-process integral with T_k = k and marks Y_k.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mpp/bernstein.hpp"
#include "mpp/chaining.hpp"
#include "mpp/point_process.hpp"

namespace mpp {

/// Solves pi P = pi, sum(pi) = 1; ConfigError when the solution is not a
/// unique probability vector.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition);

class TimeSeriesModel {
 public:
  static TimeSeriesModel iid(Eigen::VectorXd alphabet, Eigen::VectorXd law);
  /// The chain starts from `initial`, or from its stationary law when omitted.
  static TimeSeriesModel markov(Eigen::VectorXd alphabet, Eigen::MatrixXd transition,
                                std::optional<Eigen::VectorXd> initial = std::nullopt);

  const MarkSpace& alphabet() const { return model_.marks(); }
  bool is_markov() const { return model_.state_dependent_kernel(); }
  /// Law of Y_k given Y_{k-1} = state (kNoMark for k = 1).
  const Eigen::VectorXd& kernel(State state) const { return model_.kernel(state); }
  /// The point-process embedding: unit atom spacing, atom mass 1.
  const CompensatorModel& embedding() const { return model_; }
  /// States with positive probability of being a conditioning state.
  std::vector<State> reachable_states() const;

  /// Y_1..Y_n as alphabet values; the same draws as simulate(embedding()).
  std::vector<double> simulate(Index n, std::uint64_t seed) const;

 private:
  explicit TimeSeriesModel(CompensatorModel model) : model_(std::move(model)) {}
  CompensatorModel model_;
};

void write_series_csv(std::ostream& out, std::span<const double> series);

class FunctionClass {
 public:
  /// values(i, y): member i at alphabet position y.
  FunctionClass(std::vector<std::string> names, Eigen::MatrixXd values);

  /// psi_j(y) = 1{y >= tau_j}.
  static FunctionClass thresholds(const Eigen::VectorXd& alphabet, const Eigen::VectorXd& taus);
  static FunctionClass identity(const Eigen::VectorXd& alphabet);

  Index size() const { return values_.rows(); }
  const std::vector<std::string>& names() const { return names_; }
  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::VectorXd member(Index i) const { return values_.row(i).transpose(); }
  Integrand integrand(Index i) const { return Integrand::mark_table(member(i)); }
  double bound() const { return values_.size() ? values_.cwiseAbs().maxCoeff() : 0.0; }

 private:
  std::vector<std::string> names_;
  Eigen::MatrixXd values_;
};

/// X_1..X_n along `series` (alphabet values). DataError for foreign symbols.
std::vector<double> index_process(std::span<const double> series, const Eigen::VectorXd& psi,
                                  const TimeSeriesModel& model);

struct ClassMetrics {
  /// d1_raw(i, j) = max_state E[max{0, psi_i - psi_j}(Y) | state].
  Eigen::MatrixXd d1_raw;
  FiniteMetricSpace d1;
  FiniteMetricSpace d2;
};

ClassMetrics class_metrics(const FunctionClass& cls, const TimeSeriesModel& model);

/// Smallest K satisfying (nc1)/(nc2) for psi at every reachable state.
ConditionVerdict nc_condition(const Eigen::VectorXd& psi, const TimeSeriesModel& model, int m_max = 8);

/// sum_{k<=n} E[(psi(Y_k) - E[psi(Y_k) | F_{k-1}])^2].
double exact_variance(const Eigen::VectorXd& psi, const TimeSeriesModel& model, Index n);

/// Stopped-event dominance through the embedding. K is the larger of the
/// (nc1)/(nc2) constants of psi and -psi.
TailReport verify_theorem3(const Eigen::VectorXd& psi, const TimeSeriesModel& model, Index n, double x, double y2,
                           std::size_t replicates, std::uint64_t seed, Sided sided = Sided::two,
                           unsigned workers = 1);

struct EmpiricalUniformReport {
  Index n = 0;
  double k_common = 0.0;
  bool conditioned = true;
  Eigen::MatrixXd d1_raw, d1, d2;
  GammaResult gamma1, gamma2;
  /// sqrt(n) gamma_2(d2) + n gamma_1(d1).
  double scale = 0.0;
  /// Largest deviation in gamma_2(sqrt(n) d2) = sqrt(n) gamma_2(d2) and
  /// gamma_1(n d1) = n gamma_1(d1).
  double scaling_error = 0.0;
  bool scaling_ok = false;
  TailFit tail;
  std::size_t replicates = 0;
  bool pass = false;
};

EmpiricalUniformReport verify_theorem4(const FunctionClass& cls, const TimeSeriesModel& model, Index n,
                                       std::span<const double> u_grid, const UniformOptions& options);

}  // namespace mpp
