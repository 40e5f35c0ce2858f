#include "mpp/empirical.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "mpp/parallel.hpp"
#include "mpp/random.hpp"
#include "mpp/stats.hpp"

namespace mpp {

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition) {
  const Index n = transition.rows();
  if (n == 0 || transition.cols() != n) throw ConfigError("transition matrix must be square and non-empty");
  Eigen::MatrixXd a = transition.transpose() - Eigen::MatrixXd::Identity(n, n);
  a.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) throw ConfigError("transition matrix has no unique stationary distribution");
  Eigen::VectorXd pi = lu.solve(b);
  if ((pi.array() < -1e-12).any()) throw ConfigError("stationary solution has negative mass");
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  if ((pi.transpose() * transition - pi.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ConfigError("stationary distribution did not converge to 1e-12");
  return pi;
}

TimeSeriesModel TimeSeriesModel::iid(Eigen::VectorXd alphabet, Eigen::VectorXd law) {
  return TimeSeriesModel(CompensatorModel::atoms(MarkSpace(std::move(alphabet)), 1.0, 1.0, std::move(law)));
}

TimeSeriesModel TimeSeriesModel::markov(Eigen::VectorXd alphabet, Eigen::MatrixXd transition,
                                        std::optional<Eigen::VectorXd> initial) {
  if (transition.rows() != alphabet.size() || transition.cols() != alphabet.size())
    throw ConfigError("transition matrix must have one row and column per symbol");
  Eigen::VectorXd start = initial ? std::move(*initial) : stationary_distribution(transition);
  return TimeSeriesModel(
      CompensatorModel::atoms(MarkSpace(std::move(alphabet)), 1.0, 1.0, std::move(start), std::move(transition)));
}

std::vector<State> TimeSeriesModel::reachable_states() const {
  const Index n = alphabet().size();
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::vector<State> out{kNoMark}, frontier{kNoMark};
  while (!frontier.empty()) {
    const State s = frontier.back();
    frontier.pop_back();
    const auto& k = kernel(s);
    for (Index y = 0; y < n; ++y)
      if (k(y) > 0.0 && !seen[static_cast<std::size_t>(y)]) {
        seen[static_cast<std::size_t>(y)] = true;
        out.push_back(y);
        frontier.push_back(y);
      }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> TimeSeriesModel::simulate(Index n, std::uint64_t seed) const {
  if (n < 0) throw ConfigError("series length must be >= 0");
  std::vector<double> series;
  if (n == 0) return series;
  for (const auto& e : mpp::simulate(model_, static_cast<double>(n), seed).events)
    series.push_back(alphabet().value(e.mark));
  return series;
}

void write_series_csv(std::ostream& out, std::span<const double> series) {
  const auto precision = out.precision(17);
  out << "k,y_k\n";
  for (std::size_t k = 0; k < series.size(); ++k) out << k + 1 << ',' << series[k] << '\n';
  out.precision(precision);
}

// ---------------------------------------------------------------------------

FunctionClass::FunctionClass(std::vector<std::string> names, Eigen::MatrixXd values)
    : names_(std::move(names)), values_(std::move(values)) {
  if (values_.rows() == 0) throw ConfigError("function class must be non-empty");
  if (static_cast<Index>(names_.size()) != values_.rows()) throw ConfigError("one name per class member is required");
  if (!values_.allFinite()) throw ConfigError("class values must be finite");
}

FunctionClass FunctionClass::thresholds(const Eigen::VectorXd& alphabet, const Eigen::VectorXd& taus) {
  Eigen::MatrixXd v(taus.size(), alphabet.size());
  std::vector<std::string> names;
  for (Index j = 0; j < taus.size(); ++j) {
    std::ostringstream name;
    name << "ge_" << taus(j);
    names.push_back(name.str());
    for (Index y = 0; y < alphabet.size(); ++y) v(j, y) = alphabet(y) >= taus(j) ? 1.0 : 0.0;
  }
  return FunctionClass(std::move(names), std::move(v));
}

FunctionClass FunctionClass::identity(const Eigen::VectorXd& alphabet) {
  return FunctionClass({"identity"}, alphabet.transpose());
}

std::vector<double> index_process(std::span<const double> series, const Eigen::VectorXd& psi,
                                  const TimeSeriesModel& model) {
  const auto& marks = model.alphabet();
  if (psi.size() != marks.size()) throw DataError("psi must have one value per symbol");
  std::vector<double> path;
  path.reserve(series.size());
  State state = kNoMark;
  double x = 0.0;
  for (double y : series) {
    const auto pos = marks.find(y);
    if (!pos) throw DataError("symbol " + std::to_string(y) + " is not in the alphabet");
    const auto& k = model.kernel(state);
    double mean = 0.0;
    for (Index i = 0; i < marks.size(); ++i) mean += psi(i) * k(i);
    x += psi(*pos) - 1.0 * mean;
    path.push_back(x);
    state = *pos;
  }
  return path;
}

ClassMetrics class_metrics(const FunctionClass& cls, const TimeSeriesModel& model) {
  const Index m = cls.size();
  if (cls.values().cols() != model.alphabet().size()) throw ConfigError("class width must match the alphabet");
  const auto states = model.reachable_states();
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(m, m), d2 = Eigen::MatrixXd::Zero(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) {
      if (i == j) continue;
      const Eigen::VectorXd diff = cls.member(i) - cls.member(j);
      for (State s : states) {
        const auto& k = model.kernel(s);
        raw(i, j) = std::max(raw(i, j), k.dot(diff.cwiseMax(0.0)));
        d2(i, j) = std::max(d2(i, j), std::sqrt(k.dot(diff.cwiseAbs2())));
      }
    }
  Eigen::MatrixXd d1 = raw.cwiseMax(raw.transpose());
  return {raw, FiniteMetricSpace(std::move(d1), cls.names(), {.triangle = false, .separation = false}),
          FiniteMetricSpace(std::move(d2), cls.names(), {.triangle = true, .separation = false})};
}

ConditionVerdict nc_condition(const Eigen::VectorXd& psi, const TimeSeriesModel& model, int m_max) {
  if (m_max < 3) throw ConfigError("m_max must be >= 3");
  ConditionVerdict v;
  v.k_moment.assign(static_cast<std::size_t>(m_max - 2), 0.0);
  const Eigen::VectorXd pos = psi.cwiseMax(0.0);
  for (State s : model.reachable_states()) {
    const auto& k = model.kernel(s);
    const double xi = k.dot(pos), second = k.dot(psi.cwiseAbs2());
    v.xi = std::max(v.xi, xi);
    double fact = 2.0;
    for (int m = 3; m <= m_max; ++m) {
      fact *= m;
      const double q = k.dot(pos.array().pow(m).matrix());
      double need = 0.0;
      if (q > 0.0) need = second > 0.0 ? std::pow(2.0 * q / (fact * second), 1.0 / (m - 2)) : INFINITY;
      auto& slot = v.k_moment[static_cast<std::size_t>(m - 3)];
      slot = std::max(slot, need);
    }
  }
  v.k_hat = v.xi;
  for (int m = 3; m <= m_max; ++m) {
    const double need = v.k_moment[static_cast<std::size_t>(m - 3)];
    if (!std::isfinite(need)) v.feasible = false;
    if (need > v.k_hat) {
      v.k_hat = need;
      v.binding = "m=" + std::to_string(m);
    }
  }
  v.exact = !model.is_markov();
  return v;
}

double exact_variance(const Eigen::VectorXd& psi, const TimeSeriesModel& model, Index n) {
  const Index a = model.alphabet().size();
  if (psi.size() != a) throw DataError("psi must have one value per symbol");
  auto conditional_variance = [&](State s) {
    const auto& k = model.kernel(s);
    const double mean = k.dot(psi);
    return k.dot((psi.array() - mean).square().matrix());
  };
  double total = 0.0;
  if (n <= 0) return total;
  total += conditional_variance(kNoMark);
  Eigen::VectorXd dist = model.kernel(kNoMark);  // law of Y_1
  Eigen::VectorXd v(a);
  for (Index y = 0; y < a; ++y) v(y) = conditional_variance(y);
  for (Index k = 2; k <= n; ++k) {
    total += dist.dot(v);
    Eigen::VectorXd next = Eigen::VectorXd::Zero(a);
    for (Index s = 0; s < a; ++s) next += dist(s) * model.kernel(s);
    dist = std::move(next);
  }
  return total;
}

TailReport verify_theorem3(const Eigen::VectorXd& psi, const TimeSeriesModel& model, Index n, double x, double y2,
                           std::size_t replicates, std::uint64_t seed, Sided sided, unsigned workers) {
  if (psi.size() != model.alphabet().size()) throw DataError("psi must have one value per symbol");
  if (n < 0) throw ConfigError("series length must be >= 0");
  const auto plus = nc_condition(psi, model);
  const auto minus = nc_condition(-psi, model);
  const bool feasible = plus.feasible && (sided == Sided::one || minus.feasible);
  const double k = sided == Sided::one ? plus.k_hat : std::max(plus.k_hat, minus.k_hat);
  if (n == 0) {
    // X_0 = 0: only x = 0 is reached.
    if (replicates < 1000) throw ConfigError("tail verification needs at least 1000 replicates");
    TailReport r;
    r.x = x;
    r.y2 = y2;
    r.k = k;
    r.sided = sided;
    r.replicates = replicates;
    r.hits = x <= 0.0 ? replicates : 0;
    r.empirical = static_cast<double>(r.hits) / static_cast<double>(replicates);
    r.exact_zero = x > 0.0;
    r.cp99_upper = r.exact_zero ? 0.0 : 1.0;
    r.cp99_lower = r.exact_zero ? 0.0 : clopper_pearson(r.hits, replicates).lower;
    r.bound = tail_bound(x, y2, k);
    r.lambda_opt = x > 0.0 ? optimal_lambda(x, y2, k) : 0.0;
    r.conditioned = feasible;
    r.pass = feasible && r.cp99_upper <= r.bound;
    return r;
  }
  auto r = mc_tail_verify(Integrand::mark_table(psi), model.embedding(), static_cast<double>(n), x, y2,
                          feasible ? std::optional<double>(k) : std::nullopt, replicates, seed, sided, workers);
  if (!feasible) {
    r.conditioned = false;
    r.pass = false;
  }
  return r;
}

EmpiricalUniformReport verify_theorem4(const FunctionClass& cls, const TimeSeriesModel& model, Index n,
                                       std::span<const double> u_grid, const UniformOptions& options) {
  if (n < 1) throw ConfigError("series length must be >= 1");
  if (options.replicates < 2) throw ConfigError("uniform verification needs at least 2 replicates");
  EmpiricalUniformReport r;
  r.n = n;
  r.replicates = options.replicates;
  for (Index i = 0; i < cls.size(); ++i) {
    const auto plus = nc_condition(cls.member(i), model, options.m_max);
    const auto minus = nc_condition(-cls.member(i), model, options.m_max);
    r.conditioned = r.conditioned && plus.feasible && minus.feasible;
    r.k_common = std::max({r.k_common, plus.k_hat, minus.k_hat});
  }
  const auto metrics = class_metrics(cls, model);
  r.d1_raw = metrics.d1_raw;
  r.d1 = metrics.d1.distances();
  r.d2 = metrics.d2.distances();
  r.gamma1 = gamma(metrics.d1, 1, options.exact_cap);
  r.gamma2 = gamma(metrics.d2, 2, options.exact_cap);
  const double nn = static_cast<double>(n), sn = std::sqrt(nn);
  r.scale = sn * r.gamma2.value + nn * r.gamma1.value;

  // Homogeneity: rescaling the metric rescales gamma by the same factor.
  const double g2 = gamma(metrics.d2.scaled(sn), 2, options.exact_cap).value;
  const double g1 = gamma(metrics.d1.scaled(nn), 1, options.exact_cap).value;
  r.scaling_error = std::max(std::abs(g2 - sn * r.gamma2.value), std::abs(g1 - nn * r.gamma1.value));
  r.scaling_ok = r.scaling_error <= 1e-12 * std::max({1.0, g1, g2});

  std::vector<double> sups(options.replicates);
  parallel_for(options.replicates, options.workers, [&](std::size_t i) {
    const auto series = model.simulate(n, derive_seed(options.seed, i));
    double s = 0.0;
    for (Index j = 0; j < cls.size(); ++j) s = std::max(s, std::abs(index_process(series, cls.member(j), model).back()));
    sups[i] = s;
  });
  r.tail = fit_uniform_tail(sups, r.scale, u_grid);
  r.pass = r.conditioned && r.scaling_ok && std::isfinite(r.tail.c) && r.tail.slope <= options.slope_limit;
  return r;
}

}  // namespace mpp
