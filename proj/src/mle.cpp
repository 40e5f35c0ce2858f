#include "mpp/mle.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "mpp/parallel.hpp"
#include "mpp/random.hpp"
#include "mpp/stats.hpp"

namespace mpp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

ParametricFamily::ParametricFamily(Eigen::VectorXd support, Eigen::VectorXd theta, Eigen::MatrixXd densities,
                                   Index theta0)
    : support_(std::move(support)), theta_(std::move(theta)), densities_(std::move(densities)), theta0_(theta0) {
  if (support_.size() == 0 || theta_.size() == 0) throw ConfigError("family needs a support and a parameter grid");
  if (densities_.rows() != theta_.size() || densities_.cols() != support_.size())
    throw ConfigError("density table must have one row per theta and one column per support point");
  MarkSpace distinct(support_);  // validates distinct support values
  for (Index i = 0; i < densities_.rows(); ++i) {
    if ((densities_.row(i).array() < 0.0).any() || !densities_.row(i).allFinite())
      throw ConfigError("densities must be finite and nonnegative");
    if (std::abs(densities_.row(i).sum() - 1.0) > 1e-12) throw ConfigError("each density must sum to 1");
  }
  if (theta0_ < 0 || theta0_ >= theta_.size()) throw ConfigError("theta0 is not on the grid");
  if ((densities_.row(theta0_).array() <= 0.0).any()) throw ConfigError("f_theta0 must be positive on the support");
}

ParametricFamily ParametricFamily::bernoulli_grid(double lo, double hi, double step, double theta0) {
  if (!(step > 0.0) || !(lo >= 0.0) || !(hi <= 1.0) || !(lo <= hi)) throw ConfigError("invalid Bernoulli grid");
  const auto count = static_cast<Index>(std::llround((hi - lo) / step)) + 1;
  Eigen::VectorXd theta(count);
  Eigen::MatrixXd dens(count, 2);
  Index t0 = -1;
  for (Index i = 0; i < count; ++i) {
    theta(i) = lo + static_cast<double>(i) * step;
    dens(i, 0) = 1.0 - theta(i);
    dens(i, 1) = theta(i);
    if (std::abs(theta(i) - theta0) <= 1e-9) t0 = i;
  }
  if (t0 < 0) throw ConfigError("theta0 is not on the Bernoulli grid");
  return ParametricFamily(Eigen::Vector2d(0.0, 1.0), std::move(theta), std::move(dens), t0);
}

ParametricFamily ParametricFamily::categorical_tilt(const Eigen::VectorXd& base, const Eigen::VectorXd& tilts,
                                                    double theta0) {
  const Index k = base.size();
  Eigen::VectorXd support(k);
  for (Index y = 0; y < k; ++y) support(y) = static_cast<double>(y);
  Eigen::MatrixXd dens(tilts.size(), k);
  Index t0 = -1;
  for (Index i = 0; i < tilts.size(); ++i) {
    for (Index y = 0; y < k; ++y) dens(i, y) = base(y) * std::exp(tilts(i) * support(y));
    dens.row(i) /= dens.row(i).sum();
    if (std::abs(tilts(i) - theta0) <= 1e-12) t0 = i;
  }
  if (t0 < 0) throw ConfigError("theta0 is not among the tilts");
  return ParametricFamily(std::move(support), tilts, std::move(dens), t0);
}

Index fit_counts(const Eigen::VectorXi& counts, const ParametricFamily& family) {
  if (counts.size() != family.support().size()) throw DataError("counts must match the support");
  if (counts.sum() <= 0) throw DataError("sample is empty");
  Index best = -1;
  double best_ll = -kInf;
  for (Index i = 0; i < family.size(); ++i) {
    double ll = 0.0;
    for (Index y = 0; y < counts.size() && ll > -kInf; ++y) {
      if (counts(y) == 0) continue;
      const double f = family.densities()(i, y);
      ll = f > 0.0 ? ll + counts(y) * std::log(f) : -kInf;
    }
    if (ll > best_ll) {
      best_ll = ll;
      best = i;
    }
  }
  if (best < 0) throw InfeasibleError("every theta on the grid has zero likelihood");
  return best;
}

Index fit(std::span<const double> sample, const ParametricFamily& family) {
  if (sample.empty()) throw DataError("sample is empty");
  const MarkSpace support(family.support());
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(support.size());
  for (double x : sample) {
    const auto pos = support.find(x);
    if (!pos) throw DataError("sample value " + std::to_string(x) + " is not in the support");
    ++counts(*pos);
  }
  return fit_counts(counts, family);
}

GClass g_class(const ParametricFamily& family, int m_max) {
  if (m_max < 3) throw ConfigError("m_max must be >= 3");
  const Index k = family.size();
  const Eigen::VectorXd f0 = family.density(family.theta0());
  Eigen::MatrixXd g(k, f0.size());
  for (Index i = 0; i < k; ++i) g.row(i) = (family.density(i).array() / f0.array()).sqrt().transpose() - 1.0;
  Eigen::MatrixXd d1 = Eigen::MatrixXd::Zero(k, k), d2 = Eigen::MatrixXd::Zero(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = i + 1; j < k; ++j) {
      const Eigen::VectorXd diff = (g.row(i) - g.row(j)).transpose();
      d1(i, j) = d1(j, i) = f0.dot(diff.cwiseAbs());
      d2(i, j) = d2(j, i) = std::sqrt(f0.dot(diff.cwiseAbs2()));
    }
  std::vector<std::string> ids;
  for (Index i = 0; i < k; ++i) {
    std::ostringstream s;
    s << family.theta()(i);
    ids.push_back(s.str());
  }

  ConditionVerdict v;
  v.k_moment.assign(static_cast<std::size_t>(m_max - 2), 0.0);
  for (Index i = 0; i < k; ++i) {
    const Eigen::ArrayXd a = g.row(i).transpose().array().abs();
    v.xi = std::max(v.xi, f0.dot(a.matrix()));
    const double second = f0.dot(a.square().matrix());
    double fact = 2.0;
    for (int m = 3; m <= m_max; ++m) {
      fact *= m;
      const double q = f0.dot(a.pow(m).matrix());
      const double need = q > 0.0 ? std::pow(2.0 * q / (fact * second), 1.0 / (m - 2)) : 0.0;
      auto& slot = v.k_moment[static_cast<std::size_t>(m - 3)];
      slot = std::max(slot, need);
    }
  }
  v.k_hat = v.xi;
  for (int m = 3; m <= m_max; ++m)
    if (v.k_moment[static_cast<std::size_t>(m - 3)] > v.k_hat) {
      v.k_hat = v.k_moment[static_cast<std::size_t>(m - 3)];
      v.binding = "m=" + std::to_string(m);
    }
  return {std::move(g), FiniteMetricSpace(std::move(d1), ids, {.triangle = true, .separation = false}),
          FiniteMetricSpace(std::move(d2), ids, {.triangle = true, .separation = false}), std::move(v)};
}

MleReport verify_theorem5(const ParametricFamily& family, std::span<const Index> n_grid,
                          std::span<const double> u_grid, const MleOptions& options) {
  if (n_grid.empty() || u_grid.empty()) throw ConfigError("n and u grids must be non-empty");
  for (Index n : n_grid)
    if (n < 1) throw ConfigError("sample sizes must be >= 1");
  for (double u : u_grid)
    if (!(u > 0.0)) throw ConfigError("u grid values must be positive");
  if (options.replicates < 2) throw ConfigError("MLE verification needs at least 2 replicates");

  MleReport r;
  r.replicates = options.replicates;
  const auto cls = g_class(family, options.m_max);
  r.conditioned = cls.condition.feasible && std::isfinite(cls.condition.k_hat);
  r.k = cls.condition.k_hat;
  r.gamma1 = gamma(cls.d1, 1, options.exact_cap);
  r.gamma2 = gamma(cls.d2, 2, options.exact_cap);

  const Eigen::VectorXd f0 = family.density(family.theta0());
  const std::size_t reps = options.replicates;
  std::vector<std::vector<double>> h2(n_grid.size(), std::vector<double>(reps));
  for (std::size_t j = 0; j < n_grid.size(); ++j) {
    const Index n = n_grid[j];
    std::vector<unsigned char> violated(reps, 0);
    parallel_for(reps, options.workers, [&](std::size_t i) {
      Rng rng(derive_seed(derive_seed(options.seed, j), i));
      Eigen::VectorXi counts = Eigen::VectorXi::Zero(f0.size());
      for (Index k = 0; k < n; ++k) ++counts(rng.categorical(f0));
      const Index hat = fit_counts(counts, family);
      const double h = hellinger(family.density(hat), f0);
      h2[j][i] = h;
      // int g_hat d(P_n - P_0) must dominate h^2(f_hat, f_0).
      const Eigen::VectorXd pn = counts.cast<double>() / static_cast<double>(n);
      const double lhs = (pn - f0).dot(cls.g.row(hat).transpose());
      violated[i] = lhs < h - 1e-12 ? 1 : 0;
    });
    MleRow row;
    row.n = n;
    row.median = quantile(h2[j], 0.5);
    row.q90 = quantile(h2[j], 0.9);
    row.q99 = quantile(h2[j], 0.99);
    row.mean = estimate_mean(h2[j]).mean;
    for (auto v : violated) row.proof_violations += v;
    r.rows.push_back(row);
  }

  // Shared-C fit: the right-hand side increases in C.
  std::vector<std::vector<double>> sorted = h2;
  for (auto& s : sorted) std::sort(s.begin(), s.end());
  auto hits = [&](std::size_t j, double u) {
    return static_cast<std::size_t>(sorted[j].end() - std::lower_bound(sorted[j].begin(), sorted[j].end(), u));
  };
  auto rhs = [&](double c, Index n, double u) {
    const double nn = static_cast<double>(n);
    const double scale = std::sqrt(nn) * r.gamma2.value + r.gamma1.value;
    return scale > 0.0 ? c * std::exp(-nn * u / (2.0 * c * scale)) : 0.0;
  };
  // h^2 never exceeds its largest value over the grid; beyond it P = 0 exactly.
  double h2_max = 0.0;
  for (Index i = 0; i < family.size(); ++i) h2_max = std::max(h2_max, hellinger(family.density(i), f0));
  auto upper = [&](std::size_t j, double u) { return u > h2_max ? 0.0 : cp99_upper(hits(j, u), reps); };
  auto holds = [&](double c) {
    for (std::size_t j = 0; j < n_grid.size(); ++j)
      for (double u : u_grid)
        if (upper(j, u) > rhs(c, n_grid[j], u)) return false;
    return true;
  };
  double lo = 1e-12, hi = 1e12;
  if (!holds(hi)) {
    r.c = kInf;
  } else if (holds(lo)) {
    r.c = lo;
  } else {
    for (int it = 0; it < 200; ++it) {
      const double mid = std::sqrt(lo * hi);
      (holds(mid) ? hi : lo) = mid;
    }
    r.c = hi;
  }
  for (std::size_t j = 0; j < n_grid.size(); ++j)
    for (double u : u_grid) {
      MleTailPoint p;
      p.n = n_grid[j];
      p.u = u;
      p.hits = hits(j, u);
      p.empirical = static_cast<double>(p.hits) / static_cast<double>(reps);
      p.cp99_upper = upper(j, u);
      p.bound = std::isfinite(r.c) ? rhs(r.c, p.n, u) : 1.0;
      r.tail.push_back(p);
    }

  std::vector<std::size_t> order(n_grid.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return n_grid[a] < n_grid[b]; });
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& row = r.rows[order[k]];
    if (k > 0 && row.median > r.rows[order[k - 1]].median) r.median_nonincreasing = false;
    if (row.median > 0.0) {
      xs.push_back(std::log(static_cast<double>(row.n)));
      ys.push_back(std::log(row.median));
    }
  }
  r.slope_points = xs.size();
  r.slope = least_squares_slope(xs, ys);
  r.slope_ok = xs.size() < 2 || std::abs(r.slope - options.slope_target) <= options.slope_tolerance;

  std::size_t violations = 0;
  for (const auto& row : r.rows) violations += row.proof_violations;
  r.pass = r.conditioned && violations == 0 && std::isfinite(r.c) && r.median_nonincreasing && r.slope_ok;
  return r;
}

}  // namespace mpp
