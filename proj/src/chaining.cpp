#include "mpp/chaining.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "mpp/bernstein.hpp"
#include "mpp/parallel.hpp"
#include "mpp/random.hpp"
#include "mpp/stats.hpp"

namespace mpp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

FiniteMetricSpace::FiniteMetricSpace(Eigen::MatrixXd distances, std::vector<std::string> ids, Checks checks)
    : d_(std::move(distances)), ids_(std::move(ids)), checks_(checks) {
  const Index n = d_.rows();
  if (n == 0 || d_.cols() != n) throw ConfigError("distance matrix must be square and non-empty");
  if (!d_.allFinite()) throw ConfigError("distances must be finite");
  if (ids_.empty())
    for (Index i = 0; i < n; ++i) ids_.push_back(std::to_string(i));
  if (static_cast<Index>(ids_.size()) != n) throw ConfigError("one identifier per point is required");
  const double tol = 1e-12 * std::max(1.0, d_.cwiseAbs().maxCoeff());
  for (Index i = 0; i < n; ++i) {
    if (d_(i, i) != 0.0) throw ConfigError("distance matrix must have a zero diagonal");
    for (Index j = 0; j < n; ++j) {
      if (d_(i, j) < 0.0) throw ConfigError("distances must be nonnegative");
      if (std::abs(d_(i, j) - d_(j, i)) > tol) throw ConfigError("distance matrix must be symmetric");
      if (checks_.separation && i != j && d_(i, j) == 0.0)
        throw ConfigError("distinct points at distance 0: " + ids_[i] + ", " + ids_[j]);
    }
  }
  if (checks_.triangle)
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        for (Index k = 0; k < n; ++k)
          if (d_(i, k) > d_(i, j) + d_(j, k) + tol)
            throw ConfigError("triangle inequality fails at " + ids_[i] + ", " + ids_[j] + ", " + ids_[k]);
}

FiniteMetricSpace FiniteMetricSpace::scaled(double c) const {
  if (!(c > 0.0)) throw ConfigError("scale factor must be positive");
  return FiniteMetricSpace(c * d_, ids_, checks_);
}

FiniteMetricSpace FiniteMetricSpace::subspace(const std::vector<Index>& points) const {
  const Index m = static_cast<Index>(points.size());
  Eigen::MatrixXd d(m, m);
  std::vector<std::string> ids;
  for (Index a = 0; a < m; ++a) {
    ids.push_back(ids_.at(static_cast<std::size_t>(points[a])));
    for (Index b = 0; b < m; ++b) d(a, b) = d_(points[a], points[b]);
  }
  return FiniteMetricSpace(std::move(d), std::move(ids), checks_);
}

// ---------------------------------------------------------------------------
// Admissible sequences

std::uint64_t level_capacity(std::size_t n) {
  if (n >= 6) return std::numeric_limits<std::uint64_t>::max();
  return std::uint64_t{1} << (std::uint64_t{1} << n);
}

bool is_admissible(const PartitionSequence& seq, Index points, std::string* why) {
  auto fail = [why](std::string msg) {
    if (why) *why = std::move(msg);
    return false;
  };
  if (seq.levels.empty()) return fail("no levels");
  for (std::size_t n = 0; n < seq.levels.size(); ++n) {
    const auto& level = seq.levels[n];
    if (static_cast<Index>(level.size()) != points) return fail("level " + std::to_string(n) + " has wrong size");
    std::vector<int> cells(level);
    std::sort(cells.begin(), cells.end());
    const auto count = static_cast<std::uint64_t>(std::unique(cells.begin(), cells.end()) - cells.begin());
    if (n == 0 && count != 1) return fail("level 0 is not the whole space");
    if (count > level_capacity(n)) return fail("level " + std::to_string(n) + " has too many cells");
    if (n > 0) {
      std::map<int, int> parent;
      for (std::size_t i = 0; i < level.size(); ++i) {
        auto [it, fresh] = parent.emplace(level[i], seq.levels[n - 1][i]);
        if (!fresh && it->second != seq.levels[n - 1][i])
          return fail("level " + std::to_string(n) + " does not refine level " + std::to_string(n - 1));
      }
    }
    if (n + 1 == seq.levels.size() && static_cast<Index>(count) != points)
      return fail("last level is not all singletons");
  }
  return true;
}

GammaResult evaluate_gamma(const FiniteMetricSpace& space, const PartitionSequence& seq, int alpha) {
  if (alpha != 1 && alpha != 2) throw ConfigError("alpha must be 1 or 2");
  std::string why;
  if (!is_admissible(seq, space.size(), &why)) throw ConfigError("inadmissible partition sequence: " + why);
  const Index n = space.size();
  GammaResult r;
  r.witness = seq;
  r.per_point = Eigen::VectorXd::Zero(n);
  for (std::size_t level = 0; level < seq.levels.size(); ++level) {
    const auto& cell = seq.levels[level];
    const double weight = std::pow(2.0, static_cast<double>(level) / alpha);
    const int cells = *std::max_element(cell.begin(), cell.end()) + 1;
    std::vector<double> diam(static_cast<std::size_t>(cells), 0.0);
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j)
        if (cell[static_cast<std::size_t>(i)] == cell[static_cast<std::size_t>(j)]) {
          double& d = diam[static_cast<std::size_t>(cell[static_cast<std::size_t>(i)])];
          d = std::max(d, space(i, j));
        }
    for (Index i = 0; i < n; ++i) r.per_point(i) += weight * diam[static_cast<std::size_t>(cell[static_cast<std::size_t>(i)])];
  }
  r.value = r.per_point.maxCoeff();
  return r;
}

namespace {

std::vector<int> singletons(Index n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = static_cast<int>(i);
  return v;
}

double max_cell_diameter(const FiniteMetricSpace& space, const std::vector<int>& cells) {
  double worst = 0.0;
  for (Index i = 0; i < space.size(); ++i)
    for (Index j = i + 1; j < space.size(); ++j)
      if (cells[static_cast<std::size_t>(i)] == cells[static_cast<std::size_t>(j)]) worst = std::max(worst, space(i, j));
  return worst;
}

// Advances a restricted growth string with labels < max_blocks; false when exhausted.
bool next_rgs(std::vector<int>& a, int max_blocks) {
  const std::size_t n = a.size();
  std::vector<int> prefix_max(n, 0);
  for (std::size_t i = 1; i < n; ++i) prefix_max[i] = std::max(prefix_max[i - 1], a[i - 1]);
  for (std::size_t i = n; i-- > 1;) {
    if (a[i] <= prefix_max[i] && a[i] + 1 < max_blocks) {
      ++a[i];
      std::fill(a.begin() + static_cast<std::ptrdiff_t>(i) + 1, a.end(), 0);
      return true;
    }
  }
  return false;
}

}  // namespace

GammaResult exact_gamma(const FiniteMetricSpace& space, int alpha, Index cap) {
  if (alpha != 1 && alpha != 2) throw ConfigError("alpha must be 1 or 2");
  if (cap > 16) throw ConfigError("exact solver cap cannot exceed 16 points");
  const Index n = space.size();
  if (n > cap)
    throw SizeError("exact gamma: " + std::to_string(n) + " points exceed the exhaustive cap " + std::to_string(cap));
  // With at most 16 points level 2 may be all singletons, so only the level-1
  // partition (at most 4 cells) is free; minimize its largest cell diameter.
  std::vector<int> candidate(static_cast<std::size_t>(n), 0), best = candidate;
  double best_score = kInf;
  do {
    const double score = max_cell_diameter(space, candidate);
    if (score < best_score) {
      best_score = score;
      best = candidate;
    }
  } while (next_rgs(candidate, 4));

  PartitionSequence seq;
  seq.levels.push_back(std::vector<int>(static_cast<std::size_t>(n), 0));
  if (n > 1) {
    seq.levels.push_back(best);
    if (*std::max_element(best.begin(), best.end()) + 1 < n) seq.levels.push_back(singletons(n));
  }
  auto r = evaluate_gamma(space, seq, alpha);
  r.exact = true;
  return r;
}

namespace {

// Splits `cell` into at most `parts` children by farthest-point seeding.
std::vector<std::vector<Index>> farthest_point_split(const FiniteMetricSpace& space, const std::vector<Index>& cell,
                                                     std::size_t parts) {
  parts = std::min(parts, cell.size());
  std::vector<Index> centers{cell.front()};
  std::vector<double> gap(cell.size());
  for (std::size_t i = 0; i < cell.size(); ++i) gap[i] = space(cell[i], centers[0]);
  while (centers.size() < parts) {
    std::size_t far = 0;
    for (std::size_t i = 1; i < cell.size(); ++i)
      if (gap[i] > gap[far]) far = i;
    if (gap[far] == 0.0) break;
    centers.push_back(cell[far]);
    for (std::size_t i = 0; i < cell.size(); ++i) gap[i] = std::min(gap[i], space(cell[i], cell[far]));
  }
  std::vector<std::vector<Index>> children(centers.size());
  for (Index p : cell) {
    std::size_t nearest = 0;
    for (std::size_t c = 1; c < centers.size(); ++c)
      if (space(p, centers[c]) < space(p, centers[nearest])) nearest = c;
    children[nearest].push_back(p);
  }
  return children;
}

double cell_diameter(const FiniteMetricSpace& space, const std::vector<Index>& cell) {
  double d = 0.0;
  for (Index a : cell)
    for (Index b : cell) d = std::max(d, space(a, b));
  return d;
}

std::vector<int> relabel(const std::vector<std::vector<Index>>& cells, Index n) {
  std::vector<int> raw(static_cast<std::size_t>(n));
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (Index p : cells[c]) raw[static_cast<std::size_t>(p)] = static_cast<int>(c);
  std::map<int, int> order;
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto [it, fresh] = order.emplace(raw[i], static_cast<int>(order.size()));
    out[i] = it->second;
  }
  return out;
}

}  // namespace

GammaResult greedy_gamma(const FiniteMetricSpace& space, int alpha) {
  const Index n = space.size();
  std::vector<std::vector<Index>> cells(1);
  for (Index i = 0; i < n; ++i) cells[0].push_back(i);
  PartitionSequence seq;
  seq.levels.push_back(relabel(cells, n));
  for (std::size_t level = 0; static_cast<Index>(cells.size()) < n; ++level) {
    const std::uint64_t budget = std::min<std::uint64_t>(level_capacity(level + 1), static_cast<std::uint64_t>(n));
    const std::uint64_t m = cells.size();
    std::vector<std::size_t> quota(cells.size(), static_cast<std::size_t>(budget / m));
    // Leftover budget goes to the widest cells first.
    std::vector<std::size_t> order(cells.size());
    std::vector<double> diam(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      order[c] = c;
      diam[c] = cell_diameter(space, cells[c]);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return diam[a] > diam[b]; });
    for (std::uint64_t extra = budget - (budget / m) * m, k = 0; k < extra; ++k) ++quota[order[k]];
    std::vector<std::vector<Index>> next;
    for (std::size_t c = 0; c < cells.size(); ++c)
      for (auto& child : farthest_point_split(space, cells[c], std::max<std::size_t>(quota[c], 1)))
        next.push_back(std::move(child));
    // Coincident points cannot be separated by distance; split them by index.
    if (next.size() == cells.size() && static_cast<Index>(next.size()) < n) {
      for (auto& cell : next)
        if (cell.size() > 1) {
          std::vector<Index> tail(cell.begin() + 1, cell.end());
          cell.resize(1);
          next.push_back(std::move(tail));
          break;
        }
    }
    cells = std::move(next);
    seq.levels.push_back(relabel(cells, n));
  }
  auto r = evaluate_gamma(space, seq, alpha);
  r.exact = n == 1;
  return r;
}

GammaResult gamma(const FiniteMetricSpace& space, int alpha, Index cap) {
  return space.size() <= cap ? exact_gamma(space, alpha, cap) : greedy_gamma(space, alpha);
}

double chain_tail(double u, double tolerance) {
  const double threshold = 4.0 * std::numbers::ln2;
  if (!(u > threshold))
    throw DivergenceError("p(u) diverges for u <= 4 ln 2 (u = " + std::to_string(u) + ")");
  double sum = 0.0;
  for (int n = 1; n < 2048; ++n) {
    const double term = 2.0 * std::exp(std::ldexp(1.0, n - 1) * (threshold - u));
    sum += term;
    if (term < tolerance * sum) return sum;
  }
  return sum;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const FiniteMetricSpace& space) {
  nlohmann::json matrix = nlohmann::json::array();
  for (Index i = 0; i < space.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < space.size(); ++j) row.push_back(space(i, j));
    matrix.push_back(std::move(row));
  }
  return {{"points", space.ids()}, {"matrix", std::move(matrix)}};
}

nlohmann::json to_json(const PartitionSequence& seq) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& level : seq.levels) {
    const int cells = level.empty() ? 0 : *std::max_element(level.begin(), level.end()) + 1;
    std::vector<std::vector<int>> members(static_cast<std::size_t>(cells));
    for (std::size_t i = 0; i < level.size(); ++i) members[static_cast<std::size_t>(level[i])].push_back(static_cast<int>(i));
    levels.push_back(members);
  }
  return {{"levels", std::move(levels)}};
}

FiniteMetricSpace metric_space_from_json(const nlohmann::json& j) {
  const auto& rows = j.at("matrix");
  const Index n = static_cast<Index>(rows.size());
  Eigen::MatrixXd d(n, n);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != n) throw ConfigError("matrix must be square");
    for (Index k = 0; k < n; ++k) d(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
  }
  std::vector<std::string> ids;
  if (j.contains("points")) ids = j.at("points").get<std::vector<std::string>>();
  return FiniteMetricSpace(std::move(d), std::move(ids));
}

// ---------------------------------------------------------------------------
// Uniform tail

TailFit fit_uniform_tail(std::span<const double> sups, double scale, std::span<const double> u_grid) {
  if (u_grid.empty()) throw ConfigError("u grid must be non-empty");
  for (double u : u_grid)
    if (!(u > 0.0)) throw ConfigError("u grid values must be positive");
  if (sups.empty()) throw ConfigError("no replicates to fit");
  std::vector<double> sorted(sups.begin(), sups.end());
  std::sort(sorted.begin(), sorted.end());
  auto count = [&](double threshold) {
    return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), threshold));
  };
  auto holds = [&](double c) {
    for (double u : u_grid)
      if (cp99_upper(count(c * u * scale), sorted.size()) > c * std::exp(-u / 2)) return false;
    return true;
  };
  TailFit fit;
  double lo = 1e-12, hi = 1e12;
  if (!holds(hi)) {
    fit.c = kInf;
  } else if (holds(lo)) {
    fit.c = lo;
  } else {
    for (int it = 0; it < 200; ++it) {
      const double mid = std::sqrt(lo * hi);
      (holds(mid) ? hi : lo) = mid;
    }
    fit.c = hi;
  }
  std::vector<double> xs, ys;
  for (double u : u_grid) {
    TailPoint p;
    p.u = u;
    p.threshold = std::isfinite(fit.c) ? fit.c * u * scale : kInf;
    p.hits = std::isfinite(p.threshold) ? count(p.threshold) : 0;
    p.empirical = static_cast<double>(p.hits) / static_cast<double>(sorted.size());
    p.cp99_upper = cp99_upper(p.hits, sorted.size());
    p.bound = fit.c * std::exp(-u / 2);
    if (p.hits > 0) {
      xs.push_back(u);
      ys.push_back(std::log(p.empirical));
    }
    fit.points.push_back(p);
  }
  fit.slope_points = xs.size();
  fit.slope = least_squares_slope(xs, ys);
  return fit;
}

UniformReport verify_uniform(const IndexedFamily& family, const CompensatorModel& model, double horizon,
                             std::span<const double> u_grid, const UniformOptions& options) {
  const std::size_t m = family.members.size();
  if (m == 0) throw ConfigError("indexed family must be non-empty");
  if (family.names.size() != m) throw ConfigError("one name per family member is required");
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (options.replicates < 2) throw ConfigError("uniform verification needs at least 2 replicates");

  UniformReport r;
  r.names = family.names;
  r.replicates = options.replicates;
  for (const auto& w : family.members) {
    w.check_bound(model, horizon);
    const auto v = minimal_k_two_sided(w, model, horizon, options.m_max);
    r.conditioned = r.conditioned && v.feasible;
    r.k_common = std::max(r.k_common, v.k_hat);
  }

  const Index n = static_cast<Index>(m);
  r.d1_raw = Eigen::MatrixXd::Zero(n, n);
  r.d2 = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const Integrand diff = family.members[static_cast<std::size_t>(i)] - family.members[static_cast<std::size_t>(j)];
      r.d1_raw(i, j) =
          path_supremum(diff, model, horizon, [](const LocalLaw& l) { return l.positive_mean(); }).cumulative;
      if (j > i) {
        const double c =
            path_supremum(diff, model, horizon, [](const LocalLaw& l) { return l.second_moment(); }).cumulative;
        r.d2(i, j) = r.d2(j, i) = std::sqrt(std::max(0.0, c));
      }
    }
  r.d1 = r.d1_raw.cwiseMax(r.d1_raw.transpose());
  const FiniteMetricSpace space1(r.d1, family.names, {.triangle = false, .separation = false});
  const FiniteMetricSpace space2(r.d2, family.names, {.triangle = true, .separation = false});
  r.gamma1 = gamma(space1, 1, options.exact_cap);
  r.gamma2 = gamma(space2, 2, options.exact_cap);
  r.scale = r.gamma1.value + r.gamma2.value;

  std::vector<double> sup_abs(options.replicates), sup_signed(options.replicates);
  parallel_for(options.replicates, options.workers, [&](std::size_t i) {
    const EventStream stream = simulate(model, horizon, derive_seed(options.seed, i));
    double a = 0.0, s = -kInf;
    for (const auto& w : family.members) {
      const double x = pathwise_integral(w, model, stream, horizon);
      a = std::max(a, std::abs(x));
      s = std::max(s, x);
    }
    sup_abs[i] = a;
    sup_signed[i] = s;
  });
  r.tail = fit_uniform_tail(sup_abs, r.scale, u_grid);
  r.mean_sup = estimate_mean(sup_signed).mean;
  r.expectation_constant = r.scale > 0.0 ? r.mean_sup / r.scale : std::numeric_limits<double>::quiet_NaN();
  r.pass = r.conditioned && std::isfinite(r.tail.c) && r.tail.slope <= options.slope_limit;
  return r;
}

}  // namespace mpp
