#include "mpp/bernstein.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mpp/parallel.hpp"
#include "mpp/random.hpp"
#include "mpp/stats.hpp"

namespace mpp {

const char* to_string(XiMode mode) { return mode == XiMode::instantaneous ? "instantaneous" : "cumulative"; }
const char* to_string(ConditionForm form) { return form == ConditionForm::q ? "q" : "literal"; }
const char* to_string(Sided sided) { return sided == Sided::one ? "one" : "two"; }

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double factorial(int m) {
  double f = 1.0;
  for (int i = 2; i <= m; ++i) f *= i;
  return f;
}

// Smallest K with q <= (m!/2) K^{m-2} c.
double moment_requirement(double q, double c, int m) {
  if (q <= 0.0) return 0.0;
  if (c <= 0.0) return kInf;
  return std::pow(2.0 * q / (factorial(m) * c), 1.0 / (m - 2));
}

}  // namespace

ConditionVerdict minimal_k(const Integrand& w, const CompensatorModel& model, double horizon, int m_max, XiMode mode,
                           ConditionForm form) {
  if (m_max < 3) throw ConfigError("minimal_k: m_max must be >= 3");
  ConditionVerdict v;
  v.mode = mode;
  v.exact = w.time_homogeneous() && !w.reads_state() && !model.state_dependent_kernel();

  const auto xi = path_supremum(w, model, horizon, [](const LocalLaw& l) { return l.positive_mean(); });
  if (mode == XiMode::cumulative)
    v.xi = xi.cumulative;
  else
    v.xi = model.has_atoms() ? std::max(0.0, xi.instantaneous) : 0.0;
  v.k_hat = v.xi;
  v.binding = "xi";

  double c_sup = 0.0;
  if (form == ConditionForm::literal)
    c_sup = path_supremum(w, model, horizon, [](const LocalLaw& l) { return l.second_moment(); }).cumulative;

  for (int m = 3; m <= m_max; ++m) {
    double need = 0.0;
    if (form == ConditionForm::q) {
      const auto sup = path_supremum(w, model, horizon, [m](const LocalLaw& l) {
        return moment_requirement(l.positive_moment(m), l.second_moment(), m);
      });
      need = std::max(0.0, sup.instantaneous);
    } else {
      need = c_sup > 0.0 ? std::pow(2.0 * std::pow(c_sup, m - 1) / factorial(m), 1.0 / (m - 2)) : 0.0;
    }
    v.k_moment.push_back(need);
    if (!std::isfinite(need)) {
      v.feasible = false;
      v.k_hat = kInf;
      v.binding = "m=" + std::to_string(m);
    } else if (v.feasible && need > v.k_hat) {
      v.k_hat = need;
      v.binding = "m=" + std::to_string(m);
    }
  }
  return v;
}

ConditionVerdict minimal_k_two_sided(const Integrand& w, const CompensatorModel& model, double horizon, int m_max,
                                     XiMode mode) {
  auto plus = minimal_k(w, model, horizon, m_max, mode);
  auto minus = minimal_k(-w, model, horizon, m_max, mode);
  if (!minus.feasible || (plus.feasible && minus.k_hat > plus.k_hat)) return minus;
  return plus;
}

double audit_k(const Integrand& w, const CompensatorModel& model, double horizon, int m_max, XiMode mode,
               std::size_t ensemble, std::uint64_t seed) {
  if (m_max < 3) throw ConfigError("audit_k: m_max must be >= 3");
  struct Audit {
    int m_max;
    XiMode mode;
    double xi_cum = 0.0, xi_inst = 0.0, c = 0.0, need = 0.0;
    std::vector<double> q;
    void checkpoint() {
      double k = mode == XiMode::cumulative ? xi_cum : xi_inst;
      for (int m = 3; m <= m_max; ++m) k = std::max(k, moment_requirement(q[static_cast<std::size_t>(m - 3)], c, m));
      need = std::max(need, k);
    }
    void add(const LocalLaw& law, double scale) {
      xi_cum += scale * law.positive_mean();
      c += scale * law.second_moment();
      for (int m = 3; m <= m_max; ++m) q[static_cast<std::size_t>(m - 3)] += scale * law.positive_moment(m);
    }
    void atom(double, const LocalLaw& law, double) {
      add(law, 1.0);
      xi_inst = std::max(xi_inst, law.positive_mean());
      checkpoint();
    }
    void drift(double t0, double t1, const LocalLaw& rates) {
      add(rates, t1 - t0);
      checkpoint();
    }
    void event(double, double) {}
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < ensemble; ++i) {
    Audit a{m_max, mode, 0.0, 0.0, 0.0, 0.0, std::vector<double>(static_cast<std::size_t>(m_max - 2), 0.0)};
    walk_path(w, model, simulate(model, horizon, derive_seed(seed, i)), horizon, a);
    worst = std::max(worst, a.need);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// First passages

void PassageProfile::add_rise(double x0, double x1, double t0, double t1, double c0, double c1) {
  rises_.push_back({x0, x1, t0, t1, c0, c1});
}

std::optional<Passage> PassageProfile::first_passage(double x) const {
  if (x <= 0.0) return Passage{0.0, 0.0};
  auto it = std::lower_bound(rises_.begin(), rises_.end(), x, [](const Rise& r, double v) { return r.x1 < v; });
  if (it == rises_.end()) return std::nullopt;
  const double f = std::clamp((x - it->x0) / (it->x1 - it->x0), 0.0, 1.0);
  return Passage{it->t0 + f * (it->t1 - it->t0), it->c0 + f * (it->c1 - it->c0)};
}

PathPassages passage_profiles(const Integrand& w, const CompensatorModel& model, const EventStream& stream,
                              double horizon) {
  struct Walk {
    PathPassages p;
    double x = 0.0, c = 0.0, up = 0.0, down = 0.0;
    void record(double time) {
      if (x > up) {
        p.up.add_rise(up, x, time, time, c, c);
        up = x;
      }
      if (-x > down) {
        p.down.add_rise(down, -x, time, time, c, c);
        down = -x;
      }
    }
    void atom(double time, const LocalLaw& law, double jump) {
      x += jump;
      c += law.second_moment();
      record(time);
    }
    void event(double time, double jump) {
      x += jump;
      record(time);
    }
    void drift(double t0, double t1, const LocalLaw& rates) {
      const double dt = t1 - t0;
      const double dx = -rates.compensator * dt, dc = rates.second_moment() * dt;
      const double x1 = x + dx, c1 = c + dc;
      if (x1 > up) {
        const double f = std::clamp((up - x) / dx, 0.0, 1.0);
        p.up.add_rise(up, x1, t0 + f * dt, t1, c + f * dc, c1);
        up = x1;
      }
      if (-x1 > down) {
        const double f = std::clamp((down + x) / -dx, 0.0, 1.0);
        p.down.add_rise(down, -x1, t0 + f * dt, t1, c + f * dc, c1);
        down = -x1;
      }
      x = x1;
      c = c1;
    }
  } walk;
  walk_path(w, model, stream, horizon, walk);
  return std::move(walk.p);
}

bool stopped_event(const PathPassages& p, double x, double y2, Sided sided) {
  const double limit = y2 + 1e-12 * std::max(1.0, y2);
  // C is nondecreasing, so the earlier of the two passages decides.
  auto hit = [&](const PassageProfile& prof) {
    const auto at = prof.first_passage(x);
    return at && at->c <= limit;
  };
  return hit(p.up) || (sided == Sided::two && hit(p.down));
}

double reachable_maximum(const Integrand& w, const CompensatorModel& model, double horizon, double y2) {
  if (!model.has_atoms()) return kInf;
  double reach_horizon = horizon;
  if (std::isfinite(y2)) {
    const Index atoms = model.atoms_through(horizon);
    const auto states = model.states();
    double c = 0.0;
    for (Index k = 1; k <= atoms; ++k) {
      double c_min = kInf;
      for (State s : states) c_min = std::min(c_min, local_law(w, model, model.atom_time(k), s).second_moment());
      c += c_min;
      if (c > y2 + 1e-12 * std::max(1.0, y2)) {
        reach_horizon = model.atom_time(k - 1);
        break;
      }
    }
  }
  if (reach_horizon < model.spacing()) return 0.0;
  return path_supremum(w, model, reach_horizon, [](const LocalLaw& l) { return std::max(0.0, l.max_jump()); })
      .cumulative;
}

// ---------------------------------------------------------------------------
// Monte-Carlo verification

std::vector<TailReport> mc_tail_grid(const Integrand& w, const CompensatorModel& model, double horizon,
                                     const std::vector<std::pair<double, double>>& grid, std::optional<double> k,
                                     std::size_t replicates, std::uint64_t seed, Sided sided, unsigned workers) {
  if (grid.empty()) throw ConfigError("tail grid must be non-empty");
  if (replicates < 1000) throw ConfigError("tail verification needs at least 1000 replicates");
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  for (const auto& [x, y2] : grid)
    if (!(x >= 0.0) || !(y2 >= 0.0)) throw ConfigError("grid thresholds must be nonnegative");
  w.check_bound(model, horizon);

  constexpr int kMoments = 8;
  const auto verdict = sided == Sided::one ? minimal_k(w, model, horizon, kMoments)
                                           : minimal_k_two_sided(w, model, horizon, kMoments);
  double k_used = verdict.k_hat;
  bool conditioned = verdict.feasible;
  if (k) {
    if (!(*k >= 0.0)) throw ConfigError("K must be nonnegative");
    k_used = *k;
    conditioned = verdict.feasible && *k >= verdict.k_hat * (1.0 - 1e-12);
  }
  auto reach = [&](double y2) {
    double r = reachable_maximum(w, model, horizon, y2);
    if (sided == Sided::two) r = std::max(r, reachable_maximum(-w, model, horizon, y2));
    return r;
  };

  const std::size_t g = grid.size();
  std::vector<unsigned char> hit(replicates * g, 0);
  parallel_for(replicates, workers, [&](std::size_t i) {
    const auto profiles = passage_profiles(w, model, simulate(model, horizon, derive_seed(seed, i)), horizon);
    for (std::size_t j = 0; j < g; ++j)
      hit[i * g + j] = stopped_event(profiles, grid[j].first, grid[j].second, sided) ? 1 : 0;
  });

  std::vector<TailReport> out;
  out.reserve(g);
  for (std::size_t j = 0; j < g; ++j) {
    TailReport r;
    r.x = grid[j].first;
    r.y2 = grid[j].second;
    r.k = k_used;
    r.sided = sided;
    r.replicates = replicates;
    for (std::size_t i = 0; i < replicates; ++i) r.hits += hit[i * g + j];
    r.empirical = static_cast<double>(r.hits) / static_cast<double>(replicates);
    const auto ci = clopper_pearson(r.hits, replicates);
    r.cp99_lower = ci.lower;
    r.cp99_upper = ci.upper;
    const double reachable = reach(r.y2);
    r.exact_zero = r.x > reachable * (1.0 + 1e-12) + 1e-12;
    if (r.exact_zero) {
      if (r.hits != 0) throw std::logic_error("hit beyond the reachable maximum");
      r.cp99_upper = 0.0;
    }
    r.bound = tail_bound(r.x, r.y2, k_used);
    r.lambda_opt = r.x > 0.0 ? optimal_lambda(r.x, r.y2, k_used) : 0.0;
    r.conditioned = conditioned;
    r.pass = conditioned && r.cp99_upper <= r.bound;
    r.union_bound = sided == Sided::two ? std::min(1.0, 2.0 * r.bound) : r.bound;
    r.union_pass = conditioned && r.cp99_upper <= r.union_bound;
    out.push_back(r);
  }
  return out;
}

TailReport mc_tail_verify(const Integrand& w, const CompensatorModel& model, double horizon, double x, double y2,
                          std::optional<double> k, std::size_t replicates, std::uint64_t seed, Sided sided,
                          unsigned workers) {
  return mc_tail_grid(w, model, horizon, {{x, y2}}, k, replicates, seed, sided, workers).front();
}

}  // namespace mpp
