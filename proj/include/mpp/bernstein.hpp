#pragma once

// The Bernstein tail bound exp(-x^2 / (2(xK + y^2))), the minimal condition
// constant K, and Monte-Carlo dominance checks of the stopped event
// {X_t >= x and C(W)_t <= y^2 for some t <= T}.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mpp/point_process.hpp"

namespace mpp {

template <typename T>
T tail_bound(T x, T y2, T k) {
  using std::exp;
  if (x < T(0) || y2 < T(0) || k < T(0)) throw ConfigError("tail_bound: arguments must be nonnegative");
  if (x == T(0)) return T(1);
  const T denom = x * k + y2;
  if (!(denom > T(0))) throw DegenerateError("tail_bound: xK + y^2 vanishes at x > 0");
  const T b = exp(-(x * x) / (T(2) * denom));
  return b < T(1) ? b : T(1);
}

/// The lambda that turns the exponential estimate into tail_bound.
template <typename T>
T optimal_lambda(T x, T y2, T k) {
  const T denom = y2 + k * x;
  if (!(denom > T(0))) throw DegenerateError("optimal_lambda: y^2 + Kx vanishes");
  return x / denom;
}

enum class XiMode { instantaneous, cumulative };
/// `q`: Q(W, m) <= (m!/2) K^{m-2} C(W). `literal`: C(W)^m in place of Q(W, m).
enum class ConditionForm { q, literal };

const char* to_string(XiMode mode);
const char* to_string(ConditionForm form);

struct ConditionVerdict {
  bool feasible = true;
  double k_hat = 0.0;
  /// "xi" or "m=<order>".
  std::string binding = "xi";
  XiMode mode = XiMode::instantaneous;
  /// Xi supremum in the chosen reading.
  double xi = 0.0;
  /// Per-order requirement (2 Q_m / (m! C))^{1/(m-2)}, index m - 3.
  std::vector<double> k_moment;
  /// False when the kernel depends on the predictable state: per-state
  /// maxima then only bound the smallest valid K from above.
  bool exact = true;
};

/// Smallest K with Xi <= K and the moment conditions for 3 <= m <= m_max on
/// every path over [0, T], from per-instant moments.
ConditionVerdict minimal_k(const Integrand& w, const CompensatorModel& model, double horizon, int m_max,
                           XiMode mode = XiMode::instantaneous, ConditionForm form = ConditionForm::q);

/// max(minimal_k(W), minimal_k(-W)): conditions for both tails.
ConditionVerdict minimal_k_two_sided(const Integrand& w, const CompensatorModel& model, double horizon, int m_max,
                                     XiMode mode = XiMode::instantaneous);

/// Largest K required at any checkpoint of `ensemble` simulated paths
/// (a lower bound on the essential supremum).
double audit_k(const Integrand& w, const CompensatorModel& model, double horizon, int m_max, XiMode mode,
               std::size_t ensemble, std::uint64_t seed);

enum class Sided { one, two };
const char* to_string(Sided sided);

struct TailReport {
  double x = 0.0;
  double y2 = 0.0;
  double k = 0.0;
  Sided sided = Sided::one;
  std::size_t hits = 0;
  std::size_t replicates = 0;
  double empirical = 0.0;
  double cp99_lower = 0.0;
  double cp99_upper = 1.0;
  double bound = 1.0;
  double lambda_opt = 0.0;
  /// K dominates the minimal condition constant.
  bool conditioned = true;
  /// No path can reach x: the event has probability exactly 0.
  bool exact_zero = false;
  /// cp99_upper <= bound. For two-sided events this is the literal |X| reading.
  bool pass = false;
  /// min(1, 2 bound) for two-sided events (one tail each for W and -W), else bound.
  double union_bound = 1.0;
  bool union_pass = false;
};

/// First passage of X (or of -X) to level x and C(W) at that instant.
struct Passage {
  double time = 0.0;
  double c = 0.0;
};

/// Running-maximum profile of one path, answering first-passage queries.
class PassageProfile {
 public:
  std::optional<Passage> first_passage(double x) const;
  void add_rise(double x0, double x1, double t0, double t1, double c0, double c1);

 private:
  struct Rise {
    double x0, x1, t0, t1, c0, c1;
  };
  std::vector<Rise> rises_;
};

struct PathPassages {
  PassageProfile up;
  PassageProfile down;
};

PathPassages passage_profiles(const Integrand& w, const CompensatorModel& model, const EventStream& stream,
                              double horizon);

/// Whether the stopped event occurs on a path.
bool stopped_event(const PathPassages& p, double x, double y2, Sided sided);

/// Monte-Carlo dominance check on a grid of (x, y^2) pairs sharing the same
/// simulated paths. K defaults to minimal_k (two-sided for Sided::two); a
/// supplied K below it marks every row unconditioned.
std::vector<TailReport> mc_tail_grid(const Integrand& w, const CompensatorModel& model, double horizon,
                                     const std::vector<std::pair<double, double>>& grid, std::optional<double> k,
                                     std::size_t replicates, std::uint64_t seed, Sided sided, unsigned workers = 1);

TailReport mc_tail_verify(const Integrand& w, const CompensatorModel& model, double horizon, double x, double y2,
                          std::optional<double> k, std::size_t replicates, std::uint64_t seed, Sided sided,
                          unsigned workers = 1);

/// Supremum of X over all paths on [0, horizon] (infinite under a Poisson law).
/// With a finite y2 only atoms that can precede C > y2 count: the n-th atom is
/// out of reach once n times the smallest per-atom C increment exceeds y2.
double reachable_maximum(const Integrand& w, const CompensatorModel& model, double horizon,
                         double y2 = std::numeric_limits<double>::infinity());

}  // namespace mpp
