#pragma once

// Multivariate point processes with finite mark spaces and explicitly known
// predictable compensators, plus the path functionals of X = W*(mu - nu).
//
// Two laws are supported:
//   * Poisson: homogeneous rate, i.i.d. marks, no atoms (a_t = 0).
//   * Atoms:   events only on the lattice k*spacing, k >= 1; at each atom an
//              event occurs with probability a, its mark drawn from a kernel
//              that may depend on the previously realized mark.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mpp/error.hpp"

namespace mpp {

using Index = Eigen::Index;

class MarkSpace {
 public:
  explicit MarkSpace(Eigen::VectorXd marks, std::vector<std::string> labels = {});

  Index size() const { return marks_.size(); }
  double value(Index i) const { return marks_(i); }
  const Eigen::VectorXd& values() const { return marks_; }
  const std::vector<std::string>& labels() const { return labels_; }
  /// Position of an exact mark value.
  std::optional<Index> find(double value) const;

 private:
  Eigen::VectorXd marks_;
  std::vector<std::string> labels_;
};

/// Predictable state: index of the previously realized mark, or kNoMark
/// before the first event.
using State = Index;
inline constexpr State kNoMark = -1;

struct PoissonLaw {
  double rate = 1.0;
  Eigen::VectorXd mark_law;
};

struct AtomLaw {
  double spacing = 1.0;
  double atom_probability = 1.0;
  /// Mark law while no mark has been realized yet (and always, without a transition matrix).
  Eigen::VectorXd initial_law;
  /// Row i: mark law given that the previous realized mark was i.
  std::optional<Eigen::MatrixXd> transition;
};

class CompensatorModel {
 public:
  static CompensatorModel poisson(MarkSpace marks, double rate, Eigen::VectorXd mark_law);
  static CompensatorModel atoms(MarkSpace marks, double spacing, double atom_probability,
                                Eigen::VectorXd mark_law,
                                std::optional<Eigen::MatrixXd> transition = std::nullopt);

  const MarkSpace& marks() const { return marks_; }
  bool has_atoms() const { return std::holds_alternative<AtomLaw>(law_); }
  const PoissonLaw& poisson_law() const { return std::get<PoissonLaw>(law_); }
  const AtomLaw& atom_law() const { return std::get<AtomLaw>(law_); }

  /// a_t at atom times (0 for Poisson).
  double atom_mass() const { return has_atoms() ? atom_law().atom_probability : 0.0; }
  double spacing() const { return atom_law().spacing; }
  /// Number of atom times k*spacing <= t.
  Index atoms_through(double t) const;
  double atom_time(Index k) const { return static_cast<double>(k) * spacing(); }
  /// True when t coincides with an atom time k*spacing, k >= 1.
  bool is_atom_time(double t) const;

  /// Mark law conditional on the predictable state.
  const Eigen::VectorXd& kernel(State s) const;
  bool state_dependent_kernel() const;
  /// kNoMark followed by every mark index.
  std::vector<State> states() const;

 private:
  CompensatorModel(MarkSpace marks, std::variant<PoissonLaw, AtomLaw> law);

  MarkSpace marks_;
  std::variant<PoissonLaw, AtomLaw> law_;
  std::vector<Eigen::VectorXd> kernels_;  // kernels_[s + 1]
};

/// Predictable integrand W(t, x, state). Left-continuous in t; for Poisson
/// models it must not depend on t.
class Integrand {
 public:
  using Function = std::function<double(double time, Index mark, State state)>;

  Integrand(Function f, double bound, bool time_homogeneous = true, bool reads_state = false);

  static Integrand zero();
  static Integrand constant(double c);
  /// W(t, x) = values(x).
  static Integrand mark_table(Eigen::VectorXd values);
  /// W(t, x) = x.
  static Integrand identity(const MarkSpace& marks);
  /// W(t, x, s) = values(s + 1, x): row 0 applies before the first event.
  static Integrand state_table(Eigen::MatrixXd values);

  double operator()(double t, Index mark, State state) const { return f_(t, mark, state); }
  double bound() const { return bound_; }
  bool time_homogeneous() const { return time_homogeneous_; }
  bool reads_state() const { return reads_state_; }

  Integrand operator-() const;
  Integrand abs() const;
  friend Integrand operator-(const Integrand& a, const Integrand& b);

  /// Spot-checks |W| <= bound on every (atom, mark, state) triple up to
  /// `horizon` (every (mark, state) pair for Poisson models).
  void check_bound(const CompensatorModel& model, double horizon) const;

 private:
  Function f_;
  double bound_;
  bool time_homogeneous_;
  bool reads_state_;
};

struct Event {
  double time = 0.0;
  Index mark = 0;
};

struct EventStream {
  std::vector<Event> events;
  double horizon = 0.0;
};

/// One realization of mu on (0, horizon], deterministic in `seed`.
EventStream simulate(const CompensatorModel& model, double horizon, std::uint64_t seed);

/// CSV rows `time,mark` with a header line.
void write_stream_csv(std::ostream& out, const EventStream& stream, const MarkSpace& marks);

/// Conditional law of the jump of X = W*(mu - nu) at one instant.
///
/// At an atom the outcomes are (W(x) - hat_w, a*K(x)) for each mark and
/// (-hat_w, 1 - a); weights are probabilities. Under a Poisson law the
/// outcomes are (W(x), rate*law(x)) with intensity weights, and
/// `compensator` is the drift rate of W*nu.
struct JumpOutcome {
  double jump = 0.0;
  double weight = 0.0;
};

struct LocalLaw {
  bool atom = false;
  double hat_w = 0.0;
  double compensator = 0.0;
  std::vector<JumpOutcome> outcomes;

  /// max{0, W - hat W}*nu + (1-a) max{0, -hat W}: increment of Xi.
  double positive_mean() const;
  /// (W - hat W)^2*nu + (1-a) hat W^2: increment of C(W).
  double second_moment() const;
  /// Increment of Q(W, m).
  double positive_moment(int m) const;
  /// Increment of S(lambda): sum of weight * (e^{lambda v} - 1 - lambda v).
  double exponential_compensator(double lambda) const;
  double max_jump() const;
  double min_jump() const;
};

LocalLaw local_law(const Integrand& w, const CompensatorModel& model, double t, State state);

/// hat W_t = integral of W(t, x) nu({t} x dx).
double hat_w(const Integrand& w, const CompensatorModel& model, double t, State state = kNoMark);

namespace detail {

/// LocalLaw lookups, memoized per state when W is time-homogeneous.
class LawCache {
 public:
  LawCache(const Integrand& w, const CompensatorModel& model);
  const LocalLaw& at(double t, State s);

 private:
  const Integrand& w_;
  const CompensatorModel& model_;
  bool memoize_;
  std::vector<std::optional<LocalLaw>> cache_;
  LocalLaw scratch_;
};

inline bool same_time(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b));
}

}  // namespace detail

/// Walks the path of X = W*(mu - nu) on [0, t], calling
///   visit.atom(time, law, jump)       at every atom time (atom models),
///   visit.drift(t0, t1, rates)        on each inter-event segment (Poisson),
///   visit.event(time, jump)           at each Poisson event,
/// in time order. The predictable state is advanced along the realized marks.
template <typename Visitor>
void walk_path(const Integrand& w, const CompensatorModel& model, const EventStream& stream, double t,
               Visitor&& visit) {
  detail::LawCache laws(w, model);
  State state = kNoMark;
  auto next = stream.events.begin();
  const auto end = stream.events.end();
  if (model.has_atoms()) {
    const Index atoms = model.atoms_through(t);
    for (Index k = 1; k <= atoms; ++k) {
      const double time = model.atom_time(k);
      if (next != end && next->time < time && !detail::same_time(next->time, time))
        throw ConfigError("event at t=" + std::to_string(next->time) + " is not on the atom grid");
      const LocalLaw& law = laws.at(time, state);
      if (next != end && detail::same_time(next->time, time)) {
        visit.atom(time, law, w(time, next->mark, state) - law.hat_w);
        state = next->mark;
        ++next;
      } else {
        visit.atom(time, law, -law.hat_w);
      }
    }
    if (next != end && next->time <= t)
      throw ConfigError("event at t=" + std::to_string(next->time) + " is not on the atom grid");
    return;
  }
  double previous = 0.0;
  for (; next != end && next->time <= t; ++next) {
    visit.drift(previous, next->time, laws.at(previous, state));
    visit.event(next->time, w(next->time, next->mark, state));
    state = next->mark;
    previous = next->time;
  }
  if (t > previous) visit.drift(previous, t, laws.at(previous, state));
}

/// W*nu_t along the path of predictable states realized by `stream`.
double compensator_integral(const Integrand& w, const CompensatorModel& model, const EventStream& stream,
                            double t);
/// W*nu_t when neither W nor the kernel depend on the predictable state.
double compensator_integral(const Integrand& w, const CompensatorModel& model, double t);

/// X_t = W*(mu - nu)_t.
double pathwise_integral(const Integrand& w, const CompensatorModel& model, const EventStream& stream, double t);

struct Characteristics {
  double xi_cumulative = 0.0;
  double xi_instantaneous_max = 0.0;
  double c = 0.0;
  int m_max = 3;
  /// q[m - 3] = Q(W, m)_t for 3 <= m <= m_max.
  std::vector<double> q;

  double q_at(int m) const { return q.at(static_cast<std::size_t>(m - 3)); }
};

Characteristics characteristics(const Integrand& w, const CompensatorModel& model, const EventStream& stream,
                                double t, int m_max);

/// Essential suprema over all positive-probability paths on [0, horizon] of a
/// per-instant functional f(LocalLaw). `cumulative` is the supremum of the sum
/// over atoms (atom models) or of the time integral (Poisson, f a rate);
/// `instantaneous` is the supremum over reachable (atom, state) pairs, and
/// over reachable states for Poisson.
struct PathSupremum {
  double cumulative = 0.0;
  double instantaneous = 0.0;
};

PathSupremum path_supremum(const Integrand& w, const CompensatorModel& model, double horizon,
                           const std::function<double(const LocalLaw&)>& f);

}  // namespace mpp
