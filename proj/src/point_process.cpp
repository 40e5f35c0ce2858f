#include "mpp/point_process.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>

#include "mpp/random.hpp"

namespace mpp {

namespace {

void check_probability_vector(const Eigen::VectorXd& p, Index size, const char* what) {
  if (p.size() != size)
    throw ConfigError(std::string(what) + ": expected " + std::to_string(size) + " entries, got " +
                      std::to_string(p.size()));
  if ((p.array() < 0.0).any() || !p.allFinite())
    throw ConfigError(std::string(what) + ": entries must be finite and nonnegative");
  if (std::abs(p.sum() - 1.0) > 1e-12) throw ConfigError(std::string(what) + ": entries must sum to 1");
}

// e^u - 1 - u without cancellation near u = 0.
double exp_remainder(double u) {
  if (std::abs(u) < 1e-3) {
    const double u2 = u * u;
    return u2 * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u * (1.0 / 120.0))));
  }
  return std::expm1(u) - u;
}

}  // namespace

// ---------------------------------------------------------------------------
// MarkSpace

MarkSpace::MarkSpace(Eigen::VectorXd marks, std::vector<std::string> labels)
    : marks_(std::move(marks)), labels_(std::move(labels)) {
  if (marks_.size() == 0) throw ConfigError("mark space must be non-empty");
  if (!marks_.allFinite()) throw ConfigError("mark values must be finite");
  std::set<double> seen(marks_.data(), marks_.data() + marks_.size());
  if (static_cast<Index>(seen.size()) != marks_.size()) throw ConfigError("mark values must be pairwise distinct");
  if (!labels_.empty() && static_cast<Index>(labels_.size()) != marks_.size())
    throw ConfigError("mark labels must match the number of marks");
}

std::optional<Index> MarkSpace::find(double value) const {
  for (Index i = 0; i < marks_.size(); ++i)
    if (marks_(i) == value) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// CompensatorModel

CompensatorModel::CompensatorModel(MarkSpace marks, std::variant<PoissonLaw, AtomLaw> law)
    : marks_(std::move(marks)), law_(std::move(law)) {
  const Index n = marks_.size();
  if (const auto* p = std::get_if<PoissonLaw>(&law_)) {
    if (!(p->rate > 0.0) || !std::isfinite(p->rate)) throw ConfigError("Poisson rate must be positive");
    check_probability_vector(p->mark_law, n, "mark_law");
    kernels_.assign(static_cast<std::size_t>(n + 1), p->mark_law);
    return;
  }
  const auto& a = std::get<AtomLaw>(law_);
  if (!(a.spacing > 0.0) || !std::isfinite(a.spacing)) throw ConfigError("atom spacing must be positive");
  if (!(a.atom_probability > 0.0 && a.atom_probability <= 1.0))
    throw ConfigError("atom probability must lie in (0, 1]");
  check_probability_vector(a.initial_law, n, "mark_law");
  kernels_.reserve(static_cast<std::size_t>(n + 1));
  kernels_.push_back(a.initial_law);
  if (a.transition) {
    if (a.transition->rows() != n || a.transition->cols() != n)
      throw ConfigError("transition matrix must be square with one row per mark");
    for (Index i = 0; i < n; ++i) {
      Eigen::VectorXd row = a.transition->row(i).transpose();
      check_probability_vector(row, n, "transition row");
      kernels_.push_back(std::move(row));
    }
  } else {
    for (Index i = 0; i < n; ++i) kernels_.push_back(a.initial_law);
  }
}

CompensatorModel CompensatorModel::poisson(MarkSpace marks, double rate, Eigen::VectorXd mark_law) {
  return CompensatorModel(std::move(marks), PoissonLaw{rate, std::move(mark_law)});
}

CompensatorModel CompensatorModel::atoms(MarkSpace marks, double spacing, double atom_probability,
                                         Eigen::VectorXd mark_law, std::optional<Eigen::MatrixXd> transition) {
  return CompensatorModel(std::move(marks),
                          AtomLaw{spacing, atom_probability, std::move(mark_law), std::move(transition)});
}

Index CompensatorModel::atoms_through(double t) const {
  if (!has_atoms() || t <= 0.0) return 0;
  return static_cast<Index>(std::floor(t / spacing() + 1e-9));
}

bool CompensatorModel::is_atom_time(double t) const {
  if (!has_atoms() || t <= 0.0) return false;
  const auto k = std::llround(t / spacing());
  return k >= 1 && detail::same_time(t, atom_time(k));
}

const Eigen::VectorXd& CompensatorModel::kernel(State s) const {
  if (s < kNoMark || s >= marks_.size()) throw ConfigError("predictable state out of range");
  return kernels_[static_cast<std::size_t>(s + 1)];
}

bool CompensatorModel::state_dependent_kernel() const {
  return has_atoms() && atom_law().transition.has_value();
}

std::vector<State> CompensatorModel::states() const {
  std::vector<State> out;
  out.reserve(static_cast<std::size_t>(marks_.size() + 1));
  for (State s = kNoMark; s < marks_.size(); ++s) out.push_back(s);
  return out;
}

// ---------------------------------------------------------------------------
// Integrand

Integrand::Integrand(Function f, double bound, bool time_homogeneous, bool reads_state)
    : f_(std::move(f)), bound_(bound), time_homogeneous_(time_homogeneous), reads_state_(reads_state) {
  if (!f_) throw ConfigError("integrand function is empty");
  if (!(bound_ >= 0.0) || !std::isfinite(bound_)) throw ConfigError("integrand bound must be finite and >= 0");
}

Integrand Integrand::zero() { return constant(0.0); }

Integrand Integrand::constant(double c) {
  return Integrand([c](double, Index, State) { return c; }, std::abs(c));
}

Integrand Integrand::mark_table(Eigen::VectorXd values) {
  if (!values.allFinite()) throw ConfigError("integrand table must be finite");
  const double bound = values.size() ? values.cwiseAbs().maxCoeff() : 0.0;
  return Integrand([v = std::move(values)](double, Index x, State) { return v(x); }, bound);
}

Integrand Integrand::identity(const MarkSpace& marks) { return mark_table(marks.values()); }

Integrand Integrand::state_table(Eigen::MatrixXd values) {
  if (!values.allFinite()) throw ConfigError("integrand table must be finite");
  if (values.rows() != values.cols() + 1)
    throw ConfigError("state table needs one row per state (no-mark row first) and one column per mark");
  const double bound = values.size() ? values.cwiseAbs().maxCoeff() : 0.0;
  return Integrand([v = std::move(values)](double, Index x, State s) { return v(s + 1, x); }, bound, true, true);
}

Integrand Integrand::operator-() const {
  return Integrand([f = f_](double t, Index x, State s) { return -f(t, x, s); }, bound_, time_homogeneous_,
                   reads_state_);
}

Integrand Integrand::abs() const {
  return Integrand([f = f_](double t, Index x, State s) { return std::abs(f(t, x, s)); }, bound_,
                   time_homogeneous_, reads_state_);
}

Integrand operator-(const Integrand& a, const Integrand& b) {
  return Integrand([f = a.f_, g = b.f_](double t, Index x, State s) { return f(t, x, s) - g(t, x, s); },
                   a.bound_ + b.bound_, a.time_homogeneous_ && b.time_homogeneous_,
                   a.reads_state_ || b.reads_state_);
}

void Integrand::check_bound(const CompensatorModel& model, double horizon) const {
  std::vector<double> times;
  if (model.has_atoms()) {
    const Index n = model.atoms_through(horizon);
    const Index checked = time_homogeneous_ ? std::min<Index>(n, 1) : n;
    for (Index k = 1; k <= checked; ++k) times.push_back(model.atom_time(k));
  } else {
    if (!time_homogeneous_) throw ConfigError("integrands under a Poisson law must not depend on time");
    times.push_back(0.0);
  }
  const auto states = reads_state_ ? model.states() : std::vector<State>{kNoMark};
  const double limit = bound_ * (1.0 + 1e-12);
  for (double t : times)
    for (State s : states)
      for (Index x = 0; x < model.marks().size(); ++x) {
        const double v = f_(t, x, s);
        if (!std::isfinite(v) || std::abs(v) > limit)
          throw ConfigError("integrand exceeds its declared bound " + std::to_string(bound_) + " (value " +
                            std::to_string(v) + " at t=" + std::to_string(t) + ")");
      }
}

// ---------------------------------------------------------------------------
// Simulation

EventStream simulate(const CompensatorModel& model, double horizon, std::uint64_t seed) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("simulation horizon must be positive");
  Rng rng(seed);
  EventStream stream;
  stream.horizon = horizon;
  if (model.has_atoms()) {
    const double a = model.atom_mass();
    const Index atoms = model.atoms_through(horizon);
    State state = kNoMark;
    for (Index k = 1; k <= atoms; ++k) {
      if (a < 1.0 && !rng.bernoulli(a)) continue;
      const Index mark = rng.categorical(model.kernel(state));
      stream.events.push_back({model.atom_time(k), mark});
      state = mark;
    }
    return stream;
  }
  const auto& law = model.poisson_law();
  double t = rng.exponential(law.rate);
  while (t <= horizon) {
    stream.events.push_back({t, rng.categorical(law.mark_law)});
    t += rng.exponential(law.rate);
  }
  return stream;
}

void write_stream_csv(std::ostream& out, const EventStream& stream, const MarkSpace& marks) {
  const auto precision = out.precision(17);
  out << "time,mark\n";
  for (const auto& e : stream.events) out << e.time << ',' << marks.value(e.mark) << '\n';
  out.precision(precision);
}

// ---------------------------------------------------------------------------
// Local laws

double LocalLaw::positive_mean() const {
  double s = 0.0;
  for (const auto& o : outcomes) s += o.weight * std::max(0.0, o.jump);
  return s;
}

double LocalLaw::second_moment() const {
  double s = 0.0;
  for (const auto& o : outcomes) s += o.weight * o.jump * o.jump;
  return s;
}

double LocalLaw::positive_moment(int m) const {
  double s = 0.0;
  for (const auto& o : outcomes)
    if (o.jump > 0.0) s += o.weight * std::pow(o.jump, m);
  return s;
}

double LocalLaw::exponential_compensator(double lambda) const {
  double s = 0.0;
  for (const auto& o : outcomes) s += o.weight * exp_remainder(lambda * o.jump);
  return s;
}

double LocalLaw::max_jump() const {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& o : outcomes) m = std::max(m, o.jump);
  return outcomes.empty() ? 0.0 : m;
}

double LocalLaw::min_jump() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& o : outcomes) m = std::min(m, o.jump);
  return outcomes.empty() ? 0.0 : m;
}

LocalLaw local_law(const Integrand& w, const CompensatorModel& model, double t, State state) {
  LocalLaw law;
  const auto& kernel = model.kernel(state);
  const Index n = model.marks().size();
  if (!model.has_atoms()) {
    const double rate = model.poisson_law().rate;
    for (Index x = 0; x < n; ++x) {
      if (kernel(x) <= 0.0) continue;
      const double v = w(t, x, state);
      law.compensator += rate * kernel(x) * v;
      law.outcomes.push_back({v, rate * kernel(x)});
    }
    return law;
  }
  law.atom = true;
  const double a = model.atom_mass();
  double sum = 0.0, scale = 1.0;
  for (Index x = 0; x < n; ++x) {
    const double v = w(t, x, state);
    sum += v * kernel(x);
    scale = std::max(scale, std::abs(v));
  }
  law.hat_w = a * sum;
  law.compensator = law.hat_w;
  // A jump within rounding of zero is zero: constants are fully compensated.
  const double snap = 1e-14 * scale;
  auto clean = [snap](double v) { return std::abs(v) <= snap ? 0.0 : v; };
  for (Index x = 0; x < n; ++x) {
    if (kernel(x) <= 0.0) continue;
    law.outcomes.push_back({clean(w(t, x, state) - law.hat_w), a * kernel(x)});
  }
  if (a < 1.0) law.outcomes.push_back({clean(-law.hat_w), 1.0 - a});
  return law;
}

double hat_w(const Integrand& w, const CompensatorModel& model, double t, State state) {
  if (t < 0.0) throw ConfigError("hat_w: time must be >= 0");
  if (!model.is_atom_time(t)) return 0.0;
  return local_law(w, model, t, state).hat_w;
}

detail::LawCache::LawCache(const Integrand& w, const CompensatorModel& model)
    : w_(w), model_(model), memoize_(w.time_homogeneous()),
      cache_(static_cast<std::size_t>(model.marks().size() + 1)) {
  if (!model.has_atoms() && !w.time_homogeneous())
    throw ConfigError("integrands under a Poisson law must not depend on time");
}

const LocalLaw& detail::LawCache::at(double t, State s) {
  if (!memoize_) {
    scratch_ = local_law(w_, model_, t, s);
    return scratch_;
  }
  auto& slot = cache_[static_cast<std::size_t>(s + 1)];
  if (!slot) slot = local_law(w_, model_, t, s);
  return *slot;
}

// ---------------------------------------------------------------------------
// Path functionals

double compensator_integral(const Integrand& w, const CompensatorModel& model, const EventStream& stream,
                            double t) {
  struct {
    double sum = 0.0;
    void atom(double, const LocalLaw& law, double) { sum += law.compensator; }
    void drift(double t0, double t1, const LocalLaw& rates) { sum += rates.compensator * (t1 - t0); }
    void event(double, double) {}
  } acc;
  walk_path(w, model, stream, t, acc);
  return acc.sum;
}

double compensator_integral(const Integrand& w, const CompensatorModel& model, double t) {
  if (w.reads_state() || model.state_dependent_kernel())
    throw ConfigError("compensator_integral without a path requires a state-independent integrand and kernel");
  return compensator_integral(w, model, EventStream{{}, t}, t);
}

double pathwise_integral(const Integrand& w, const CompensatorModel& model, const EventStream& stream, double t) {
  struct {
    double x = 0.0;
    void atom(double, const LocalLaw&, double jump) { x += jump; }
    void drift(double t0, double t1, const LocalLaw& rates) { x -= rates.compensator * (t1 - t0); }
    void event(double, double jump) { x += jump; }
  } acc;
  walk_path(w, model, stream, t, acc);
  return acc.x;
}

Characteristics characteristics(const Integrand& w, const CompensatorModel& model, const EventStream& stream,
                                double t, int m_max) {
  if (m_max < 3) throw ConfigError("characteristics: m_max must be >= 3");
  struct Acc {
    Characteristics out;
    void add(const LocalLaw& law, double scale) {
      out.xi_cumulative += scale * law.positive_mean();
      out.c += scale * law.second_moment();
      for (int m = 3; m <= out.m_max; ++m) out.q[static_cast<std::size_t>(m - 3)] += scale * law.positive_moment(m);
    }
    void atom(double, const LocalLaw& law, double) {
      add(law, 1.0);
      out.xi_instantaneous_max = std::max(out.xi_instantaneous_max, law.positive_mean());
    }
    void drift(double t0, double t1, const LocalLaw& rates) { add(rates, t1 - t0); }
    void event(double, double) {}
  } acc;
  acc.out.m_max = m_max;
  acc.out.q.assign(static_cast<std::size_t>(m_max - 2), 0.0);
  walk_path(w, model, stream, t, acc);
  return acc.out;
}

PathSupremum path_supremum(const Integrand& w, const CompensatorModel& model, double horizon,
                           const std::function<double(const LocalLaw&)>& f) {
  constexpr double kUnreached = -std::numeric_limits<double>::infinity();
  PathSupremum sup;
  detail::LawCache laws(w, model);
  const Index n_marks = model.marks().size();
  if (!model.has_atoms()) {
    if (horizon <= 0.0) return sup;
    double best = kUnreached;
    const auto& law = model.poisson_law().mark_law;
    for (State s = kNoMark; s < n_marks; ++s) {
      if (s != kNoMark && law(s) <= 0.0) continue;
      best = std::max(best, f(laws.at(0.0, s)));
    }
    sup.instantaneous = best;
    sup.cumulative = std::max(0.0, best) * horizon;
    return sup;
  }
  const Index atoms = model.atoms_through(horizon);
  if (atoms == 0) return sup;
  const double a = model.atom_mass();
  // Max-plus dynamic programme over the finite state graph.
  std::vector<double> cum(static_cast<std::size_t>(n_marks + 1), kUnreached), next(cum.size());
  cum[0] = 0.0;
  double inst = kUnreached, best_cum = 0.0;
  for (Index k = 1; k <= atoms; ++k) {
    const double time = model.atom_time(k);
    std::fill(next.begin(), next.end(), kUnreached);
    for (State s = kNoMark; s < n_marks; ++s) {
      const double here = cum[static_cast<std::size_t>(s + 1)];
      if (here == kUnreached) continue;
      const double v = f(laws.at(time, s));
      inst = std::max(inst, v);
      const double total = here + v;
      const auto& kernel = model.kernel(s);
      for (Index x = 0; x < n_marks; ++x)
        if (kernel(x) > 0.0) next[static_cast<std::size_t>(x + 1)] = std::max(next[static_cast<std::size_t>(x + 1)], total);
      if (a < 1.0) next[static_cast<std::size_t>(s + 1)] = std::max(next[static_cast<std::size_t>(s + 1)], total);
    }
    cum.swap(next);
    for (double v : cum) best_cum = std::max(best_cum, v);
  }
  sup.instantaneous = inst;
  sup.cumulative = best_cum;
  return sup;
}

}  // namespace mpp
