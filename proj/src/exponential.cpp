#include "mpp/exponential.hpp"

#include <cmath>
#include <limits>

#include "mpp/parallel.hpp"
#include "mpp/random.hpp"
#include "mpp/stats.hpp"

namespace mpp {

void JumpPath::add_drift(double t0, double t1, double increment) {
  if (!(t1 >= t0) || t0 < end_ - 1e-12 * std::max(1.0, end_))
    throw ConfigError("drift segments must be ordered and non-overlapping");
  pieces_.push_back({t0, t1, increment, false});
  end_ = t1;
}

void JumpPath::add_jump(double time, double delta) {
  for (auto it = pieces_.rbegin(); it != pieces_.rend(); ++it)
    if (it->jump) {
      if (!(time > it->t0)) throw ConfigError("jump times must be strictly increasing");
      break;
    }
  if (time < end_ - 1e-12 * std::max(1.0, end_)) throw ConfigError("jump precedes an earlier piece");
  pieces_.push_back({time, time, delta, true});
  end_ = time;
}

namespace {

// Portion of a piece's increment realized by time t.
double realized(const JumpPath::Piece& p, double t) {
  if (p.jump) return p.t0 <= t ? p.increment : 0.0;
  if (t >= p.t1) return p.increment;
  if (t <= p.t0) return 0.0;
  return p.increment * (t - p.t0) / (p.t1 - p.t0);
}

}  // namespace

double JumpPath::value(double t) const {
  double y = 0.0;
  for (const auto& p : pieces_) y += realized(p, t);
  return y;
}

double JumpPath::continuous_part(double t) const {
  double y = 0.0;
  for (const auto& p : pieces_)
    if (!p.jump) y += realized(p, t);
  return y;
}

double log_doleans(const JumpPath& path, double t) {
  double log_g = 0.0;
  for (const auto& p : path.pieces()) {
    if (p.t0 > t) break;
    if (!p.jump) {
      log_g += realized(p, t);
      continue;
    }
    if (!(p.increment > -1.0))
      throw DegenerateError("Doleans exponential has a non-positive factor at t=" + std::to_string(p.t0));
    log_g += std::log1p(p.increment);
  }
  return log_g;
}

double doleans(const JumpPath& path, double t) {
  bool positive = true;
  for (const auto& p : path.pieces())
    if (p.jump && p.t0 <= t && !(p.increment > -1.0)) positive = false;
  if (positive) return std::exp(log_doleans(path, t));
  double g = std::exp(path.continuous_part(t));
  for (const auto& p : path.pieces())
    if (p.jump && p.t0 <= t) g *= 1.0 + p.increment;
  return g;
}

double sde_residual(const JumpPath& path, double t) {
  // Stieltjes recursion: on a drift piece int G_- dY = G_{t0}(e^{inc} - 1).
  double g = 1.0, integral = 0.0;
  for (const auto& p : path.pieces()) {
    if (p.t0 > t) break;
    const double inc = realized(p, t);
    const double dg = p.jump ? g * inc : g * std::expm1(inc);
    integral += dg;
    g += dg;
  }
  return std::abs(doleans(path, t) - (1.0 + integral));
}

namespace {

void check_lambda(double lambda, std::optional<double> k) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
  if (k && *k > 0.0 && !(lambda * *k < 1.0)) throw ConfigError("lambda must lie below 1/K");
}

struct RatioWalk {
  double lambda;
  JumpPath s;
  double x = 0.0;
  void atom(double time, const LocalLaw& law, double jump) {
    x += jump;
    s.add_jump(time, law.exponential_compensator(lambda));
  }
  void drift(double t0, double t1, const LocalLaw& rates) {
    x -= rates.compensator * (t1 - t0);
    s.add_drift(t0, t1, rates.exponential_compensator(lambda) * (t1 - t0));
  }
  void event(double, double jump) { x += jump; }
};

}  // namespace

JumpPath s_lambda_path(const Integrand& w, const CompensatorModel& model, const EventStream& stream, double lambda,
                       double t) {
  check_lambda(lambda, std::nullopt);
  RatioWalk walk{lambda, {}};
  walk_path(w, model, stream, t, walk);
  return std::move(walk.s);
}

double s_lambda(const Integrand& w, const CompensatorModel& model, const EventStream& stream, double lambda, double t,
                std::optional<double> k) {
  check_lambda(lambda, k);
  return s_lambda_path(w, model, stream, lambda, t).value(t);
}

double martingale_ratio(const Integrand& w, const CompensatorModel& model, const EventStream& stream, double lambda,
                        double t, std::optional<double> k) {
  check_lambda(lambda, k);
  RatioWalk walk{lambda, {}};
  walk_path(w, model, stream, t, walk);
  return std::exp(lambda * walk.x - log_doleans(walk.s, t));
}

std::optional<double> log_second_moment(const Integrand& w, const CompensatorModel& model, double lambda, double t) {
  if (w.reads_state() || model.state_dependent_kernel() || !w.time_homogeneous()) return std::nullopt;
  check_lambda(lambda, std::nullopt);
  const LocalLaw law = local_law(w, model, model.has_atoms() ? model.atom_time(1) : 0.0, kNoMark);
  if (!model.has_atoms()) return t * (law.exponential_compensator(2 * lambda) - 2 * law.exponential_compensator(lambda));
  // Per atom: E e^{2 lambda dX} / (E e^{lambda dX})^2, independent across atoms.
  double m1 = 0.0, m2 = 0.0;
  for (const auto& o : law.outcomes) {
    m1 += o.weight * std::exp(lambda * o.jump);
    m2 += o.weight * std::exp(2 * lambda * o.jump);
  }
  return static_cast<double>(model.atoms_through(t)) * (std::log(m2) - 2 * std::log(m1));
}

MartingaleReport martingale_mean(const Integrand& w, const CompensatorModel& model, double lambda, double t,
                                 std::size_t replicates, std::uint64_t seed, unsigned workers) {
  check_lambda(lambda, std::nullopt);
  if (replicates < 2) throw ConfigError("martingale campaign needs at least 2 replicates");
  std::vector<double> ratios(replicates), min_jump(replicates);
  parallel_for(replicates, workers, [&](std::size_t i) {
    const EventStream stream = simulate(model, t, derive_seed(seed, i));
    RatioWalk walk{lambda, {}};
    walk_path(w, model, stream, t, walk);
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& p : walk.s.pieces())
      if (p.jump) lowest = std::min(lowest, p.increment);
    min_jump[i] = lowest;
    ratios[i] = std::exp(lambda * walk.x - log_doleans(walk.s, t));
  });
  MartingaleReport r;
  r.lambda = lambda;
  r.t = t;
  r.replicates = replicates;
  const auto est = estimate_mean(ratios);
  r.mean = est.mean;
  r.standard_error = est.standard_error;
  r.z = est.standard_error > 0.0 ? (est.mean - 1.0) / est.standard_error : (est.mean == 1.0 ? 0.0 : INFINITY);
  r.min_delta_s = std::numeric_limits<double>::infinity();
  for (double v : min_jump) r.min_delta_s = std::min(r.min_delta_s, v);
  r.log_second_moment = log_second_moment(w, model, lambda, t);
  r.pass = std::abs(r.z) <= 3.0 && r.min_delta_s > -1.0;
  return r;
}

}  // namespace mpp
