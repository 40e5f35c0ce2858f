#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mpp/point_process.hpp"
#include "mpp/random.hpp"
#include "mpp/stats.hpp"

using namespace mpp;

namespace {

CompensatorModel rademacher() {
  return CompensatorModel::atoms(MarkSpace(Eigen::Vector2d(-1, 1)), 1.0, 1.0, Eigen::Vector2d(0.5, 0.5));
}

CompensatorModel poisson_pm(double rate = 1.0) {
  return CompensatorModel::poisson(MarkSpace(Eigen::Vector2d(-1, 1)), rate, Eigen::Vector2d(0.5, 0.5));
}

CompensatorModel lazy_markov() {
  Eigen::Matrix3d p;
  p << 0.5, 0.3, 0.2, 0.3, 0.4, 0.3, 0.6, 0.3, 0.1;
  return CompensatorModel::atoms(MarkSpace(Eigen::Vector3d(-1, 0, 2)), 1.0, 0.7, Eigen::Vector3d(0.5, 0.3, 0.2), p);
}

}  // namespace

TEST_CASE("model validation") {
  const MarkSpace marks(Eigen::Vector2d(-1, 1));
  CHECK_THROWS_AS(CompensatorModel::poisson(marks, 0.0, Eigen::Vector2d(0.5, 0.5)), ConfigError);
  CHECK_THROWS_AS(CompensatorModel::poisson(marks, 1.0, Eigen::Vector2d(0.5, 0.6)), ConfigError);
  CHECK_THROWS_AS(CompensatorModel::atoms(marks, 1.0, 0.0, Eigen::Vector2d(0.5, 0.5)), ConfigError);
  CHECK_THROWS_AS(CompensatorModel::atoms(marks, 1.0, 1.5, Eigen::Vector2d(0.5, 0.5)), ConfigError);
  CHECK_THROWS_AS(CompensatorModel::atoms(marks, -1.0, 1.0, Eigen::Vector2d(0.5, 0.5)), ConfigError);
  CHECK_THROWS_AS(CompensatorModel::atoms(marks, 1.0, 1.0, Eigen::Vector2d(0.5, 0.5), Eigen::Matrix3d::Identity()),
                  ConfigError);
}

TEST_CASE("simulate is a function of the seed") {
  const auto m = lazy_markov();
  const auto a = simulate(m, 200, 42), b = simulate(m, 200, 42), c = simulate(m, 200, 43);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].time == b.events[i].time);
    CHECK(a.events[i].mark == b.events[i].mark);
  }
  bool differs = a.events.size() != c.events.size();
  for (std::size_t i = 0; !differs && i < a.events.size(); ++i) differs = a.events[i].mark != c.events[i].mark;
  CHECK(differs);
}

TEST_CASE("atom events sit on the lattice, one per atom when a = 1") {
  const auto s = simulate(rademacher(), 50, 7);
  REQUIRE(s.events.size() == 50);
  for (std::size_t i = 0; i < s.events.size(); ++i) CHECK(s.events[i].time == doctest::Approx(double(i + 1)));

  const auto lazy = simulate(lazy_markov(), 1000, 7);
  for (const auto& e : lazy.events) CHECK(e.time == std::round(e.time));
  // 0.7 * 1000 events expected; binomial sd ~ 14.5.
  CHECK(std::abs(double(lazy.events.size()) - 700.0) < 75.0);
}

TEST_CASE("Poisson counts have mean rate * T") {
  const auto m = poisson_pm(2.0);
  std::vector<double> counts;
  for (std::uint64_t i = 0; i < 2000; ++i) counts.push_back(double(simulate(m, 10, derive_seed(5, i)).events.size()));
  const auto est = estimate_mean(counts);
  CHECK(std::abs(est.mean - 20.0) < 5.0 * est.standard_error);
  // Poisson: variance equals the mean.
  CHECK(est.standard_deviation * est.standard_deviation == doctest::Approx(20.0).epsilon(0.1));
}

TEST_CASE("hat_w and compensator integrals") {
  const auto id = [](const CompensatorModel& m) { return Integrand::identity(m.marks()); };
  CHECK(hat_w(id(rademacher()), rademacher(), 1.0) == doctest::Approx(0.0));
  // a * sum W K = 0.7 * (-0.5 + 0 + 0.4)
  const auto lm = lazy_markov();
  CHECK(hat_w(id(lm), lm, 1.0) == doctest::Approx(-0.07));
  // Row 2 of the kernel: 0.7 * (-0.6 + 0 + 0.2)
  CHECK(hat_w(id(lm), lm, 2.0, 2) == doctest::Approx(-0.28));
  // Poisson: rate * T * E[W]
  const auto pm = CompensatorModel::poisson(MarkSpace(Eigen::Vector2d(1, 3)), 2.0, Eigen::Vector2d(0.25, 0.75));
  CHECK(compensator_integral(id(pm), pm, 5.0) == doctest::Approx(2.0 * 5.0 * 2.5));
  CHECK_THROWS_AS(compensator_integral(id(lm), lm, 5.0), ConfigError);
}

TEST_CASE("Rademacher walk: X is the sum of marks and C_t = t") {
  const auto m = rademacher();
  const auto w = Integrand::identity(m.marks());
  const auto s = simulate(m, 40, 11);
  double sum = 0.0;
  for (const auto& e : s.events) sum += m.marks().value(e.mark);
  CHECK(pathwise_integral(w, m, s, 40) == doctest::Approx(sum));
  const auto ch = characteristics(w, m, s, 40, 5);
  CHECK(ch.c == doctest::Approx(40.0));
  CHECK(ch.xi_cumulative == doctest::Approx(20.0));
  CHECK(ch.xi_instantaneous_max == doctest::Approx(0.5));
  // E max(0, V)^m with V = +-1: 1/2 per atom.
  CHECK(ch.q_at(4) == doctest::Approx(20.0));
}

TEST_CASE("C increment at a partial atom is a E W^2 - (a E W)^2") {
  const auto m = CompensatorModel::atoms(MarkSpace(Eigen::Vector2d(0, 1)), 1.0, 0.5, Eigen::Vector2d(0.5, 0.5));
  const auto law = local_law(Integrand::identity(m.marks()), m, 1.0, kNoMark);
  CHECK(law.second_moment() == doctest::Approx(0.5 * 0.5 - 0.25 * 0.25));
  double total = 0.0;
  for (const auto& o : law.outcomes) total += o.weight;
  CHECK(total == doctest::Approx(1.0));
  double mean = 0.0;
  for (const auto& o : law.outcomes) mean += o.weight * o.jump;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("X is a martingale: mean terminal value is zero") {
  const auto m = lazy_markov();
  const auto w = Integrand::identity(m.marks());
  std::vector<double> xs;
  for (std::uint64_t i = 0; i < 4000; ++i) xs.push_back(pathwise_integral(w, m, simulate(m, 30, derive_seed(9, i)), 30));
  const auto est = estimate_mean(xs);
  CHECK(std::abs(est.mean) < 4.0 * est.standard_error);
}

TEST_CASE("path_supremum of a deterministic functional") {
  const auto m = rademacher();
  const auto w = Integrand::identity(m.marks());
  const auto sup = path_supremum(w, m, 12, [](const LocalLaw& l) { return l.max_jump(); });
  CHECK(sup.cumulative == doctest::Approx(12.0));
  CHECK(sup.instantaneous == doctest::Approx(1.0));
}

TEST_CASE("stream CSV") {
  std::ostringstream out;
  const auto m = rademacher();
  write_stream_csv(out, simulate(m, 3, 1), m.marks());
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "time,mark");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("derive_seed is injective in the index") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(123, i));
  CHECK(seen.size() == 10000);
}
