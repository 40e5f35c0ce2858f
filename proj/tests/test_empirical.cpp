#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mpp/empirical.hpp"
#include "mpp/random.hpp"

using namespace mpp;

namespace {

Eigen::VectorXd letters() { return Eigen::VectorXd::LinSpaced(8, 1, 8); }

TimeSeriesModel uniform8() { return TimeSeriesModel::iid(letters(), Eigen::VectorXd::Constant(8, 0.125)); }

TimeSeriesModel sticky() {
  Eigen::Matrix2d p;
  p << 0.9, 0.1, 0.5, 0.5;
  return TimeSeriesModel::markov(Eigen::Vector2d(0, 1), p);
}

}  // namespace

TEST_CASE("stationary distribution") {
  Eigen::Matrix2d p;
  p << 0.9, 0.1, 0.5, 0.5;
  const auto pi = stationary_distribution(p);
  CHECK(pi(0) == doctest::Approx(5.0 / 6.0));
  CHECK(pi(1) == doctest::Approx(1.0 / 6.0));
  CHECK_THROWS_AS(stationary_distribution(Eigen::Matrix2d::Identity()), ConfigError);
  CHECK(sticky().kernel(kNoMark)(0) == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("series simulation") {
  const auto m = uniform8();
  const auto a = m.simulate(500, 4), b = m.simulate(500, 4);
  CHECK(a == b);
  CHECK(a.size() == 500);
  for (double y : a) CHECK((y >= 1 && y <= 8 && y == std::round(y)));
  const auto stream = simulate(m.embedding(), 500, 4);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == m.alphabet().value(stream.events[k].mark));
  CHECK(m.simulate(0, 4).empty());

  std::ostringstream out;
  write_series_csv(out, std::vector<double>{3, 1});
  CHECK(out.str() == "k,y_k\n1,3\n2,1\n");
}

TEST_CASE("index process is the centred running sum") {
  const auto m = uniform8();
  const auto psi = FunctionClass::thresholds(letters(), Eigen::VectorXd::Constant(1, 5.0)).member(0);
  const std::vector<double> series{1, 5, 8, 2, 6};
  const auto x = index_process(series, psi, m);
  const std::vector<double> expected{-0.5, 0.0, 0.5, 0.0, 0.5};
  REQUIRE(x.size() == expected.size());
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(x[k] == doctest::Approx(expected[k]));
  CHECK_THROWS_AS(index_process(std::vector<double>{1, 9}, psi, m), DataError);

  // Markov: centring uses the previous symbol's row.
  const auto s = sticky();
  const auto xs = index_process(std::vector<double>{1, 1, 0}, Eigen::Vector2d(0, 1), s);
  CHECK(xs[0] == doctest::Approx(1.0 - 1.0 / 6.0));
  CHECK(xs[1] == doctest::Approx(xs[0] + 1.0 - 0.5));
  CHECK(xs[2] == doctest::Approx(xs[1] - 0.5));
}

TEST_CASE("threshold class metrics") {
  const auto cls = FunctionClass::thresholds(letters(), letters());
  CHECK(cls.names().front() == "ge_1");
  const auto cm = class_metrics(cls, uniform8());
  for (Index i = 0; i < 8; ++i)
    for (Index j = i + 1; j < 8; ++j) {
      CHECK(cm.d1_raw(i, j) == doctest::Approx((j - i) / 8.0));
      CHECK(cm.d1_raw(j, i) == doctest::Approx(0.0));
      CHECK(cm.d1(i, j) == doctest::Approx((j - i) / 8.0));
      CHECK(cm.d2(i, j) == doctest::Approx(std::sqrt((j - i) / 8.0)));
    }
}

TEST_CASE("moment condition constants") {
  const auto m = uniform8();
  const auto cls = FunctionClass::thresholds(letters(), letters());
  for (Index j = 0; j < 8; ++j) {
    const double p = (8 - j) / 8.0;
    CHECK(nc_condition(cls.member(j), m).k_hat == doctest::Approx(std::max(p, 1.0 / 3.0)));
  }
  CHECK(nc_condition(Eigen::VectorXd::Zero(8), m).k_hat == 0.0);
}

TEST_CASE("exact variance") {
  const auto psi = FunctionClass::thresholds(letters(), Eigen::VectorXd::Constant(1, 3.0)).member(0);
  CHECK(exact_variance(psi, uniform8(), 40) == doctest::Approx(40 * 0.75 * 0.25));
  CHECK(exact_variance(psi, uniform8(), 0) == 0.0);
  // Y_1 ~ pi unconditionally: (1/6)(5/6). Later steps: pi . v with v = (0.09, 0.25).
  CHECK(exact_variance(Eigen::Vector2d(0, 1), sticky(), 10) ==
        doctest::Approx(5.0 / 36.0 + 9 * (5.0 / 6.0 * 0.09 + 1.0 / 6.0 * 0.25)));
}

TEST_CASE("single-index tail check") {
  const auto psi = FunctionClass::thresholds(letters(), Eigen::VectorXd::Constant(1, 4.0)).member(0);
  const auto one = verify_theorem3(psi, uniform8(), 64, 6, 16, 5000, 11, Sided::one);
  CHECK(one.pass);
  CHECK(one.k == doctest::Approx(5.0 / 8.0));
  const auto two = verify_theorem3(psi, uniform8(), 64, 6, 16, 5000, 11, Sided::two);
  CHECK(two.hits >= one.hits);
  CHECK(two.union_pass);
  const auto empty = verify_theorem3(psi, uniform8(), 0, 1, 1, 5000, 11);
  CHECK(empty.hits == 0);
  CHECK(empty.pass);
  const auto sm = verify_theorem3(Eigen::Vector2d(0, 1), sticky(), 50, 5, 9, 4000, 2, Sided::one);
  CHECK(sm.pass);
}

TEST_CASE("uniform check and scaling identities") {
  const auto cls = FunctionClass::thresholds(letters(), letters());
  std::vector<double> u;
  for (double v = 0.05; v <= 3.0; v += 0.05) u.push_back(v);
  UniformOptions opt;
  opt.replicates = 2000;
  opt.seed = 5;
  opt.exact_cap = 8;
  const auto rep = verify_theorem4(cls, uniform8(), 16, u, opt);
  CHECK(rep.gamma1.exact);
  CHECK(rep.gamma2.exact);
  CHECK(rep.scaling_ok);
  CHECK(rep.scaling_error <= 1e-12 * std::max({1.0, rep.gamma1.value, rep.gamma2.value}));
  CHECK(rep.scale == doctest::Approx(4.0 * rep.gamma2.value + 16.0 * rep.gamma1.value));
  CHECK(rep.k_common == doctest::Approx(1.0));
  CHECK(rep.pass);
}
