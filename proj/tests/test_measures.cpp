#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "rsfl/error.hpp"
#include "rsfl/measures.hpp"

using namespace rsfl;

namespace {

BallQuery make_query(Variant v, const State& x, double eps, double horizon, double dt) {
  BallQuery q;
  q.variant = v;
  q.center = x;
  q.eps = eps;
  q.horizon = horizon;
  q.dt = dt;
  return q;
}

}  // namespace

TEST_CASE("rotation orbit equidistributes over strips") {
  const FlowSystem sys = make_builtin("torus_rotation");
  const EmpiricalMeasure mu = orbit_measure(sys, State{0.1, 0.2}, 0.0, 10000, 0.37, 1);
  REQUIRE(mu.size() == 10000);
  const auto& periods = std::get<FlatTorus>(sys.geometry.model()).periods;
  for (std::size_t axis = 0; axis < 2; ++axis) {
    std::vector<double> strips(10, 0.0);
    for (std::size_t k = 0; k < mu.size(); ++k) {
      const auto s = static_cast<std::size_t>(std::floor(10.0 * mu.atoms[k][axis] / periods[axis]));
      strips[std::min<std::size_t>(s, 9)] += mu.weights[k];
    }
    for (double m : strips) CHECK(m == doctest::Approx(0.1).epsilon(0.2));
  }
  CHECK_FALSE(mu.charges_singularity());
  double total = 0.0;
  for (double w : mu.weights) total += w;
  CHECK(std::abs(total - 1.0) <= 1e-12);
}

TEST_CASE("north-south orbit collapses onto the sink and is flagged") {
  const FlowSystem sys = make_builtin("north_south_circle");
  const EmpiricalMeasure mu = orbit_measure(sys, State{0.1}, 20.0, 200, 0.1, 1);
  for (const State& a : mu.atoms) CHECK(std::abs(a[0] - std::numbers::pi) < 0.05);
  CHECK(mu.charges_singularity());
  CHECK(mu.flagged.size() == mu.size());
}

TEST_CASE("Lorenz orbit measure avoids the equilibria") {
  const FlowSystem sys = make_builtin("lorenz");
  const EmpiricalMeasure mu = orbit_measure(sys, State{1.0, 1.0, 1.0}, 100.0, 10000, 0.05, 1);
  CHECK(mu.flagged.empty());
}

TEST_CASE("orbit measures need enough atoms") {
  const FlowSystem sys = make_builtin("torus_rotation");
  CHECK_THROWS_AS(orbit_measure(sys, State{0.0, 0.0}, 0.0, 10, 0.1, 1), InvalidParameter);
}

TEST_CASE("single atom measure gives mass one") {
  const FlowSystem sys = make_builtin("torus_rotation");
  const State x{0.3, 0.6};
  const EmpiricalMeasure mu = atom_list(sys, {x});
  for (Variant v : {Variant::B1, Variant::B2, Variant::B3, Variant::GammaTwoSided, Variant::GammaForward}) {
    const BallMass m = ball_mass(sys, mu, make_query(v, x, 0.05, 1.0, 0.02));
    CHECK(m.estimate == 1.0);
    CHECK(m.ci_low <= m.estimate);
    CHECK(m.ci_high >= m.estimate);
  }
}

TEST_CASE("B1 mass on the constant torus flow is the ball area at every horizon") {
  const FlowSystem sys = make_builtin("torus_constant");
  const EmpiricalMeasure mu = iid_measure(sys, "uniform", 20000, 5);
  const auto& periods = std::get<FlatTorus>(sys.geometry.model()).periods;
  const double eps = 0.1;
  const State x{0.4, 0.5};
  const double area = std::numbers::pi * eps * eps * sys.speed(x) * sys.speed(x) / (periods[0] * periods[1]);
  BallQuery q = make_query(Variant::B1, x, eps, 8.0, 0.1);
  const auto profile = ball_mass_profile(sys, mu, q, {1.0, 4.0, 8.0});
  for (const BallMass& m : profile) {
    CHECK(m.ci_low <= area);
    CHECK(m.ci_high >= area);
    CHECK(m.estimate == profile.front().estimate);
  }
}

TEST_CASE("doubling masses decay with the horizon") {
  const FlowSystem sys = make_builtin("doubling_suspension");
  const EmpiricalMeasure mu = orbit_measure(sys, sys.default_initial, 10.0, 100000, 0.7548776662, 1);
  const State x = mu.atoms[17];
  const BallQuery q = make_query(Variant::B1, x, 0.2, 6.0, 0.05);
  const auto profile = ball_mass_profile(sys, mu, q, {2.0, 4.0, 6.0});
  CHECK(profile[0].estimate > profile[1].estimate);
  CHECK(profile[1].estimate > profile[2].estimate);
  CHECK(profile[2].estimate > 0.0);
  // Each unit of time halves a base cylinder.
  const double rate = std::log(profile[0].estimate / profile[2].estimate) / 4.0;
  CHECK(rate == doctest::Approx(std::numbers::ln2).epsilon(0.3));
}

TEST_CASE("synthetic exponential decay is read back exactly") {
  const std::vector<double> eps{0.2, 0.1};
  const std::vector<double> ts{1, 2, 3, 4, 5};
  std::vector<double> masses;
  for (std::size_t e = 0; e < eps.size(); ++e) {
    for (double t : ts) masses.push_back(std::exp(-0.7 * t));
  }
  const DecayCurve c = decay_curve_from_masses(eps, ts, masses, 1e9);
  for (const auto& p : c.points) {
    CHECK(std::abs(p.rate - 0.7) <= 1e-9);
    CHECK_FALSE(p.censored);
  }
  std::ostringstream os;
  write_decay_csv(os, c);
  CHECK(os.str().find("censored") != std::string::npos);
}

TEST_CASE("zero masses are censored at the sample floor") {
  const DecayCurve c = decay_curve_from_masses({0.1}, {1.0, 2.0}, {0.5, 0.0}, 1000.0);
  CHECK_FALSE(c.at(0, 0).censored);
  CHECK(c.at(0, 1).censored);
  CHECK(c.at(0, 1).rate == doctest::Approx(std::log(1000.0) / 2.0));
}

TEST_CASE("masses are monotone in horizon and radius; Gamma is inside Gamma-plus") {
  const FlowSystem sys = make_builtin("doubling_suspension");
  const EmpiricalMeasure mu = orbit_measure(sys, sys.default_initial, 10.0, 3000, 0.7548776662, 2);
  Rng rng(3);
  for (int trial = 0; trial < 4; ++trial) {
    const State x = mu.atoms[rng.index(mu.size())];
    for (Variant v : {Variant::B2, Variant::B3}) {
      const BallQuery q = make_query(v, x, 0.1, 4.0, 0.05);
      const auto prof = ball_mass_profile(sys, mu, q, {1.0, 2.0, 3.0, 4.0});
      for (std::size_t k = 1; k < prof.size(); ++k) CHECK(prof[k].estimate <= prof[k - 1].estimate);
      const BallQuery wide = make_query(v, x, 0.2, 4.0, 0.05);
      CHECK(ball_mass(sys, mu, q).estimate <= ball_mass(sys, mu, wide).estimate);
    }
    const double two = ball_mass(sys, mu, make_query(Variant::GammaTwoSided, x, 0.1, 3.0, 0.05)).estimate;
    const double fwd = ball_mass(sys, mu, make_query(Variant::GammaForward, x, 0.1, 3.0, 0.05)).estimate;
    CHECK(two <= fwd);
  }
}

TEST_CASE("decay rates never exceed the censoring cap") {
  const FlowSystem sys = make_builtin("doubling_suspension");
  const EmpiricalMeasure mu = orbit_measure(sys, sys.default_initial, 10.0, 2000, 0.7548776662, 4);
  const BallQuery proto = make_query(Variant::B1, mu.atoms[5], 0.1, 1.0, 0.05);
  const std::vector<double> ts{2, 4, 6, 8, 10, 12};
  MassOptions opt;
  opt.exclude_index = 5;
  const DecayCurve c = decay_curve(sys, mu, mu.atoms[5], {0.2, 0.1}, ts, proto, opt);
  bool any_censored = false;
  for (const auto& p : c.points) {
    CHECK(p.rate <= std::log(2000.0) / p.t + 1e-12);
    CHECK(p.rate_low <= p.rate + 1e-12);
    CHECK(p.rate_high >= p.rate - 1e-12);
    any_censored = any_censored || p.censored;
  }
  CHECK(any_censored);
}

TEST_CASE("Wilson interval") {
  const auto [lo, hi] = wilson_interval(0.5, 100.0);
  CHECK(lo == doctest::Approx(0.40383).epsilon(1e-4));
  CHECK(hi == doctest::Approx(0.59617).epsilon(1e-4));
  const auto [lz, hz] = wilson_interval(0.0, 50.0);
  CHECK(lz == doctest::Approx(0.0));
  CHECK(hz == doctest::Approx(3.8416 / 53.8416).epsilon(1e-6));
  Rng rng(7);
  for (int k = 0; k < 200; ++k) {
    const double n = 1.0 + static_cast<double>(rng.index(5000));
    const double p = std::round(rng.uniform() * n) / n;
    const auto [a, b] = wilson_interval(p, n);
    CHECK(a <= p + 1e-12);
    CHECK(b >= p - 1e-12);
    CHECK(a >= -1e-12);
    CHECK(b <= 1.0 + 1e-12);
  }
}

TEST_CASE("measure CSV has one row per atom") {
  const FlowSystem sys = make_builtin("torus_rotation");
  const EmpiricalMeasure mu = iid_measure(sys, "uniform", 50, 9);
  std::ostringstream os;
  write_measure_csv(os, mu);
  std::size_t lines = 0;
  for (char ch : os.str()) lines += ch == '\n';
  CHECK(lines >= 50);
  CHECK(lines <= 51);
  CHECK(mu.effective_size() == doctest::Approx(50.0));
  CHECK_THROWS_AS(iid_measure(sys, "gaussian", 10, 1), InvalidParameter);
}
