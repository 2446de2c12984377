#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "rsfl/entropy.hpp"
#include "rsfl/error.hpp"

using namespace rsfl;

namespace {

std::vector<double> range(double lo, double hi, double step) {
  std::vector<double> out;
  for (double t = lo; t <= hi + 1e-9; t += step) out.push_back(t);
  return out;
}

std::vector<std::size_t> spread_centers(const EmpiricalMeasure& mu, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(i * mu.size() / k + 3);
  return out;
}

BallQuery proto(Variant v, double dt) {
  BallQuery q;
  q.variant = v;
  q.dt = dt;
  return q;
}

// Largest Lyapunov exponent of Lorenz by two-orbit renormalization.
double benettin_lorenz() {
  using V = std::array<double, 3>;
  auto f = [](const V& p) {
    return V{10.0 * (p[1] - p[0]), p[0] * (28.0 - p[2]) - p[1], p[0] * p[1] - 8.0 / 3.0 * p[2]};
  };
  auto step = [&](V& x, double h) {
    auto add = [](const V& a, const V& b, double s) { return V{a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]}; };
    const V k1 = f(x), k2 = f(add(x, k1, h / 2)), k3 = f(add(x, k2, h / 2)), k4 = f(add(x, k3, h));
    for (int j = 0; j < 3; ++j) x[j] += h / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
  };
  const double h = 0.005, d0 = 1e-8;
  V x{1.0, 1.0, 1.0};
  for (int i = 0; i < 20000; ++i) step(x, h);
  V y{x[0] + d0, x[1], x[2]};
  double sum = 0.0;
  const int blocks = 2000, per = 20;
  for (int b = 0; b < blocks; ++b) {
    for (int i = 0; i < per; ++i) {
      step(x, h);
      step(y, h);
    }
    const double d = std::sqrt(std::pow(y[0] - x[0], 2) + std::pow(y[1] - x[1], 2) + std::pow(y[2] - x[2], 2));
    sum += std::log(d / d0);
    for (int j = 0; j < 3; ++j) y[j] = x[j] + (y[j] - x[j]) * d0 / d;
  }
  return sum / (blocks * per * h);
}

}  // namespace

TEST_CASE("synthetic exponential masses recover the rate") {
  for (double h0 : {0.0, 0.3, 0.7, 1.5}) {
    const std::vector<double> eps{0.2, 0.1, 0.05};
    const std::vector<double> ts = range(1.0, 6.0, 1.0);
    std::vector<double> masses;
    for (std::size_t e = 0; e < eps.size(); ++e) {
      for (double t : ts) masses.push_back(std::exp(-h0 * t));
    }
    const DecayCurve c = decay_curve_from_masses(eps, ts, masses, 1e12);
    const EntropyEstimate est = estimate_from_curves(std::vector<DecayCurve>(5, c));
    CAPTURE(h0);
    CHECK(std::abs(est.extrapolated - h0) <= 1e-6);
    for (const auto& s : est.per_epsilon) CHECK(std::abs(s.slope - h0) <= 1e-6);
  }
}

TEST_CASE("fully censored input is an error") {
  const DecayCurve c = decay_curve_from_masses({0.1}, {1, 2, 3, 4}, {0.0, 0.0, 0.0, 0.0}, 100.0);
  CHECK_THROWS_AS(estimate_from_curves(std::vector<DecayCurve>(5, c)), CensoredError);
}

TEST_CASE("isometric rotation has zero entropy") {
  const FlowSystem sys = make_builtin("torus_rotation");
  const EmpiricalMeasure mu = iid_measure(sys, "uniform", 10000, 7);
  const auto est = brin_katok_estimate(sys, mu, spread_centers(mu, 10), {0.2, 0.1, 0.05}, range(5, 50, 5),
                                       proto(Variant::B1, 0.1));
  CHECK(est.extrapolated <= 0.02);
  CHECK(est.centers == 10);
  std::ostringstream os;
  write_entropy_csv(os, est);
  CHECK(os.str().find("extrapolated") != std::string::npos);
}

TEST_CASE("doubling suspension entropy is near log 2") {
  const FlowSystem sys = make_builtin("doubling_suspension");
  const EmpiricalMeasure mu = orbit_measure(sys, sys.default_initial, 10.0, 100000, 0.7548776662, 7);
  const auto est = brin_katok_estimate(sys, mu, spread_centers(mu, 20), {0.2, 0.1, 0.05}, range(1, 14, 1),
                                       proto(Variant::B1, 0.05));
  CHECK(est.extrapolated >= 0.55);
  CHECK(est.extrapolated <= 0.83);
  for (const auto& s : est.per_epsilon) CHECK(s.slope >= 0.9 * std::numbers::ln2 - 2.0 * s.stderr_);
  CHECK(std::isfinite(est.log_speed_mean));
}

TEST_CASE("Lorenz entropy is bracketed by the largest Lyapunov exponent") {
  const double lambda1 = benettin_lorenz();
  CHECK(lambda1 > 0.8);
  CHECK(lambda1 < 1.0);
  const FlowSystem sys = make_builtin("lorenz");
  const EmpiricalMeasure mu = orbit_measure(sys, State{1.0, 1.0, 1.0}, 10.0, 20000, 0.05, 7);
  const auto est = brin_katok_estimate(sys, mu, spread_centers(mu, 20), {0.05, 0.025}, range(1.0, 6.0, 0.5),
                                       proto(Variant::B1, 0.002));
  CHECK(est.extrapolated > 0.0);
  CHECK(est.extrapolated <= lambda1 + 0.15);
}

TEST_CASE("B2 and B3 slopes agree within their errors") {
  struct Case {
    const char* name;
    double eps, dt, t_max;
  };
  for (const Case c : {Case{"torus_rotation", 0.1, 0.05, 5.0}, Case{"torus_constant", 0.1, 0.05, 5.0},
                       Case{"doubling_suspension", 0.1, 0.05, 5.0}, Case{"north_south_circle", 0.1, 0.05, 4.0},
                       Case{"lorenz", 0.05, 0.002, 2.0}}) {
    const FlowSystem sys = make_builtin(c.name);
    const EmpiricalMeasure mu = sys.attractor ? orbit_measure(sys, sys.default_initial, 10.0, 3000,
                                                              std::string(c.name) == "lorenz" ? 0.05 : 0.7548776662, 3)
                                              : iid_measure(sys, "uniform", 3000, 3);
    std::vector<std::size_t> centers;
    for (std::size_t i = 0; centers.size() < 6 && i < mu.size(); i += 97) {
      if (sys.is_regular(mu.atoms[i])) centers.push_back(i);
    }
    const auto ts = range(c.t_max / 4, c.t_max, c.t_max / 4);
    std::vector<EntropyEstimate> ests;
    for (Variant v : {Variant::B2, Variant::B3}) {
      ests.push_back(brin_katok_estimate(sys, mu, centers, {c.eps}, ts, proto(v, c.dt)));
    }
    const auto spread = variant_spread(ests);
    REQUIRE(spread.size() == 1);
    CAPTURE(c.name);
    CHECK(spread[0] <= 2.0 * (ests[0].per_epsilon[0].stderr_ + ests[1].per_epsilon[0].stderr_) + 1e-12);
  }
}

TEST_CASE("expansiveness verdicts") {
  const FlowSystem rot = make_builtin("torus_rotation");
  const EmpiricalMeasure lebesgue = iid_measure(rot, "uniform", 2000, 11);
  const auto not_exp = expansiveness_test(rot, lebesgue, 0.1, spread_centers(lebesgue, 20), {4, 8, 12, 16},
                                          ExpansivenessMode::TwoSided, proto(Variant::GammaTwoSided, 0.1));
  CHECK(not_exp.verdict == Verdict::NotExpansiveAtScale);
  CHECK(not_exp.sup_mass.back().ci_low > 0.0);

  const FlowSystem dbl = make_builtin("doubling_suspension");
  const EmpiricalMeasure orbit = orbit_measure(dbl, dbl.default_initial, 10.0, 10000, 0.7548776662, 11);
  const auto centers = spread_centers(orbit, 20);
  const auto fwd = expansiveness_test(dbl, orbit, 0.05, centers, {8, 16, 24, 32}, ExpansivenessMode::Forward,
                                      proto(Variant::GammaForward, 0.05));
  CHECK(fwd.verdict == Verdict::ExpansiveAtScale);
  CHECK(fwd.floor == doctest::Approx(1e-4));

  const auto two = expansiveness_test(dbl, orbit, 0.05, centers, {8, 16, 24, 32}, ExpansivenessMode::TwoSided,
                                      proto(Variant::GammaTwoSided, 0.05));
  CHECK(two.verdict != Verdict::NotExpansiveAtScale);
  for (std::size_t k = 0; k < two.sup_mass.size(); ++k) CHECK(two.sup_mass[k].estimate <= fwd.sup_mass[k].estimate);

  const State x{0.3, 0.4};
  const State y = flow_for(rot, x, 0.02, 1e-3);
  const EmpiricalMeasure pair = atom_list(rot, {x, y});
  const auto same_orbit = expansiveness_test(rot, pair, 0.1, {0, 1}, {2, 4}, ExpansivenessMode::TwoSided,
                                             proto(Variant::GammaTwoSided, 0.01));
  CHECK(same_orbit.verdict == Verdict::NotExpansiveAtScale);
  CHECK(same_orbit.sup_mass.back().estimate == 1.0);
}

TEST_CASE("consistency between entropy and expansiveness") {
  EntropyEstimate positive;
  positive.extrapolated = 0.5;
  positive.extrapolated_stderr = 0.05;
  EntropyEstimate zero;
  ExpansivenessVerdict expansive, not_expansive, unsure;
  expansive.eps = not_expansive.eps = unsure.eps = 0.1;
  expansive.verdict = Verdict::ExpansiveAtScale;
  not_expansive.verdict = Verdict::NotExpansiveAtScale;
  unsure.verdict = Verdict::Inconclusive;

  const FlowSystem rot = make_builtin("torus_rotation");
  const EmpiricalMeasure mu = iid_measure(rot, "uniform", 100, 1);
  CHECK(consistency_check(mu, positive, {expansive}).status == Consistency::Consistent);
  CHECK(consistency_check(mu, zero, {not_expansive}).status == Consistency::Consistent);
  CHECK(consistency_check(mu, positive, {not_expansive}).status == Consistency::Contradiction);
  CHECK(consistency_check(mu, positive, {unsure}).status == Consistency::Undetermined);
  CHECK(consistency_check(mu, positive, {}).status == Consistency::Undetermined);

  ExpansivenessVerdict coarse = not_expansive;
  coarse.eps = 0.4;
  CHECK(consistency_check(mu, positive, {coarse, expansive}).status == Consistency::Consistent);

  const FlowSystem ns = make_builtin("north_south_circle");
  const EmpiricalMeasure sink = orbit_measure(ns, State{0.1}, 20.0, 200, 0.1, 1);
  CHECK(consistency_check(sink, zero, {expansive}).status == Consistency::HypothesisViolated);
  CHECK(consistency_name(Consistency::Consistent) == "CONSISTENT");
}
