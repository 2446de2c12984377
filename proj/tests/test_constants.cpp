#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "rsfl/balls.hpp"
#include "rsfl/constants.hpp"
#include "rsfl/error.hpp"
#include "rsfl/systems.hpp"

using namespace rsfl;

namespace {

double lorenz_jacobian_norm(double x, double y, double z, double s, double r, double b) {
  Eigen::Matrix3d J;
  J << -s, s, 0.0, r - z, -1.0, -x, y, x, -b;
  return Eigen::JacobiSVD<Eigen::Matrix3d>(J).singularValues()(0);
}

// Singular values of the chart derivative by central differences of map(),
// in the orthonormal coordinates (a_1, ..., a_{n-1}, t |X(x)|).
std::vector<double> chart_singular_values(const FlowSystem& sys, const FlowboxChart& chart, const State& p) {
  const std::size_t n = sys.dim();
  const double h = 1e-6;
  Eigen::MatrixXd D(n, n);
  State d(n);
  for (std::size_t k = 0; k < n; ++k) {
    State plus = p, minus = p;
    const double step = k + 1 == n ? h / chart.base_speed() : h;
    plus[k] += step;
    minus[k] -= step;
    sys.geometry.difference(chart.map(minus), chart.map(plus), d);
    for (std::size_t i = 0; i < n; ++i) D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = d[i] / (2 * h);
  }
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(D).singularValues();
  return {sv.data(), sv.data() + sv.size()};
}

}  // namespace

TEST_CASE("Lipschitz estimates on constant fields vanish") {
  CHECK(estimate_lipschitz(make_builtin("torus_constant"), 200) <= 1e-4);
  CHECK(estimate_lipschitz(make_builtin("torus_rotation"), 200) <= 1e-4);
  CHECK_THROWS_AS(estimate_lipschitz(make_builtin("torus_constant"), 10), InvalidParameter);
}

TEST_CASE("Lorenz Lipschitz estimate matches a dense-grid Jacobian maximum") {
  const FlowSystem sys = make_builtin("lorenz");
  const double L = estimate_lipschitz(sys, 500);
  CHECK(L >= 50.0);
  CHECK(L <= 90.0);
  const auto& box = std::get<EuclideanBox>(sys.geometry.model());
  double dense = 0.0;
  const int n = 40;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      for (int k = 0; k <= n; ++k) {
        const double x = box.lower[0] + (box.upper[0] - box.lower[0]) * i / n;
        const double y = box.lower[1] + (box.upper[1] - box.lower[1]) * j / n;
        const double z = box.lower[2] + (box.upper[2] - box.lower[2]) * k / n;
        dense = std::max(dense, lorenz_jacobian_norm(x, y, z, 10.0, 28.0, 8.0 / 3.0));
      }
    }
  }
  CHECK(L == doctest::Approx(1.1 * dense).epsilon(1e-4));
}

TEST_CASE("speed ratio radius c") {
  CHECK(estimate_speed_ratio_c(make_builtin("torus_constant"), 1000) == 1.0);

  const FlowSystem ns = make_builtin("north_south_circle");
  const double c = estimate_speed_ratio_c(ns, 4000, 3);
  CHECK(c > 0.0);
  const int n = 10000;
  const double step = 2.0 * std::numbers::pi / n;
  std::size_t violations = 0;
  for (int a = 0; a < n; ++a) {
    const State x{a * step};
    if (!ns.is_regular(x)) continue;
    const double sx = ns.speed(x);
    const int reach = static_cast<int>(std::ceil(c * sx / step)) + 1;
    for (int off = -reach; off <= reach; ++off) {
      State y{std::fmod((a + off + n) * step, 2.0 * std::numbers::pi)};
      if (!(ns.geometry.distance(x, y) < c * sx) || !ns.is_regular(y)) continue;
      const double ratio = ns.speed(y) / sx;
      if (ratio < 0.5 || ratio > 2.0) ++violations;
    }
  }
  CHECK(violations == 0);

  const FlowSystem lz = make_builtin("lorenz");
  const double cl = estimate_speed_ratio_c(lz, 2000, 5);
  CHECK(cl > 0.0);
  Rng rng(991);
  std::size_t bad = 0;
  for (int k = 0; k < 2000; ++k) {
    const State x = sample_regular(lz, rng);
    const double sx = lz.speed(x);
    State y = x;
    State v(3);
    double norm = 0.0;
    for (double& e : v) {
      e = rng.normal();
      norm += e * e;
    }
    const double rel = cl * rng.uniform() / std::sqrt(norm);
    for (double& e : v) e *= rel * sx;
    lz.geometry.displace(y, v);
    if (!lz.geometry.contains(y) || !lz.is_regular(y)) continue;
    const double ratio = lz.speed(y) / sx;
    if (ratio < 0.5 || ratio > 2.0) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("separation constants") {
  const FlowSystem tc = make_builtin("torus_constant");
  CHECK(estimate_separation(tc, 0.1, 0.4, 200) == doctest::Approx(0.09).epsilon(1e-6));

  const FlowSystem tr = make_builtin("torus_rotation");
  const double gr = estimate_separation(tr, 0.1, 0.4, 200);
  CHECK(gr > 0.0);
  // Grid search oracle: the rotation flow is a translation, so the minimum is
  // the same at every base point.
  const double speed = std::sqrt(3.0);
  double grid_min = std::numeric_limits<double>::infinity();
  for (int k = 20; k <= 80; ++k) {
    const double t = 0.1 * k / 20.0;
    State y{t, std::sqrt(2.0) * t};
    tr.geometry.normalize(y);
    grid_min = std::min(grid_min, tr.geometry.distance(y, State{0.0, 0.0}) / speed);
  }
  CHECK(gr == doctest::Approx(0.9 * grid_min).epsilon(1e-6));

  const FlowSystem ns = make_builtin("north_south_circle");
  CHECK(estimate_separation(ns, 0.1, 0.3, 200, 1, 0.1) > 0.0);
  CHECK_THROWS_AS(estimate_separation(ns, 0.5, 0.3, 10), InvalidParameter);
}

TEST_CASE("flowbox charts on the torus are isometries") {
  const FlowSystem tc = make_builtin("torus_constant");
  const FlowboxChart chart = build_flowbox(tc, State{0.3, 0.7}, 0.2);
  Rng rng(13);
  for (std::size_t g = 0; g < 20; ++g) {
    const State p = chart.domain_point(g, rng);
    for (double s : chart.singular_values(p)) CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  const FlowboxCheck check = chart.check(20, rng);
  CHECK(check.ok);
}

TEST_CASE("flowbox charts on Lorenz stay within derivative bounds") {
  const FlowSystem lz = make_builtin("lorenz");
  const double T0 = estimate_T0(lz, 20, 20, 7);
  CHECK(T0 > 0.0);
  Rng rng(17);
  int charts = 0;
  while (charts < 5) {
    const State x = sample_regular(lz, rng);
    if (lz.speed(x) < 1.0) continue;
    ++charts;
    const FlowboxChart chart = build_flowbox(lz, x, T0);
    for (std::size_t g = 0; g < 20; ++g) {
      const State p = chart.domain_point(g, rng);
      const auto oracle = chart_singular_values(lz, chart, p);
      const auto lib = chart.singular_values(p);
      REQUIRE(lib.size() == oracle.size());
      for (std::size_t k = 0; k < oracle.size(); ++k) {
        CHECK(oracle[k] >= 0.3);
        CHECK(oracle[k] <= 3.3);
        CHECK(lib[k] == doctest::Approx(oracle[k]).epsilon(1e-3));
      }
    }
  }
}

TEST_CASE("flowbox image avoids the north-south singularities") {
  const FlowSystem ns = make_builtin("north_south_circle");
  const FlowboxChart chart = build_flowbox(ns, State{std::numbers::pi / 2}, 0.1);
  Rng rng(19);
  for (std::size_t g = 0; g < 50; ++g) CHECK(ns.speed(chart.map(chart.domain_point(g, rng))) > 0.0);
  CHECK(chart.check(20, rng).min_image_speed > 0.0);
  CHECK_THROWS_AS(build_flowbox(ns, State{0.0}, 0.1), SingularCenter);
}

TEST_CASE("delta calibration yields witnesses with positive h(T)") {
  for (const auto* name : {"torus_constant", "torus_rotation"}) {
    const FlowSystem sys = make_builtin(name);
    const double T = 0.2, T0 = 0.5;
    const DeltaCalibration cal = calibrate_delta(sys, T, T0, 60, 3);
    CAPTURE(name);
    CHECK(cal.delta > 0.0);
    CHECK_FALSE(cal.flagged);
    if (cal.first_failure) CHECK(*cal.first_failure == doctest::Approx(2.0 * cal.delta));

    Rng rng(29);
    int witnesses = 0;
    for (int trial = 0; trial < 60; ++trial) {
      State x(2);
      sys.geometry.sample_uniform(rng, x);
      State y = x;
      State v{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      for (double& e : v) e *= 0.5 * cal.delta * sys.speed(x);
      sys.geometry.displace(y, v);
      BallQuery q;
      q.variant = Variant::GammaTwoSided;
      q.center = x;
      q.eps = cal.delta;
      q.horizon = T0;
      q.dt = 0.01;
      const MatchResult r = BallOracle(sys, q).test(y);
      if (!r.member) continue;
      ++witnesses;
      REQUIRE(r.witness);
      CHECK((*r.witness)(T) > 0.0);
    }
    CHECK(witnesses > 10);
  }
}

TEST_CASE("speed changes at most exponentially in time") {
  Rng rng(37);
  for (const auto& name : builtin_names()) {
    const FlowSystem sys = make_builtin(name);
    const double L = 1.05 * estimate_lipschitz(sys, 300);
    for (int k = 0; k < 20; ++k) {
      const State x = sample_regular(sys, rng);
      const double t = rng.uniform(-1.0, 1.0);
      const State y = flow_for(sys, x, t, 1e-3);
      const double ratio = sys.speed(y) / sys.speed(x);
      CAPTURE(name);
      CHECK(ratio <= std::exp(L * std::abs(t)) * (1.0 + 1e-9));
      CHECK(ratio >= std::exp(-L * std::abs(t)) * (1.0 - 1e-9));
    }
  }
}

TEST_CASE("constants report round trips through JSON") {
  ConstantsOptions opt;
  opt.n_samples = 200;
  opt.n_pairs = 1000;
  opt.n_points = 10;
  opt.n_grid = 10;
  opt.n_trials = 20;
  const FlowConstants k = estimate_constants(make_builtin("torus_constant"), opt);
  CHECK(k.T0 > 0.0);
  CHECK_FALSE(k.gamma_table.empty());
  for (const auto& [T, g] : k.gamma_table) {
    CHECK(T > 0.0);
    CHECK(T < k.T0);
    CHECK(g > 0.0);
  }
  const nlohmann::json j = k.to_json();
  for (const char* key : {"system", "L", "c", "T0", "gamma_table", "delta_table", "seed", "n_samples"}) {
    CHECK(j.contains(key));
  }
  const FlowConstants back = FlowConstants::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.gamma_at(k.gamma_table.back().first) == k.gamma_table.back().second);
}
