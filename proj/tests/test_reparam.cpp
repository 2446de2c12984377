#include <cmath>
#include <numbers>

#include "doctest.h"
#include "rsfl/error.hpp"
#include "rsfl/random.hpp"
#include "rsfl/reparam.hpp"

using namespace rsfl;

namespace {

PiecewiseLinearReparam pl(std::vector<Knot> k) { return PiecewiseLinearReparam(std::move(k)); }

// Random increasing PL map through (0,0) on [0, n] with slopes in [lo, hi].
PiecewiseLinearReparam random_monotone(Rng& rng, int n, double lo, double hi) {
  std::vector<Knot> knots{{0.0, 0.0}};
  double s = 0.0, h = 0.0;
  for (int k = 0; k < n; ++k) {
    const double ds = rng.uniform(0.1, 1.0);
    s += ds;
    h += ds * rng.uniform(lo, hi);
    knots.push_back({s, h});
  }
  return pl(std::move(knots));
}

}  // namespace

TEST_CASE("classify reads slopes directly") {
  const ClassSet id = classify(pl({{0, 0}, {1, 1}}));
  CHECK(id.rep);
  CHECK(id.contains(ReparamClass::any()));
  CHECK(id.contains(ReparamClass::rep_alpha(0.01)));
  CHECK(id.contains(ReparamClass::rep_alpha_star(0.01)));

  const ClassSet mixed = classify(pl({{0, 0}, {1, 0.9}, {2, 2.1}}));
  CHECK(mixed.rep);
  CHECK(mixed.contains(ReparamClass::rep_alpha(0.3)));
  CHECK_FALSE(mixed.contains(ReparamClass::rep_alpha(0.1)));

  const ClassSet neg = classify(pl({{0, 0}, {1, -0.5}, {2, 1}}));
  CHECK(neg.contains(ReparamClass::any()));
  CHECK_FALSE(neg.rep);
  CHECK_FALSE(neg.contains(ReparamClass::rep()));
  CHECK_FALSE(neg.contains(ReparamClass::rep_alpha(0.9)));
}

TEST_CASE("reparametrizations validate their knots") {
  CHECK_THROWS_AS(pl({{0, 0}}), InvalidParameter);
  CHECK_THROWS_AS(pl({{0, 0}, {0, 1}}), InvalidParameter);
  CHECK_THROWS_AS(pl({{1, 1}, {2, 2}}), InvalidParameter);
  CHECK_THROWS_AS(ReparamClass::rep_alpha(1.5), InvalidParameter);
  CHECK_THROWS_AS(ReparamClass::rep_alpha(0.0), InvalidParameter);
}

TEST_CASE("evaluation interpolates and extends affinely") {
  const auto h = pl({{0, 0}, {1, 0.9}, {2, 2.1}});
  CHECK(h(0.5) == doctest::Approx(0.45));
  CHECK(h(1.5) == doctest::Approx(1.5));
  CHECK(h(3.0) == doctest::Approx(3.3));
  CHECK(h(-1.0) == doctest::Approx(-0.9));
}

TEST_CASE("boost_to_monotone examples") {
  const auto h = boost_to_monotone({{0, 0}, {1, 0.9}, {2, 2.1}}, 1.0);
  CHECK(h(0.5) == doctest::Approx(0.45));
  CHECK(h(1.5) == doctest::Approx(1.5));
  const auto id = boost_to_monotone({{0, 0}, {1, 1}, {2, 2}}, 1.0);
  for (double s : {0.0, 0.3, 1.7, 2.0}) CHECK(id(s) == doctest::Approx(s));
  CHECK_THROWS_AS(boost_to_monotone({{0, 0}, {1, -0.1}}, 1.0), NonMonotoneAnchors);
}

TEST_CASE("boosted maps are always increasing homeomorphisms") {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const double T = rng.uniform(0.1, 2.0);
    std::vector<Knot> anchors{{0.0, 0.0}};
    double h = 0.0;
    const int n = 1 + static_cast<int>(rng.index(10));
    for (int k = 1; k <= n; ++k) {
      h += rng.uniform(1e-6, 3.0) * T;
      anchors.push_back({k * T, h});
    }
    const auto out = boost_to_monotone(anchors, T);
    CHECK(classify(out).rep);
    for (const auto& a : anchors) CHECK(out(a.s) == doctest::Approx(a.h).epsilon(1e-12));
  }
}

TEST_CASE("linearize_blocks examples") {
  const auto id = linearize_blocks(PiecewiseLinearReparam::identity(3.0), 0.7, 3.0);
  for (double s : {0.0, 0.35, 1.4, 2.9}) CHECK(id(s) == doctest::Approx(s));

  const auto dip = linearize_blocks(pl({{0, 0}, {0.5, 0.2}, {1, 1}}), 1.0, 2.0);
  CHECK(dip(0.5) == doctest::Approx(0.5));
  CHECK(dip(0.25) == doctest::Approx(0.25));
  CHECK(dip.slopes().front() == doctest::Approx(1.0));

  std::vector<Knot> knots;
  for (int k = 0; k <= 60; ++k) {
    const double s = 0.05 * k;
    knots.push_back({s, s + 0.05 * std::sin(2.0 * std::numbers::pi * s)});
  }
  knots[0].h = 0.0;
  const auto wobble = pl(knots);
  CHECK_FALSE(classify(wobble).contains(ReparamClass::rep_alpha(0.01)));
  const auto lin = linearize_blocks(wobble, 1.0, 3.0);
  for (double kb : {0.0, 1.0, 2.0, 3.0}) CHECK(lin(kb) == doctest::Approx(kb).epsilon(1e-12));
  CHECK(classify(lin).contains(ReparamClass::rep_alpha(0.01)));
}

TEST_CASE("linearize_blocks agrees with its input at block multiples exactly") {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const auto h = random_monotone(rng, 12, 0.2, 2.0);
    const double b = rng.uniform(0.05, 1.5);
    const double t_max = h.last_s();
    const auto lin = linearize_blocks(h, b, t_max);
    for (int k = 0; k * b <= t_max; ++k) CHECK(lin(k * b) == h(k * b));
  }
}

TEST_CASE("compose and invert") {
  const auto id = PiecewiseLinearReparam::identity(2.0);
  const auto inv_id = invert(id);
  for (double s : {0.0, 0.5, 1.9}) CHECK(inv_id(s) == doctest::Approx(s));

  const auto h = pl({{0, 0}, {2, 1}});
  const auto hi = invert(h);
  REQUIRE(hi.knots().size() == 2);
  CHECK(hi.knots()[1].s == doctest::Approx(1.0));
  CHECK(hi.knots()[1].h == doctest::Approx(2.0));

  CHECK_THROWS_AS(invert(pl({{0, 0}, {1, -1}})), InvalidParameter);

  const auto f = pl({{0, 0}, {1, 2}, {2, 3}});
  const auto g = pl({{0, 0}, {1, 0.5}, {3, 2}});
  const auto fg = compose(f, g);
  for (double s : {0.0, 0.4, 1.0, 2.2, 2.9}) CHECK(fg(s) == doctest::Approx(f(g(s))).epsilon(1e-12));
}

TEST_CASE("compose with the inverse is the identity") {
  Rng rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    const auto h = random_monotone(rng, 10, 0.1, 3.0);
    const auto round = compose(h, invert(h));
    double worst = 0.0;
    for (int k = 0; k <= 200; ++k) {
      const double s = h(h.last_s()) * k / 200.0;
      worst = std::max(worst, std::abs(round(s) - s));
    }
    CHECK(worst <= 1e-12 * std::max(1.0, h(h.last_s())));
  }
}

TEST_CASE("segmentwise slope bounds match pairwise difference quotients") {
  Rng rng(31);
  std::size_t counterexamples = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const double alpha = rng.uniform(0.05, 0.9);
    const auto h = random_monotone(rng, 8, 1.0 - 1.3 * alpha, 1.0 + 1.3 * alpha);
    const bool segmentwise = classify(h).contains(ReparamClass::rep_alpha(alpha));
    if (segmentwise) {
      for (int k = 0; k < 50; ++k) {
        const double s = rng.uniform(0.0, h.last_s());
        const double t = rng.uniform(0.0, h.last_s());
        if (s == t) continue;
        if (std::abs((h(s) - h(t)) / (s - t) - 1.0) > alpha + 1e-12) ++counterexamples;
      }
    } else {
      bool found = false;
      const auto& kn = h.knots();
      for (std::size_t k = 0; k + 1 < kn.size() && !found; ++k) {
        found = std::abs((kn[k + 1].h - kn[k].h) / (kn[k + 1].s - kn[k].s) - 1.0) > alpha;
      }
      if (!found) ++counterexamples;
    }
  }
  CHECK(counterexamples == 0);
}

TEST_CASE("reparametrization JSON round trip") {
  const auto h = pl({{-1, -0.5}, {0, 0}, {1, 2}});
  const auto j = h.to_json();
  CHECK(j.at("knots").size() == 3);
  const auto back = PiecewiseLinearReparam::from_json(j);
  CHECK(back(0.5) == h(0.5));
  CHECK(back(-0.5) == h(-0.5));
  CHECK(ReparamClass::parse("RepAlpha", 0.3).tag == ClassTag::RepAlpha);
}
