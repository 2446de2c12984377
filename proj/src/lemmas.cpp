#include "rsfl/lemmas.hpp"

#include <algorithm>
#include <cmath>

#include "rsfl/error.hpp"

namespace rsfl {

namespace {

State random_direction(Rng& rng, std::size_t n) {
  State v(n);
  double len = 0.0;
  while (len < 1e-12) {
    len = 0.0;
    for (double& c : v) {
      c = rng.normal();
      len += c * c;
    }
    len = std::sqrt(len);
  }
  for (double& c : v) c /= len;
  return v;
}

// A point near the orbit of x: a time shift of at most 0.3 eps followed by a
// transverse kick of log-uniform size in [1e-3, 0.3] eps|X(x)|.
std::optional<State> near_point(const FlowSystem& sys, const State& x, double eps, Rng& rng, bool shift = true) {
  const double sx = sys.speed(x);
  const double tau = shift ? rng.uniform(-0.3, 0.3) * eps : 0.0;
  State y = tau == 0.0 ? x : flow_for(sys, x, tau, sys.default_dt);
  State v = random_direction(rng, sys.dim());
  const double size = eps * sx * std::pow(10.0, rng.uniform(-3.0, std::log10(0.3)));
  for (double& c : v) c *= size;
  sys.geometry.displace(y, v);
  if (!sys.geometry.contains(y)) return std::nullopt;
  return y;
}

BallQuery make_query(Variant v, const State& x, double eps, double horizon, double dt) {
  BallQuery q;
  q.variant = v;
  q.center = x;
  q.eps = eps;
  q.horizon = horizon;
  q.dt = dt;
  return q;
}

// Widens the reparametrized window until the matched orbit fits inside it.
MatchResult run_query(const FlowSystem& sys, BallQuery q, std::span<const double> y, bool want_witness = true) {
  for (int attempt = 0;; ++attempt) {
    try {
      return BallOracle(sys, q).test(y, want_witness);
    } catch (const InsufficientHorizon&) {
      if (attempt >= 5) throw;
      q.alpha_max = 2.0 * q.alpha_max + 1.0;
    }
  }
}

}  // namespace

nlohmann::json CheckResult::to_json() const {
  return {{"name", name},       {"trials", trials}, {"violations", violations},
          {"skipped", skipped}, {"eps", eps},       {"details", details}};
}

CheckResult check_time_localization(const FlowSystem& sys, double T0, std::size_t n_points, std::uint64_t seed) {
  CheckResult out;
  out.name = "time_localization";
  Rng rng(seed);
  const std::size_t steps = 200;
  const double h = T0 / static_cast<double>(steps);
  double worst = 0.0;
  for (std::size_t p = 0; p < n_points; ++p) {
    const State x = sample_regular(sys, rng);
    const double sx = sys.speed(x);
    for (Direction dir : {Direction::Forward, Direction::Backward}) {
      OrbitStream orbit(sys, x, h, dir);
      orbit.extend_to(steps);
      for (double eps : {T0 / 3.0, T0 / 6.0, T0 / 12.0}) {
        ++out.trials;
        for (std::size_t i = 1; i <= steps; ++i) {
          if (sys.geometry.distance(x, orbit.state(i)) <= eps * sx) {
            const double t = static_cast<double>(i) * h;
            worst = std::max(worst, t / eps);
            if (t > 3.0 * eps * 1.05) {
              ++out.violations;
              break;
            }
          }
        }
      }
    }
  }
  out.details = {{"max_t_over_eps", worst}, {"T0", T0}};
  return out;
}

CheckResult check_separation(const FlowSystem& sys, double T, double T0, double gamma_T, std::size_t n_pairs,
                             std::uint64_t seed) {
  CheckResult out;
  out.name = "separation";
  Rng rng(seed);
  const double gamma = 0.5 * gamma_T;
  const double h = T / 20.0;
  const auto last = static_cast<std::size_t>(std::floor(T0 / h + 1e-9));
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const State x = sample_regular(sys, rng);
    const double sx = sys.speed(x);
    State y = x;
    State v = random_direction(rng, sys.dim());
    for (double& c : v) c *= gamma * sx * rng.uniform();
    sys.geometry.displace(y, v);
    if (!sys.geometry.contains(y) || sys.geometry.distance(x, y) > gamma * sx) {
      ++out.skipped;
      continue;
    }
    ++out.trials;
    bool bad = false;
    for (Direction dir : {Direction::Forward, Direction::Backward}) {
      OrbitStream orbit(sys, x, h, dir);
      orbit.extend_to(last);
      for (std::size_t i = 20; i <= last; ++i) {
        const double ratio = sys.geometry.distance(orbit.state(i), y) / (gamma * sx);
        worst = std::min(worst, ratio);
        if (ratio < 0.95) bad = true;
      }
    }
    if (bad) ++out.violations;
  }
  out.details = {{"gamma", gamma}, {"T", T}, {"T0", T0}, {"min_ratio", worst}};
  return out;
}

CheckResult check_boosting(const FlowSystem& sys, double T, double delta, double horizon, std::size_t n_witnesses,
                           std::uint64_t seed) {
  CheckResult out;
  out.name = "boosting";
  out.eps = delta;
  Rng rng(seed);
  const double dt = T / 10.0;
  std::size_t attempts = 0;
  while (out.trials < n_witnesses && attempts < 20 * n_witnesses) {
    ++attempts;
    const State x = sample_regular(sys, rng);
    const auto y = near_point(sys, x, delta, rng);
    if (!y) continue;
    MatchResult r;
    try {
      r = run_query(sys, make_query(Variant::GammaTwoSided, x, delta, horizon, dt), *y);
    } catch (const EscapeError&) {
      continue;
    } catch (const InsufficientHorizon&) {
      ++out.skipped;
      continue;
    }
    if (!r.member) continue;
    ++out.trials;
    std::vector<Knot> anchors;
    for (std::size_t i = 0; i < r.raw_path.size(); i += 10) {
      anchors.push_back({static_cast<double>(i / 10) * T, r.raw_path[i]});
    }
    try {
      if (!classify(boost_to_monotone(anchors, T)).rep) ++out.violations;
    } catch (const NonMonotoneAnchors&) {
      ++out.violations;
    }
  }
  out.details = {{"T", T}, {"horizon", horizon}, {"attempts", attempts}};
  return out;
}

CheckResult check_almost_identity(const FlowSystem& sys, double eps, double lambda, double b, double horizon,
                                  std::size_t n_witnesses, std::uint64_t seed) {
  CheckResult out;
  out.name = "almost_identity";
  out.eps = eps;
  Rng rng(seed);
  const double dt = sys.default_dt;
  std::size_t attempts = 0;
  double worst = 0.0;
  while (out.trials < n_witnesses && attempts < 20 * n_witnesses) {
    const Variant v = attempts % 2 == 0 ? Variant::B3 : Variant::B2;
    ++attempts;
    const State x = sample_regular(sys, rng);
    const auto y = near_point(sys, x, eps, rng);
    if (!y) continue;
    MatchResult r;
    try {
      r = run_query(sys, make_query(v, x, eps, horizon, dt), *y);
    } catch (const EscapeError&) {
      continue;
    } catch (const InsufficientHorizon&) {
      ++out.skipped;
      continue;
    }
    if (!r.member) continue;
    ++out.trials;
    bool bad = false;
    for (auto i = static_cast<std::size_t>(std::ceil(b / dt - 1e-9)); static_cast<double>(i) * dt <= horizon + 1e-12;
         ++i) {
      const double s = static_cast<double>(i) * dt;
      const double dev = std::abs((*r.witness)(s) - s) / s;
      worst = std::max(worst, dev);
      if (dev > lambda + 1e-9) bad = true;
    }
    if (bad) ++out.violations;
  }
  out.details = {{"lambda", lambda}, {"b", b}, {"horizon", horizon}, {"attempts", attempts},
                 {"max_relative_deviation", worst}};
  return out;
}

CheckResult check_bowen_inclusion(const FlowSystem& sys, double eps, double lambda, double horizon,
                                  std::size_t n_members, std::uint64_t seed) {
  CheckResult out;
  out.name = "bowen_inclusion";
  out.eps = eps;
  Rng rng(seed);
  const double dt = sys.default_dt;
  std::size_t attempts = 0;
  while (out.trials < n_members && attempts < 20 * n_members) {
    const bool from_b3 = attempts % 2 == 0;
    ++attempts;
    const State x = sample_regular(sys, rng);
    const auto y = near_point(sys, x, eps, rng);
    if (!y) continue;
    try {
      const Variant a = from_b3 ? Variant::B3 : Variant::B2;
      const Variant b = from_b3 ? Variant::B2 : Variant::B3;
      if (!run_query(sys, make_query(a, x, eps, horizon, dt), *y, false).member) continue;
      ++out.trials;
      if (!run_query(sys, make_query(b, x, eps, (1.0 - lambda) * horizon, dt), *y, false).member) {
        ++out.violations;
      }
    } catch (const EscapeError&) {
      continue;
    } catch (const InsufficientHorizon&) {
      ++out.skipped;
      continue;
    }
  }
  out.details = {{"lambda", lambda}, {"horizon", horizon}, {"attempts", attempts}};
  return out;
}

CheckResult check_class_agreement(const FlowSystem& sys, double eps, double alpha, double horizon,
                                  std::size_t n_trials, std::uint64_t seed, double threshold) {
  CheckResult out;
  out.name = "class_agreement";
  out.eps = eps;
  Rng rng(seed);
  const double dt = sys.default_dt;
  std::size_t members = 0, attempts = 0;
  while (out.trials + out.skipped < n_trials && attempts < 20 * n_trials) {
    ++attempts;
    const State x = sample_regular(sys, rng);
    const auto y = near_point(sys, x, eps, rng);
    if (!y) continue;
    try {
      BallQuery q = make_query(Variant::GammaTwoSided, x, eps, horizon, dt);
      const MatchResult rep = run_query(sys, q, *y, false);
      q.reparam_class = ReparamClass::rep_alpha_star(alpha);
      const MatchResult lin = run_query(sys, q, *y, false);
      if (rep.member == lin.member) {
        ++out.trials;
        members += rep.member ? 1 : 0;
      } else if (std::abs(rep.margin) < threshold || std::abs(lin.margin) < threshold) {
        ++out.skipped;
      } else {
        ++out.trials;
        ++out.violations;
      }
    } catch (const EscapeError&) {
      continue;
    } catch (const InsufficientHorizon&) {
      ++out.skipped;
      continue;
    }
  }
  out.details = {{"alpha", alpha}, {"horizon", horizon}, {"threshold", threshold}, {"members", members}};
  return out;
}

CheckResult check_b1_inclusion(const FlowSystem& sys, std::size_t n_queries, std::uint64_t seed, double max_eps) {
  CheckResult out;
  out.name = "b1_inclusion";
  out.eps = max_eps;
  Rng rng(seed);
  const double dt = sys.default_dt;
  std::size_t b1_members = 0, attempts = 0;
  while (out.trials < n_queries && attempts < 20 * n_queries) {
    ++attempts;
    const State x = sample_regular(sys, rng);
    const double eps = max_eps * std::exp2(rng.uniform(-5.0, 0.0));
    const double horizon = dt * std::ceil(rng.uniform(0.05, 2.0) / dt);
    const auto y = near_point(sys, x, eps, rng, rng.uniform() < 0.5);
    if (!y) continue;
    try {
      const bool b1 = run_query(sys, make_query(Variant::B1, x, eps, horizon, dt), *y, false).member;
      const bool b2 = run_query(sys, make_query(Variant::B2, x, eps, horizon, dt), *y, false).member;
      const bool b3 = run_query(sys, make_query(Variant::B3, x, eps, horizon, dt), *y, false).member;
      ++out.trials;
      if (b1) ++b1_members;
      if (b1 && (!b2 || !b3)) ++out.violations;
    } catch (const EscapeError&) {
      continue;
    } catch (const InsufficientHorizon&) {
      ++out.skipped;
      continue;
    }
  }
  out.details = {{"b1_members", b1_members}};
  return out;
}

std::optional<double> calibrate_eps(const std::function<CheckResult(double, std::uint64_t)>& run, double top,
                                    int steps, std::uint64_t seed) {
  for (int k = 0; k <= steps; ++k) {
    const double eps = top * std::exp2(-k);
    const CheckResult r = run(eps, seed);
    if (r.trials > 0 && r.violations == 0) return eps / 2.0;
  }
  return std::nullopt;
}

std::size_t LemmaReport::violations() const {
  std::size_t v = 0;
  for (const auto& c : checks) v += c.violations;
  return v;
}

nlohmann::json LemmaReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : checks) arr.push_back(c.to_json());
  return {{"system", system}, {"seed", seed}, {"checks", arr}, {"violations", violations()}};
}

LemmaReport run_lemma_suite(const FlowSystem& sys, const FlowConstants& constants, const LemmaOptions& opt) {
  LemmaReport report;
  report.system = sys.name;
  report.seed = opt.seed;
  Rng seeds(opt.seed);
  const double T0 = constants.T0;
  const double T = 0.25 * T0;

  report.checks.push_back(check_time_localization(sys, T0, opt.n_points, seeds.next_seed()));
  report.checks.push_back(check_separation(sys, T, T0, constants.gamma_at(T), opt.n_points, seeds.next_seed()));
  report.checks.push_back(check_boosting(sys, T, constants.delta_at(T), T0, opt.n_witnesses, seeds.next_seed()));
  report.checks.push_back(check_b1_inclusion(sys, opt.n_inclusion, seeds.next_seed(), std::min(0.25, T0)));

  auto calibrated = [&](const std::string& name, const std::function<CheckResult(double, std::uint64_t)>& run) {
    const std::uint64_t calib_seed = seeds.next_seed();
    const std::uint64_t test_seed = seeds.next_seed();
    const auto eps = calibrate_eps(run, std::min(0.25, T0), 10, calib_seed);
    if (!eps) {
      CheckResult failed;
      failed.name = name;
      failed.violations = 1;
      failed.details = {{"error", "no radius on the calibration grid passed"}};
      report.checks.push_back(failed);
      return;
    }
    CheckResult r = run(*eps, test_seed);
    r.details["calibration_seed"] = calib_seed;
    report.checks.push_back(std::move(r));
  };

  calibrated("almost_identity", [&](double eps, std::uint64_t seed) {
    return check_almost_identity(sys, eps, opt.lambda_identity, opt.b, opt.horizon, opt.n_witnesses, seed);
  });
  calibrated("bowen_inclusion", [&](double eps, std::uint64_t seed) {
    return check_bowen_inclusion(sys, eps, opt.lambda_inclusion, opt.horizon, opt.n_members, seed);
  });
  const double kappa = constants.L * sys.default_dt;
  calibrated("class_agreement", [&](double eps, std::uint64_t seed) {
    return check_class_agreement(sys, eps, opt.alpha, std::min(0.5 * opt.horizon, 8.0 * T0), opt.n_members, seed,
                                 0.05 + kappa);
  });
  return report;
}

}  // namespace rsfl
