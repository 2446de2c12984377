#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rsfl/balls.hpp"
#include "rsfl/constants.hpp"

namespace rsfl {

struct CheckResult {
  std::string name;
  std::size_t trials = 0;
  std::size_t violations = 0;
  /// Trials set aside as near-boundary or vacuous.
  std::size_t skipped = 0;
  double eps = 0.0;
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// d(x, phi_t x) <= eps|X(x)| with eps <= T0/3 and |t| <= T0 forces |t| <= 3 eps (1.05 slack).
CheckResult check_time_localization(const FlowSystem& sys, double T0, std::size_t n_points, std::uint64_t seed);

/// With gamma = gamma_T / 2: d(x,y) <= gamma|X(x)| and |t| in [T, T0] give
/// d(phi_t x, y) >= 0.95 gamma |X(x)|.
CheckResult check_separation(const FlowSystem& sys, double T, double T0, double gamma_T, std::size_t n_pairs,
                             std::uint64_t seed);

/// Anchors h(nT) read off raw matching paths at radius delta are strictly
/// increasing and boost to an increasing homeomorphism.
CheckResult check_boosting(const FlowSystem& sys, double T, double delta, double horizon, std::size_t n_witnesses,
                           std::uint64_t seed);

/// Monotone witnesses at radius eps satisfy |h(s) - s| <= lambda s on [b, t].
CheckResult check_almost_identity(const FlowSystem& sys, double eps, double lambda, double b, double horizon,
                                  std::size_t n_witnesses, std::uint64_t seed);

/// B3 membership at t implies B2 membership at (1 - lambda) t and vice versa.
CheckResult check_bowen_inclusion(const FlowSystem& sys, double eps, double lambda, double horizon,
                                  std::size_t n_members, std::uint64_t seed);

/// Gamma-ball verdicts with classes Rep and RepAlphaStar(alpha) agree, except
/// where either margin is within `threshold` of the boundary.
CheckResult check_class_agreement(const FlowSystem& sys, double eps, double alpha, double horizon,
                                  std::size_t n_trials, std::uint64_t seed, double threshold);

/// B1 membership implies B2 and B3 membership on random queries with radii
/// log-uniform in [max_eps / 32, max_eps].
CheckResult check_b1_inclusion(const FlowSystem& sys, std::size_t n_queries, std::uint64_t seed,
                               double max_eps = 0.25);

/// Largest eps = top * 2^-k passing `run` on a calibration seed, then one
/// further halving. Returns nullopt if no grid value passes.
std::optional<double> calibrate_eps(const std::function<CheckResult(double, std::uint64_t)>& run, double top,
                                    int steps, std::uint64_t seed);

struct LemmaOptions {
  std::uint64_t seed = 7;
  std::size_t n_points = 200;
  std::size_t n_inclusion = 1000;
  std::size_t n_witnesses = 500;
  std::size_t n_members = 200;
  double lambda_identity = 0.3;
  double b = 0.5;
  double lambda_inclusion = 0.2;
  double alpha = 0.5;
  double horizon = 2.0;
};

struct LemmaReport {
  std::string system;
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;

  std::size_t violations() const;
  nlohmann::json to_json() const;
};

LemmaReport run_lemma_suite(const FlowSystem& sys, const FlowConstants& constants, const LemmaOptions& opt);

}  // namespace rsfl
