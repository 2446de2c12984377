#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "rsfl/systems.hpp"

namespace rsfl {

/// 1.1 x max sampled operator norm of the central-difference Jacobian.
double estimate_lipschitz(const FlowSystem& sys, std::size_t n_samples, std::uint64_t seed = 1);

/// Largest c on the grid 2^-k (k = 0..20) such that every sampled regular
/// pair with d(x,y) < c|X(x)| has |X(y)|/|X(x)| in [1/2, 2].
double estimate_speed_ratio_c(const FlowSystem& sys, std::size_t n_pairs, std::uint64_t seed = 1);

/// 0.9 x min over regular x and |t| in [T, T0] (step T/20) of d(phi_t x, x)/|X(x)|.
double estimate_separation(const FlowSystem& sys, double T, double T0, std::size_t n_samples,
                           std::uint64_t seed = 1, std::optional<double> s_min = std::nullopt);

struct FlowboxCheck {
  double min_singular = 0.0;
  double max_singular = 0.0;
  double min_image_speed = 0.0;
  /// min d(F(p), F(p')) / |p - p'| over the sampled pairs.
  double min_distortion = 0.0;
  std::size_t points = 0;
  bool ok = false;
};

/// F(v + t X(x)) = phi_t(x + v) on |v| <= r|X(x)|, |t| <= r.
class FlowboxChart {
 public:
  FlowboxChart(const FlowSystem& sys, State base, double r);

  const State& base() const noexcept { return base_; }
  double r() const noexcept { return r_; }
  double base_speed() const noexcept { return speed_; }
  /// Orthonormal basis of the complement of X(x), one vector per row.
  const std::vector<State>& normal_frame() const noexcept { return frame_; }

  /// p = (a_1, ..., a_{n-1}, t) with v = sum a_k n_k.
  State map(std::span<const double> p) const;

  /// Singular values of the central-difference derivative at p, in the
  /// coordinates u = v + t X(x).
  std::vector<double> singular_values(std::span<const double> p) const;

  /// Derivative bounds in [lo, hi], positive image speeds, and the
  /// bi-Lipschitz lower bound `lo` over `n_grid` chart points.
  FlowboxCheck check(std::size_t n_grid, Rng& rng, double lo = 0.3, double hi = 3.3) const;

  /// A point of the chart domain: corners first, then random fill.
  State domain_point(std::size_t index, Rng& rng) const;

 private:
  const FlowSystem* sys_;
  State base_;
  double r_;
  double speed_;
  std::vector<State> frame_;
  std::size_t steps_;
};

FlowboxChart build_flowbox(const FlowSystem& sys, std::span<const double> x, double r);

/// Largest r = 2^-k (k = 1..14) whose charts pass FlowboxChart::check at
/// `n_points` regular points with `n_grid` chart points each, and again at
/// `n_certify` fresh points.
double estimate_T0(const FlowSystem& sys, std::size_t n_points = 50, std::size_t n_grid = 20,
                   std::uint64_t seed = 1, std::size_t n_certify = 500);

struct DeltaCalibration {
  double delta = 0.0;
  /// Even the smallest grid value failed.
  bool flagged = false;
  /// First grid value (scanning upward) with a violating pair, if any.
  std::optional<double> first_failure;
  std::size_t feasible_pairs = 0;
};

/// Largest grid delta = 2^-k such that no sampled pair matched two-sidedly
/// on [-T0, T0] at radius delta admits h(T) <= 0. A pair admits h(T) <= 0
/// only if phi_T(x) is within delta|X(phi_T x)| of phi_u(y) for some u <= 0;
/// that necessary condition is what is tested.
DeltaCalibration calibrate_delta(const FlowSystem& sys, double T, double T0, std::size_t n_trials,
                                 std::uint64_t seed = 1);

struct FlowConstants {
  std::string system;
  double L = 0.0;
  double c = 0.0;
  double T0 = 0.0;
  std::vector<std::pair<double, double>> gamma_table;
  std::vector<std::pair<double, double>> delta_table;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  bool delta_flagged = false;

  nlohmann::json to_json() const;
  static FlowConstants from_json(const nlohmann::json& j);
  /// Table entry with the largest T <= the argument (first entry if none).
  double gamma_at(double T) const;
  double delta_at(double T) const;
};

struct ConstantsOptions {
  std::uint64_t seed = 1;
  std::size_t n_samples = 1000;
  std::size_t n_pairs = 2000;
  std::size_t n_points = 50;
  std::size_t n_grid = 20;
  std::size_t n_certify = 500;
  std::size_t n_trials = 60;
};

FlowConstants estimate_constants(const FlowSystem& sys, const ConstantsOptions& opt = {});

}  // namespace rsfl
