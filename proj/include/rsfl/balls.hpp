#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsfl/reparam.hpp"
#include "rsfl/systems.hpp"

namespace rsfl {

enum class Variant { B1, B2, B3, GammaTwoSided, GammaForward };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct BallQuery {
  Variant variant = Variant::B1;
  State center;
  double eps = 0.1;
  double horizon = 1.0;
  ReparamClass reparam_class = ReparamClass::rep();
  double dt = 0.01;
  /// Fine-grid subdivision for slope-constrained matching.
  int h_resolution = 4;
  /// Slope slack used to size the reparametrized orbit.
  double alpha_max = 0.9;
  /// Per-row cap on j-advances; ceil(3 eps / dt) when unset.
  std::optional<std::size_t> j_max;
  /// Lipschitz constant for the slope matcher's tolerance inflation L*dt.
  /// Falls back to the system hint, then to a sampled estimate.
  std::optional<double> lipschitz;
};

struct MatchResult {
  bool member = false;
  std::optional<PiecewiseLinearReparam> witness;
  /// Bottleneck slack (eps*|X| - d) / (eps*|X|) along the witness; for a
  /// non-member, the best slack in the first row that could not be reached.
  double margin = 0.0;
  double horizon = 0.0;
  /// Largest grid time matched so far; membership at t' <= horizon holds
  /// iff reached >= t' (up to grid rounding).
  double reached = 0.0;
  /// Raw DP path: entry column time per row (forward run), before plateaus
  /// are lifted. Empty for B1.
  std::vector<double> raw_path;

  bool member_at(double t, double dt) const { return reached + 1e-9 * dt >= std::round(t / dt) * dt; }
};

/// Precomputes everything that depends only on the center, then answers
/// membership for many candidate points. Thread-safe for concurrent test().
class BallOracle {
 public:
  BallOracle(const FlowSystem& sys, BallQuery query);

  const BallQuery& query() const noexcept { return q_; }
  const FlowSystem& system() const noexcept { return *sys_; }

  /// d(x, y) <= eps*|X(x)|, the condition forced at s = 0 by h(0) = 0.
  bool prefilter(std::span<const double> y) const;

  MatchResult test(std::span<const double> y, bool want_witness = true) const;

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t j_max() const noexcept { return j_max_; }

 private:
  MatchResult run_b1(std::span<const double> y) const;
  MatchResult run_dp(std::span<const double> y, Direction dir, bool want_witness) const;

  const FlowSystem* sys_;
  BallQuery q_;
  std::size_t rows_;
  std::size_t cols_;
  std::size_t j_max_;
  double kappa_ = 0.0;
  bool slope_ = false;
  OrbitStream center_fwd_;
  std::optional<OrbitStream> center_bwd_;
};

MatchResult b1_member(const FlowSystem& sys, const BallQuery& q, std::span<const double> y);
MatchResult monotone_member(const FlowSystem& sys, const BallQuery& q, std::span<const double> y);
MatchResult slope_member(const FlowSystem& sys, const BallQuery& q, std::span<const double> y);
MatchResult gamma_member(const FlowSystem& sys, const BallQuery& q, std::span<const double> y);

/// Dispatches on variant and class.
MatchResult member(const FlowSystem& sys, const BallQuery& q, std::span<const double> y);

nlohmann::json to_json(const BallQuery& q);
BallQuery query_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MatchResult& r);

}  // namespace rsfl
