#pragma once

#include <string>
#include <vector>

#include "rsfl/measures.hpp"

namespace rsfl {

struct EpsilonSlope {
  double eps = 0.0;
  /// Center-averaged least-squares slope of -log(mass) against t.
  double slope = 0.0;
  double stderr_ = 0.0;
  std::size_t centers_used = 0;
  double censored_fraction = 0.0;
  double window_low = 0.0;
  double window_high = 0.0;
  /// Center-averaged largest and smallest consecutive-interval slopes.
  double limsup_proxy = 0.0;
  double liminf_proxy = 0.0;
};

struct EntropyEstimate {
  std::vector<EpsilonSlope> per_epsilon;
  /// Mean of the slopes at the two smallest usable eps.
  double extrapolated = 0.0;
  double extrapolated_stderr = 0.0;
  std::vector<double> dropped_eps;
  std::size_t centers = 0;
  std::string variant;
  double censored_fraction = 0.0;
  /// Atom average of |log |X||; finite iff the integrability check passes.
  double log_speed_mean = 0.0;

  nlohmann::json to_json() const;
};

void write_entropy_csv(std::ostream& os, const EntropyEstimate& est);

/// Aggregates per-center decay curves that share one (eps, t) grid.
EntropyEstimate estimate_from_curves(const std::vector<DecayCurve>& curves);

/// Rescaled Brin-Katok estimate. Centers are atom indices of mu; each
/// center's own atom is left out of its ball counts.
EntropyEstimate brin_katok_estimate(const FlowSystem& sys, const EmpiricalMeasure& mu,
                                    const std::vector<std::size_t>& centers, const std::vector<double>& eps_list,
                                    const std::vector<double>& t_list, const BallQuery& proto,
                                    std::size_t threads = 1);

/// Largest |slope_a - slope_b| per eps across estimates of different variants.
std::vector<double> variant_spread(const std::vector<EntropyEstimate>& estimates);

enum class Verdict { ExpansiveAtScale, NotExpansiveAtScale, Inconclusive };
enum class ExpansivenessMode { TwoSided, Forward };

std::string verdict_name(Verdict v);

struct ExpansivenessVerdict {
  double eps = 0.0;
  std::vector<double> horizons;
  /// Per horizon, the largest Gamma-ball mass over the tested centers.
  std::vector<BallMass> sup_mass;
  Verdict verdict = Verdict::Inconclusive;
  ExpansivenessMode mode = ExpansivenessMode::TwoSided;
  /// Mass attributable to the center atom alone.
  double floor = 0.0;

  nlohmann::json to_json() const;
};

/// Centers are atom indices of mu and count themselves, so a ball holding
/// nothing but its center has mass at the floor.
ExpansivenessVerdict expansiveness_test(const FlowSystem& sys, const EmpiricalMeasure& mu, double eps,
                                        const std::vector<std::size_t>& centers, const std::vector<double>& horizons,
                                        ExpansivenessMode mode, const BallQuery& proto, std::size_t threads = 1);

enum class Consistency { Consistent, Contradiction, Undetermined, HypothesisViolated };

std::string consistency_name(Consistency c);

struct ConsistencyReport {
  Consistency status = Consistency::Undetermined;
  std::string reason;

  nlohmann::json to_json() const;
};

/// Positive entropy forces expansiveness; verdicts are read at their
/// smallest eps.
ConsistencyReport consistency_check(const EmpiricalMeasure& mu, const EntropyEstimate& entropy,
                                    const std::vector<ExpansivenessVerdict>& verdicts);

}  // namespace rsfl
