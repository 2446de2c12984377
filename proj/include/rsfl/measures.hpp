#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rsfl/balls.hpp"
#include "rsfl/systems.hpp"
#include "rsfl/trajectory_io.hpp"

namespace rsfl {

enum class MeasureOrigin { OrbitSample, IIDReference, AtomList };

struct EmpiricalMeasure {
  std::vector<State> atoms;
  std::vector<double> weights;
  MeasureOrigin origin = MeasureOrigin::AtomList;
  /// burn_in/spacing for orbit samples, density name for IID references.
  nlohmann::json origin_info = nlohmann::json::object();
  std::uint64_t seed = 0;
  /// Atoms whose speed is below the system's singular guard.
  std::vector<std::size_t> flagged;

  std::size_t size() const noexcept { return atoms.size(); }
  bool charges_singularity() const noexcept { return !flagged.empty(); }
  double max_weight() const;
  /// 1 / sum w^2; equals size() for equal weights.
  double effective_size() const;
};

std::string origin_name(MeasureOrigin o);

/// Equal-weight atoms at phi_{burn_in + k spacing}(x0), k = 0..n_atoms-1.
EmpiricalMeasure orbit_measure(const FlowSystem& sys, std::span<const double> x0, double burn_in,
                               std::size_t n_atoms, double spacing, std::uint64_t seed,
                               TrajectoryCache* cache = nullptr);

/// IID draws from a reference density; only "uniform" (normalized volume on
/// the domain) is provided.
EmpiricalMeasure iid_measure(const FlowSystem& sys, const std::string& density, std::size_t n_atoms,
                             std::uint64_t seed);

EmpiricalMeasure atom_list(const FlowSystem& sys, std::vector<State> atoms, std::vector<double> weights = {});

void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu);

struct BallMass {
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_tested = 0;
  std::size_t members = 0;
  double horizon = 0.0;
};

/// Wilson score interval for a proportion p observed on n trials.
std::pair<double, double> wilson_interval(double p, double n, double z = 1.96);

struct MassOptions {
  /// Atom left out of the count (the center itself, for leave-one-out rates).
  std::optional<std::size_t> exclude_index;
  std::size_t threads = 1;
};

BallMass ball_mass(const FlowSystem& sys, const EmpiricalMeasure& mu, const BallQuery& q,
                   const MassOptions& opt = {});

/// Masses at every horizon in `horizons` (increasing, last = q.horizon is
/// not required) from a single matching run at the largest horizon.
std::vector<BallMass> ball_mass_profile(const FlowSystem& sys, const EmpiricalMeasure& mu, const BallQuery& q,
                                        const std::vector<double>& horizons, const MassOptions& opt = {});

struct DecayPoint {
  double eps = 0.0;
  double t = 0.0;
  BallMass mass;
  double rate = 0.0;
  double rate_low = 0.0;
  double rate_high = 0.0;
  bool censored = false;
};

/// -log(mass)/t on an (eps, t) grid. Zero masses are right-censored at the
/// finite-sample floor log(n)/t, which also caps every reported rate.
struct DecayCurve {
  std::vector<double> eps_list;
  std::vector<double> t_list;
  /// Row-major: eps index major, t index minor.
  std::vector<DecayPoint> points;
  double n_atoms = 0.0;

  const DecayPoint& at(std::size_t e, std::size_t t) const { return points[e * t_list.size() + t]; }
};

DecayCurve decay_curve(const FlowSystem& sys, const EmpiricalMeasure& mu, std::span<const double> x,
                       const std::vector<double>& eps_list, const std::vector<double>& t_list, const BallQuery& proto,
                       const MassOptions& opt = {});

/// Builds a curve from given masses (row-major eps x t), for synthetic input.
DecayCurve decay_curve_from_masses(const std::vector<double>& eps_list, const std::vector<double>& t_list,
                                   const std::vector<double>& masses, double n_atoms);

void write_decay_csv(std::ostream& os, const DecayCurve& curve);

}  // namespace rsfl
