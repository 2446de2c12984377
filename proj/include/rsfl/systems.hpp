#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsfl/geometry.hpp"
#include "rsfl/random.hpp"

namespace rsfl {

enum class Direction : std::uint8_t { Forward = 0, Backward = 1 };

/// out <- X(x)
using VectorField = std::function<void(std::span<const double> x, std::span<double> out)>;

/// A vector field with its domain geometry and the bookkeeping the rescaled
/// machinery needs (singularities, regular-point guard, reference orbit).
struct FlowSystem {
  std::string name;
  nlohmann::json params;
  Geometry geometry;
  VectorField field;
  std::vector<State> singularities;
  std::optional<double> known_entropy;
  std::string entropy_note;
  std::optional<double> lipschitz_hint;
  State default_initial;
  /// Grid step used by matching and measure construction unless overridden.
  double default_dt = 0.01;
  /// Points with speed below s_min are treated as singular.
  double s_min = 0.0;
  /// Samples of a long orbit, used to draw regular points on an attractor.
  /// Empty for systems whose whole domain is sampled uniformly.
  std::shared_ptr<const std::vector<State>> attractor;
  double attractor_spacing = 0.0;

  std::size_t dim() const noexcept { return geometry.dim(); }
  State velocity(std::span<const double> x) const;
  double speed(std::span<const double> x) const;
  bool is_regular(std::span<const double> x) const { return speed(x) >= s_min; }

  /// System config JSON {name, params, geometry}.
  nlohmann::json config() const;
};

/// One of: torus_rotation, doubling_suspension, lorenz, north_south_circle,
/// torus_constant. `params` keys not understood by the system are rejected.
FlowSystem make_builtin(const std::string& name, const nlohmann::json& params = nlohmann::json::object());

/// Rebuilds a system from the config JSON produced by FlowSystem::config().
FlowSystem system_from_config(const nlohmann::json& config);

const std::vector<std::string>& builtin_names();

/// Uniformly sampled orbit segment. Row i holds phi_{t0 +/- i*dt}(origin).
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::size_t dim, double t0, double dt, Direction direction, std::vector<double> states,
             std::vector<double> speeds);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return speeds_.size(); }
  double t0() const noexcept { return t0_; }
  double dt() const noexcept { return dt_; }
  Direction direction() const noexcept { return direction_; }

  std::span<const double> state(std::size_t i) const { return {states_.data() + i * dim_, dim_}; }
  double speed(std::size_t i) const { return speeds_[i]; }
  double time(std::size_t i) const;
  State origin() const { return State(state(0).begin(), state(0).end()); }
  State back() const { return State(state(size() - 1).begin(), state(size() - 1).end()); }

  const std::vector<double>& flat_states() const noexcept { return states_; }
  const std::vector<double>& speeds() const noexcept { return speeds_; }

 private:
  std::size_t dim_ = 0;
  double t0_ = 0.0;
  double dt_ = 0.0;
  Direction direction_ = Direction::Forward;
  std::vector<double> states_;
  std::vector<double> speeds_;
};

/// An orbit sampled on a uniform grid and extended on demand, for matchers
/// that usually stop long before the nominal horizon.
class OrbitStream {
 public:
  OrbitStream(const FlowSystem& sys, std::span<const double> x0, double dt, Direction direction = Direction::Forward,
              double t0 = 0.0);

  std::size_t size() const noexcept { return speeds_.size(); }
  double dt() const noexcept { return dt_; }
  Direction direction() const noexcept { return direction_; }

  /// Integrates until index n exists. Throws EscapeError on leaving the domain.
  void extend_to(std::size_t n);

  std::span<const double> state(std::size_t i) const { return {states_.data() + i * dim_, dim_}; }
  double speed(std::size_t i) const { return speeds_[i]; }

  Trajectory to_trajectory() const;

 private:
  const FlowSystem* sys_;
  std::size_t dim_;
  double dt_;
  double t0_;
  Direction direction_;
  std::vector<double> states_;
  std::vector<double> speeds_;
  std::vector<double> x_, k1_, k2_, k3_, k4_, tmp_;
};

/// Fixed-step classical RK4. Backward direction integrates the negated field.
/// Throws EscapeError if the orbit leaves a Euclidean trapping box.
Trajectory integrate(const FlowSystem& sys, std::span<const double> x0, double horizon, double dt,
                     Direction direction = Direction::Forward, double t0 = 0.0);

/// phi_t(x) for any real t, using exactly `steps` RK4 steps of size |t|/steps.
State flow_to(const FlowSystem& sys, std::span<const double> x, double t, std::size_t steps);

/// phi_t(x) with step size at most `max_step`.
State flow_for(const FlowSystem& sys, std::span<const double> x, double t, double max_step);

double min_speed_on(const Trajectory& traj);

/// Draws a regular point (speed >= s_min): from the attractor samples when
/// the system has them, otherwise uniformly from the domain.
State sample_regular(const FlowSystem& sys, Rng& rng);

/// 1e-3 times the median speed of the reference samples (attractor or
/// uniform domain draws with a fixed seed).
double default_s_min(const FlowSystem& sys);

}  // namespace rsfl
