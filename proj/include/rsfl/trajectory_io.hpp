#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "rsfl/systems.hpp"

namespace rsfl {

/// Binary layout: "RSFL1", u32 dim, u64 count, f64 dt, f64 t0, u8 direction,
/// count*dim f64 states, count f64 speeds. Little-endian throughout.
void write_trajectory(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory(std::istream& is);

void save_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory load_trajectory(const std::filesystem::path& path);

/// Directory-backed trajectory store keyed by (system config, x0, horizon, dt,
/// direction). A miss integrates and writes; a corrupt entry is recomputed.
class TrajectoryCache {
 public:
  explicit TrajectoryCache(std::filesystem::path dir);

  /// RSFL_CACHE_DIR if set, else `fallback`.
  static TrajectoryCache from_env(const std::filesystem::path& fallback);

  const std::filesystem::path& dir() const noexcept { return dir_; }

  Trajectory integrate(const FlowSystem& sys, std::span<const double> x0, double horizon, double dt,
                       Direction direction = Direction::Forward);

  std::optional<Trajectory> get(const std::string& key) const;
  void put(const std::string& key, const Trajectory& traj) const;

  static std::string key_for(const FlowSystem& sys, std::span<const double> x0, double horizon, double dt,
                             Direction direction);

 private:
  std::filesystem::path dir_;
};

}  // namespace rsfl
