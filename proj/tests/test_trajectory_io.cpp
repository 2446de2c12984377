#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rsfl/error.hpp"
#include "rsfl/trajectory_io.hpp"

using namespace rsfl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("rsfl_test_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

template <class T>
T read_le(const std::string& bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + k])) << (8 * k);
  }
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(v);
  } else {
    return static_cast<T>(v);
  }
}

}  // namespace

TEST_CASE("RSFL1 header layout is little-endian and packed") {
  const FlowSystem sys = make_builtin("lorenz");
  const Trajectory tr = integrate(sys, sys.default_initial, 0.05, 0.01, Direction::Forward, 2.5);
  std::ostringstream os;
  write_trajectory(os, tr);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 5 + 4 + 8 + 8 + 8 + 1 + tr.size() * (3 + 1) * 8);
  CHECK(bytes.substr(0, 5) == "RSFL1");
  CHECK(read_le<std::uint32_t>(bytes, 5) == 3);
  CHECK(read_le<std::uint64_t>(bytes, 9) == tr.size());
  CHECK(read_le<double>(bytes, 17) == 0.01);
  CHECK(read_le<double>(bytes, 25) == 2.5);
  CHECK(bytes[33] == 0);
  CHECK(read_le<double>(bytes, 34) == tr.state(0)[0]);
  CHECK(read_le<double>(bytes, 34 + 8 * 3 * tr.size()) == tr.speed(0));
}

TEST_CASE("trajectory round trip is exact") {
  const FlowSystem sys = make_builtin("north_south_circle");
  const Trajectory tr = integrate(sys, State{0.4}, 3.0, 0.01, Direction::Backward);
  const fs::path dir = scratch_dir("roundtrip");
  save_trajectory(dir / "a.rsfl", tr);
  const Trajectory back = load_trajectory(dir / "a.rsfl");
  CHECK(back.dim() == tr.dim());
  CHECK(back.dt() == tr.dt());
  CHECK(back.t0() == tr.t0());
  CHECK(back.direction() == Direction::Backward);
  CHECK(back.flat_states() == tr.flat_states());
  CHECK(back.speeds() == tr.speeds());
  fs::remove_all(dir);
}

TEST_CASE("malformed trajectory files are rejected") {
  std::istringstream bad_magic(std::string("RSFL2") + std::string(40, '\0'));
  CHECK_THROWS_AS(read_trajectory(bad_magic), FormatError);

  const FlowSystem sys = make_builtin("torus_constant");
  std::ostringstream os;
  write_trajectory(os, integrate(sys, State{0.0, 0.0}, 1.0, 0.1));
  std::istringstream truncated(os.str().substr(0, os.str().size() - 3));
  CHECK_THROWS_AS(read_trajectory(truncated), FormatError);
}

TEST_CASE("cache keys are deterministic and input sensitive") {
  const FlowSystem sys = make_builtin("torus_rotation");
  const State x{0.1, 0.2};
  const auto k = TrajectoryCache::key_for(sys, x, 1.0, 0.01, Direction::Forward);
  CHECK(k == TrajectoryCache::key_for(sys, x, 1.0, 0.01, Direction::Forward));
  CHECK(k != TrajectoryCache::key_for(sys, x, 1.0, 0.01, Direction::Backward));
  CHECK(k != TrajectoryCache::key_for(sys, x, 2.0, 0.01, Direction::Forward));
  CHECK(k != TrajectoryCache::key_for(sys, State{0.1, 0.2000001}, 1.0, 0.01, Direction::Forward));
  const FlowSystem other = make_builtin("torus_rotation", {{"omega", 0.5}});
  CHECK(k != TrajectoryCache::key_for(other, x, 1.0, 0.01, Direction::Forward));
}

TEST_CASE("cache hits equal fresh integration and corrupt entries are recomputed") {
  const fs::path dir = scratch_dir("cache");
  TrajectoryCache cache(dir);
  const FlowSystem sys = make_builtin("lorenz");
  const Trajectory fresh = integrate(sys, sys.default_initial, 1.0, 0.01);
  const Trajectory first = cache.integrate(sys, sys.default_initial, 1.0, 0.01);
  const Trajectory second = cache.integrate(sys, sys.default_initial, 1.0, 0.01);
  CHECK(first.flat_states() == fresh.flat_states());
  CHECK(second.flat_states() == fresh.flat_states());

  const auto key = TrajectoryCache::key_for(sys, sys.default_initial, 1.0, 0.01, Direction::Forward);
  REQUIRE(cache.get(key).has_value());
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::ofstream(entry.path(), std::ios::binary | std::ios::trunc) << "garbage";
  }
  CHECK_FALSE(cache.get(key).has_value());
  const Trajectory third = cache.integrate(sys, sys.default_initial, 1.0, 0.01);
  CHECK(third.flat_states() == fresh.flat_states());
  fs::remove_all(dir);
}
