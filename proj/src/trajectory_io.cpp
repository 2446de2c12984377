#include "rsfl/trajectory_io.hpp"

#include <array>
#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rsfl/error.hpp"
#include "rsfl/format.hpp"

namespace rsfl {

namespace {

constexpr std::array<char, 5> kMagic{'R', 'S', 'F', 'L', '1'};

template <class U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t k = 0; k < sizeof(U); ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  os.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> buf{};
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw FormatError("trajectory file truncated");
  U v = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(buf[k]) << (8 * k);
  return v;
}

void put_f64(std::ostream& os, double x) { put_le(os, std::bit_cast<std::uint64_t>(x)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void write_trajectory(std::ostream& os, const Trajectory& traj) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(traj.dim()));
  put_le<std::uint64_t>(os, static_cast<std::uint64_t>(traj.size()));
  put_f64(os, traj.dt());
  put_f64(os, traj.t0());
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(traj.direction()));
  for (double x : traj.flat_states()) put_f64(os, x);
  for (double s : traj.speeds()) put_f64(os, s);
}

Trajectory read_trajectory(std::istream& is) {
  std::array<char, 5> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw FormatError("not an RSFL1 trajectory file");
  const auto dim = get_le<std::uint32_t>(is);
  const auto count = get_le<std::uint64_t>(is);
  const double dt = get_f64(is);
  const double t0 = get_f64(is);
  const auto dir = get_le<std::uint8_t>(is);
  if (dim == 0 || dir > 1 || count > (1ULL << 32)) throw FormatError("corrupt trajectory header");
  std::vector<double> states(count * dim);
  for (double& x : states) x = get_f64(is);
  std::vector<double> speeds(count);
  for (double& s : speeds) s = get_f64(is);
  return Trajectory(dim, t0, dt, static_cast<Direction>(dir), std::move(states), std::move(speeds));
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write " + tmp);
    write_trajectory(os, traj);
  }
  std::filesystem::rename(tmp, path);
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_trajectory(is);
}

TrajectoryCache::TrajectoryCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

TrajectoryCache TrajectoryCache::from_env(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("RSFL_CACHE_DIR"); env != nullptr && *env != '\0') {
    return TrajectoryCache(env);
  }
  return TrajectoryCache(fallback);
}

std::string TrajectoryCache::key_for(const FlowSystem& sys, std::span<const double> x0, double horizon, double dt,
                                     Direction direction) {
  std::ostringstream os;
  os << sys.config().dump() << '|' << format_double(horizon) << '|' << format_double(dt) << '|'
     << static_cast<int>(direction);
  for (double x : x0) os << '|' << format_double(x);
  const std::string canonical = os.str();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(canonical)));
  return sys.name + "-" + hex;
}

std::optional<Trajectory> TrajectoryCache::get(const std::string& key) const {
  const auto path = dir_ / (key + ".rsfl");
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    return load_trajectory(path);
  } catch (const Error&) {
    return std::nullopt;
  }
}

void TrajectoryCache::put(const std::string& key, const Trajectory& traj) const {
  save_trajectory(dir_ / (key + ".rsfl"), traj);
}

Trajectory TrajectoryCache::integrate(const FlowSystem& sys, std::span<const double> x0, double horizon, double dt,
                                      Direction direction) {
  const auto key = key_for(sys, x0, horizon, dt, direction);
  if (auto hit = get(key)) return std::move(*hit);
  Trajectory traj = rsfl::integrate(sys, x0, horizon, dt, direction);
  put(key, traj);
  return traj;
}

}  // namespace rsfl
