#include "rsfl/systems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "rsfl/error.hpp"

namespace rsfl {

namespace {

class ParamReader {
 public:
  ParamReader(const std::string& system, const nlohmann::json& params) : system_(system), params_(params) {
    if (!params_.is_object()) throw InvalidParameter(system + ": params must be a JSON object");
  }

  double number(const std::string& key, double fallback, double lo, double hi) {
    seen_.insert(key);
    if (!params_.contains(key)) return fallback;
    const auto& v = params_.at(key);
    if (!v.is_number()) throw InvalidParameter(system_ + ": parameter '" + key + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < lo || x > hi) {
      std::ostringstream os;
      os << system_ << ": parameter '" << key << "'=" << x << " outside [" << lo << ", " << hi << "]";
      throw InvalidParameter(os.str());
    }
    return x;
  }

  void reject_unknown() const {
    for (const auto& [key, _] : params_.items()) {
      if (!seen_.contains(key)) throw InvalidParameter(system_ + ": unknown parameter '" + key + "'");
    }
  }

 private:
  std::string system_;
  nlohmann::json params_;
  std::set<std::string> seen_;
};

void rk4_step(const VectorField& field, double sign, double h, std::span<double> x, std::vector<double>& k1,
              std::vector<double>& k2, std::vector<double>& k3, std::vector<double>& k4,
              std::vector<double>& tmp) {
  const std::size_t n = x.size();
  field(x, k1);
  for (std::size_t k = 0; k < n; ++k) tmp[k] = x[k] + 0.5 * h * sign * k1[k];
  field(tmp, k2);
  for (std::size_t k = 0; k < n; ++k) tmp[k] = x[k] + 0.5 * h * sign * k2[k];
  field(tmp, k3);
  for (std::size_t k = 0; k < n; ++k) tmp[k] = x[k] + h * sign * k3[k];
  field(tmp, k4);
  for (std::size_t k = 0; k < n; ++k) {
    x[k] += sign * h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
  }
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

void attach_attractor(FlowSystem& sys, double burn_in, std::size_t count, double spacing, double step) {
  auto samples = std::make_shared<std::vector<State>>();
  samples->reserve(count);
  State x = flow_for(sys, sys.default_initial, burn_in, step);
  for (std::size_t i = 0; i < count; ++i) {
    samples->push_back(x);
    x = flow_for(sys, x, spacing, step);
  }
  sys.attractor = std::move(samples);
  sys.attractor_spacing = spacing;
}

}  // namespace

State FlowSystem::velocity(std::span<const double> x) const {
  State v(dim());
  field(x, v);
  return v;
}

double FlowSystem::speed(std::span<const double> x) const {
  double buf[8];
  std::vector<double> heap;
  std::span<double> out;
  if (dim() <= 8) {
    out = std::span<double>(buf, dim());
  } else {
    heap.resize(dim());
    out = heap;
  }
  field(x, out);
  return norm(out);
}

nlohmann::json FlowSystem::config() const {
  return {{"name", name}, {"params", params}, {"geometry", geometry.to_json()}};
}

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"torus_rotation", "doubling_suspension", "lorenz",
                                              "north_south_circle", "torus_constant"};
  return names;
}

FlowSystem make_builtin(const std::string& name, const nlohmann::json& params) {
  ParamReader reader(name, params.is_null() ? nlohmann::json::object() : params);
  FlowSystem sys{.name = name,
                 .params = {},
                 .geometry = Geometry::flat_torus({1.0}),
                 .field = {},
                 .singularities = {},
                 .known_entropy = std::nullopt,
                 .entropy_note = {},
                 .lipschitz_hint = std::nullopt,
                 .default_initial = {},
                 .attractor = nullptr};

  if (name == "torus_rotation") {
    const double omega = reader.number("omega", std::numbers::sqrt2, 1e-6, 1e3);
    reader.reject_unknown();
    sys.params = {{"omega", omega}};
    sys.geometry = Geometry::flat_torus({1.0, 1.0});
    sys.field = [omega](std::span<const double>, std::span<double> out) {
      out[0] = 1.0;
      out[1] = omega;
    };
    sys.known_entropy = 0.0;
    sys.entropy_note = "isometric linear flow";
    sys.lipschitz_hint = 0.0;
    sys.default_initial = {0.0, 0.0};
    sys.default_dt = 0.02;
  } else if (name == "torus_constant") {
    reader.reject_unknown();
    sys.params = nlohmann::json::object();
    sys.geometry = Geometry::flat_torus({1.0, 1.0});
    sys.field = [](std::span<const double>, std::span<double> out) {
      out[0] = 1.0;
      out[1] = 0.0;
    };
    sys.known_entropy = 0.0;
    sys.entropy_note = "translation flow";
    sys.lipschitz_hint = 0.0;
    sys.default_initial = {0.0, 0.0};
    sys.default_dt = 0.02;
  } else if (name == "doubling_suspension") {
    reader.reject_unknown();
    sys.params = nlohmann::json::object();
    sys.geometry = Geometry::doubling_mapping_torus();
    sys.field = [](std::span<const double>, std::span<double> out) {
      out[0] = 0.0;
      out[1] = 1.0;
    };
    sys.known_entropy = std::log(2.0);
    sys.entropy_note = "suspension of x -> 2x mod 1 with unit roof: h = log 2 per unit time";
    sys.lipschitz_hint = 0.0;
    sys.default_initial = {0.1234567890123, 0.0};
    sys.default_dt = 0.02;
  } else if (name == "north_south_circle") {
    reader.reject_unknown();
    sys.params = nlohmann::json::object();
    sys.geometry = Geometry::flat_torus({2.0 * std::numbers::pi});
    sys.field = [](std::span<const double> x, std::span<double> out) { out[0] = std::sin(x[0]); };
    sys.singularities = {{0.0}, {std::numbers::pi}};
    sys.known_entropy = 0.0;
    sys.entropy_note = "gradient-like flow on the circle";
    sys.lipschitz_hint = 1.0;
    sys.default_initial = {std::numbers::pi / 2.0};
    sys.default_dt = 0.02;
  } else if (name == "lorenz") {
    const double sigma = reader.number("sigma", 10.0, 1e-3, 50.0);
    const double rho = reader.number("rho", 28.0, 1.0 + 1e-9, 100.0);
    const double beta = reader.number("beta", 8.0 / 3.0, 1e-3, 10.0);
    reader.reject_unknown();
    sys.params = {{"sigma", sigma}, {"rho", rho}, {"beta", beta}};
    const double w = rho + 2.0;
    sys.geometry = Geometry::euclidean({-w, -w, -5.0}, {w, w, 2.0 * rho + 4.0});
    sys.field = [sigma, rho, beta](std::span<const double> x, std::span<double> out) {
      out[0] = sigma * (x[1] - x[0]);
      out[1] = x[0] * (rho - x[2]) - x[1];
      out[2] = x[0] * x[1] - beta * x[2];
    };
    const double a = std::sqrt(beta * (rho - 1.0));
    sys.singularities = {{0.0, 0.0, 0.0}, {a, a, rho - 1.0}, {-a, -a, rho - 1.0}};
    sys.entropy_note = "no closed form; bracketed by the largest Lyapunov exponent";
    sys.default_initial = {1.0, 1.0, 1.0};
    sys.default_dt = 0.002;
    attach_attractor(sys, 100.0, 4000, 0.05, 2e-3);
  } else {
    throw UnknownSystem(name);
  }

  sys.s_min = default_s_min(sys);
  return sys;
}

FlowSystem system_from_config(const nlohmann::json& config) {
  if (!config.is_object() || !config.contains("name") || !config.at("name").is_string()) {
    throw InvalidParameter("system config needs a string 'name'");
  }
  const auto params = config.value("params", nlohmann::json::object());
  return make_builtin(config.at("name").get<std::string>(), params);
}

double default_s_min(const FlowSystem& sys) {
  std::vector<double> speeds;
  if (sys.attractor && !sys.attractor->empty()) {
    for (const auto& x : *sys.attractor) speeds.push_back(sys.speed(x));
  } else {
    Rng rng(0x5eed5eedULL);
    State x(sys.dim());
    for (int i = 0; i < 1001; ++i) {
      sys.geometry.sample_uniform(rng, x);
      speeds.push_back(sys.speed(x));
    }
  }
  std::nth_element(speeds.begin(), speeds.begin() + speeds.size() / 2, speeds.end());
  return 1e-3 * speeds[speeds.size() / 2];
}

Trajectory::Trajectory(std::size_t dim, double t0, double dt, Direction direction, std::vector<double> states,
                       std::vector<double> speeds)
    : dim_(dim), t0_(t0), dt_(dt), direction_(direction), states_(std::move(states)), speeds_(std::move(speeds)) {
  if (dim_ == 0 || states_.size() != dim_ * speeds_.size()) {
    throw InvalidParameter("trajectory state/speed arrays are inconsistent");
  }
}

double Trajectory::time(std::size_t i) const {
  const double offset = static_cast<double>(i) * dt_;
  return direction_ == Direction::Forward ? t0_ + offset : t0_ - offset;
}

OrbitStream::OrbitStream(const FlowSystem& sys, std::span<const double> x0, double dt, Direction direction,
                         double t0)
    : sys_(&sys), dim_(sys.dim()), dt_(dt), t0_(t0), direction_(direction) {
  if (!(dt > 0.0)) throw InvalidParameter("integrate: dt must be positive");
  if (x0.size() != dim_) throw InvalidParameter("integrate: state dimension mismatch");
  x_.assign(x0.begin(), x0.end());
  if (!sys.geometry.contains(x_)) throw EscapeError(t0, "integrate: initial state outside the domain");
  sys.geometry.normalize(x_);
  k1_.resize(dim_);
  k2_.resize(dim_);
  k3_.resize(dim_);
  k4_.resize(dim_);
  tmp_.resize(dim_);
  states_.insert(states_.end(), x_.begin(), x_.end());
  sys.field(x_, k1_);
  speeds_.push_back(norm(k1_));
}

void OrbitStream::extend_to(std::size_t n) {
  if (n < size()) return;
  states_.reserve((n + 1) * dim_);
  speeds_.reserve(n + 1);
  const double sign = direction_ == Direction::Forward ? 1.0 : -1.0;
  while (size() <= n) {
    rk4_step(sys_->field, sign, dt_, x_, k1_, k2_, k3_, k4_, tmp_);
    sys_->geometry.normalize(x_);
    if (!sys_->geometry.contains(x_)) {
      const double t = t0_ + sign * static_cast<double>(size()) * dt_;
      std::ostringstream os;
      os << sys_->name << ": orbit escaped the trapping box at t=" << t;
      throw EscapeError(t, os.str());
    }
    states_.insert(states_.end(), x_.begin(), x_.end());
    sys_->field(x_, k1_);
    speeds_.push_back(norm(k1_));
  }
}

Trajectory OrbitStream::to_trajectory() const {
  return Trajectory(dim_, t0_, dt_, direction_, states_, speeds_);
}

Trajectory integrate(const FlowSystem& sys, std::span<const double> x0, double horizon, double dt,
                     Direction direction, double t0) {
  if (!(dt > 0.0)) throw InvalidParameter("integrate: dt must be positive");
  if (!(horizon >= dt * (1.0 - 1e-12))) throw InvalidParameter("integrate: horizon must be >= dt");
  OrbitStream stream(sys, x0, dt, direction, t0);
  stream.extend_to(static_cast<std::size_t>(std::floor(horizon / dt + 1e-9)));
  return stream.to_trajectory();
}

State flow_to(const FlowSystem& sys, std::span<const double> x, double t, std::size_t steps) {
  State y(x.begin(), x.end());
  if (t == 0.0 || steps == 0) return y;
  const std::size_t n = sys.dim();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  const double sign = t > 0.0 ? 1.0 : -1.0;
  const double h = std::abs(t) / static_cast<double>(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    rk4_step(sys.field, sign, h, y, k1, k2, k3, k4, tmp);
    sys.geometry.normalize(y);
    if (!sys.geometry.contains(y)) {
      throw EscapeError(sign * h * static_cast<double>(i + 1), sys.name + ": orbit escaped the trapping box");
    }
  }
  return y;
}

State flow_for(const FlowSystem& sys, std::span<const double> x, double t, double max_step) {
  const auto steps = static_cast<std::size_t>(std::ceil(std::abs(t) / max_step - 1e-9));
  return flow_to(sys, x, t, std::max<std::size_t>(steps, 1));
}

double min_speed_on(const Trajectory& traj) {
  return *std::min_element(traj.speeds().begin(), traj.speeds().end());
}

State sample_regular(const FlowSystem& sys, Rng& rng) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    State x(sys.dim());
    if (sys.attractor && !sys.attractor->empty()) {
      const auto& base = (*sys.attractor)[rng.index(sys.attractor->size())];
      x = flow_for(sys, base, rng.uniform(0.0, sys.attractor_spacing), 2e-3);
    } else {
      sys.geometry.sample_uniform(rng, x);
    }
    if (sys.is_regular(x)) return x;
  }
  throw EstimationError(sys.name + ": no regular points found");
}

}  // namespace rsfl
