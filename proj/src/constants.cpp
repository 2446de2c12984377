#include "rsfl/constants.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "rsfl/balls.hpp"
#include "rsfl/error.hpp"

namespace rsfl {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

State random_unit(Rng& rng, std::size_t n) {
  State v(n);
  double len = 0.0;
  while (len < 1e-12) {
    for (double& c : v) c = rng.normal();
    len = norm(v);
  }
  for (double& c : v) c /= len;
  return v;
}

State sample_guarded(const FlowSystem& sys, Rng& rng, double guard) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    State x = sample_regular(sys, rng);
    if (sys.speed(x) >= guard) return x;
  }
  throw EstimationError(sys.name + ": all samples had speed below the singular guard");
}

double operator_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

Eigen::MatrixXd jacobian(const FlowSystem& sys, std::span<const double> x, double h) {
  const std::size_t n = sys.dim();
  Eigen::MatrixXd J(n, n);
  State xp(x.begin(), x.end()), xm(x.begin(), x.end()), fp(n), fm(n);
  for (std::size_t k = 0; k < n; ++k) {
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    sys.field(xp, fp);
    sys.field(xm, fm);
    for (std::size_t r = 0; r < n; ++r) J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = (fp[r] - fm[r]) / (2.0 * h);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return J;
}

}  // namespace

double estimate_lipschitz(const FlowSystem& sys, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 100) throw InvalidParameter("estimate_lipschitz needs at least 100 samples");
  Rng rng(seed);
  const std::size_t n = sys.dim();
  double best = 0.0;
  if (const auto* box = std::get_if<EuclideanBox>(&sys.geometry.model())) {
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      State corner(n);
      for (std::size_t k = 0; k < n; ++k) corner[k] = (mask >> k) & 1U ? box->upper[k] : box->lower[k];
      best = std::max(best, operator_norm(jacobian(sys, corner, 1e-5)));
    }
  }
  State x(n);
  for (std::size_t s = 0; s < n_samples; ++s) {
    sys.geometry.sample_uniform(rng, x);
    best = std::max(best, operator_norm(jacobian(sys, x, 1e-5)));
  }
  return 1.1 * best;
}

double estimate_speed_ratio_c(const FlowSystem& sys, std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs < 1000) throw InvalidParameter("estimate_speed_ratio_c needs at least 1000 pairs");
  constexpr int kGrid = 20;
  Rng rng(seed);
  double bad_min = std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const State x = sample_regular(sys, rng);
    const double sx = sys.speed(x);
    const double rel = 2.0 * std::exp2(-(kGrid + 1) * rng.uniform());
    State y = x;
    State step = random_unit(rng, sys.dim());
    for (double& c : step) c *= rel * sx;
    sys.geometry.displace(y, step);
    if (!sys.geometry.contains(y) || !sys.is_regular(y)) continue;
    ++used;
    const double ratio = sys.speed(y) / sx;
    if (ratio < 0.5 || ratio > 2.0) bad_min = std::min(bad_min, sys.geometry.distance(x, y) / sx);
  }
  if (used == 0) throw EstimationError(sys.name + ": no regular points found");
  double c = 1.0;
  while (c > bad_min && c > std::exp2(-kGrid)) c *= 0.5;
  return c;
}

double estimate_separation(const FlowSystem& sys, double T, double T0, std::size_t n_samples, std::uint64_t seed,
                           std::optional<double> s_min) {
  if (!(T > 0.0 && T < T0)) throw InvalidParameter("estimate_separation needs 0 < T < T0");
  Rng rng(seed);
  const double guard = s_min.value_or(sys.s_min);
  const double step = T / 20.0;
  const auto first = static_cast<std::size_t>(20);
  const auto last = static_cast<std::size_t>(std::floor(T0 / step + 1e-9));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < n_samples; ++s) {
    const State x = sample_guarded(sys, rng, guard);
    const double sx = sys.speed(x);
    for (Direction dir : {Direction::Forward, Direction::Backward}) {
      OrbitStream orbit(sys, x, step, dir);
      orbit.extend_to(last);
      for (std::size_t i = first; i <= last; ++i) {
        best = std::min(best, sys.geometry.distance(orbit.state(i), x) / sx);
      }
    }
  }
  return 0.9 * best;
}

FlowboxChart::FlowboxChart(const FlowSystem& sys, State base, double r)
    : sys_(&sys), base_(std::move(base)), r_(r), speed_(sys.speed(base_)) {
  if (!(r > 0.0)) throw InvalidParameter("flowbox size r must be positive");
  if (!(speed_ > 0.0) || speed_ < sys.s_min) throw SingularCenter("flowbox base is within the singular guard");
  const std::size_t n = sys.dim();
  State e = sys.velocity(base_);
  for (double& c : e) c /= speed_;
  std::size_t skip = 0;
  for (std::size_t k = 1; k < n; ++k) {
    if (std::abs(e[k]) > std::abs(e[skip])) skip = k;
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (k == skip) continue;
    State v(n, 0.0);
    v[k] = 1.0;
    auto project_out = [&](const State& u) {
      double dot = 0.0;
      for (std::size_t m = 0; m < n; ++m) dot += v[m] * u[m];
      for (std::size_t m = 0; m < n; ++m) v[m] -= dot * u[m];
    };
    project_out(e);
    for (const State& u : frame_) project_out(u);
    const double len = norm(v);
    for (double& c : v) c /= len;
    frame_.push_back(std::move(v));
  }
  steps_ = static_cast<std::size_t>(std::max(8.0, std::ceil(r / sys.default_dt)));
}

State FlowboxChart::map(std::span<const double> p) const {
  const std::size_t n = sys_->dim();
  State v(n, 0.0);
  for (std::size_t k = 0; k < frame_.size(); ++k) {
    for (std::size_t m = 0; m < n; ++m) v[m] += p[k] * frame_[k][m];
  }
  State z = base_;
  sys_->geometry.displace(z, v);
  return flow_to(*sys_, z, p[n - 1], steps_);
}

std::vector<double> FlowboxChart::singular_values(std::span<const double> p) const {
  const std::size_t n = sys_->dim();
  const double hh = 1e-5 * r_ * speed_;
  Eigen::MatrixXd D(n, n);
  State pp(p.begin(), p.end()), pm(p.begin(), p.end()), diff(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double dp = k + 1 == n ? hh / speed_ : hh;
    pp[k] = p[k] + dp;
    pm[k] = p[k] - dp;
    const State fp = map(pp);
    const State fm = map(pm);
    sys_->geometry.difference(fm, fp, diff);
    for (std::size_t r = 0; r < n; ++r) {
      D(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = diff[r] / (2.0 * hh);
    }
    pp[k] = p[k];
    pm[k] = p[k];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(D);
  const auto& sv = svd.singularValues();
  return std::vector<double>(sv.data(), sv.data() + sv.size());
}

State FlowboxChart::domain_point(std::size_t index, Rng& rng) const {
  const std::size_t n = sys_->dim();
  const double R = r_ * speed_;
  State p(n, 0.0);
  if (index == 0) return p;
  if (n == 1) {
    if (index <= 2) {
      p[0] = index == 1 ? r_ : -r_;
      return p;
    }
  } else if (index <= 4) {
    p[0] = (index & 1U) ? R : -R;
    p[n - 1] = index <= 2 ? r_ : -r_;
    return p;
  }
  if (n > 1) {
    const State dir = random_unit(rng, n - 1);
    const double rad = R * std::pow(rng.uniform(), 1.0 / static_cast<double>(n - 1));
    for (std::size_t k = 0; k + 1 < n; ++k) p[k] = rad * dir[k];
  }
  p[n - 1] = rng.uniform(-r_, r_);
  return p;
}

FlowboxCheck FlowboxChart::check(std::size_t n_grid, Rng& rng, double lo, double hi) const {
  FlowboxCheck out;
  out.min_singular = std::numeric_limits<double>::infinity();
  out.max_singular = 0.0;
  out.min_image_speed = std::numeric_limits<double>::infinity();
  out.min_distortion = std::numeric_limits<double>::infinity();
  const std::size_t n = sys_->dim();
  std::vector<State> ps, images;
  for (std::size_t g = 0; g < n_grid; ++g) {
    State p = domain_point(g, rng);
    State img = map(p);
    out.min_image_speed = std::min(out.min_image_speed, sys_->speed(img));
    for (double s : singular_values(p)) {
      out.min_singular = std::min(out.min_singular, s);
      out.max_singular = std::max(out.max_singular, s);
    }
    ps.push_back(std::move(p));
    images.push_back(std::move(img));
  }
  for (std::size_t a = 0; a < ps.size(); ++a) {
    for (std::size_t b = a + 1; b < ps.size(); ++b) {
      double du = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double d = (ps[a][k] - ps[b][k]) * (k + 1 == n ? speed_ : 1.0);
        du += d * d;
      }
      du = std::sqrt(du);
      if (du <= 0.0) continue;
      out.min_distortion = std::min(out.min_distortion, sys_->geometry.distance(images[a], images[b]) / du);
    }
  }
  out.points = ps.size();
  out.ok = out.min_singular >= lo && out.max_singular <= hi && out.min_image_speed > 0.0 &&
           out.min_distortion >= lo;
  return out;
}

FlowboxChart build_flowbox(const FlowSystem& sys, std::span<const double> x, double r) {
  return FlowboxChart(sys, State(x.begin(), x.end()), r);
}

double estimate_T0(const FlowSystem& sys, std::size_t n_points, std::size_t n_grid, std::uint64_t seed,
                   std::size_t n_certify) {
  Rng rng(seed);
  auto draw = [&](std::size_t count) {
    std::vector<std::pair<State, std::uint64_t>> out;
    for (std::size_t k = 0; k < count; ++k) {
      State x = sample_regular(sys, rng);
      out.emplace_back(std::move(x), rng.next_seed());
    }
    return out;
  };
  const auto points = draw(n_points);
  const auto certificate = draw(n_certify);
  auto passes = [&](const std::vector<std::pair<State, std::uint64_t>>& pts, double r) {
    for (const auto& [x, grid_seed] : pts) {
      try {
        Rng grid_rng(grid_seed);
        if (!FlowboxChart(sys, x, r).check(n_grid, grid_rng).ok) return false;
      } catch (const EscapeError&) {
        return false;
      }
    }
    return true;
  };
  for (int k = 1; k <= 14; ++k) {
    const double r = std::exp2(-k);
    if (passes(points, r) && passes(certificate, r)) return r;
  }
  throw EstimationError(sys.name + ": no flowbox scale passed the derivative checks");
}

DeltaCalibration calibrate_delta(const FlowSystem& sys, double T, double T0, std::size_t n_trials,
                                 std::uint64_t seed) {
  if (!(T > 0.0 && T < T0)) throw InvalidParameter("calibrate_delta needs 0 < T < T0");
  constexpr int kSmallest = 14;
  const double dt = T / 10.0;
  const auto row_T = static_cast<std::size_t>(10);
  const auto back_rows = static_cast<std::size_t>(std::floor(T0 / dt + 1e-9));

  Rng rng(seed);
  struct Trial {
    State x;
    State dir;
    double frac;
  };
  std::vector<Trial> trials;
  for (std::size_t k = 0; k < n_trials; ++k) {
    State x = sample_regular(sys, rng);
    State dir = random_unit(rng, sys.dim());
    trials.push_back({std::move(x), std::move(dir), rng.uniform()});
  }

  DeltaCalibration out;
  double passed = 0.0;
  for (int k = kSmallest; k >= 1; --k) {
    const double delta = std::exp2(-k);
    bool violated = false;
    for (const Trial& tr : trials) {
      const double sx = sys.speed(tr.x);
      State y = tr.x;
      State step = tr.dir;
      for (double& c : step) c *= delta * sx * tr.frac;
      sys.geometry.displace(y, step);
      if (!sys.geometry.contains(y)) continue;
      BallQuery q;
      q.variant = Variant::GammaTwoSided;
      q.center = tr.x;
      q.eps = delta;
      q.horizon = T0;
      q.dt = dt;
      try {
        if (!BallOracle(sys, q).test(y, false).member) continue;
        ++out.feasible_pairs;
        const State xT = flow_to(sys, tr.x, T, row_T);
        const double radius = delta * sys.speed(xT);
        OrbitStream back(sys, y, dt, Direction::Backward);
        back.extend_to(back_rows);
        for (std::size_t i = 0; i <= back_rows; ++i) {
          if (sys.geometry.distance(xT, back.state(i)) <= radius) {
            violated = true;
            break;
          }
        }
      } catch (const EscapeError&) {
        continue;
      }
      if (violated) break;
    }
    if (violated) {
      out.first_failure = delta;
      break;
    }
    passed = delta;
  }
  if (passed == 0.0) {
    out.flagged = true;
    out.delta = std::exp2(-kSmallest);
  } else {
    out.delta = passed;
  }
  return out;
}

double FlowConstants::gamma_at(double T) const {
  if (gamma_table.empty()) throw InvalidParameter("empty gamma table");
  double v = gamma_table.front().second;
  for (const auto& [t, g] : gamma_table) {
    if (t <= T * (1.0 + 1e-12)) v = g;
  }
  return v;
}

double FlowConstants::delta_at(double T) const {
  if (delta_table.empty()) throw InvalidParameter("empty delta table");
  double v = delta_table.front().second;
  for (const auto& [t, d] : delta_table) {
    if (t <= T * (1.0 + 1e-12)) v = d;
  }
  return v;
}

nlohmann::json FlowConstants::to_json() const {
  auto table = [](const std::vector<std::pair<double, double>>& rows, const char* key) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [t, v] : rows) arr.push_back({{"T", t}, {key, v}});
    return arr;
  };
  return {{"system", system},       {"L", L},
          {"c", c},                 {"T0", T0},
          {"gamma_table", table(gamma_table, "gamma")},
          {"delta_table", table(delta_table, "delta")},
          {"delta_flagged", delta_flagged},
          {"seed", seed},           {"n_samples", n_samples}};
}

FlowConstants FlowConstants::from_json(const nlohmann::json& j) {
  FlowConstants fc;
  try {
    fc.system = j.at("system").get<std::string>();
    fc.L = j.at("L").get<double>();
    fc.c = j.at("c").get<double>();
    fc.T0 = j.at("T0").get<double>();
    for (const auto& row : j.at("gamma_table")) fc.gamma_table.emplace_back(row.at("T"), row.at("gamma"));
    for (const auto& row : j.at("delta_table")) fc.delta_table.emplace_back(row.at("T"), row.at("delta"));
    fc.delta_flagged = j.value("delta_flagged", false);
    fc.seed = j.value("seed", std::uint64_t{0});
    fc.n_samples = j.value("n_samples", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("constants report: ") + e.what());
  }
  return fc;
}

FlowConstants estimate_constants(const FlowSystem& sys, const ConstantsOptions& opt) {
  FlowConstants fc;
  fc.system = sys.name;
  fc.seed = opt.seed;
  fc.n_samples = opt.n_samples;
  Rng seeds(opt.seed);
  fc.L = estimate_lipschitz(sys, opt.n_samples, seeds.next_seed());
  fc.c = estimate_speed_ratio_c(sys, opt.n_pairs, seeds.next_seed());
  fc.T0 = estimate_T0(sys, opt.n_points, opt.n_grid, seeds.next_seed(), opt.n_certify);
  const std::size_t n_sep = std::max<std::size_t>(50, opt.n_samples / 5);
  for (double frac : {0.125, 0.25, 0.5}) {
    const double T = frac * fc.T0;
    fc.gamma_table.emplace_back(T, estimate_separation(sys, T, fc.T0, n_sep, seeds.next_seed()));
    const DeltaCalibration dc = calibrate_delta(sys, T, fc.T0, opt.n_trials, seeds.next_seed());
    fc.delta_table.emplace_back(T, dc.delta);
    fc.delta_flagged = fc.delta_flagged || dc.flagged;
  }
  return fc;
}

}  // namespace rsfl
