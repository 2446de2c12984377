#include "rsfl/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "rsfl/error.hpp"
#include "rsfl/format.hpp"
#include "rsfl/parallel.hpp"

namespace rsfl {

namespace {

void flag_atoms(const FlowSystem& sys, EmpiricalMeasure& mu) {
  mu.flagged.clear();
  for (std::size_t k = 0; k < mu.atoms.size(); ++k) {
    if (!sys.is_regular(mu.atoms[k]) || !(sys.speed(mu.atoms[k]) > 0.0)) mu.flagged.push_back(k);
  }
}

struct AtomOutcome {
  bool member = false;
  double reached = -1.0;
};

std::vector<AtomOutcome> evaluate_atoms(const FlowSystem& sys, const EmpiricalMeasure& mu, const BallQuery& q,
                                        const MassOptions& opt) {
  const BallOracle oracle(sys, q);
  std::vector<AtomOutcome> out(mu.size());
  parallel_for(mu.size(), opt.threads, [&](std::size_t k) {
    if (opt.exclude_index && *opt.exclude_index == k) return;
    if (mu.weights[k] == 0.0 || !oracle.prefilter(mu.atoms[k])) return;
    const MatchResult r = oracle.test(mu.atoms[k], false);
    out[k] = {r.member, r.reached};
  });
  return out;
}

BallMass summarize(const EmpiricalMeasure& mu, const MassOptions& opt, double horizon, double dt,
                   const std::vector<AtomOutcome>& outcomes) {
  BallMass m;
  m.horizon = horizon;
  double total = 0.0, hit = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    if (opt.exclude_index && *opt.exclude_index == k) continue;
    const double w = mu.weights[k];
    total += w;
    sq += w * w;
    ++m.n_tested;
    if (outcomes[k].reached + 1e-9 * dt >= std::round(horizon / dt) * dt) {
      hit += w;
      ++m.members;
    }
  }
  if (total <= 0.0) throw InvalidParameter("ball_mass: measure has no mass outside the excluded atom");
  m.estimate = std::clamp(hit / total, 0.0, 1.0);
  const double n_eff = total * total / sq;
  const auto [lo, hi] = wilson_interval(m.estimate, n_eff);
  m.ci_low = std::min(lo, m.estimate);
  m.ci_high = std::max(hi, m.estimate);
  return m;
}

DecayPoint make_point(double eps, double t, const BallMass& mass, double n) {
  DecayPoint p;
  p.eps = eps;
  p.t = t;
  p.mass = mass;
  const double cap = std::log(n) / t;
  if (mass.estimate <= 0.0) {
    p.censored = true;
    p.rate = cap;
    p.rate_low = mass.ci_high > 0.0 ? std::min(cap, -std::log(mass.ci_high) / t) : cap;
    p.rate_high = cap;
    return p;
  }
  p.rate = std::min(cap, -std::log(mass.estimate) / t);
  p.rate_low = std::min(p.rate, -std::log(std::max(mass.ci_high, mass.estimate)) / t);
  p.rate_high = mass.ci_low > 0.0 ? std::min(cap, -std::log(mass.ci_low) / t) : cap;
  p.rate_high = std::max(p.rate_high, p.rate);
  return p;
}

}  // namespace

double EmpiricalMeasure::max_weight() const { return *std::max_element(weights.begin(), weights.end()); }

double EmpiricalMeasure::effective_size() const {
  double total = 0.0, sq = 0.0;
  for (double w : weights) {
    total += w;
    sq += w * w;
  }
  return total * total / sq;
}

std::string origin_name(MeasureOrigin o) {
  switch (o) {
    case MeasureOrigin::OrbitSample:
      return "OrbitSample";
    case MeasureOrigin::IIDReference:
      return "IIDReference";
    case MeasureOrigin::AtomList:
      return "AtomList";
  }
  return "?";
}

EmpiricalMeasure orbit_measure(const FlowSystem& sys, std::span<const double> x0, double burn_in,
                               std::size_t n_atoms, double spacing, std::uint64_t seed, TrajectoryCache* cache) {
  if (n_atoms < 100) throw InvalidParameter("orbit_measure needs at least 100 atoms");
  if (!(spacing > 0.0) || !(burn_in >= 0.0)) throw InvalidParameter("orbit_measure: bad burn_in or spacing");
  EmpiricalMeasure mu;
  mu.origin = MeasureOrigin::OrbitSample;
  mu.origin_info = {{"burn_in", burn_in}, {"spacing", spacing}, {"x0", State(x0.begin(), x0.end())}};
  mu.seed = seed;

  const std::size_t n = sys.dim();
  std::string key;
  if (cache != nullptr) {
    key = TrajectoryCache::key_for(sys, x0, static_cast<double>(n_atoms) * spacing, spacing, Direction::Forward) +
          "-burn" + format_double(burn_in);
    if (auto hit = cache->get(key); hit && hit->size() == n_atoms && hit->dim() == n) {
      for (std::size_t k = 0; k < n_atoms; ++k) {
        mu.atoms.emplace_back(hit->state(k).begin(), hit->state(k).end());
      }
    }
  }
  if (mu.atoms.empty()) {
    const double step = sys.default_dt;
    State x = burn_in > 0.0 ? flow_for(sys, x0, burn_in, step) : State(x0.begin(), x0.end());
    sys.geometry.normalize(x);
    const auto per = static_cast<std::size_t>(std::max(1.0, std::ceil(spacing / step - 1e-9)));
    mu.atoms.reserve(n_atoms);
    for (std::size_t k = 0; k < n_atoms; ++k) {
      mu.atoms.push_back(x);
      if (k + 1 < n_atoms) x = flow_to(sys, x, spacing, per);
    }
    if (cache != nullptr) {
      std::vector<double> flat, speeds;
      for (const State& a : mu.atoms) {
        flat.insert(flat.end(), a.begin(), a.end());
        speeds.push_back(sys.speed(a));
      }
      cache->put(key, Trajectory(n, burn_in, spacing, Direction::Forward, std::move(flat), std::move(speeds)));
    }
  }
  mu.weights.assign(n_atoms, 1.0 / static_cast<double>(n_atoms));
  flag_atoms(sys, mu);
  return mu;
}

EmpiricalMeasure iid_measure(const FlowSystem& sys, const std::string& density, std::size_t n_atoms,
                             std::uint64_t seed) {
  if (density != "uniform" && density != "lebesgue") {
    throw InvalidParameter("unknown reference density '" + density + "'");
  }
  if (n_atoms == 0) throw InvalidParameter("iid_measure needs at least one atom");
  EmpiricalMeasure mu;
  mu.origin = MeasureOrigin::IIDReference;
  mu.origin_info = {{"density", "uniform"}};
  mu.seed = seed;
  Rng rng(seed);
  mu.atoms.reserve(n_atoms);
  for (std::size_t k = 0; k < n_atoms; ++k) {
    State x(sys.dim());
    sys.geometry.sample_uniform(rng, x);
    mu.atoms.push_back(std::move(x));
  }
  mu.weights.assign(n_atoms, 1.0 / static_cast<double>(n_atoms));
  flag_atoms(sys, mu);
  return mu;
}

EmpiricalMeasure atom_list(const FlowSystem& sys, std::vector<State> atoms, std::vector<double> weights) {
  if (atoms.empty()) throw InvalidParameter("atom_list needs at least one atom");
  if (weights.empty()) weights.assign(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
  if (weights.size() != atoms.size()) throw InvalidParameter("atom_list: one weight per atom");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidParameter("atom_list: weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw InvalidParameter("atom_list: weights must sum to 1");
  for (const State& a : atoms) {
    if (a.size() != sys.dim()) throw InvalidParameter("atom_list: wrong atom dimension");
  }
  EmpiricalMeasure mu;
  mu.origin = MeasureOrigin::AtomList;
  mu.atoms = std::move(atoms);
  mu.weights = std::move(weights);
  flag_atoms(sys, mu);
  return mu;
}

void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu) {
  const std::size_t n = mu.atoms.empty() ? 0 : mu.atoms.front().size();
  for (std::size_t k = 0; k < n; ++k) os << 'x' << k << ',';
  os << "weight\n";
  for (std::size_t a = 0; a < mu.size(); ++a) {
    for (double c : mu.atoms[a]) os << format_double(c) << ',';
    os << format_double(mu.weights[a]) << '\n';
  }
}

std::pair<double, double> wilson_interval(double p, double n, double z) {
  if (!(n > 0.0)) return {0.0, 1.0};
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(std::max(0.0, p * (1.0 - p) / n + z2 / (4.0 * n * n))) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

BallMass ball_mass(const FlowSystem& sys, const EmpiricalMeasure& mu, const BallQuery& q, const MassOptions& opt) {
  const auto outcomes = evaluate_atoms(sys, mu, q, opt);
  return summarize(mu, opt, q.horizon, q.dt, outcomes);
}

std::vector<BallMass> ball_mass_profile(const FlowSystem& sys, const EmpiricalMeasure& mu, const BallQuery& q,
                                        const std::vector<double>& horizons, const MassOptions& opt) {
  if (horizons.empty()) throw InvalidParameter("ball_mass_profile needs at least one horizon");
  BallQuery full = q;
  full.horizon = *std::max_element(horizons.begin(), horizons.end());
  const auto outcomes = evaluate_atoms(sys, mu, full, opt);
  std::vector<BallMass> out;
  for (double t : horizons) out.push_back(summarize(mu, opt, t, q.dt, outcomes));
  return out;
}

DecayCurve decay_curve(const FlowSystem& sys, const EmpiricalMeasure& mu, std::span<const double> x,
                       const std::vector<double>& eps_list, const std::vector<double>& t_list, const BallQuery& proto,
                       const MassOptions& opt) {
  if (eps_list.empty() || t_list.empty()) throw InvalidParameter("decay_curve needs nonempty grids");
  DecayCurve curve;
  curve.eps_list = eps_list;
  curve.t_list = t_list;
  for (double eps : eps_list) {
    BallQuery q = proto;
    q.center.assign(x.begin(), x.end());
    q.eps = eps;
    const auto masses = ball_mass_profile(sys, mu, q, t_list, opt);
    curve.n_atoms = static_cast<double>(masses.front().n_tested);
    for (std::size_t k = 0; k < t_list.size(); ++k) {
      curve.points.push_back(make_point(eps, t_list[k], masses[k], curve.n_atoms));
    }
  }
  return curve;
}

DecayCurve decay_curve_from_masses(const std::vector<double>& eps_list, const std::vector<double>& t_list,
                                   const std::vector<double>& masses, double n_atoms) {
  if (masses.size() != eps_list.size() * t_list.size()) {
    throw InvalidParameter("decay_curve_from_masses: need one mass per (eps, t)");
  }
  DecayCurve curve;
  curve.eps_list = eps_list;
  curve.t_list = t_list;
  curve.n_atoms = n_atoms;
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    for (std::size_t k = 0; k < t_list.size(); ++k) {
      BallMass m;
      m.estimate = masses[e * t_list.size() + k];
      m.horizon = t_list[k];
      m.n_tested = static_cast<std::size_t>(n_atoms);
      const auto [lo, hi] = wilson_interval(m.estimate, n_atoms);
      m.ci_low = std::min(lo, m.estimate);
      m.ci_high = std::max(hi, m.estimate);
      curve.points.push_back(make_point(eps_list[e], t_list[k], m, n_atoms));
    }
  }
  return curve;
}

void write_decay_csv(std::ostream& os, const DecayCurve& curve) {
  os << "eps,t,rate,ci_low,ci_high,censored\n";
  for (const DecayPoint& p : curve.points) {
    os << format_double(p.eps) << ',' << format_double(p.t) << ',' << format_double(p.rate) << ','
       << format_double(p.rate_low) << ',' << format_double(p.rate_high) << ',' << (p.censored ? 1 : 0) << '\n';
  }
}

}  // namespace rsfl
