#include "rsfl/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "rsfl/error.hpp"
#include "rsfl/format.hpp"

namespace rsfl {

namespace {

double lsq_slope(const std::vector<double>& t, const std::vector<double>& y) {
  const double n = static_cast<double>(t.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    mt += t[k];
    my += y[k];
  }
  mt /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    sxy += (t[k] - mt) * (y[k] - my);
    sxx += (t[k] - mt) * (t[k] - mt);
  }
  return sxy / sxx;
}

nlohmann::json mass_json(const BallMass& m) {
  return {{"horizon", m.horizon},   {"estimate", m.estimate}, {"ci_low", m.ci_low},
          {"ci_high", m.ci_high}, {"members", m.members},  {"n_tested", m.n_tested}};
}

}  // namespace

nlohmann::json EntropyEstimate::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : per_epsilon) {
    rows.push_back({{"eps", e.eps},
                    {"slope", e.slope},
                    {"stderr", e.stderr_},
                    {"centers_used", e.centers_used},
                    {"censored_fraction", e.censored_fraction},
                    {"window", {e.window_low, e.window_high}},
                    {"limsup_proxy", e.limsup_proxy},
                    {"liminf_proxy", e.liminf_proxy}});
  }
  nlohmann::json j{{"per_epsilon", rows},
                   {"extrapolated", extrapolated},
                   {"extrapolated_stderr", extrapolated_stderr},
                   {"dropped_eps", dropped_eps},
                   {"centers", centers},
                   {"variant", variant},
                   {"censored_fraction", censored_fraction}};
  if (std::isfinite(log_speed_mean)) {
    j["log_speed_mean"] = log_speed_mean;
  } else {
    j["log_speed_mean"] = nullptr;
  }
  j["log_speed_integrable"] = std::isfinite(log_speed_mean);
  return j;
}

void write_entropy_csv(std::ostream& os, const EntropyEstimate& est) {
  os << "eps,slope,stderr\n";
  for (const auto& e : est.per_epsilon) {
    os << format_double(e.eps) << ',' << format_double(e.slope) << ',' << format_double(e.stderr_) << '\n';
  }
  os << "extrapolated," << format_double(est.extrapolated) << ',' << format_double(est.extrapolated_stderr) << '\n';
}

EntropyEstimate estimate_from_curves(const std::vector<DecayCurve>& curves) {
  if (curves.empty()) throw InvalidParameter("estimate_from_curves needs at least one curve");
  const auto& eps_list = curves.front().eps_list;
  const auto& t_list = curves.front().t_list;
  for (const auto& c : curves) {
    if (c.eps_list != eps_list || c.t_list != t_list) throw InvalidParameter("decay curves must share one grid");
  }
  EntropyEstimate est;
  est.centers = curves.size();
  std::size_t censored_total = 0, points_total = 0;

  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    EpsilonSlope row;
    row.eps = eps_list[e];
    row.window_low = std::numeric_limits<double>::infinity();
    row.window_high = -std::numeric_limits<double>::infinity();
    std::vector<double> slopes;
    double sup_sum = 0.0, inf_sum = 0.0;
    std::size_t censored = 0;
    for (const auto& c : curves) {
      std::vector<double> ts, ys;
      for (std::size_t k = 0; k < t_list.size(); ++k) {
        const DecayPoint& p = c.at(e, k);
        if (p.censored) {
          ++censored;
          continue;
        }
        ts.push_back(p.t);
        ys.push_back(-std::log(p.mass.estimate));
      }
      if (ts.size() < 3) continue;
      slopes.push_back(lsq_slope(ts, ys));
      double hi = -std::numeric_limits<double>::infinity(), lo = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const double s = (ys[k + 1] - ys[k]) / (ts[k + 1] - ts[k]);
        hi = std::max(hi, s);
        lo = std::min(lo, s);
      }
      sup_sum += hi;
      inf_sum += lo;
      row.window_low = std::min(row.window_low, ts.front());
      row.window_high = std::max(row.window_high, ts.back());
    }
    const std::size_t points = curves.size() * t_list.size();
    row.censored_fraction = static_cast<double>(censored) / static_cast<double>(points);
    censored_total += censored;
    points_total += points;
    if (slopes.empty()) {
      est.dropped_eps.push_back(row.eps);
      continue;
    }
    const double n = static_cast<double>(slopes.size());
    double mean = 0.0;
    for (double s : slopes) mean += s;
    mean /= n;
    double var = 0.0;
    for (double s : slopes) var += (s - mean) * (s - mean);
    row.slope = mean;
    row.stderr_ = slopes.size() > 1 ? std::sqrt(var / (n - 1.0)) / std::sqrt(n) : 0.0;
    row.centers_used = slopes.size();
    row.limsup_proxy = sup_sum / n;
    row.liminf_proxy = inf_sum / n;
    est.per_epsilon.push_back(row);
  }
  est.censored_fraction = static_cast<double>(censored_total) / static_cast<double>(points_total);
  if (est.per_epsilon.empty()) {
    throw CensoredError("every eps is fully censored: no center has 3 uncensored horizons", {});
  }
  auto sorted = est.per_epsilon;
  std::sort(sorted.begin(), sorted.end(), [](const EpsilonSlope& a, const EpsilonSlope& b) { return a.eps < b.eps; });
  if (sorted.size() == 1) {
    est.extrapolated = sorted[0].slope;
    est.extrapolated_stderr = sorted[0].stderr_;
  } else {
    est.extrapolated = 0.5 * (sorted[0].slope + sorted[1].slope);
    est.extrapolated_stderr = 0.5 * std::hypot(sorted[0].stderr_, sorted[1].stderr_);
  }
  return est;
}

EntropyEstimate brin_katok_estimate(const FlowSystem& sys, const EmpiricalMeasure& mu,
                                    const std::vector<std::size_t>& centers, const std::vector<double>& eps_list,
                                    const std::vector<double>& t_list, const BallQuery& proto, std::size_t threads) {
  if (centers.size() < 5) throw InvalidParameter("brin_katok_estimate needs at least 5 centers");
  for (std::size_t k = 1; k < t_list.size(); ++k) {
    if (!(t_list[k] > t_list[k - 1])) throw InvalidParameter("t_list must be increasing");
  }
  for (std::size_t k = 1; k < eps_list.size(); ++k) {
    if (!(eps_list[k] < eps_list[k - 1])) throw InvalidParameter("eps_list must be decreasing");
  }
  std::vector<DecayCurve> curves;
  for (std::size_t c : centers) {
    if (c >= mu.size()) throw InvalidParameter("center index outside the measure");
    MassOptions opt;
    opt.exclude_index = c;
    opt.threads = threads;
    curves.push_back(decay_curve(sys, mu, mu.atoms[c], eps_list, t_list, proto, opt));
  }
  EntropyEstimate est = estimate_from_curves(curves);
  est.variant = variant_name(proto.variant);
  double acc = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) acc += mu.weights[k] * std::abs(std::log(sys.speed(mu.atoms[k])));
  est.log_speed_mean = acc;
  return est;
}

std::vector<double> variant_spread(const std::vector<EntropyEstimate>& estimates) {
  std::vector<double> out;
  if (estimates.empty()) return out;
  for (const auto& row : estimates.front().per_epsilon) {
    double lo = row.slope, hi = row.slope;
    for (const auto& est : estimates) {
      for (const auto& other : est.per_epsilon) {
        if (other.eps == row.eps) {
          lo = std::min(lo, other.slope);
          hi = std::max(hi, other.slope);
        }
      }
    }
    out.push_back(hi - lo);
  }
  return out;
}

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::ExpansiveAtScale:
      return "ExpansiveAtScale";
    case Verdict::NotExpansiveAtScale:
      return "NotExpansiveAtScale";
    case Verdict::Inconclusive:
      return "Inconclusive";
  }
  return "?";
}

nlohmann::json ExpansivenessVerdict::to_json() const {
  nlohmann::json masses = nlohmann::json::array();
  for (const auto& m : sup_mass) masses.push_back(mass_json(m));
  return {{"eps", eps},
          {"horizons", horizons},
          {"sup_mass", masses},
          {"verdict", verdict_name(verdict)},
          {"mode", mode == ExpansivenessMode::TwoSided ? "TwoSided" : "Forward"},
          {"floor", floor}};
}

ExpansivenessVerdict expansiveness_test(const FlowSystem& sys, const EmpiricalMeasure& mu, double eps,
                                        const std::vector<std::size_t>& centers, const std::vector<double>& horizons,
                                        ExpansivenessMode mode, const BallQuery& proto, std::size_t threads) {
  if (centers.empty() || horizons.empty()) throw InvalidParameter("expansiveness_test needs centers and horizons");
  for (std::size_t k = 1; k < horizons.size(); ++k) {
    if (!(horizons[k] > horizons[k - 1])) throw InvalidParameter("horizons must be increasing");
  }
  ExpansivenessVerdict out;
  out.eps = eps;
  out.horizons = horizons;
  out.mode = mode;
  out.sup_mass.assign(horizons.size(), BallMass{});
  BallQuery q = proto;
  q.variant = mode == ExpansivenessMode::TwoSided ? Variant::GammaTwoSided : Variant::GammaForward;
  q.eps = eps;
  q.horizon = horizons.back();
  for (std::size_t c : centers) {
    if (c >= mu.size()) throw InvalidParameter("center index outside the measure");
    out.floor = std::max(out.floor, mu.weights[c]);
    q.center = mu.atoms[c];
    MassOptions opt;
    opt.threads = threads;
    const auto masses = ball_mass_profile(sys, mu, q, horizons, opt);
    for (std::size_t k = 0; k < horizons.size(); ++k) {
      if (masses[k].estimate > out.sup_mass[k].estimate || out.sup_mass[k].n_tested == 0) out.sup_mass[k] = masses[k];
    }
  }
  const BallMass& top = out.sup_mass.back();
  if (top.estimate <= out.floor * (1.0 + 1e-9)) {
    out.verdict = Verdict::ExpansiveAtScale;
  } else if (top.ci_low > 0.0 && horizons.size() >= 2) {
    const BallMass& prev = out.sup_mass[horizons.size() - 2];
    const bool overlap = top.ci_low <= prev.ci_high && prev.ci_low <= top.ci_high;
    out.verdict = overlap ? Verdict::NotExpansiveAtScale : Verdict::Inconclusive;
  } else {
    out.verdict = Verdict::Inconclusive;
  }
  return out;
}

std::string consistency_name(Consistency c) {
  switch (c) {
    case Consistency::Consistent:
      return "CONSISTENT";
    case Consistency::Contradiction:
      return "CONTRADICTION";
    case Consistency::Undetermined:
      return "UNDETERMINED";
    case Consistency::HypothesisViolated:
      return "HypothesisViolated";
  }
  return "?";
}

nlohmann::json ConsistencyReport::to_json() const {
  return {{"status", consistency_name(status)}, {"reason", reason}};
}

ConsistencyReport consistency_check(const EmpiricalMeasure& mu, const EntropyEstimate& entropy,
                                    const std::vector<ExpansivenessVerdict>& verdicts) {
  ConsistencyReport out;
  if (mu.charges_singularity()) {
    out.status = Consistency::HypothesisViolated;
    out.reason = std::to_string(mu.flagged.size()) + " atoms lie within the singular guard";
    return out;
  }
  if (verdicts.empty()) {
    out.reason = "no expansiveness verdict supplied";
    return out;
  }
  const auto smallest = std::min_element(verdicts.begin(), verdicts.end(),
                                         [](const auto& a, const auto& b) { return a.eps < b.eps; });
  const bool positive = entropy.extrapolated - 2.0 * entropy.extrapolated_stderr > 0.0;
  if (positive && smallest->verdict == Verdict::NotExpansiveAtScale) {
    out.status = Consistency::Contradiction;
    out.reason = "positive entropy estimate but the measure is not expansive at the smallest scale";
  } else if (smallest->verdict == Verdict::Inconclusive) {
    out.status = Consistency::Undetermined;
    out.reason = "expansiveness verdict is inconclusive";
  } else {
    out.status = Consistency::Consistent;
    out.reason = positive ? "positive entropy with an expansive verdict"
                          : "entropy not resolved as positive; the implication is vacuous";
  }
  return out;
}

}  // namespace rsfl
