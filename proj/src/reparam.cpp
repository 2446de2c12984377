#include "rsfl/reparam.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rsfl/error.hpp"
#include "rsfl/format.hpp"

namespace rsfl {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("alpha must lie in (0, 1)");
}

std::vector<Knot> dedup_sorted(std::vector<Knot> knots) {
  std::sort(knots.begin(), knots.end(), [](const Knot& a, const Knot& b) { return a.s < b.s; });
  std::vector<Knot> out;
  for (const Knot& k : knots) {
    if (!out.empty() && std::abs(k.s - out.back().s) <= 1e-14 * std::max(1.0, std::abs(k.s))) {
      if (k.s == 0.0) out.back() = k;
      continue;
    }
    out.push_back(k);
  }
  return out;
}

}  // namespace

ReparamClass ReparamClass::rep_alpha(double alpha) {
  check_alpha(alpha);
  return {ClassTag::RepAlpha, alpha};
}

ReparamClass ReparamClass::rep_alpha_star(double alpha) {
  check_alpha(alpha);
  return {ClassTag::RepAlphaStar, alpha};
}

std::string ReparamClass::label() const {
  switch (tag) {
    case ClassTag::AnyC00:
      return "AnyC00";
    case ClassTag::Rep:
      return "Rep";
    case ClassTag::RepAlpha:
      return "RepAlpha(" + format_double(alpha) + ")";
    case ClassTag::RepAlphaStar:
      return "RepAlphaStar(" + format_double(alpha) + ")";
  }
  return "?";
}

ReparamClass ReparamClass::parse(const std::string& label, double alpha) {
  if (label == "AnyC00" || label == "C00") return any();
  if (label == "Rep") return rep();
  if (label == "RepAlpha") return rep_alpha(alpha);
  if (label == "RepAlphaStar") return rep_alpha_star(alpha);
  throw InvalidParameter("unknown reparametrization class '" + label + "'");
}

PiecewiseLinearReparam::PiecewiseLinearReparam(std::vector<Knot> knots) : knots_(std::move(knots)) {
  if (knots_.size() < 2) throw InvalidParameter("a reparametrization needs at least two knots");
  bool has_origin = false;
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    if (!std::isfinite(knots_[k].s) || !std::isfinite(knots_[k].h)) {
      throw InvalidParameter("reparametrization knots must be finite");
    }
    if (k > 0 && !(knots_[k].s > knots_[k - 1].s)) {
      throw InvalidParameter("reparametrization knots must have strictly increasing s");
    }
    if (knots_[k].s == 0.0) {
      if (knots_[k].h != 0.0) throw InvalidParameter("reparametrization must satisfy h(0) = 0");
      has_origin = true;
    }
  }
  if (!has_origin) throw InvalidParameter("reparametrization knots must contain (0, 0)");
}

PiecewiseLinearReparam PiecewiseLinearReparam::identity(double extent) {
  return PiecewiseLinearReparam({{0.0, 0.0}, {extent, extent}});
}

double PiecewiseLinearReparam::operator()(double s) const {
  std::size_t k;
  if (s <= knots_.front().s) {
    k = 0;
  } else if (s >= knots_.back().s) {
    k = knots_.size() - 2;
  } else {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), s,
                                     [](double v, const Knot& kn) { return v < kn.s; });
    k = static_cast<std::size_t>(it - knots_.begin()) - 1;
  }
  const Knot& a = knots_[k];
  const Knot& b = knots_[k + 1];
  if (s == a.s) return a.h;
  if (s == b.s) return b.h;
  return a.h + (b.h - a.h) * (s - a.s) / (b.s - a.s);
}

std::vector<double> PiecewiseLinearReparam::slopes() const {
  std::vector<double> out;
  out.reserve(knots_.size() - 1);
  for (std::size_t k = 0; k + 1 < knots_.size(); ++k) {
    out.push_back((knots_[k + 1].h - knots_[k].h) / (knots_[k + 1].s - knots_[k].s));
  }
  return out;
}

nlohmann::json PiecewiseLinearReparam::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const Knot& k : knots_) arr.push_back({k.s, k.h});
  return {{"knots", arr}};
}

PiecewiseLinearReparam PiecewiseLinearReparam::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("knots") || !j.at("knots").is_array()) {
    throw FormatError("reparametrization JSON needs a 'knots' array");
  }
  std::vector<Knot> knots;
  for (const auto& pair : j.at("knots")) {
    if (!pair.is_array() || pair.size() != 2) throw FormatError("each knot must be [s, h]");
    knots.push_back({pair[0].get<double>(), pair[1].get<double>()});
  }
  return PiecewiseLinearReparam(std::move(knots));
}

bool ClassSet::contains(const ReparamClass& c) const {
  switch (c.tag) {
    case ClassTag::AnyC00:
      return true;
    case ClassTag::Rep:
      return rep;
    case ClassTag::RepAlpha:
      return alpha_bound <= c.alpha + kSlopeTolerance;
    case ClassTag::RepAlphaStar:
      return rep && alpha_bound <= c.alpha + kSlopeTolerance;
  }
  return false;
}

std::vector<std::string> ClassSet::tags(const std::vector<double>& alphas) const {
  std::vector<std::string> out{"AnyC00"};
  if (rep) out.emplace_back("Rep");
  for (double a : alphas) {
    if (contains(ReparamClass::rep_alpha(a))) out.push_back(ReparamClass::rep_alpha(a).label());
    if (contains(ReparamClass::rep_alpha_star(a))) out.push_back(ReparamClass::rep_alpha_star(a).label());
  }
  return out;
}

ClassSet classify(const PiecewiseLinearReparam& h) {
  ClassSet out;
  out.rep = true;
  for (double m : h.slopes()) {
    if (!(m > 0.0)) out.rep = false;
    out.alpha_bound = std::max(out.alpha_bound, std::abs(m - 1.0));
  }
  return out;
}

PiecewiseLinearReparam boost_to_monotone(std::vector<Knot> anchors, double T) {
  if (!(T > 0.0)) throw InvalidParameter("boost_to_monotone: T must be positive");
  if (anchors.size() < 2) throw InvalidParameter("boost_to_monotone: need at least two anchors");
  std::sort(anchors.begin(), anchors.end(), [](const Knot& a, const Knot& b) { return a.s < b.s; });
  bool has_origin = false;
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const double n = anchors[k].s / T;
    if (std::abs(n - std::nearbyint(n)) > 1e-9) {
      throw InvalidParameter("boost_to_monotone: anchor s-values must be multiples of T");
    }
    anchors[k].s = std::nearbyint(n) * T;
    if (k > 0 && std::abs(anchors[k].s - anchors[k - 1].s - T) > 1e-9 * T) {
      throw InvalidParameter("boost_to_monotone: anchors must be consecutive multiples of T");
    }
    if (anchors[k].s == 0.0) {
      if (anchors[k].h != 0.0) throw InvalidParameter("boost_to_monotone: h(0) must be 0");
      has_origin = true;
    }
  }
  if (!has_origin) throw InvalidParameter("boost_to_monotone: anchors must include s = 0");
  for (std::size_t k = 1; k < anchors.size(); ++k) {
    if (!(anchors[k].h > anchors[k - 1].h)) {
      std::ostringstream os;
      os << "anchors not strictly increasing: h(" << anchors[k].s << ")=" << anchors[k].h << " <= h("
         << anchors[k - 1].s << ")=" << anchors[k - 1].h;
      throw NonMonotoneAnchors(os.str());
    }
  }
  return PiecewiseLinearReparam(std::move(anchors));
}

PiecewiseLinearReparam linearize_blocks(const PiecewiseLinearReparam& h, double b, double t_max, double t_min) {
  if (!(b > 0.0)) throw InvalidParameter("linearize_blocks: b must be positive");
  if (!(t_min <= 0.0 && t_max >= 0.0)) throw InvalidParameter("linearize_blocks: range must contain 0");
  const auto k_lo = static_cast<long>(std::ceil(t_min / b - 1e-12));
  const auto k_hi = static_cast<long>(std::floor(t_max / b + 1e-12));
  std::vector<Knot> knots;
  if (t_min < k_lo * b - 1e-12 * b) knots.push_back({t_min, h(t_min)});
  for (long k = k_lo; k <= k_hi; ++k) {
    const double s = static_cast<double>(k) * b;
    knots.push_back({s, k == 0 ? 0.0 : h(s)});
  }
  if (t_max > k_hi * b + 1e-12 * b) knots.push_back({t_max, h(t_max)});
  if (knots.size() < 2) knots.push_back({b, h(b)});
  return PiecewiseLinearReparam(std::move(knots));
}

PiecewiseLinearReparam compose(const PiecewiseLinearReparam& h1, const PiecewiseLinearReparam& h2) {
  const auto& k2 = h2.knots();
  std::vector<double> breaks;
  for (const Knot& k : k2) breaks.push_back(k.s);
  const auto slopes2 = h2.slopes();
  for (std::size_t seg = 0; seg < slopes2.size(); ++seg) {
    const double m = slopes2[seg];
    if (m == 0.0) continue;
    const bool first = seg == 0;
    const bool last = seg + 1 == slopes2.size();
    for (const Knot& target : h1.knots()) {
      const double s = k2[seg].s + (target.s - k2[seg].h) / m;
      const bool in_left = first || s >= k2[seg].s;
      const bool in_right = last || s <= k2[seg + 1].s;
      if (in_left && in_right && std::isfinite(s)) breaks.push_back(s);
    }
  }
  std::vector<Knot> knots;
  knots.reserve(breaks.size());
  for (double s : breaks) knots.push_back({s, s == 0.0 ? 0.0 : h1(h2(s))});
  return PiecewiseLinearReparam(dedup_sorted(std::move(knots)));
}

PiecewiseLinearReparam invert(const PiecewiseLinearReparam& h) {
  if (!classify(h).rep) throw InvalidParameter("invert: reparametrization is not increasing");
  std::vector<Knot> knots;
  for (const Knot& k : h.knots()) knots.push_back({k.h, k.s});
  return PiecewiseLinearReparam(std::move(knots));
}

}  // namespace rsfl
