#include "rsfl/geometry.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>

#include "rsfl/error.hpp"

namespace rsfl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double wrap_signed(double d, double period) {
  return d - period * std::nearbyint(d / period);
}

double reduce_mod(double x, double period) {
  double r = x - period * std::floor(x / period);
  if (r >= period || r < 0.0) r = 0.0;
  return r;
}

// Representation of b relative to a on the doubling mapping torus.
// which: 0 = same sheet, 1 = a pushed across the roof, 2 = b pushed across.
struct GluedOffset {
  int which;
  double dx;
  double du;
  double norm;
};

GluedOffset doubling_offset(std::span<const double> a, std::span<const double> b) {
  const double xa = a[0], ua = a[1], xb = b[0], ub = b[1];
  GluedOffset best{0, wrap_signed(xb - xa, 1.0), ub - ua, 0.0};
  best.norm = std::hypot(best.dx, best.du);

  const double dx1 = wrap_signed(xb - 2.0 * xa, 1.0);
  const double du1 = ub - (ua - 1.0);
  const double n1 = std::hypot(dx1, du1);
  if (n1 < best.norm) best = {1, dx1, du1, n1};

  const double dx2 = wrap_signed(2.0 * xb - xa, 1.0);
  const double du2 = (ub - 1.0) - ua;
  const double n2 = std::hypot(dx2, du2);
  if (n2 < best.norm) best = {2, dx2, du2, n2};
  return best;
}

void normalize_doubling(std::span<double> x) {
  x[0] = reduce_mod(x[0], 1.0);
  while (x[1] >= 1.0) {
    x[1] -= 1.0;
    x[0] = double_base(x[0]);
  }
  while (x[1] < 0.0) {
    x[1] += 1.0;
    x[0] = half_base(x[0]);
  }
}

}  // namespace

double double_base(double x) {
  const double angle = 2.0 * std::numbers::pi * x;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  double y = std::atan2(2.0 * c * s, c * c - s * s) / (2.0 * std::numbers::pi);
  if (y < 0.0) y += 1.0;
  if (y >= 1.0) y = 0.0;
  return y;
}

double half_base(double x) { return 0.5 * reduce_mod(x, 1.0); }

Geometry Geometry::flat_torus(std::vector<double> periods) {
  if (periods.empty()) throw InvalidParameter("flat torus needs at least one period");
  for (double p : periods) {
    if (!(p > 0.0) || !std::isfinite(p)) throw InvalidParameter("torus periods must be positive");
  }
  return Geometry(FlatTorus{std::move(periods)});
}

Geometry Geometry::euclidean(std::vector<double> lower, std::vector<double> upper) {
  if (lower.empty() || lower.size() != upper.size()) {
    throw InvalidParameter("trapping box bounds must have equal nonzero length");
  }
  for (std::size_t k = 0; k < lower.size(); ++k) {
    if (!(lower[k] < upper[k])) throw InvalidParameter("trapping box lower bound must be < upper");
  }
  return Geometry(EuclideanBox{std::move(lower), std::move(upper)});
}

Geometry Geometry::doubling_mapping_torus() { return Geometry(DoublingMappingTorus{}); }

Geometry::Kind Geometry::kind() const noexcept {
  return std::visit(overloaded{[](const FlatTorus&) { return Kind::FlatTorus; },
                               [](const EuclideanBox&) { return Kind::Euclidean; },
                               [](const DoublingMappingTorus&) { return Kind::DoublingMappingTorus; }},
                    model_);
}

std::size_t Geometry::dim() const noexcept {
  return std::visit(overloaded{[](const FlatTorus& t) { return t.periods.size(); },
                               [](const EuclideanBox& b) { return b.lower.size(); },
                               [](const DoublingMappingTorus&) { return std::size_t{2}; }},
                    model_);
}

double Geometry::distance(std::span<const double> a, std::span<const double> b) const {
  return std::visit(overloaded{[&](const FlatTorus& t) {
                                 double s = 0.0;
                                 for (std::size_t k = 0; k < t.periods.size(); ++k) {
                                   const double d = wrap_signed(b[k] - a[k], t.periods[k]);
                                   s += d * d;
                                 }
                                 return std::sqrt(s);
                               },
                               [&](const EuclideanBox& box) {
                                 double s = 0.0;
                                 for (std::size_t k = 0; k < box.lower.size(); ++k) {
                                   const double d = b[k] - a[k];
                                   s += d * d;
                                 }
                                 return std::sqrt(s);
                               },
                               [&](const DoublingMappingTorus&) { return doubling_offset(a, b).norm; }},
                    model_);
}

void Geometry::difference(std::span<const double> a, std::span<const double> b,
                          std::span<double> out) const {
  std::visit(overloaded{[&](const FlatTorus& t) {
                          for (std::size_t k = 0; k < t.periods.size(); ++k) {
                            out[k] = wrap_signed(b[k] - a[k], t.periods[k]);
                          }
                        },
                        [&](const EuclideanBox& box) {
                          for (std::size_t k = 0; k < box.lower.size(); ++k) out[k] = b[k] - a[k];
                        },
                        [&](const DoublingMappingTorus&) {
                          const GluedOffset g = doubling_offset(a, b);
                          out[0] = g.dx;
                          out[1] = g.du;
                        }},
             model_);
}

void Geometry::interpolate(std::span<const double> a, std::span<const double> b, double w,
                           std::span<double> out) const {
  if (kind() != Kind::DoublingMappingTorus) {
    const std::size_t n = dim();
    std::vector<double> v(n);
    difference(a, b, v);
    for (std::size_t k = 0; k < n; ++k) out[k] = a[k] + w * v[k];
    normalize(out);
    return;
  }
  const GluedOffset g = doubling_offset(a, b);
  switch (g.which) {
    case 0:
      out[0] = a[0] + w * g.dx;
      out[1] = a[1] + w * g.du;
      break;
    case 1:
      // Walk forward from a in its own (pre-gluing) sheet; the base offset
      // is halved because crossing the roof doubles it.
      out[0] = a[0] + w * 0.5 * g.dx;
      out[1] = a[1] + w * g.du;
      break;
    default: {
      // b precedes a across the roof: walk forward from b.
      const double dx = wrap_signed(a[0] - 2.0 * b[0], 1.0);
      const double du = a[1] + 1.0 - b[1];
      out[0] = b[0] + (1.0 - w) * 0.5 * dx;
      out[1] = b[1] + (1.0 - w) * du;
      break;
    }
  }
  normalize_doubling(out);
}

void Geometry::displace(std::span<double> x, std::span<const double> v) const {
  for (std::size_t k = 0; k < dim(); ++k) x[k] += v[k];
  normalize(x);
}

void Geometry::normalize(std::span<double> x) const {
  std::visit(overloaded{[&](const FlatTorus& t) {
                          for (std::size_t k = 0; k < t.periods.size(); ++k) {
                            x[k] = reduce_mod(x[k], t.periods[k]);
                          }
                        },
                        [&](const EuclideanBox&) {}, [&](const DoublingMappingTorus&) { normalize_doubling(x); }},
             model_);
}

bool Geometry::contains(std::span<const double> x) const {
  for (double c : x) {
    if (!std::isfinite(c)) return false;
  }
  if (const auto* box = std::get_if<EuclideanBox>(&model_)) {
    for (std::size_t k = 0; k < box->lower.size(); ++k) {
      if (x[k] < box->lower[k] || x[k] > box->upper[k]) return false;
    }
  }
  return true;
}

void Geometry::sample_uniform(Rng& rng, std::span<double> out) const {
  std::visit(overloaded{[&](const FlatTorus& t) {
                          for (std::size_t k = 0; k < t.periods.size(); ++k) {
                            out[k] = rng.uniform(0.0, t.periods[k]);
                          }
                        },
                        [&](const EuclideanBox& box) {
                          for (std::size_t k = 0; k < box.lower.size(); ++k) {
                            out[k] = rng.uniform(box.lower[k], box.upper[k]);
                          }
                        },
                        [&](const DoublingMappingTorus&) {
                          out[0] = rng.uniform();
                          out[1] = rng.uniform();
                        }},
             model_);
}

nlohmann::json Geometry::to_json() const {
  return std::visit(
      overloaded{[](const FlatTorus& t) { return nlohmann::json{{"kind", "flat_torus"}, {"periods", t.periods}}; },
                 [](const EuclideanBox& b) {
                   return nlohmann::json{{"kind", "euclidean"}, {"lower", b.lower}, {"upper", b.upper}};
                 },
                 [](const DoublingMappingTorus&) {
                   return nlohmann::json{{"kind", "doubling_mapping_torus"}, {"gluing", "(x,1)~(2x,0)"}};
                 }},
      model_);
}

}  // namespace rsfl
