#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "rsfl/random.hpp"

namespace rsfl {

using State = std::vector<double>;

/// Flat torus R^n / (p_1 Z x ... x p_n Z).
struct FlatTorus {
  std::vector<double> periods;
};

/// Euclidean space restricted to a trapping box [lower, upper].
struct EuclideanBox {
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Mapping torus of the doubling map: coordinates (x, u) in [0,1)^2 with the
/// identification (x, 1) ~ (2x mod 1, 0). The metric is the product of the
/// base arc metric (circumference 1) and the roof metric, evaluated across
/// the gluing line when that is shorter.
struct DoublingMappingTorus {};

class Geometry {
 public:
  enum class Kind { FlatTorus, Euclidean, DoublingMappingTorus };

  static Geometry flat_torus(std::vector<double> periods);
  static Geometry euclidean(std::vector<double> lower, std::vector<double> upper);
  static Geometry doubling_mapping_torus();

  Kind kind() const noexcept;
  std::size_t dim() const noexcept;

  double distance(std::span<const double> a, std::span<const double> b) const;

  /// Tangent vector at `a` pointing to `b` whose Euclidean norm equals
  /// distance(a, b) for nearby points.
  void difference(std::span<const double> a, std::span<const double> b,
                  std::span<double> out) const;

  /// Point a fraction `w` of the way from `a` to `b` along the short path.
  void interpolate(std::span<const double> a, std::span<const double> b, double w,
                   std::span<double> out) const;

  /// x <- exp_x(v): translation followed by reduction to the fundamental domain.
  void displace(std::span<double> x, std::span<const double> v) const;

  /// Reduces coordinates to the fundamental domain (mod periods, gluing).
  void normalize(std::span<double> x) const;

  bool contains(std::span<const double> x) const;

  void sample_uniform(Rng& rng, std::span<double> out) const;

  nlohmann::json to_json() const;

  const std::variant<FlatTorus, EuclideanBox, DoublingMappingTorus>& model() const noexcept {
    return model_;
  }

 private:
  explicit Geometry(std::variant<FlatTorus, EuclideanBox, DoublingMappingTorus> m)
      : model_(std::move(m)) {}

  std::variant<FlatTorus, EuclideanBox, DoublingMappingTorus> model_;
};

/// Doubling of a base coordinate in [0,1), computed through the unit circle
/// so that repeated application yields a pseudo-orbit instead of the binary
/// shift collapse x -> 0 that exact floating-point 2x mod 1 suffers.
double double_base(double x);

/// The preimage branch x/2 in [0, 1/2) used for backward time.
double half_base(double x);

}  // namespace rsfl
