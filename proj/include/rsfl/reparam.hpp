#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace rsfl {

struct Knot {
  double s;
  double h;
};

enum class ClassTag { AnyC00, Rep, RepAlpha, RepAlphaStar };

struct ReparamClass {
  ClassTag tag = ClassTag::Rep;
  double alpha = 0.0;

  static ReparamClass any() { return {ClassTag::AnyC00, 0.0}; }
  static ReparamClass rep() { return {ClassTag::Rep, 0.0}; }
  static ReparamClass rep_alpha(double alpha);
  static ReparamClass rep_alpha_star(double alpha);

  bool slope_constrained() const noexcept {
    return tag == ClassTag::RepAlpha || tag == ClassTag::RepAlphaStar;
  }
  std::string label() const;
  static ReparamClass parse(const std::string& label, double alpha);
};

/// Continuous piecewise-linear h with h(0) = 0, extended affinely past the
/// first and last knots.
class PiecewiseLinearReparam {
 public:
  explicit PiecewiseLinearReparam(std::vector<Knot> knots);

  static PiecewiseLinearReparam identity(double extent = 1.0);

  double operator()(double s) const;
  const std::vector<Knot>& knots() const noexcept { return knots_; }
  double first_s() const noexcept { return knots_.front().s; }
  double last_s() const noexcept { return knots_.back().s; }
  std::vector<double> slopes() const;

  nlohmann::json to_json() const;
  static PiecewiseLinearReparam from_json(const nlohmann::json& j);

 private:
  std::vector<Knot> knots_;
};

/// Result of classify: which tags hold on the stored knot range.
struct ClassSet {
  bool rep = false;
  /// max over segments of |slope - 1|.
  double alpha_bound = 0.0;

  bool contains(const ReparamClass& c) const;
  std::vector<std::string> tags(const std::vector<double>& alphas) const;
};

inline constexpr double kSlopeTolerance = 1e-12;

ClassSet classify(const PiecewiseLinearReparam& h);

/// Increasing PL map through anchors (nT, h(nT)). The anchors must sit on
/// consecutive multiples of T, include (0, 0), and increase strictly.
PiecewiseLinearReparam boost_to_monotone(std::vector<Knot> anchors, double T);

/// Interpolates h between its values at the multiples of b in [t_min, t_max].
PiecewiseLinearReparam linearize_blocks(const PiecewiseLinearReparam& h, double b, double t_max,
                                        double t_min = 0.0);

/// s -> h1(h2(s)).
PiecewiseLinearReparam compose(const PiecewiseLinearReparam& h1, const PiecewiseLinearReparam& h2);

PiecewiseLinearReparam invert(const PiecewiseLinearReparam& h);

}  // namespace rsfl
