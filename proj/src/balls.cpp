#include "rsfl/balls.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "rsfl/constants.hpp"
#include "rsfl/error.hpp"

namespace rsfl {

namespace {

constexpr double kUnreached = -std::numeric_limits<double>::infinity();
constexpr double kPlateauFloor = 1e-9;

struct DpOutcome {
  bool complete = false;
  long reached_row = -1;
  double margin = 0.0;
  /// Entry column per row 0..N (only when complete and a path was requested).
  std::vector<std::size_t> path;
};

struct Row {
  std::size_t lo = 0;
  std::vector<double> val;
  std::vector<std::uint16_t> run;
  std::vector<std::uint8_t> pred;

  bool reachable(std::size_t j) const { return j >= lo && j < lo + val.size() && val[j - lo] > kUnreached; }
  double at(std::size_t j) const { return reachable(j) ? val[j - lo] : kUnreached; }
};

// Trims a freshly computed row to its reachable span; returns false if empty.
bool trim(Row& row) {
  std::size_t first = row.val.size(), last = 0;
  for (std::size_t k = 0; k < row.val.size(); ++k) {
    if (row.val[k] > kUnreached) {
      first = std::min(first, k);
      last = k;
    }
  }
  if (first == row.val.size()) return false;
  row.val = std::vector<double>(row.val.begin() + static_cast<std::ptrdiff_t>(first),
                                row.val.begin() + static_cast<std::ptrdiff_t>(last + 1));
  if (!row.run.empty()) {
    row.run = std::vector<std::uint16_t>(row.run.begin() + static_cast<std::ptrdiff_t>(first),
                                         row.run.begin() + static_cast<std::ptrdiff_t>(last + 1));
  }
  row.pred = std::vector<std::uint8_t>(row.pred.begin() + static_cast<std::ptrdiff_t>(first),
                                       row.pred.begin() + static_cast<std::ptrdiff_t>(last + 1));
  row.lo += first;
  return true;
}

std::size_t best_cell(const Row& row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.val.size(); ++k) {
    if (row.val[k] > row.val[best]) best = k;
  }
  return row.lo + best;
}

// Monotone lattice matching. Moves: (i+1, j), (i+1, j+1), and up to jmax
// in-row advances (i, j) -> (i, j+1). pred codes: 0 from (i-1, j),
// 1 from (i-1, j-1), 2 from (i, j-1), 3 origin.
template <class SlackFn>
DpOutcome lattice_dp(std::size_t n_rows, std::size_t n_cols, std::size_t jmax, SlackFn&& slack, bool want_path) {
  DpOutcome out;
  std::vector<Row> rows;
  rows.reserve(want_path ? n_rows + 1 : 2);

  const double s00 = slack(0, 0);
  if (s00 < 0.0) {
    out.margin = s00;
    return out;
  }
  Row cur;
  cur.lo = 0;
  cur.val.push_back(s00);
  cur.run.push_back(0);
  cur.pred.push_back(3);
  for (std::size_t j = 1; j <= std::min(n_cols, jmax); ++j) {
    const double s = slack(0, j);
    if (s < 0.0) break;
    cur.val.push_back(std::min(s, cur.val.back()));
    cur.run.push_back(static_cast<std::uint16_t>(j));
    cur.pred.push_back(2);
  }
  out.reached_row = 0;

  for (std::size_t i = 1; i <= n_rows; ++i) {
    const Row& prev = cur;
    const std::size_t prev_hi = prev.lo + prev.val.size() - 1;
    if (prev_hi >= n_cols) {
      throw InsufficientHorizon("matched orbit reached the end of the reparametrized trajectory");
    }
    Row next;
    next.lo = prev.lo;
    const std::size_t hi = std::min(n_cols, prev_hi + 1 + jmax);
    const std::size_t width = hi - next.lo + 1;
    next.val.assign(width, kUnreached);
    next.run.assign(width, 0);
    next.pred.assign(width, 0);
    double best_slack = -std::numeric_limits<double>::infinity();
    for (std::size_t j = next.lo; j <= hi; ++j) {
      const std::size_t k = j - next.lo;
      const double stay = prev.at(j);
      const double diag = j > 0 ? prev.at(j - 1) : kUnreached;
      const bool entry = stay > kUnreached || diag > kUnreached;
      const bool inrow = k > 0 && next.val[k - 1] > kUnreached && next.run[k - 1] < jmax;
      if (!entry && !inrow) {
        if (j > prev_hi + 1) break;
        continue;
      }
      const double s = slack(i, j);
      best_slack = std::max(best_slack, s);
      if (s < 0.0) continue;
      if (entry) {
        next.val[k] = std::min(s, std::max(stay, diag));
        next.run[k] = 0;
        next.pred[k] = stay >= diag ? 0 : 1;
      } else {
        next.val[k] = std::min(s, next.val[k - 1]);
        next.run[k] = static_cast<std::uint16_t>(next.run[k - 1] + 1);
        next.pred[k] = 2;
      }
    }
    if (!trim(next)) {
      out.margin = best_slack;
      return out;
    }
    out.reached_row = static_cast<long>(i);
    if (want_path) rows.push_back(std::move(cur));
    cur = std::move(next);
  }

  out.complete = true;
  const std::size_t jstar = best_cell(cur);
  out.margin = cur.at(jstar);
  if (want_path) {
    rows.push_back(std::move(cur));
    out.path.assign(n_rows + 1, 0);
    std::size_t j = jstar;
    for (std::size_t i = n_rows + 1; i-- > 0;) {
      const Row& r = rows[i];
      while (r.pred[j - r.lo] == 2) --j;
      out.path[i] = j;
      const std::uint8_t p = r.pred[j - r.lo];
      if (p == 1) --j;
    }
  }
  return out;
}

// Slope-constrained matching on the fine grid: h(i dt) = k dt / q and each
// row advances k by an amount in [dmin, dmax]. pred stores the advance.
template <class SlackFn>
DpOutcome slope_dp(std::size_t n_rows, std::size_t n_fine, std::size_t dmin, std::size_t dmax, SlackFn&& slack,
                   bool want_path) {
  DpOutcome out;
  std::vector<Row> rows;
  rows.reserve(want_path ? n_rows + 1 : 2);

  const double s00 = slack(0, 0);
  if (s00 < 0.0) {
    out.margin = s00;
    return out;
  }
  Row cur;
  cur.val.push_back(s00);
  cur.pred.push_back(0);
  out.reached_row = 0;

  for (std::size_t i = 1; i <= n_rows; ++i) {
    const Row& prev = cur;
    const std::size_t prev_hi = prev.lo + prev.val.size() - 1;
    if (prev_hi + dmax > n_fine) {
      throw InsufficientHorizon("matched orbit reached the end of the reparametrized trajectory");
    }
    Row next;
    next.lo = prev.lo + dmin;
    const std::size_t hi = prev_hi + dmax;
    next.val.assign(hi - next.lo + 1, kUnreached);
    next.pred.assign(hi - next.lo + 1, 0);
    double best_slack = -std::numeric_limits<double>::infinity();
    for (std::size_t k = next.lo; k <= hi; ++k) {
      double best = kUnreached;
      std::uint8_t arg = 0;
      for (std::size_t d = dmin; d <= dmax && d <= k; ++d) {
        const double v = prev.at(k - d);
        if (v > best) {
          best = v;
          arg = static_cast<std::uint8_t>(d);
        }
      }
      if (best == kUnreached) continue;
      const double s = slack(i, k);
      best_slack = std::max(best_slack, s);
      if (s < 0.0) continue;
      next.val[k - next.lo] = std::min(s, best);
      next.pred[k - next.lo] = arg;
    }
    if (!trim(next)) {
      out.margin = best_slack;
      return out;
    }
    out.reached_row = static_cast<long>(i);
    if (want_path) rows.push_back(std::move(cur));
    cur = std::move(next);
  }

  out.complete = true;
  std::size_t k = best_cell(cur);
  out.margin = cur.at(k);
  if (want_path) {
    rows.push_back(std::move(cur));
    out.path.assign(n_rows + 1, 0);
    for (std::size_t i = n_rows + 1; i-- > 0;) {
      out.path[i] = k;
      if (i > 0) k -= rows[i].pred[k - rows[i].lo];
    }
  }
  return out;
}

// Knots (sign * i * dt, sign * h_i) with plateaus lifted to a tiny slope.
std::vector<Knot> path_knots(const std::vector<double>& h, double dt, double sign) {
  std::vector<Knot> knots;
  knots.reserve(h.size());
  double last = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    double v = h[i];
    if (i > 0) v = std::max(v, last + kPlateauFloor * dt);
    if (i == 0) v = 0.0;
    last = v;
    knots.push_back({sign * static_cast<double>(i) * dt, sign * v});
  }
  return knots;
}

MatchResult merge_two_sided(MatchResult fwd, const MatchResult& bwd) {
  MatchResult out;
  out.member = fwd.member && bwd.member;
  out.horizon = fwd.horizon;
  out.reached = std::min(fwd.reached, bwd.reached);
  if (out.member) {
    out.margin = std::min(fwd.margin, bwd.margin);
  } else if (!fwd.member && !bwd.member) {
    out.margin = fwd.reached <= bwd.reached ? fwd.margin : bwd.margin;
  } else {
    out.margin = fwd.member ? bwd.margin : fwd.margin;
  }
  out.raw_path = std::move(fwd.raw_path);
  if (out.member && fwd.witness && bwd.witness) {
    std::vector<Knot> knots;
    for (const Knot& k : bwd.witness->knots()) {
      if (k.s < 0.0) knots.push_back(k);
    }
    for (const Knot& k : fwd.witness->knots()) knots.push_back(k);
    out.witness = PiecewiseLinearReparam(std::move(knots));
  }
  return out;
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::B1:
      return "B1";
    case Variant::B2:
      return "B2";
    case Variant::B3:
      return "B3";
    case Variant::GammaTwoSided:
      return "GammaTwoSided";
    case Variant::GammaForward:
      return "GammaForward";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "B1" || name == "1") return Variant::B1;
  if (name == "B2" || name == "2") return Variant::B2;
  if (name == "B3" || name == "3") return Variant::B3;
  if (name == "GammaTwoSided" || name == "Gamma") return Variant::GammaTwoSided;
  if (name == "GammaForward" || name == "GammaPlus") return Variant::GammaForward;
  throw InvalidParameter("unknown ball variant '" + name + "'");
}

BallOracle::BallOracle(const FlowSystem& sys, BallQuery query)
    : sys_(&sys), q_(std::move(query)), center_fwd_(sys, q_.center, q_.dt > 0.0 ? q_.dt : 1.0) {
  if (!(q_.eps > 0.0) || !std::isfinite(q_.eps)) throw InvalidParameter("ball radius eps must be positive");
  if (!(q_.dt > 0.0)) throw InvalidParameter("ball grid step dt must be positive");
  if (!(q_.horizon >= q_.dt * (1.0 - 1e-12))) throw InvalidParameter("ball horizon must be >= dt");
  if (q_.h_resolution < 1) throw InvalidParameter("h_resolution must be >= 1");
  if (!(q_.alpha_max > 0.0)) throw InvalidParameter("alpha_max must be positive");

  const double speed = sys.speed(q_.center);
  if (!(speed > 0.0) || speed < sys.s_min) {
    throw SingularCenter("ball center is within the singular guard (speed " + std::to_string(speed) + ")");
  }

  const bool bowen2or3 = q_.variant == Variant::B2 || q_.variant == Variant::B3;
  if (bowen2or3 && q_.reparam_class.tag == ClassTag::AnyC00) {
    throw InvalidParameter("B2/B3 balls need a class from Rep, RepAlpha, RepAlphaStar");
  }
  if (q_.reparam_class.tag == ClassTag::AnyC00) q_.reparam_class = ReparamClass::rep();
  slope_ = q_.variant != Variant::B1 && q_.reparam_class.slope_constrained();
  if (slope_ && q_.h_resolution < 2) throw InvalidParameter("slope matching needs h_resolution >= 2");

  rows_ = static_cast<std::size_t>(std::llround(q_.horizon / q_.dt));
  const double stretch = std::max(q_.alpha_max, slope_ ? q_.reparam_class.alpha : 0.0);
  cols_ = static_cast<std::size_t>(std::ceil(((1.0 + stretch) * q_.horizon + 3.0 * q_.eps) / q_.dt));
  cols_ = std::max(cols_, rows_ + 1);
  j_max_ = q_.j_max.value_or(static_cast<std::size_t>(std::ceil(3.0 * q_.eps / q_.dt - 1e-9)));
  j_max_ = std::clamp<std::size_t>(j_max_, 1, 60000);

  if (slope_) {
    double L = 0.0;
    if (q_.lipschitz) {
      L = *q_.lipschitz;
    } else if (sys.lipschitz_hint) {
      L = *sys.lipschitz_hint;
    } else {
      L = estimate_lipschitz(sys, 200, 0x11b5c1ULL);
    }
    q_.lipschitz = L;
    kappa_ = L * q_.dt;
  }

  center_fwd_.extend_to(q_.variant == Variant::B2 ? cols_ + 1 : rows_);
  if (q_.variant == Variant::GammaTwoSided) {
    center_bwd_.emplace(sys, q_.center, q_.dt, Direction::Backward);
    center_bwd_->extend_to(rows_);
  }
}

bool BallOracle::prefilter(std::span<const double> y) const {
  return sys_->geometry.distance(center_fwd_.state(0), y) <= q_.eps * center_fwd_.speed(0) * (1.0 + kappa_);
}

MatchResult BallOracle::test(std::span<const double> y, bool want_witness) const {
  if (y.size() != sys_->dim()) throw InvalidParameter("candidate point has the wrong dimension");
  if (q_.variant == Variant::B1) return run_b1(y);
  MatchResult fwd = run_dp(y, Direction::Forward, want_witness);
  if (q_.variant != Variant::GammaTwoSided) return fwd;
  if (fwd.reached < 0.0) return fwd;
  MatchResult bwd = run_dp(y, Direction::Backward, want_witness);
  return merge_two_sided(std::move(fwd), bwd);
}

MatchResult BallOracle::run_b1(std::span<const double> y) const {
  MatchResult out;
  out.horizon = q_.horizon;
  const double dt = q_.dt;
  const auto& geo = sys_->geometry;
  double margin = std::numeric_limits<double>::infinity();
  if (!prefilter(y)) {
    const double r = q_.eps * center_fwd_.speed(0);
    out.margin = (r - geo.distance(center_fwd_.state(0), y)) / r;
    out.reached = -dt;
    return out;
  }
  OrbitStream ys(*sys_, y, dt, Direction::Forward);
  for (std::size_t i = 0; i <= rows_; ++i) {
    ys.extend_to(i);
    const double r = q_.eps * center_fwd_.speed(i);
    const double s = (r - geo.distance(center_fwd_.state(i), ys.state(i))) / r;
    if (s < 0.0) {
      out.margin = s;
      out.reached = (static_cast<double>(i) - 1.0) * dt;
      return out;
    }
    margin = std::min(margin, s);
  }
  out.member = true;
  out.margin = margin;
  out.reached = static_cast<double>(rows_) * dt;
  out.witness = PiecewiseLinearReparam::identity(out.reached);
  return out;
}

MatchResult BallOracle::run_dp(std::span<const double> y, Direction dir, bool want_witness) const {
  MatchResult out;
  out.horizon = q_.horizon;
  const double dt = q_.dt;
  const auto& geo = sys_->geometry;
  const OrbitStream& center = dir == Direction::Forward ? center_fwd_ : *center_bwd_;
  const bool y_rows = q_.variant == Variant::B2;
  const double sign = dir == Direction::Forward ? 1.0 : -1.0;

  if (!prefilter(y)) {
    const double r = q_.eps * center.speed(0) * (1.0 + kappa_);
    out.margin = (r - geo.distance(center.state(0), y)) / r;
    out.reached = -dt;
    return out;
  }
  OrbitStream ys(*sys_, y, dt, dir);

  DpOutcome dp;
  std::vector<double> h;
  if (!slope_) {
    auto slack = [&](std::size_t i, std::size_t j) {
      const std::size_t ci = y_rows ? j : i;
      const std::size_t yi = y_rows ? i : j;
      ys.extend_to(yi);
      const double r = q_.eps * center.speed(ci);
      return (r - geo.distance(center.state(ci), ys.state(yi))) / r;
    };
    dp = lattice_dp(rows_, cols_, j_max_, slack, want_witness);
    for (std::size_t j : dp.path) h.push_back(static_cast<double>(j) * dt);
  } else {
    const auto q = static_cast<std::size_t>(q_.h_resolution);
    const double alpha = q_.reparam_class.alpha;
    const auto dmin = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(q) - 1e-9));
    const auto dmax = static_cast<std::size_t>(std::floor((1.0 + alpha) * static_cast<double>(q) + 1e-9));
    const double inflate = 1.0 + kappa_;
    std::vector<double> buf(sys_->dim());
    auto slack = [&](std::size_t i, std::size_t k) {
      const std::size_t base = k / q;
      const double w = static_cast<double>(k % q) / static_cast<double>(q);
      if (y_rows) {
        ys.extend_to(i);
        std::span<const double> xs = center.state(base);
        double speed = center.speed(base);
        if (w > 0.0) {
          geo.interpolate(center.state(base), center.state(base + 1), w, buf);
          xs = buf;
          speed = (1.0 - w) * center.speed(base) + w * center.speed(base + 1);
        }
        const double r = q_.eps * speed * inflate;
        return (r - geo.distance(xs, ys.state(i))) / r;
      }
      ys.extend_to(base + 1);
      std::span<const double> yk = ys.state(base);
      if (w > 0.0) {
        geo.interpolate(ys.state(base), ys.state(base + 1), w, buf);
        yk = buf;
      }
      const double r = q_.eps * center.speed(i) * inflate;
      return (r - geo.distance(center.state(i), yk)) / r;
    };
    dp = slope_dp(rows_, cols_ * q, dmin, dmax, slack, want_witness);
    for (std::size_t k : dp.path) h.push_back(static_cast<double>(k) * dt / static_cast<double>(q));
  }

  out.member = dp.complete;
  out.margin = dp.margin;
  out.reached = static_cast<double>(dp.reached_row) * dt;
  if (out.member && want_witness) {
    out.raw_path = h;
    if (slope_) {
      std::vector<Knot> knots;
      for (std::size_t i = 0; i < h.size(); ++i) knots.push_back({sign * static_cast<double>(i) * dt, sign * h[i]});
      knots[0].h = 0.0;
      if (sign < 0.0) std::reverse(knots.begin(), knots.end());
      out.witness = PiecewiseLinearReparam(std::move(knots));
    } else {
      auto knots = path_knots(h, dt, sign);
      if (sign < 0.0) std::reverse(knots.begin(), knots.end());
      out.witness = PiecewiseLinearReparam(std::move(knots));
    }
  }
  return out;
}

MatchResult b1_member(const FlowSystem& sys, const BallQuery& q, std::span<const double> y) {
  if (q.variant != Variant::B1) throw InvalidParameter("b1_member needs a B1 query");
  return BallOracle(sys, q).test(y);
}

MatchResult monotone_member(const FlowSystem& sys, const BallQuery& q, std::span<const double> y) {
  if (q.variant != Variant::B2 && q.variant != Variant::B3) {
    throw InvalidParameter("monotone_member needs a B2 or B3 query");
  }
  BallQuery mq = q;
  if (mq.reparam_class.slope_constrained()) mq.reparam_class = ReparamClass::rep();
  return BallOracle(sys, mq).test(y);
}

MatchResult slope_member(const FlowSystem& sys, const BallQuery& q, std::span<const double> y) {
  if (!q.reparam_class.slope_constrained()) {
    throw InvalidParameter("slope_member needs a RepAlpha or RepAlphaStar class");
  }
  if (q.variant == Variant::B1) throw InvalidParameter("slope_member does not apply to B1");
  return BallOracle(sys, q).test(y);
}

MatchResult gamma_member(const FlowSystem& sys, const BallQuery& q, std::span<const double> y) {
  if (q.variant != Variant::GammaTwoSided && q.variant != Variant::GammaForward) {
    throw InvalidParameter("gamma_member needs a Gamma query");
  }
  return BallOracle(sys, q).test(y);
}

MatchResult member(const FlowSystem& sys, const BallQuery& q, std::span<const double> y) {
  return BallOracle(sys, q).test(y);
}

nlohmann::json to_json(const BallQuery& q) {
  nlohmann::json j{{"variant", variant_name(q.variant)},
                   {"center", q.center},
                   {"eps", q.eps},
                   {"horizon", q.horizon},
                   {"class", q.reparam_class.slope_constrained()
                                 ? (q.reparam_class.tag == ClassTag::RepAlpha ? "RepAlpha" : "RepAlphaStar")
                                 : (q.reparam_class.tag == ClassTag::Rep ? "Rep" : "AnyC00")},
                   {"dt", q.dt},
                   {"h_resolution", q.h_resolution},
                   {"alpha_max", q.alpha_max}};
  if (q.reparam_class.slope_constrained()) j["alpha"] = q.reparam_class.alpha;
  if (q.j_max) j["j_max"] = *q.j_max;
  if (q.lipschitz) j["lipschitz"] = *q.lipschitz;
  return j;
}

BallQuery query_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("ball query must be a JSON object");
  BallQuery q;
  try {
    q.variant = parse_variant(j.value("variant", std::string("B1")));
    q.center = j.at("center").get<State>();
    q.eps = j.at("eps").get<double>();
    q.horizon = j.at("horizon").get<double>();
    q.reparam_class = ReparamClass::parse(j.value("class", std::string("Rep")), j.value("alpha", 0.5));
    q.dt = j.value("dt", 0.01);
    q.h_resolution = j.value("h_resolution", 4);
    q.alpha_max = j.value("alpha_max", 0.9);
    if (j.contains("j_max")) q.j_max = j.at("j_max").get<std::size_t>();
    if (j.contains("lipschitz")) q.lipschitz = j.at("lipschitz").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ball query: ") + e.what());
  }
  return q;
}

nlohmann::json to_json(const MatchResult& r) {
  nlohmann::json j{{"member", r.member}, {"margin", r.margin}, {"horizon", r.horizon}, {"reached", r.reached}};
  if (r.witness) j["witness"] = r.witness->to_json();
  return j;
}

}  // namespace rsfl
