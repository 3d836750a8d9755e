#include "chargegame/feasible_sets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "chargegame/errors.hpp"
#include "chargegame/qp.hpp"

namespace chargegame {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void append_row(Matrix& A, Vector& b, const Vector& row, double rhs) {
  const Eigen::Index m = A.rows();
  A.conservativeResize(m + 1, row.size());
  b.conservativeResize(m + 1);
  A.row(m) = row.transpose();
  b(m) = rhs;
}

Vector unit(Eigen::Index n, Eigen::Index t, double sign = 1.0) {
  Vector e = Vector::Zero(n);
  e(t) = sign;
  return e;
}

// Largest ramp-feasible profile below x_tilde: the pointwise minimum of
// x_tilde_s + r |t - s| over s, computed by two sweeps.
Vector ramp_envelope(const Vector& x_tilde, std::optional<double> ramp) {
  Vector e = x_tilde;
  if (!ramp) return e;
  for (Eigen::Index t = 1; t < e.size(); ++t) e(t) = std::min(e(t), e(t - 1) + *ramp);
  for (Eigen::Index t = e.size() - 2; t >= 0; --t) e(t) = std::min(e(t), e(t + 1) + *ramp);
  return e;
}

// Projection onto {0 <= x <= upper, sum x >= theta}: x = clip(y + mu, 0, upper)
// with the smallest mu >= 0 meeting the energy row, found by sweeping breakpoints.
Vector project_capped_simplex(const Vector& y, const Vector& upper, double theta) {
  Vector x = y.cwiseMax(0.0).cwiseMin(upper);
  if (x.sum() >= theta) return x;
  if (upper.sum() < theta) throw InfeasibleError("EV charging set is empty");
  const Eigen::Index k = y.size();
  std::vector<std::pair<double, int>> events;  // (mu, +1 enters, -1 saturates)
  events.reserve(static_cast<std::size_t>(2 * k));
  for (Eigen::Index j = 0; j < k; ++j) {
    events.emplace_back(-y(j), +1);
    events.emplace_back(upper(j) - y(j), -1);
  }
  std::sort(events.begin(), events.end());
  // total(mu) is piecewise linear; track value and slope from mu = 0.
  double mu = 0.0;
  double total = x.sum();
  int slope = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (y(j) < upper(j) && -y(j) <= 0.0 && upper(j) - y(j) > 0.0) ++slope;
  }
  for (const auto& [at, kind] : events) {
    if (at <= 0.0) continue;
    if (at > mu) {
      const double next = total + slope * (at - mu);
      if (next >= theta) break;
      total = next;
      mu = at;
    }
    slope += kind;
  }
  if (slope > 0) mu += (theta - total) / slope;
  return (y.array() + mu).cwiseMax(0.0).cwiseMin(upper.array()).matrix();
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw ValidationError(fmt::format("{} must be finite", what));
}

}  // namespace

FeasibleSet::FeasibleSet(Descriptor descriptor) : descriptor_(std::move(descriptor)) { compile(); }

std::string FeasibleSet::kind() const {
  switch (descriptor_.index()) {
    case 0: return "box";
    case 1: return "ev";
    case 2: return "polytope";
    default: return "affine_slab";
  }
}

void FeasibleSet::compile() {
  if (const auto* box = std::get_if<BoxSet>(&descriptor_)) {
    dimension_ = box->lower.size();
    if (dimension_ == 0 || box->upper.size() != dimension_) throw ValidationError("box bounds must have equal, positive length");
    if (box->lower.array().isNaN().any() || box->upper.array().isNaN().any()) throw ValidationError("box bounds are NaN");
    for (Eigen::Index t = 0; t < dimension_; ++t) {
      if (std::isfinite(box->upper(t))) append_row(A_full_, b_full_, unit(dimension_, t), box->upper(t));
      if (std::isfinite(box->lower(t))) append_row(A_full_, b_full_, unit(dimension_, t, -1.0), -box->lower(t));
    }
    if (A_full_.rows() == 0) A_full_.resize(0, dimension_);
    return;
  }

  if (const auto* ev = std::get_if<EVChargingSet>(&descriptor_)) {
    const Eigen::Index n = dimension_ = ev->x_tilde.size();
    if (n == 0) throw ValidationError("EV set needs at least one slot");
    require_finite(ev->x_tilde, "x_tilde");
    if ((ev->x_tilde.array() < 0.0).any()) throw ValidationError("x_tilde must be nonnegative");
    if (!(ev->theta >= 0.0) || !std::isfinite(ev->theta)) throw ValidationError("theta must be finite and nonnegative");
    if (ev->ramp && !(*ev->ramp > 0.0)) throw ValidationError("ramp bound must be positive");

    for (Eigen::Index t = 0; t < n; ++t) append_row(A_full_, b_full_, unit(n, t), ev->x_tilde(t));
    for (Eigen::Index t = 0; t < n; ++t) append_row(A_full_, b_full_, unit(n, t, -1.0), 0.0);
    append_row(A_full_, b_full_, -Vector::Ones(n), -ev->theta);
    if (ev->ramp) {
      for (Eigen::Index t = 0; t + 1 < n; ++t) {
        Vector row = Vector::Zero(n);
        row(t + 1) = 1.0;
        row(t) = -1.0;
        append_row(A_full_, b_full_, row, *ev->ramp);
        append_row(A_full_, b_full_, -row, *ev->ramp);
      }
    }

    ramp_active_ = ev->ramp.has_value() && *ev->ramp < ev->x_tilde.maxCoeff();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (ev->x_tilde(t) > 0.0) free_slots_.push_back(t);
    }
    const auto k = static_cast<Eigen::Index>(free_slots_.size());
    reduced_upper_.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index t = free_slots_[static_cast<std::size_t>(j)];
      double upper = ev->x_tilde(t);
      // A fixed zero neighbour turns the ramp into a bound.
      if (ramp_active_ && ((t > 0 && ev->x_tilde(t - 1) == 0.0) || (t + 1 < n && ev->x_tilde(t + 1) == 0.0))) {
        upper = std::min(upper, *ev->ramp);
      }
      reduced_upper_(j) = upper;
    }
    A_reduced_.resize(0, k);
    for (Eigen::Index j = 0; j < k; ++j) append_row(A_reduced_, b_reduced_, unit(k, j), reduced_upper_(j));
    for (Eigen::Index j = 0; j < k; ++j) append_row(A_reduced_, b_reduced_, unit(k, j, -1.0), 0.0);
    if (ev->theta > 0.0 && k > 0) append_row(A_reduced_, b_reduced_, -Vector::Ones(k), -ev->theta);
    if (ramp_active_) {
      for (Eigen::Index j = 0; j + 1 < k; ++j) {
        if (free_slots_[static_cast<std::size_t>(j + 1)] != free_slots_[static_cast<std::size_t>(j)] + 1) continue;
        Vector row = Vector::Zero(k);
        row(j + 1) = 1.0;
        row(j) = -1.0;
        append_row(A_reduced_, b_reduced_, row, *ev->ramp);
        append_row(A_reduced_, b_reduced_, -row, *ev->ramp);
      }
    }
    return;
  }

  if (const auto* poly = std::get_if<PolytopeSet>(&descriptor_)) {
    dimension_ = poly->A.cols();
    if (dimension_ == 0 || poly->A.rows() != poly->b.size()) throw ValidationError("polytope A and b are inconsistent");
    if (!poly->A.allFinite() || !poly->b.allFinite()) throw ValidationError("polytope data must be finite");
    A_full_ = poly->A;
    b_full_ = poly->b;
    return;
  }

  const auto& slab = std::get<AffineSlabSet>(descriptor_);
  const Eigen::Index n = dimension_ = slab.base.size();
  if (n < 2 || slab.v1.size() != n || slab.v2.size() != n) {
    throw ValidationError("affine slab needs base, v1, v2 of equal length >= 2");
  }
  require_finite(slab.base, "slab base");
  require_finite(slab.v1, "v1");
  require_finite(slab.v2, "v2");
  Matrix V(n, 2);
  V << slab.v1, slab.v2;
  Eigen::HouseholderQR<Matrix> qr(V);
  const Matrix Q = qr.householderQ();
  chart_U_ = Q.leftCols(2);
  const Matrix Rv = chart_U_.transpose() * V;
  if (std::abs(Rv(1, 1)) <= 1e-12 * V.norm() || std::abs(Rv(0, 0)) <= 1e-12 * V.norm()) {
    throw ValidationError("slab directions v1, v2 must be linearly independent");
  }
  const Matrix Rinv = Rv.inverse();  // coefficients c = Rinv u

  chart_A_box_.resize(0, 2);
  for (int k = 0; k < 2; ++k) {
    append_row(chart_A_box_, chart_b_box_, Rinv.row(k).transpose(), 1.0);
    append_row(chart_A_box_, chart_b_box_, -Rinv.row(k).transpose(), 0.0);
  }
  chart_A_all_ = chart_A_box_;
  chart_b_all_ = chart_b_box_;
  for (Eigen::Index t = 0; t < n; ++t) append_row(chart_A_all_, chart_b_all_, -chart_U_.row(t).transpose(), slab.base(t));

  const Matrix W = Q.rightCols(n - 2);
  const Matrix coef = Rinv * chart_U_.transpose();  // c = coef (x - base)
  const Vector coef_base = coef * slab.base;
  A_full_.resize(0, n);
  for (Eigen::Index j = 0; j < W.cols(); ++j) {
    const double rhs = W.col(j).dot(slab.base);
    append_row(A_full_, b_full_, W.col(j), rhs);
    append_row(A_full_, b_full_, -W.col(j), -rhs);
  }
  for (int k = 0; k < 2; ++k) {
    append_row(A_full_, b_full_, coef.row(k).transpose(), 1.0 + coef_base(k));
    append_row(A_full_, b_full_, -coef.row(k).transpose(), -coef_base(k));
  }
  for (Eigen::Index t = 0; t < n; ++t) append_row(A_full_, b_full_, unit(n, t, -1.0), 0.0);
}

Vector FeasibleSet::project(const Vector& y) const {
  if (y.size() != dimension_) {
    throw DimensionError(fmt::format("point has {} components, set has {}", y.size(), dimension_));
  }
  if (const auto* box = std::get_if<BoxSet>(&descriptor_)) {
    if ((box->lower.array() > box->upper.array()).any()) throw InfeasibleError("box has lower > upper");
    return y.cwiseMax(box->lower).cwiseMin(box->upper);
  }
  if (std::holds_alternative<EVChargingSet>(descriptor_)) return project_ev(y);
  if (std::holds_alternative<AffineSlabSet>(descriptor_)) return project_slab(y);

  auto result = qp::project(A_full_, b_full_, y);
  if (result.status == qp::Status::Infeasible) {
    throw InfeasibleError("polytope is empty",
                          std::vector<double>(result.certificate.data(), result.certificate.data() + result.certificate.size()));
  }
  return result.x;
}

Vector FeasibleSet::project_ev(const Vector& y) const {
  const auto& ev = std::get<EVChargingSet>(descriptor_);
  const auto k = static_cast<Eigen::Index>(free_slots_.size());
  Vector x = Vector::Zero(dimension_);
  if (k == 0) {
    if (ev.theta > 0.0) throw InfeasibleError("EV set has no charging slots but theta > 0");
    return x;
  }
  Vector yr(k);
  for (Eigen::Index j = 0; j < k; ++j) yr(j) = y(free_slots_[static_cast<std::size_t>(j)]);
  if (!ramp_active_) {
    const Vector xr = project_capped_simplex(yr, reduced_upper_, ev.theta);
    for (Eigen::Index j = 0; j < k; ++j) x(free_slots_[static_cast<std::size_t>(j)]) = xr(j);
    return x;
  }
  auto result = qp::project(A_reduced_, b_reduced_, yr);
  if (result.status == qp::Status::Infeasible) throw InfeasibleError("EV charging set is empty");
  for (Eigen::Index j = 0; j < k; ++j) x(free_slots_[static_cast<std::size_t>(j)]) = result.x(j);
  return x;
}

Vector FeasibleSet::project_slab(const Vector& y) const {
  const auto& slab = std::get<AffineSlabSet>(descriptor_);
  const Vector u0 = chart_U_.transpose() * (y - slab.base);
  auto in_chart = qp::project(chart_A_box_, chart_b_box_, u0);
  Vector x = slab.base + chart_U_ * in_chart.x;
  if ((x.array() >= -1e-14 * (1.0 + slab.base.lpNorm<Eigen::Infinity>())).all()) return x.cwiseMax(0.0);
  auto full = qp::project(chart_A_all_, chart_b_all_, u0);
  if (full.status == qp::Status::Infeasible) throw InfeasibleError("affine slab misses the nonnegative orthant");
  return (slab.base + chart_U_ * full.x).cwiseMax(0.0);
}

bool FeasibleSet::contains(const Vector& x, double tol) const {
  if (x.size() != dimension_) return false;
  if (const auto* box = std::get_if<BoxSet>(&descriptor_)) {
    return ((x.array() >= box->lower.array() - tol) && (x.array() <= box->upper.array() + tol)).all();
  }
  if (const auto* ev = std::get_if<EVChargingSet>(&descriptor_)) {
    if ((x.array() < -tol).any() || (x.array() > ev->x_tilde.array() + tol).any()) return false;
    if (x.sum() < ev->theta - tol) return false;
    if (ev->ramp) {
      for (Eigen::Index t = 0; t + 1 < x.size(); ++t) {
        if (std::abs(x(t + 1) - x(t)) > *ev->ramp + tol) return false;
      }
    }
    return true;
  }
  if (const auto* poly = std::get_if<PolytopeSet>(&descriptor_)) {
    return ((poly->A * x - poly->b).array() <= tol).all();
  }
  const auto& slab = std::get<AffineSlabSet>(descriptor_);
  const Vector rel = x - slab.base;
  const Vector u = chart_U_.transpose() * rel;
  if ((rel - chart_U_ * u).norm() > tol) return false;
  return ((chart_A_box_ * u - chart_b_box_).array() <= tol).all() && (x.array() >= -tol).all();
}

NonemptyResult FeasibleSet::check_nonempty() const {
  NonemptyResult out;
  if (const auto* box = std::get_if<BoxSet>(&descriptor_)) {
    out.nonempty = (box->lower.array() <= box->upper.array()).all();
    if (out.nonempty) out.witness = Vector::Zero(dimension_).cwiseMax(box->lower).cwiseMin(box->upper);
    return out;
  }
  if (const auto* ev = std::get_if<EVChargingSet>(&descriptor_)) {
    const Vector envelope = ramp_envelope(ev->x_tilde, ev->ramp);
    const double capacity = envelope.sum();
    out.nonempty = capacity >= ev->theta;
    if (out.nonempty) {
      if (!ev->ramp) {
        // Greedy fill in slot order.
        Vector w = Vector::Zero(dimension_);
        double remaining = ev->theta;
        for (Eigen::Index t = 0; t < dimension_ && remaining > 0.0; ++t) {
          w(t) = std::min(ev->x_tilde(t), remaining);
          remaining -= w(t);
        }
        out.witness = w;
      } else {
        out.witness = capacity > 0.0 ? Vector(envelope * (ev->theta / capacity)) : envelope;
      }
    } else {
      auto probe = qp::project_dual_active_set(A_full_, b_full_, Vector::Zero(dimension_));
      if (probe.status == qp::Status::Infeasible) out.certificate = probe.certificate;
    }
    return out;
  }
  if (std::holds_alternative<PolytopeSet>(descriptor_)) {
    auto probe = qp::project(A_full_, b_full_, Vector::Zero(dimension_));
    out.nonempty = probe.status == qp::Status::Optimal;
    if (out.nonempty) {
      out.witness = probe.x;
    } else if (probe.status == qp::Status::Infeasible) {
      out.certificate = probe.certificate;
    }
    return out;
  }
  const auto& slab = std::get<AffineSlabSet>(descriptor_);
  auto probe = qp::project(chart_A_all_, chart_b_all_, Vector::Zero(2));
  out.nonempty = probe.status == qp::Status::Optimal;
  if (out.nonempty) out.witness = (slab.base + chart_U_ * probe.x).cwiseMax(0.0);
  return out;
}

double FeasibleSet::norm_bound() const {
  if (const auto* box = std::get_if<BoxSet>(&descriptor_)) {
    return box->lower.cwiseAbs().cwiseMax(box->upper.cwiseAbs()).norm();
  }
  if (const auto* ev = std::get_if<EVChargingSet>(&descriptor_)) return ramp_envelope(ev->x_tilde, ev->ramp).norm();
  if (const auto* slab = std::get_if<AffineSlabSet>(&descriptor_)) {
    double best = 0.0;
    for (int a = 0; a < 2; ++a) {
      for (int c = 0; c < 2; ++c) best = std::max(best, (slab->base + a * slab->v1 + c * slab->v2).norm());
    }
    return best;
  }
  // Polytope: coordinate extents from projections of far points along the axes.
  const double far = 1e6 * (1.0 + b_full_.lpNorm<Eigen::Infinity>());
  Vector extent = Vector::Zero(dimension_);
  for (Eigen::Index t = 0; t < dimension_; ++t) {
    for (double sign : {1.0, -1.0}) {
      const Vector x = project(unit(dimension_, t, sign * far));
      if (std::abs(x(t)) > 1e-3 * far) return kInf;
      extent(t) = std::max(extent(t), std::abs(x(t)));
    }
  }
  return extent.norm();
}

}  // namespace chargegame
