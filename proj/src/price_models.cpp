#include "chargegame/price_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "chargegame/errors.hpp"

namespace chargegame {

namespace {

// Iterates produced by projections may sit a few ulps below zero.
constexpr double kArgumentSlack = 1e-12;

double clamp_argument(double y) {
  if (y < -kArgumentSlack || std::isnan(y)) {
    throw DomainError(fmt::format("price argument {} is outside [0, inf)", y));
  }
  return std::max(y, 0.0);
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double monomial_derivative(double alpha, double k, double y) {
  if (y == 0.0) {
    if (k > 1.0) return 0.0;
    if (k == 1.0) return alpha;
    throw DomainError(fmt::format("monomial of degree {} is not differentiable at 0", k));
  }
  return alpha * k * std::pow(y, k - 1.0);
}

// l(y) + l'(y) y, the marginal social price of a slot.
double marginal_social(const ScalarPrice& l, double y) {
  return std::visit(Overloaded{
                        [](const ConstantPrice& c) { return c.c; },
                        [y](const AffinePrice& a) { return 2.0 * a.a * y + a.b; },
                        [y](const MonomialPrice& m) { return m.alpha * (m.k + 1.0) * std::pow(y, m.k); },
                        [](const PriceSchedule&) -> double { throw DomainError("unresolved price schedule"); },
                    },
                    l.variant());
}

struct DerivativeRange {
  double inf = 0.0;
  double sup = 0.0;
};

DerivativeRange analytic_derivative_range(const ScalarPrice& l, double lo, double hi) {
  return std::visit(
      Overloaded{
          [](const ConstantPrice&) { return DerivativeRange{0.0, 0.0}; },
          [](const AffinePrice& a) { return DerivativeRange{a.a, a.a}; },
          [lo, hi](const MonomialPrice& m) {
            if (m.k >= 1.0) {
              return DerivativeRange{monomial_derivative(m.alpha, m.k, lo), monomial_derivative(m.alpha, m.k, hi)};
            }
            const double top =
                lo > 0.0 ? monomial_derivative(m.alpha, m.k, lo) : std::numeric_limits<double>::infinity();
            return DerivativeRange{monomial_derivative(m.alpha, m.k, hi), top};
          },
          [](const PriceSchedule&) -> DerivativeRange { throw DomainError("unresolved price schedule"); },
      },
      l.variant());
}

std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(points) + 1);
  if (hi <= lo) {
    grid.push_back(lo);
    return grid;
  }
  const double start = lo > 0.0 ? lo : hi * 1e-9;
  if (lo == 0.0) grid.push_back(0.0);
  const double ratio = std::log(hi / start);
  for (int i = 0; i < points; ++i) {
    grid.push_back(start * std::exp(ratio * i / (points - 1)));
  }
  grid.back() = hi;
  return grid;
}

double spectral_norm(const Matrix& A) {
  Eigen::JacobiSVD<Matrix> svd(A);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

double min_symmetric_eigenvalue(const Matrix& A) {
  const Matrix sym = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

}  // namespace

// ---------------------------------------------------------------- ScalarPrice

ScalarPrice ScalarPrice::schedule(std::vector<std::pair<std::pair<int, int>, ScalarPrice>> pieces) {
  PriceSchedule s;
  for (auto& [range, price] : pieces) {
    s.pieces.push_back({range.first, range.second, std::make_shared<const ScalarPrice>(std::move(price))});
  }
  return ScalarPrice(std::move(s));
}

const ScalarPrice& ScalarPrice::at_slot(int slot) const {
  const auto* s = std::get_if<PriceSchedule>(&v_);
  if (s == nullptr) return *this;
  for (const auto& piece : s->pieces) {
    if (slot >= piece.first_slot && slot <= piece.last_slot) return piece.price->at_slot(slot);
  }
  throw DomainError(fmt::format("price schedule does not cover slot {}", slot));
}

double ScalarPrice::value(double y, int slot) const {
  y = clamp_argument(y);
  return std::visit(Overloaded{
                        [](const ConstantPrice& c) { return c.c; },
                        [y](const AffinePrice& a) { return a.a * y + a.b; },
                        [y](const MonomialPrice& m) { return m.alpha * std::pow(y, m.k); },
                        [&](const PriceSchedule&) { return at_slot(slot).value(y, slot); },
                    },
                    v_);
}

double ScalarPrice::derivative(double y, int slot) const {
  y = clamp_argument(y);
  return std::visit(Overloaded{
                        [](const ConstantPrice&) { return 0.0; },
                        [](const AffinePrice& a) { return a.a; },
                        [y](const MonomialPrice& m) { return monomial_derivative(m.alpha, m.k, y); },
                        [&](const PriceSchedule&) { return at_slot(slot).derivative(y, slot); },
                    },
                    v_);
}

std::optional<MonomialPrice> ScalarPrice::as_positive_monomial() const {
  if (const auto* m = std::get_if<MonomialPrice>(&v_); m != nullptr && m->alpha > 0.0 && m->k > 0.0) {
    return *m;
  }
  if (const auto* a = std::get_if<AffinePrice>(&v_); a != nullptr && a->a > 0.0 && a->b == 0.0) {
    return MonomialPrice{a->a, 1.0};
  }
  if (const auto* s = std::get_if<PriceSchedule>(&v_); s != nullptr) {
    // A schedule is a single monomial only if every piece is the same one.
    std::optional<MonomialPrice> common;
    for (const auto& piece : s->pieces) {
      auto m = piece.price->as_positive_monomial();
      if (!m) return std::nullopt;
      if (common && (common->alpha != m->alpha || common->k != m->k)) return std::nullopt;
      common = m;
    }
    return common;
  }
  return std::nullopt;
}

void ScalarPrice::validate() const {
  std::visit(Overloaded{
                 [](const ConstantPrice& c) {
                   if (!(c.c >= 0.0)) throw ValidationError(fmt::format("constant price {} is negative", c.c));
                 },
                 [](const AffinePrice& a) {
                   if (!(a.a >= 0.0) || !(a.b >= 0.0)) {
                     throw ValidationError(
                         fmt::format("affine price {}*y + {} must have nonnegative coefficients", a.a, a.b));
                   }
                 },
                 [](const MonomialPrice& m) {
                   if (!(m.alpha > 0.0) || !(m.k > 0.0)) {
                     throw ValidationError(
                         fmt::format("monomial price {}*y^{} needs alpha > 0 and k > 0", m.alpha, m.k));
                   }
                 },
                 [](const PriceSchedule& s) {
                   if (s.pieces.empty()) throw ValidationError("price schedule has no pieces");
                   for (const auto& piece : s.pieces) {
                     if (piece.first_slot < 1 || piece.last_slot < piece.first_slot || !piece.price) {
                       throw ValidationError(fmt::format("invalid schedule range [{}, {}]", piece.first_slot,
                                                         piece.last_slot));
                     }
                     piece.price->validate();
                   }
                 },
             },
             v_);
}

std::vector<ScalarPrice> ScalarPrice::members() const {
  const auto* s = std::get_if<PriceSchedule>(&v_);
  if (s == nullptr) return {*this};
  std::vector<ScalarPrice> out;
  for (const auto& piece : s->pieces) {
    auto sub = piece.price->members();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::string ScalarPrice::describe() const {
  return std::visit(Overloaded{
                        [](const ConstantPrice& c) { return fmt::format("{}", c.c); },
                        [](const AffinePrice& a) { return fmt::format("{}*y + {}", a.a, a.b); },
                        [](const MonomialPrice& m) { return fmt::format("{}*y^{}", m.alpha, m.k); },
                        [](const PriceSchedule& s) {
                          std::string out = "schedule{";
                          for (std::size_t i = 0; i < s.pieces.size(); ++i) {
                            const auto& p = s.pieces[i];
                            out += fmt::format("{}[{}..{}]: {}", i ? "; " : "", p.first_slot, p.last_slot,
                                               p.price->describe());
                          }
                          return out + "}";
                        },
                    },
                    v_);
}

// -------------------------------------------------------------- PriceFunction

PriceFunction PriceFunction::homogeneous(const ScalarPrice& f, int n) {
  return heterogeneous(std::vector<ScalarPrice>(static_cast<std::size_t>(n), f));
}

std::optional<int> PriceFunction::dimension() const {
  if (const auto* lin = std::get_if<LinearPriceModel>(&v_)) return static_cast<int>(lin->C.rows());
  if (const auto* het = std::get_if<HeterogeneousPriceModel>(&v_)) return static_cast<int>(het->components.size());
  return std::nullopt;
}

double PriceFunction::component_value(int t, double y) const {
  if (const auto* m = std::get_if<MonomialPriceModel>(&v_)) return m->alpha * std::pow(clamp_argument(y), m->k);
  if (const auto* h = std::get_if<HeterogeneousPriceModel>(&v_)) {
    return h->components.at(static_cast<std::size_t>(t)).value(y, t + 1);
  }
  throw DomainError("linear prices are not separable");
}

double PriceFunction::component_derivative(int t, double y) const {
  if (const auto* m = std::get_if<MonomialPriceModel>(&v_)) {
    return monomial_derivative(m->alpha, m->k, clamp_argument(y));
  }
  if (const auto* h = std::get_if<HeterogeneousPriceModel>(&v_)) {
    return h->components.at(static_cast<std::size_t>(t)).derivative(y, t + 1);
  }
  throw DomainError("linear prices are not separable");
}

Vector PriceFunction::evaluate(const Vector& y) const {
  if (const auto dim = dimension(); dim && *dim != y.size()) {
    throw DimensionError(fmt::format("price expects {} components, got {}", *dim, y.size()));
  }
  if (const auto* lin = std::get_if<LinearPriceModel>(&v_)) return lin->C * y;
  Vector out(y.size());
  for (Eigen::Index t = 0; t < y.size(); ++t) out(t) = component_value(static_cast<int>(t), y(t));
  return out;
}

Matrix PriceFunction::jacobian(const Vector& y) const {
  if (const auto dim = dimension(); dim && *dim != y.size()) {
    throw DimensionError(fmt::format("price expects {} components, got {}", *dim, y.size()));
  }
  if (const auto* lin = std::get_if<LinearPriceModel>(&v_)) return lin->C.transpose();
  Matrix out = Matrix::Zero(y.size(), y.size());
  for (Eigen::Index t = 0; t < y.size(); ++t) out(t, t) = component_derivative(static_cast<int>(t), y(t));
  return out;
}

std::string PriceFunction::describe() const {
  return std::visit(Overloaded{
                        [](const LinearPriceModel& l) { return fmt::format("linear({}x{})", l.C.rows(), l.C.cols()); },
                        [](const MonomialPriceModel& m) { return fmt::format("monomial({}*y^{})", m.alpha, m.k); },
                        [](const HeterogeneousPriceModel& h) {
                          return fmt::format("heterogeneous({} slots)", h.components.size());
                        },
                    },
                    v_);
}

// ---------------------------------------------------------------- assumptions

bool AssumptionReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return !c.applicable || c.passed; });
}

const AssumptionCheck* AssumptionReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

bool AssumptionReport::strongly_monotone() const {
  const auto* c = find("strong_monotonicity");
  return c != nullptr && c->passed;
}

AssumptionReport validate_assumptions(const PriceFunction& p, const DomainBox& box) {
  AssumptionReport report;
  auto add = [&](std::string name, bool applicable, bool passed, std::string detail) {
    report.checks.push_back({std::move(name), applicable, passed, std::move(detail)});
  };

  if (const auto* lin = std::get_if<LinearPriceModel>(&p.variant())) {
    const Matrix& C = lin->C;
    if (C.rows() != C.cols() || C.rows() == 0) {
      add("linear_symmetric_pd", true, false, "C must be a nonempty square matrix");
      add("strong_monotonicity", true, false, "C must be a nonempty square matrix");
      return report;
    }
    const double asym = (C - C.transpose()).norm();
    const double lmin = min_symmetric_eigenvalue(C);
    const bool symmetric = asym <= 1e-12 * std::max(1.0, C.norm());
    add("linear_symmetric_pd", true, symmetric && lmin > 0.0,
        fmt::format("||C - C^T|| = {:.3g}, lambda_min(sym C) = {:.6g}", asym, lmin));
    add("strong_monotonicity", true, lmin > 0.0, fmt::format("lambda_min(sym C) = {:.6g}", lmin));
    add("strong_convexity_social", true, lmin > 0.0, "Hessian C + C^T");
    return report;
  }

  if (const auto* mono = std::get_if<MonomialPriceModel>(&p.variant())) {
    const bool ok = mono->alpha > 0.0 && mono->k > 0.0;
    const std::string detail = fmt::format("f(y) = {}*y^{}", mono->alpha, mono->k);
    add("positive_monomial", true, ok, detail);
    add("strong_monotonicity", true, ok, ok ? "f' > 0 on (0, inf)" : detail);
    add("strong_convexity_social", true, ok, ok ? "(k+1) f' > 0 on (0, inf)" : detail);
    return report;
  }

  const auto& het = std::get<HeterogeneousPriceModel>(p.variant());
  const auto n = static_cast<Eigen::Index>(het.components.size());
  if (box.lower.size() != n || box.upper.size() != n) {
    throw DimensionError(fmt::format("domain box must have {} components", n));
  }
  constexpr int kGrid = 201;
  bool monotone_ok = true;
  double min_slope = std::numeric_limits<double>::infinity();
  double min_social_slope = std::numeric_limits<double>::infinity();
  std::string monotone_detail = "nonnegative and nondecreasing on the sample grid";
  for (Eigen::Index t = 0; t < n && monotone_ok; ++t) {
    const auto& l = het.components[static_cast<std::size_t>(t)];
    try {
      l.validate();
      l.at_slot(static_cast<int>(t) + 1);
    } catch (const Error& e) {
      monotone_ok = false;
      monotone_detail = fmt::format("slot {}: {}", t + 1, e.what());
      break;
    }
    const double lo = std::max(box.lower(t), 0.0);
    const double hi = std::max(box.upper(t), lo);
    double prev_value = -std::numeric_limits<double>::infinity();
    double prev_social = 0.0;
    double prev_y = 0.0;
    for (int g = 0; g < kGrid; ++g) {
      const double y = lo + (hi - lo) * g / (kGrid - 1);
      const double v = l.value(y, static_cast<int>(t) + 1);
      const double social = v * y;
      if (v < 0.0 || v < prev_value) {
        monotone_ok = false;
        monotone_detail = fmt::format("slot {} decreases or is negative near y = {}", t + 1, y);
        break;
      }
      if (g > 0 && y > prev_y) {
        min_slope = std::min(min_slope, (v - prev_value) / (y - prev_y));
        min_social_slope = std::min(min_social_slope, social - prev_social);
      }
      prev_value = v;
      prev_social = social;
      prev_y = y;
    }
    try {
      for (int g = 0; g < kGrid; ++g) {
        const double y = lo + (hi - lo) * g / (kGrid - 1);
        min_slope = std::min(min_slope, l.derivative(y, static_cast<int>(t) + 1));
      }
    } catch (const DomainError&) {
      // Infinite slope at 0 is still increasing.
    }
  }
  add("nondecreasing_nonnegative", true, monotone_ok, monotone_detail);
  const bool strong = monotone_ok && min_slope > 0.0;
  add("strong_monotonicity", true, strong, fmt::format("min sampled slope {:.6g}", min_slope));
  add("strong_convexity_social", true, strong,
      strong ? "l' > 0 implies (l(y) y)'' >= 2 l' > 0 for convex pieces" : "needs l' > 0");
  return report;
}

// ------------------------------------------------------------------ constants

double ConstantsEstimate::average_gap_bound(long M) const {
  if (!monotone()) return std::numeric_limits<double>::infinity();
  return std::sqrt(2.0 * R * R * L_p / (alpha_mono * static_cast<double>(M)));
}

double sampled_derivative_sup(const ScalarPrice& l, int slot, double lo, double hi, int points) {
  double sup = 0.0;
  for (double y : log_grid(lo, hi, points)) {
    sup = std::max(sup, l.derivative(y, slot));
  }
  return sup;
}

ConstantsEstimate estimate_constants(const PriceFunction& p, double R, const Vector& d, double J_hat,
                                     const Vector& kappa_in, ConstantsMethod method) {
  if (!(R > 0.0)) throw ValidationError("R must be positive");
  if (!(J_hat >= 0.0)) throw ValidationError("J_hat must be nonnegative");
  const Eigen::Index n = d.size();
  const Vector kappa = kappa_in.size() == 0 ? Vector::Ones(n) : kappa_in;
  if (kappa.size() != n) throw DimensionError("kappa and d must have equal length");
  if ((kappa.array() <= 0.0).any()) throw ValidationError("kappa must be positive");

  ConstantsEstimate out;
  out.R = R;
  out.J_hat = J_hat;

  if (const auto* lin = std::get_if<LinearPriceModel>(&p.variant())) {
    if (lin->C.rows() != n || lin->C.cols() != n) throw DimensionError("C does not match the length of d");
    const Matrix A = lin->C * kappa.cwiseInverse().asDiagonal();
    out.L_p = spectral_norm(A);
    out.alpha_mono = std::max(0.0, min_symmetric_eigenvalue(A));
    out.L_S = spectral_norm(A + A.transpose()) * (R + d.norm());
  } else {
    double L_p = 0.0;
    double alpha = std::numeric_limits<double>::infinity();
    double social_sq = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
      const int slot = static_cast<int>(t) + 1;
      const ScalarPrice l = std::visit(
          Overloaded{
              [](const MonomialPriceModel& m) { return ScalarPrice::monomial(m.alpha, m.k); },
              [&](const HeterogeneousPriceModel& h) {
                if (h.components.size() != static_cast<std::size_t>(n)) {
                  throw DimensionError("price components do not match the length of d");
                }
                return h.components[static_cast<std::size_t>(t)].at_slot(slot);
              },
              [](const LinearPriceModel&) -> ScalarPrice { throw DomainError("unreachable"); },
          },
          p.variant());
      const double lo = d(t) / kappa(t);
      const double hi = (R + d(t)) / kappa(t);
      double sup = 0.0;
      double inf = 0.0;
      double social = 0.0;
      if (method == ConstantsMethod::Analytic) {
        const auto range = analytic_derivative_range(l, lo, hi);
        sup = range.sup;
        inf = range.inf;
        social = marginal_social(l, hi);
      } else {
        double s_inf = std::numeric_limits<double>::infinity();
        double s_sup = 0.0;
        double g_sup = 0.0;
        for (double y : log_grid(lo, hi, kConstantsSamplePoints)) {
          double deriv = std::numeric_limits<double>::infinity();
          try {
            deriv = l.derivative(y, slot);
          } catch (const DomainError&) {
          }
          s_inf = std::min(s_inf, deriv);
          s_sup = std::max(s_sup, deriv);
          g_sup = std::max(g_sup, l.value(y, slot) + (std::isfinite(deriv) ? deriv * y : 0.0));
        }
        sup = s_sup * kSampledSafetyFactor;
        inf = s_inf / kSampledSafetyFactor;
        social = g_sup * kSampledSafetyFactor;
      }
      L_p = std::max(L_p, sup / kappa(t));
      alpha = std::min(alpha, inf / kappa(t));
      social_sq += social * social;
    }
    out.L_p = L_p;
    out.alpha_mono = n > 0 ? alpha : 0.0;
    out.L_S = std::sqrt(social_sq);
  }

  out.c = out.monotone() ? R * out.L_S * std::sqrt(2.0 * out.L_p / out.alpha_mono)
                         : std::numeric_limits<double>::infinity();
  return out;
}

// -------------------------------------------------------------- anarchy value

std::vector<ScalarPrice> AnarchyClass::representatives() const {
  switch (kind) {
    case Kind::Members: {
      std::vector<ScalarPrice> out;
      for (const auto& m : members) {
        auto flat = m.members();
        out.insert(out.end(), flat.begin(), flat.end());
      }
      return out;
    }
    case Kind::Affine:
      return {ScalarPrice::affine(1.0, 0.0), ScalarPrice::constant(1.0)};
    case Kind::Monomial:
      return {ScalarPrice::monomial(1.0, degree)};
    case Kind::Polynomial: {
      std::vector<ScalarPrice> out{ScalarPrice::constant(1.0)};
      for (int k = 1; k <= static_cast<int>(std::floor(degree)); ++k) out.push_back(ScalarPrice::monomial(1.0, k));
      return out;
    }
  }
  return {};
}

double anarchy_inner_max(const ScalarPrice& l, double v) {
  return std::visit(Overloaded{
                        [](const ConstantPrice&) { return 0.0; },
                        [v](const AffinePrice& a) { return a.a * v * v / 4.0; },
                        [v](const MonomialPrice& m) {
                          return m.alpha * std::pow(v, m.k + 1.0) * m.k / std::pow(m.k + 1.0, 1.0 + 1.0 / m.k);
                        },
                        [&](const PriceSchedule&) { return anarchy_inner_max_numeric(l, v); },
                    },
                    l.variant());
}

double anarchy_inner_max_numeric(const ScalarPrice& l, double v) {
  // For w > v the bracket is nonpositive, so the maximizer lies in [0, v].
  const double lv = l.value(v);
  auto h = [&](double w) { return (lv - l.value(w)) * w; };
  constexpr int kScan = 256;
  int best = 0;
  double best_val = 0.0;
  for (int i = 0; i <= kScan; ++i) {
    const double val = h(v * i / kScan);
    if (val > best_val) {
      best_val = val;
      best = i;
    }
  }
  double a = v * std::max(0, best - 1) / kScan;
  double b = v * std::min(kScan, best + 1) / kScan;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double e = a + inv_phi * (b - a);
  double hc = h(c);
  double he = h(e);
  for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, v); ++it) {
    if (hc > he) {
      b = e;
      e = c;
      he = hc;
      c = b - inv_phi * (b - a);
      hc = h(c);
    } else {
      a = c;
      c = e;
      hc = he;
      e = a + inv_phi * (b - a);
      he = h(e);
    }
  }
  return std::max({best_val, hc, he});
}

AnarchyValue anarchy_value(const AnarchyClass& cls, const AnarchyOptions& opt) {
  const auto reps = cls.representatives();
  if (reps.empty()) throw ValidationError("price class is empty");
  for (const auto& l : reps) l.validate();
  if (!(opt.v_min > 0.0) || !(opt.v_cap > opt.v_min) || opt.v_points < 2) {
    throw ValidationError("anarchy grid needs 0 < v_min < v_cap and at least 2 points");
  }

  double beta = 0.0;
  const double ratio = std::log(opt.v_cap / opt.v_min);
  for (const auto& l : reps) {
    for (int i = 0; i < opt.v_points; ++i) {
      const double v = opt.v_min * std::exp(ratio * i / (opt.v_points - 1));
      const double denom = v * l.value(v);
      // v with v l(v) = 0 is excluded from the supremum.
      if (!(denom > 0.0)) continue;
      beta = std::max(beta, anarchy_inner_max(l, v) / denom);
    }
  }
  AnarchyValue out;
  out.beta = beta;
  out.alpha = beta >= 1.0 - opt.eps ? std::numeric_limits<double>::infinity() : 1.0 / (1.0 - beta);
  return out;
}

}  // namespace chargegame
