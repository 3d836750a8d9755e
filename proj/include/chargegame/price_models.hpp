#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "chargegame/linalg.hpp"

namespace chargegame {

class ScalarPrice;

/// l(y) = c
struct ConstantPrice {
  double c = 0.0;
};

/// l(y) = a*y + b
struct AffinePrice {
  double a = 0.0;
  double b = 0.0;
};

/// l(y) = alpha * y^k
struct MonomialPrice {
  double alpha = 1.0;
  double k = 1.0;
};

/// Hour-indexed schedule: slot t (1-based) uses the first piece whose
/// inclusive range [first_slot, last_slot] contains t.
struct PriceSchedule {
  struct Piece {
    int first_slot = 1;
    int last_slot = 1;
    std::shared_ptr<const ScalarPrice> price;
  };
  std::vector<Piece> pieces;
};

/// Scalar price l : [0, inf) -> [0, inf) attached to one time slot.
///
/// Descriptors are plain values; nothing is validated on construction.
/// `validate()` and the consumers that need a valid price (games, anarchy
/// values) check nonnegativity and monotonicity.
class ScalarPrice {
 public:
  using Variant = std::variant<ConstantPrice, AffinePrice, MonomialPrice, PriceSchedule>;

  ScalarPrice() = default;
  ScalarPrice(Variant v) : v_(std::move(v)) {}  // NOLINT(google-explicit-constructor)

  static ScalarPrice constant(double c) { return ScalarPrice(ConstantPrice{c}); }
  static ScalarPrice affine(double a, double b) { return ScalarPrice(AffinePrice{a, b}); }
  static ScalarPrice monomial(double alpha, double k) { return ScalarPrice(MonomialPrice{alpha, k}); }
  static ScalarPrice schedule(std::vector<std::pair<std::pair<int, int>, ScalarPrice>> pieces);

  const Variant& variant() const { return v_; }
  bool is_schedule() const { return std::holds_alternative<PriceSchedule>(v_); }

  /// The non-schedule price that applies at `slot`. Throws DomainError when
  /// a schedule does not cover the slot.
  const ScalarPrice& at_slot(int slot) const;

  /// l(y). Slot is only consulted by schedules.
  double value(double y, int slot = 1) const;
  /// dl/dy, right-hand derivative at y = 0. Throws DomainError where it is infinite.
  double derivative(double y, int slot = 1) const;

  /// Returns (alpha, k) when l(y) = alpha*y^k with alpha > 0 and k > 0.
  std::optional<MonomialPrice> as_positive_monomial() const;

  /// Throws ValidationError unless every piece is nonnegative and nondecreasing on [0, inf).
  void validate() const;

  /// Flattens schedules into the list of distinct non-schedule members.
  std::vector<ScalarPrice> members() const;

  std::string describe() const;

 private:
  Variant v_ = ConstantPrice{0.0};
};

/// p(y) = C y
struct LinearPriceModel {
  Matrix C;
};

/// p(y)_t = alpha * y_t^k for every t
struct MonomialPriceModel {
  double alpha = 1.0;
  double k = 1.0;
};

/// p(y)_t = l_t(y_t)
struct HeterogeneousPriceModel {
  std::vector<ScalarPrice> components;
};

/// Price map p : R^n -> R^n. Jacobians use the convention
/// [jacobian(y)]_{i,j} = d p_j / d y_i.
class PriceFunction {
 public:
  using Variant = std::variant<LinearPriceModel, MonomialPriceModel, HeterogeneousPriceModel>;

  PriceFunction() = default;
  PriceFunction(Variant v) : v_(std::move(v)) {}  // NOLINT(google-explicit-constructor)

  static PriceFunction linear(Matrix C) { return PriceFunction(LinearPriceModel{std::move(C)}); }
  static PriceFunction monomial(double alpha, double k) { return PriceFunction(MonomialPriceModel{alpha, k}); }
  static PriceFunction heterogeneous(std::vector<ScalarPrice> components) {
    return PriceFunction(HeterogeneousPriceModel{std::move(components)});
  }
  /// Same scalar price f in every one of n slots.
  static PriceFunction homogeneous(const ScalarPrice& f, int n);

  const Variant& variant() const { return v_; }
  bool is_linear() const { return std::holds_alternative<LinearPriceModel>(v_); }
  /// True when p_t depends only on y_t.
  bool is_separable() const { return !is_linear(); }

  /// Fixed dimension of the model, or nullopt when it applies to any n.
  std::optional<int> dimension() const;

  Vector evaluate(const Vector& y) const;
  Matrix jacobian(const Vector& y) const;

  /// Scalar price of slot t (0-based); only for separable models.
  double component_value(int t, double y) const;
  double component_derivative(int t, double y) const;

  std::string describe() const;

 private:
  Variant v_ = MonomialPriceModel{};
};

struct AssumptionCheck {
  std::string name;
  bool applicable = true;
  bool passed = false;
  std::string detail;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;

  /// All applicable checks passed.
  bool all_passed() const;
  /// Strong monotonicity of z -> p(z + d) (needed for unique averages and finite-M bounds).
  bool strongly_monotone() const;
  const AssumptionCheck* find(const std::string& name) const;
};

/// Axis-aligned box of price arguments used for sampled checks.
struct DomainBox {
  Vector lower;
  Vector upper;
};

AssumptionReport validate_assumptions(const PriceFunction& p, const DomainBox& box);

enum class ConstantsMethod { Analytic, Sampled };

/// Constants of the finite-population bounds.
struct ConstantsEstimate {
  double R = 0.0;
  double L_p = 0.0;
  double alpha_mono = 0.0;
  double L_S = 0.0;
  double J_hat = 0.0;
  double c = 0.0;

  /// alpha_mono > 0, so the average-gap inequality and c are finite.
  bool monotone() const { return alpha_mono > 0.0; }
  /// c is finite and J_hat > 0, so the price-of-anarchy bound is defined.
  /// With J_hat = 0 only the cost-gap form of the bound applies.
  bool poa_bound_defined() const { return monotone() && J_hat > 0.0; }
  /// sqrt(2 R^2 L_p / (alpha M)), the Nash/Wardrop average gap bound.
  double average_gap_bound(long M) const;
};

/// Number of points of the logarithmic sampling grid.
inline constexpr int kConstantsSamplePoints = 10000;
/// Multiplier applied to sampled suprema (and divisor for sampled infima).
inline constexpr double kSampledSafetyFactor = 10.0;

/// Constants over the argument range z in [0, R]^n (or the ball of radius R
/// for linear prices), with the argument of p taken as (z + d) / kappa.
/// An empty kappa means all ones.
ConstantsEstimate estimate_constants(const PriceFunction& p, double R, const Vector& d, double J_hat,
                                     const Vector& kappa = Vector(),
                                     ConstantsMethod method = ConstantsMethod::Analytic);

/// Raw supremum of l' over a logarithmic grid on [lo, hi] (no safety factor).
double sampled_derivative_sup(const ScalarPrice& l, int slot, double lo, double hi,
                              int points = kConstantsSamplePoints);

/// Price class for the anarchy value. Parametric classes are reduced to
/// the members that attain the supremum: affine {a y + b} -> {y, 1};
/// monomials {alpha y^k} -> {y^k}; polynomials of degree <= k with
/// nonnegative coefficients -> {1, y, ..., y^k}.
struct AnarchyClass {
  enum class Kind { Members, Affine, Monomial, Polynomial };
  Kind kind = Kind::Members;
  std::vector<ScalarPrice> members;
  double degree = 1.0;

  std::vector<ScalarPrice> representatives() const;
};

struct AnarchyOptions {
  double v_min = 1e-6;
  double v_cap = 1e6;
  int v_points = 2001;
  /// beta >= 1 - eps is reported as an infinite anarchy value.
  double eps = 1e-9;
};

struct AnarchyValue {
  double beta = 0.0;
  double alpha = 1.0;
};

/// max_{w >= 0} (l(v) - l(w)) w, closed form when available.
double anarchy_inner_max(const ScalarPrice& l, double v);
/// Same quantity by grid scan plus golden-section refinement.
double anarchy_inner_max_numeric(const ScalarPrice& l, double v);

AnarchyValue anarchy_value(const AnarchyClass& cls, const AnarchyOptions& opt = {});

}  // namespace chargegame
