#include "chargegame/cli_runner.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "chargegame/errors.hpp"

namespace chargegame::cli {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string index(const std::string& path, std::size_t i) { return fmt::format("{}[{}]", path, i); }

std::string type_name(const Json& j) { return j.type_name(); }

// Schema reader that records every violation instead of stopping at the first.
class Reader {
 public:
  std::vector<ConfigIssue> issues;

  void fail(const std::string& path, std::string message) {
    issues.push_back({path.empty() ? "<root>" : path, std::move(message)});
  }

  bool object(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
      fail(path, fmt::format("expected an object, found {}", type_name(j)));
      return false;
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
      if (!ok.count(key)) fail(join(path, key), "unknown key");
    }
    return true;
  }

  const Json* field(const Json& obj, const char* key, const std::string& path, bool required) {
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) fail(join(path, key), "missing required field");
      return nullptr;
    }
    return &*it;
  }

  double number(const Json& j, const std::string& path) {
    if (!j.is_number()) {
      fail(path, fmt::format("expected a number, found {}", type_name(j)));
      return std::numeric_limits<double>::quiet_NaN();
    }
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(path, "must be finite");
    return v;
  }

  double number(const Json& obj, const char* key, const std::string& path, double fallback, bool required = false) {
    const Json* j = field(obj, key, path, required);
    return j ? number(*j, join(path, key)) : fallback;
  }

  long integer(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) {
      fail(path, fmt::format("expected an integer, found {}", type_name(j)));
      return 0;
    }
    return j.get<long>();
  }

  bool boolean(const Json& obj, const char* key, const std::string& path, bool fallback) {
    const Json* j = field(obj, key, path, false);
    if (!j) return fallback;
    if (!j->is_boolean()) {
      fail(join(path, key), fmt::format("expected a boolean, found {}", type_name(*j)));
      return fallback;
    }
    return j->get<bool>();
  }

  std::string string(const Json& j, const std::string& path) {
    if (!j.is_string()) {
      fail(path, fmt::format("expected a string, found {}", type_name(j)));
      return {};
    }
    return j.get<std::string>();
  }

  // Arrays of numbers; null entries map to `null_value` when allowed.
  Vector vector(const Json& j, const std::string& path, std::optional<double> null_value = std::nullopt) {
    if (!j.is_array()) {
      fail(path, fmt::format("expected an array of numbers, found {}", type_name(j)));
      return {};
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (null_value && j[i].is_null()) {
        v(static_cast<Eigen::Index>(i)) = *null_value;
      } else {
        v(static_cast<Eigen::Index>(i)) = number(j[i], index(path, i));
      }
    }
    return v;
  }

  Matrix matrix(const Json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) {
      fail(path, "expected a nonempty array of rows");
      return {};
    }
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
      const Vector row = vector(j[r], index(path, r));
      if (static_cast<std::size_t>(row.size()) != cols) {
        if (j[r].is_array()) fail(index(path, r), fmt::format("row has {} entries, expected {}", row.size(), cols));
        continue;
      }
      m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
  }

  // Runs a constructor that throws ValidationError and records the message.
  template <typename F>
  auto guard(const std::string& path, F&& make) -> std::optional<decltype(make())> {
    try {
      return make();
    } catch (const Error& e) {
      fail(path, e.what());
      return std::nullopt;
    }
  }

  std::optional<ScalarPrice> scalar_price(const Json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
      fail(path, "expected a price record with a string \"type\"");
      return std::nullopt;
    }
    const std::string type = j["type"].get<std::string>();
    std::optional<ScalarPrice> out;
    if (type == "constant") {
      object(j, path, {"type", "c"});
      out = ScalarPrice::constant(number(j, "c", path, 0.0, true));
    } else if (type == "affine") {
      object(j, path, {"type", "a", "b"});
      out = ScalarPrice::affine(number(j, "a", path, 0.0, true), number(j, "b", path, 0.0, true));
    } else if (type == "monomial") {
      object(j, path, {"type", "alpha", "k"});
      out = ScalarPrice::monomial(number(j, "alpha", path, 1.0, true), number(j, "k", path, 1.0, true));
    } else if (type == "schedule") {
      object(j, path, {"type", "pieces"});
      const Json* pieces = field(j, "pieces", path, true);
      if (!pieces) return std::nullopt;
      const std::string ppath = join(path, "pieces");
      if (!pieces->is_array() || pieces->empty()) {
        fail(ppath, "expected a nonempty array");
        return std::nullopt;
      }
      std::vector<std::pair<std::pair<int, int>, ScalarPrice>> parts;
      bool ok = true;
      for (std::size_t i = 0; i < pieces->size(); ++i) {
        const Json& p = (*pieces)[i];
        const std::string ip = index(ppath, i);
        if (!object(p, ip, {"first", "last", "price"})) {
          ok = false;
          continue;
        }
        const Json* first = field(p, "first", ip, true);
        const Json* last = field(p, "last", ip, true);
        const Json* price = field(p, "price", ip, true);
        if (!first || !last || !price) {
          ok = false;
          continue;
        }
        const auto a = static_cast<int>(integer(*first, join(ip, "first")));
        const auto b = static_cast<int>(integer(*last, join(ip, "last")));
        auto inner = scalar_price(*price, join(ip, "price"));
        if (!inner) {
          ok = false;
          continue;
        }
        parts.push_back({{a, b}, *inner});
      }
      if (!ok) return std::nullopt;
      out = guard(path, [&] { return ScalarPrice::schedule(parts); });
    } else {
      fail(join(path, "type"), fmt::format("unknown scalar price type '{}'", type));
      return std::nullopt;
    }
    if (out) {
      const std::size_t before = issues.size();
      guard(path, [&] {
        out->validate();
        return 0;
      });
      if (issues.size() != before) return std::nullopt;
    }
    return out;
  }

  std::optional<PriceFunction> price(const Json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
      fail(path, "expected a price record with a string \"type\"");
      return std::nullopt;
    }
    const std::string type = j["type"].get<std::string>();
    if (type == "linear") {
      object(j, path, {"type", "C"});
      const Json* C = field(j, "C", path, true);
      if (!C) return std::nullopt;
      const Matrix m = matrix(*C, join(path, "C"));
      if (m.rows() != m.cols()) {
        fail(join(path, "C"), "must be square");
        return std::nullopt;
      }
      return PriceFunction::linear(m);
    }
    if (type == "monomial") {
      object(j, path, {"type", "alpha", "k"});
      const double alpha = number(j, "alpha", path, 1.0, true);
      const double k = number(j, "k", path, 1.0, true);
      if (!(alpha > 0.0)) fail(join(path, "alpha"), "must be positive");
      if (!(k > 0.0)) fail(join(path, "k"), "must be positive");
      return PriceFunction::monomial(alpha, k);
    }
    if (type == "heterogeneous") {
      object(j, path, {"type", "components"});
      const Json* comps = field(j, "components", path, true);
      if (!comps) return std::nullopt;
      if (!comps->is_array() || comps->empty()) {
        fail(join(path, "components"), "expected a nonempty array");
        return std::nullopt;
      }
      std::vector<ScalarPrice> out;
      for (std::size_t i = 0; i < comps->size(); ++i) {
        if (auto f = scalar_price((*comps)[i], index(join(path, "components"), i))) out.push_back(*f);
      }
      if (out.size() != comps->size()) return std::nullopt;
      return PriceFunction::heterogeneous(std::move(out));
    }
    if (type == "homogeneous") {
      object(j, path, {"type", "f", "n"});
      const Json* f = field(j, "f", path, true);
      const Json* n = field(j, "n", path, true);
      if (!f || !n) return std::nullopt;
      auto fp = scalar_price(*f, join(path, "f"));
      const long count = integer(*n, join(path, "n"));
      if (count <= 0) fail(join(path, "n"), "must be positive");
      if (!fp || count <= 0) return std::nullopt;
      return PriceFunction::homogeneous(*fp, static_cast<int>(count));
    }
    fail(join(path, "type"), fmt::format("unknown price type '{}'", type));
    return std::nullopt;
  }

  std::optional<FeasibleSet> set(const Json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
      fail(path, "expected a set record with a string \"type\"");
      return std::nullopt;
    }
    const std::string type = j["type"].get<std::string>();
    const std::size_t before = issues.size();
    if (type == "box") {
      object(j, path, {"type", "lower", "upper"});
      const Json* lo = field(j, "lower", path, true);
      const Json* hi = field(j, "upper", path, true);
      if (!lo || !hi) return std::nullopt;
      const Vector lower = vector(*lo, join(path, "lower"), -kInf);
      const Vector upper = vector(*hi, join(path, "upper"), kInf);
      if (issues.size() != before) return std::nullopt;
      return guard(path, [&] { return FeasibleSet::box(lower, upper); });
    }
    if (type == "ev") {
      object(j, path, {"type", "x_tilde", "theta", "ramp"});
      const Json* xt = field(j, "x_tilde", path, true);
      if (!xt) return std::nullopt;
      const Vector x_tilde = vector(*xt, join(path, "x_tilde"));
      const double theta = number(j, "theta", path, 0.0, true);
      std::optional<double> ramp;
      if (const Json* r = field(j, "ramp", path, false); r && !r->is_null()) ramp = number(*r, join(path, "ramp"));
      if (issues.size() != before) return std::nullopt;
      return guard(path, [&] { return FeasibleSet::ev_charging(x_tilde, theta, ramp); });
    }
    if (type == "polytope") {
      object(j, path, {"type", "A", "b"});
      const Json* A = field(j, "A", path, true);
      const Json* b = field(j, "b", path, true);
      if (!A || !b) return std::nullopt;
      const Matrix Am = matrix(*A, join(path, "A"));
      const Vector bv = vector(*b, join(path, "b"));
      if (issues.size() != before) return std::nullopt;
      return guard(path, [&] { return FeasibleSet::polytope(Am, bv); });
    }
    if (type == "affine_slab") {
      object(j, path, {"type", "base", "v1", "v2"});
      const Json* base = field(j, "base", path, true);
      const Json* v1 = field(j, "v1", path, true);
      const Json* v2 = field(j, "v2", path, true);
      if (!base || !v1 || !v2) return std::nullopt;
      const Vector b = vector(*base, join(path, "base"));
      const Vector a1 = vector(*v1, join(path, "v1"));
      const Vector a2 = vector(*v2, join(path, "v2"));
      if (issues.size() != before) return std::nullopt;
      return guard(path, [&] { return FeasibleSet::affine_slab(b, a1, a2); });
    }
    fail(join(path, "type"), fmt::format("unknown set type '{}'", type));
    return std::nullopt;
  }

  std::optional<GameDescription> game(const Json& j, const std::string& path) {
    if (!object(j, path, {"price", "agents", "d", "kappa"})) return std::nullopt;
    const std::size_t before = issues.size();
    GameDescription g;
    const Json* p = field(j, "price", path, true);
    if (p) {
      if (auto pf = price(*p, join(path, "price"))) g.price = *pf;
    }
    if (const Json* d = field(j, "d", path, true)) g.d = vector(*d, join(path, "d"));
    if (const Json* k = field(j, "kappa", path, false)) g.kappa = vector(*k, join(path, "kappa"));
    if (const Json* agents = field(j, "agents", path, true)) {
      const std::string apath = join(path, "agents");
      if (!agents->is_array() || agents->empty()) {
        fail(apath, "expected a nonempty array");
      } else {
        for (std::size_t i = 0; i < agents->size(); ++i) {
          const Json& a = (*agents)[i];
          const std::string ip = index(apath, i);
          if (!object(a, ip, {"set", "count"})) continue;
          long count = 1;
          if (const Json* c = field(a, "count", ip, false)) {
            count = integer(*c, join(ip, "count"));
            if (count <= 0) fail(join(ip, "count"), "must be positive");
          }
          const Json* s = field(a, "set", ip, true);
          if (!s) continue;
          auto fs = set(*s, join(ip, "set"));
          if (!fs) continue;
          for (long c = 0; c < count; ++c) g.agents.push_back(*fs);
        }
      }
    }
    if (issues.size() != before) return std::nullopt;
    // Structural checks of the assembled game.
    const auto n = g.d.size();
    if (n == 0) fail(join(path, "d"), "must be nonempty");
    if (g.kappa.size() != 0 && g.kappa.size() != n) fail(join(path, "kappa"), fmt::format("expected {} entries", n));
    for (std::size_t i = 0; i < g.agents.size(); ++i) {
      if (g.agents[i].dimension() != n) {
        fail(join(path, "agents"), fmt::format("agent {} has dimension {}, d has {}", i, g.agents[i].dimension(), n));
        break;
      }
    }
    if (issues.size() != before) return std::nullopt;
    if (!guard(path, [&] {
          g.build();
          return 0;
        })) {
      return std::nullopt;
    }
    return g;
  }

  std::optional<Uniform> uniform(const Json& j, const std::string& path) {
    if (!object(j, path, {"lo", "hi"})) return std::nullopt;
    const std::size_t before = issues.size();
    Uniform u{number(j, "lo", path, 0.0, true), number(j, "hi", path, 0.0, true)};
    if (issues.size() != before) return std::nullopt;
    if (!(u.lo <= u.hi)) fail(path, "needs lo <= hi");
    return u;
  }

  std::optional<DemandSelection> demand(const Json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
      fail(path, "expected a demand record with a string \"type\"");
      return std::nullopt;
    }
    const std::string type = j["type"].get<std::string>();
    if (type == "zero") {
      object(j, path, {"type"});
      return ZeroDemand{};
    }
    if (type == "synthetic_valley") {
      object(j, path, {"type", "peak", "trough", "trough_hour"});
      SyntheticValley v;
      v.peak = number(j, "peak", path, v.peak);
      v.trough = number(j, "trough", path, v.trough);
      v.trough_hour = number(j, "trough_hour", path, v.trough_hour);
      if (!(v.trough >= 0.0) || !(v.peak >= v.trough)) fail(path, "needs 0 <= trough <= peak");
      return v;
    }
    if (type == "file") {
      object(j, path, {"type", "path"});
      const Json* p = field(j, "path", path, true);
      if (!p) return std::nullopt;
      return DemandFile{string(*p, join(path, "path"))};
    }
    fail(join(path, "type"), fmt::format("unknown demand type '{}'", type));
    return std::nullopt;
  }

  std::optional<CaseSpec> scenario(const Json& j, const std::string& path) {
    if (!object(j, path,
                {"case", "label", "horizon", "price", "eta", "b", "s1", "window", "window_first", "window_last", "ramp",
                 "x_tilde_level", "demand", "kappa"})) {
      return std::nullopt;
    }
    const std::size_t before = issues.size();
    CaseSpec spec;
    const Json* c = field(j, "case", path, true);
    if (!c) return std::nullopt;
    if (c->is_number_integer()) {
      const long id = c->get<long>();
      if (id < 1 || id > 4) {
        fail(join(path, "case"), "must be 1, 2, 3, 4 or \"custom\"");
        return std::nullopt;
      }
      spec = case_spec(static_cast<int>(id));
    } else if (c->is_string() && c->get<std::string>() == "custom") {
      spec.case_id = "custom";
      if (!j.contains("price")) fail(join(path, "price"), "custom scenarios need a price");
    } else {
      fail(join(path, "case"), "must be 1, 2, 3, 4 or \"custom\"");
      return std::nullopt;
    }
    if (const Json* v = field(j, "label", path, false)) spec.case_id = string(*v, join(path, "label"));
    if (const Json* v = field(j, "horizon", path, false)) spec.horizon = static_cast<int>(integer(*v, join(path, "horizon")));
    if (const Json* v = field(j, "price", path, false)) {
      if (auto p = price(*v, join(path, "price"))) spec.price = *p;
    }
    if (const Json* v = field(j, "eta", path, false)) {
      if (auto u = uniform(*v, join(path, "eta"))) spec.eta = *u;
    }
    spec.b = number(j, "b", path, spec.b);
    spec.s1 = number(j, "s1", path, spec.s1);
    if (const Json* v = field(j, "window", path, false)) {
      const std::string w = string(*v, join(path, "window"));
      if (w == "full") {
        spec.window = WindowMode::Full;
      } else if (w == "random_endpoints") {
        spec.window = WindowMode::RandomEndpoints;
      } else {
        fail(join(path, "window"), "must be \"full\" or \"random_endpoints\"");
      }
    }
    if (const Json* v = field(j, "window_first", path, false)) {
      spec.window_first = static_cast<int>(integer(*v, join(path, "window_first")));
    }
    if (const Json* v = field(j, "window_last", path, false)) {
      spec.window_last = static_cast<int>(integer(*v, join(path, "window_last")));
    }
    if (const Json* v = field(j, "ramp", path, false)) {
      if (v->is_null()) {
        spec.ramp.reset();
      } else if (auto u = uniform(*v, join(path, "ramp"))) {
        spec.ramp = *u;
      }
    }
    spec.x_tilde_level = number(j, "x_tilde_level", path, spec.x_tilde_level);
    if (const Json* v = field(j, "demand", path, false)) {
      if (auto d = demand(*v, join(path, "demand"))) spec.demand = *d;
    }
    if (const Json* v = field(j, "kappa", path, false)) spec.kappa = vector(*v, join(path, "kappa"));
    if (issues.size() != before) return std::nullopt;
    if (!guard(path, [&] {
          spec.validate();
          return 0;
        })) {
      return std::nullopt;
    }
    return spec;
  }

  SolverConfig solver(const Json& j, const std::string& path) {
    SolverConfig cfg;
    if (!object(j, path, {"step_size", "max_iters", "residual_tol", "seed", "backtracking", "verify", "verify_tol"})) {
      return cfg;
    }
    if (const Json* v = field(j, "step_size", path, false)) {
      if (v->is_string() && v->get<std::string>() == "auto") {
        cfg.step_size.reset();
      } else {
        cfg.step_size = number(*v, join(path, "step_size"));
        if (!(*cfg.step_size > 0.0)) fail(join(path, "step_size"), "must be positive or \"auto\"");
      }
    }
    if (const Json* v = field(j, "max_iters", path, false)) {
      cfg.max_iters = integer(*v, join(path, "max_iters"));
      if (cfg.max_iters <= 0) fail(join(path, "max_iters"), "must be positive");
    }
    cfg.residual_tol = number(j, "residual_tol", path, cfg.residual_tol);
    if (!(cfg.residual_tol > 0.0)) fail(join(path, "residual_tol"), "must be positive");
    if (const Json* v = field(j, "seed", path, false)) {
      if (!v->is_number_unsigned()) {
        fail(join(path, "seed"), "expected a nonnegative integer");
      } else {
        cfg.seed = v->get<std::uint64_t>();
      }
    }
    cfg.backtracking = boolean(j, "backtracking", path, cfg.backtracking);
    if (const Json* v = field(j, "verify", path, false)) {
      const std::string m = string(*v, join(path, "verify"));
      if (m == "auto") {
        cfg.verify = VerifyMode::Auto;
      } else if (m == "always") {
        cfg.verify = VerifyMode::Always;
      } else if (m == "never") {
        cfg.verify = VerifyMode::Never;
      } else {
        fail(join(path, "verify"), "must be \"auto\", \"always\" or \"never\"");
      }
    }
    cfg.verify_tol = number(j, "verify_tol", path, cfg.verify_tol);
    if (!(cfg.verify_tol > 0.0)) fail(join(path, "verify_tol"), "must be positive");
    return cfg;
  }

  std::optional<AnarchyClass> anarchy(const Json& j, const std::string& path) {
    if (!object(j, path, {"class", "degree", "members"})) return std::nullopt;
    const Json* c = field(j, "class", path, true);
    if (!c) return std::nullopt;
    const std::string name = string(*c, join(path, "class"));
    AnarchyClass cls;
    if (name == "affine") {
      cls.kind = AnarchyClass::Kind::Affine;
    } else if (name == "monomial") {
      cls.kind = AnarchyClass::Kind::Monomial;
    } else if (name == "polynomial") {
      cls.kind = AnarchyClass::Kind::Polynomial;
    } else if (name == "members") {
      cls.kind = AnarchyClass::Kind::Members;
    } else {
      fail(join(path, "class"), "must be \"affine\", \"monomial\", \"polynomial\" or \"members\"");
      return std::nullopt;
    }
    const bool needs_degree = cls.kind == AnarchyClass::Kind::Monomial || cls.kind == AnarchyClass::Kind::Polynomial;
    cls.degree = number(j, "degree", path, 1.0, needs_degree);
    if (needs_degree && !(cls.degree > 0.0)) fail(join(path, "degree"), "must be positive");
    if (cls.kind == AnarchyClass::Kind::Polynomial && cls.degree != std::floor(cls.degree)) {
      fail(join(path, "degree"), "polynomial degree must be an integer");
    }
    if (const Json* m = field(j, "members", path, cls.kind == AnarchyClass::Kind::Members)) {
      const std::string mp = join(path, "members");
      if (!m->is_array() || m->empty()) {
        fail(mp, "expected a nonempty array");
      } else {
        for (std::size_t i = 0; i < m->size(); ++i) {
          if (auto f = scalar_price((*m)[i], index(mp, i))) cls.members.push_back(*f);
        }
      }
    }
    return cls;
  }

  std::optional<CounterexampleConfig> counterexample(const Json& j, const std::string& path) {
    if (!object(j, path, {"f", "z_bar", "d"})) return std::nullopt;
    const std::size_t before = issues.size();
    CounterexampleConfig c;
    if (const Json* f = field(j, "f", path, true)) {
      if (auto fp = scalar_price(*f, join(path, "f"))) c.f = *fp;
    }
    if (const Json* z = field(j, "z_bar", path, true)) c.z_bar = vector(*z, join(path, "z_bar"));
    if (const Json* d = field(j, "d", path, true)) c.d = vector(*d, join(path, "d"));
    if (issues.size() != before) return std::nullopt;
    if (c.z_bar.size() != c.d.size() || c.z_bar.size() == 0) fail(path, "z_bar and d need equal, positive length");
    if ((c.d.array() <= 0.0).any()) fail(join(path, "d"), "must be strictly positive");
    return c;
  }
};

// Per-command required fields, checked once the command is known.
void check_requirements(const RunConfig& c, Command command, Reader& r) {
  switch (command) {
    case Command::Validate:
    case Command::Solve:
      if (!c.game && !c.scenario) r.fail("game", "this command needs \"game\" or \"scenario\"");
      if (!c.game && c.scenario && c.M_list.empty()) r.fail("M_list", "a scenario needs M_list[0] as the population size");
      break;
    case Command::Sweep:
      if (!c.scenario) r.fail("scenario", "sweep needs a scenario");
      if (c.M_list.empty()) r.fail("M_list", "sweep needs a nonempty M_list");
      break;
    case Command::EvGen:
      if (!c.scenario) r.fail("scenario", "ev-gen needs a scenario");
      if (c.M_list.empty()) r.fail("M_list", "ev-gen needs M_list[0] as the population size");
      break;
    case Command::Counterexample:
      if (!c.counterexample) r.fail("counterexample", "counterexample needs f, z_bar and d");
      if (c.M_list.empty()) r.fail("M_list", "counterexample needs a nonempty M_list");
      break;
    case Command::AnarchyValue:
      if (!c.anarchy_class) r.fail("anarchy", "anarchy-value needs a class");
      break;
  }
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  const std::size_t stop = std::min(byte == 0 ? 0 : byte - 1, text.size());
  for (std::size_t i = 0; i < stop; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) {
      a.push_back(v(i));
    } else {
      a.push_back(nullptr);
    }
  }
  return a;
}

Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
  return a;
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.12g}", v);
}

std::string csv_optional(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << content;
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw std::runtime_error(fmt::format("cannot create output directory '{}'", dir));
  }
}

Game game_for(const RunConfig& c) {
  if (c.game) return c.game->build();
  return generate_fleet(*c.scenario, c.M_list.front(), c.base_seed);
}

Json result_json(const EquilibriumResult& r) {
  Json j;
  j["kind"] = to_string(r.kind);
  j["converged"] = r.converged;
  j["verified"] = r.verified;
  j["residual"] = r.residual;
  j["iterations"] = r.iterations;
  j["social_cost"] = r.social_cost_value;
  if (r.max_best_response_gap) j["max_best_response_gap"] = *r.max_best_response_gap;
  j["sigma"] = vector_json(r.sigma.sigma);
  return j;
}

int run_validate(const RunConfig& c, std::ostream& out) {
  const Game game = game_for(c);
  const double R = std::max(game.radius(), 1e-12);
  const DomainBox box{game.d().cwiseQuotient(game.kappa()), (game.d().array() + R).matrix().cwiseQuotient(game.kappa())};
  const auto report = validate_assumptions(game.price(), box);
  Json j;
  j["agents"] = game.agents();
  j["horizon"] = game.horizon();
  j["radius"] = game.radius();
  Json checks = Json::array();
  for (const auto& chk : report.checks) {
    checks.push_back({{"name", chk.name}, {"applicable", chk.applicable}, {"passed", chk.passed}, {"detail", chk.detail}});
  }
  j["checks"] = checks;
  const auto consts = estimate_constants(game.price(), R, game.d(), 0.0, game.kappa());
  j["constants"] = {{"R", consts.R}, {"L_p", consts.L_p}, {"alpha", consts.alpha_mono}, {"L_S", consts.L_S}};
  j["all_passed"] = report.all_passed();
  out << j.dump(2) << "\n";
  return report.all_passed() ? kExitOk : kExitValidation;
}

int run_solve(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Game game = game_for(c);
  const auto nash = c.multi_start > 1 ? solve_nash_multistart(game, c.solver, c.multi_start) : solve_nash(game, c.solver);
  const auto ward = solve_wardrop(game, c.solver);
  const auto social = solve_social(game, c.solver);
  Json j;
  j["nash"] = result_json(nash);
  j["wardrop"] = result_json(ward);
  j["social"] = result_json(social);
  if (social.social_cost_value > 0.0) j["poa"] = price_of_anarchy(nash, social);
  const std::string text = j.dump(2) + "\n";
  out << text;
  if (!c.output_dir.empty()) {
    ensure_dir(c.output_dir);
    write_file(std::filesystem::path(c.output_dir) / "solve.json", text);
  }
  if (!nash.converged || !ward.converged || !social.converged) {
    err << "chargegame: nonconvergence: at least one solver hit max_iters\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

int run_sweep(const RunConfig& c, std::ostream& out, std::ostream& err) {
  SweepOptions opt;
  opt.M_list = c.M_list;
  opt.samples = c.samples;
  opt.base_seed = c.base_seed;
  opt.multi_start = c.multi_start;
  opt.solver = c.solver;
  opt.record_timing = c.record_timing;
  opt.threads = threads_from_environment();
  const auto result = population_sweep(scenario_from_case(*c.scenario), opt);
  write_results(result.records, c.output_dir.empty() ? "." : c.output_dir);
  out << poa_csv(result.per_M);
  if (!result.ok) {
    err << fmt::format("chargegame: nonconvergence: {} of {} cells did not converge\n", result.skipped,
                       result.records.size());
    return kExitNonConvergence;
  }
  return kExitOk;
}

int run_counterexample(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto& cx_cfg = *c.counterexample;
  Json j;
  std::string csv = "M,J_nash,J_social,poa,residual_nash,iterations\n";
  bool all_converged = true;
  Json rows = Json::array();
  for (long M : c.M_list) {
    const auto cx = build_counterexample(cx_cfg.f, cx_cfg.z_bar, cx_cfg.d, M);
    if (!j.contains("certificate")) {
      j["certificate"] = {{"v1", vector_json(cx.spec.v1)},
                          {"v2", vector_json(cx.spec.v2)},
                          {"beta_probe", cx.spec.beta_probe},
                          {"inner_product", cx.inner_product},
                          {"orthogonality", cx.orthogonality}};
    }
    const auto nash = solve_nash(cx.game, c.solver);
    const auto social = solve_social(cx.game, c.solver);
    all_converged = all_converged && nash.converged && social.converged;
    const double poa = price_of_anarchy(nash, social);
    rows.push_back({{"M", M}, {"J_nash", nash.social_cost_value}, {"J_social", social.social_cost_value}, {"poa", poa},
                    {"converged", nash.converged && social.converged}});
    csv += fmt::format("{},{},{},{},{},{}\n", M, csv_number(nash.social_cost_value), csv_number(social.social_cost_value),
                       csv_number(poa), csv_number(nash.residual), nash.iterations);
  }
  j["solves"] = rows;
  out << j.dump(2) << "\n";
  if (!c.output_dir.empty()) {
    ensure_dir(c.output_dir);
    write_file(std::filesystem::path(c.output_dir) / "counterexample.csv", csv);
  }
  if (!all_converged) {
    err << "chargegame: nonconvergence: a counterexample solve hit max_iters\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

int run_anarchy(const RunConfig& c, std::ostream& out) {
  const auto value = anarchy_value(*c.anarchy_class);
  Json j;
  j["beta"] = value.beta;
  if (std::isfinite(value.alpha)) {
    j["alpha"] = value.alpha;
  } else {
    j["alpha"] = "inf";
  }
  out << j.dump() << "\n";
  return kExitOk;
}

int run_ev_gen(const RunConfig& c, std::ostream& out) {
  const Fleet fleet = generate_fleet_params(*c.scenario, c.M_list.front(), c.base_seed);
  const Game game = build_game(*c.scenario, fleet);
  Json j;
  j["game"] = to_json(describe_game(game));
  j["rejections"] = fleet.rejections;
  j["attempts"] = fleet.attempts;
  const std::string text = j.dump(2) + "\n";
  if (!c.output_dir.empty()) {
    ensure_dir(c.output_dir);
    write_file(std::filesystem::path(c.output_dir) / "game.json", text);
  } else {
    out << text;
  }
  return kExitOk;
}

}  // namespace

std::optional<Command> parse_command(const std::string& name) {
  static const std::map<std::string, Command> names = {
      {"validate", Command::Validate},         {"solve", Command::Solve},
      {"sweep", Command::Sweep},               {"counterexample", Command::Counterexample},
      {"anarchy-value", Command::AnarchyValue}, {"ev-gen", Command::EvGen},
  };
  auto it = names.find(name);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

std::string to_string(Command command) {
  switch (command) {
    case Command::Validate:
      return "validate";
    case Command::Solve:
      return "solve";
    case Command::Sweep:
      return "sweep";
    case Command::Counterexample:
      return "counterexample";
    case Command::AnarchyValue:
      return "anarchy-value";
    case Command::EvGen:
      return "ev-gen";
  }
  return "unknown";
}

Game GameDescription::build() const {
  std::vector<SetRef> sets;
  sets.reserve(agents.size());
  for (const auto& a : agents) sets.push_back(std::make_shared<FeasibleSet>(a));
  return Game(std::move(sets), price, d, kappa);
}

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : ValidationError([&] {
        std::string msg = fmt::format("{} config error(s)", issues.size());
        for (const auto& i : issues) msg += fmt::format("\n  {}: {}", i.path, i.message);
        return msg;
      }()),
      issues_(std::move(issues)) {}

ParseError::ParseError(const std::string& what, std::size_t line, std::size_t column)
    : ValidationError(what), line_(line), column_(column) {}

RunConfig config_from_json(const Json& j) {
  Reader r;
  RunConfig c;
  if (!r.object(j, "",
                {"command", "output_dir", "game", "scenario", "solver", "M_list", "samples", "base_seed", "multi_start",
                 "record_timing", "counterexample", "anarchy"})) {
    throw ConfigError(r.issues);
  }
  if (const Json* v = r.field(j, "command", "", false)) {
    const std::string name = r.string(*v, "command");
    c.command = parse_command(name);
    if (!c.command) r.fail("command", fmt::format("unknown command '{}'", name));
  }
  if (const Json* v = r.field(j, "output_dir", "", false)) c.output_dir = r.string(*v, "output_dir");
  if (const Json* v = r.field(j, "game", "", false)) c.game = r.game(*v, "game");
  if (const Json* v = r.field(j, "scenario", "", false)) c.scenario = r.scenario(*v, "scenario");
  if (const Json* v = r.field(j, "solver", "", false)) c.solver = r.solver(*v, "solver");
  if (const Json* v = r.field(j, "M_list", "", false)) {
    if (!v->is_array()) {
      r.fail("M_list", "expected an array of positive integers");
    } else {
      for (std::size_t i = 0; i < v->size(); ++i) {
        const long M = r.integer((*v)[i], index("M_list", i));
        if (M <= 0 && (*v)[i].is_number_integer()) r.fail(index("M_list", i), "must be a positive integer");
        c.M_list.push_back(M);
      }
    }
  }
  if (const Json* v = r.field(j, "samples", "", false)) {
    c.samples = static_cast<int>(r.integer(*v, "samples"));
    if (c.samples <= 0) r.fail("samples", "must be positive");
  }
  if (const Json* v = r.field(j, "base_seed", "", false)) {
    if (!v->is_number_unsigned()) {
      r.fail("base_seed", "expected a nonnegative integer");
    } else {
      c.base_seed = v->get<std::uint64_t>();
    }
  }
  if (const Json* v = r.field(j, "multi_start", "", false)) {
    c.multi_start = static_cast<int>(r.integer(*v, "multi_start"));
    if (c.multi_start <= 0) r.fail("multi_start", "must be positive");
  }
  c.record_timing = r.boolean(j, "record_timing", "", false);
  if (const Json* v = r.field(j, "counterexample", "", false)) c.counterexample = r.counterexample(*v, "counterexample");
  if (const Json* v = r.field(j, "anarchy", "", false)) c.anarchy_class = r.anarchy(*v, "anarchy");
  if (c.command) check_requirements(c, *c.command, r);
  if (!r.issues.empty()) throw ConfigError(r.issues);
  return c;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    std::string what = e.what();
    if (auto pos = what.find("syntax error"); pos != std::string::npos) what = what.substr(pos);
    throw ParseError(fmt::format("{}:{}:{}: {}", source, line, col, what), line, col);
  }
  return config_from_json(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read config '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

Json to_json(const ScalarPrice& f) {
  return std::visit(
      [](const auto& v) -> Json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ConstantPrice>) {
          return {{"type", "constant"}, {"c", v.c}};
        } else if constexpr (std::is_same_v<T, AffinePrice>) {
          return {{"type", "affine"}, {"a", v.a}, {"b", v.b}};
        } else if constexpr (std::is_same_v<T, MonomialPrice>) {
          return {{"type", "monomial"}, {"alpha", v.alpha}, {"k", v.k}};
        } else {
          Json pieces = Json::array();
          for (const auto& p : v.pieces) {
            pieces.push_back({{"first", p.first_slot}, {"last", p.last_slot}, {"price", to_json(*p.price)}});
          }
          return {{"type", "schedule"}, {"pieces", pieces}};
        }
      },
      f.variant());
}

Json to_json(const PriceFunction& p) {
  return std::visit(
      [](const auto& v) -> Json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LinearPriceModel>) {
          return {{"type", "linear"}, {"C", matrix_json(v.C)}};
        } else if constexpr (std::is_same_v<T, MonomialPriceModel>) {
          return {{"type", "monomial"}, {"alpha", v.alpha}, {"k", v.k}};
        } else {
          Json comps = Json::array();
          for (const auto& c : v.components) comps.push_back(to_json(c));
          return {{"type", "heterogeneous"}, {"components", comps}};
        }
      },
      p.variant());
}

Json to_json(const FeasibleSet& set) {
  return std::visit(
      [](const auto& v) -> Json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, BoxSet>) {
          return {{"type", "box"}, {"lower", vector_json(v.lower)}, {"upper", vector_json(v.upper)}};
        } else if constexpr (std::is_same_v<T, EVChargingSet>) {
          Json j = {{"type", "ev"}, {"x_tilde", vector_json(v.x_tilde)}, {"theta", v.theta}};
          j["ramp"] = v.ramp ? Json(*v.ramp) : Json(nullptr);
          return j;
        } else if constexpr (std::is_same_v<T, PolytopeSet>) {
          return {{"type", "polytope"}, {"A", matrix_json(v.A)}, {"b", vector_json(v.b)}};
        } else {
          return {{"type", "affine_slab"}, {"base", vector_json(v.base)}, {"v1", vector_json(v.v1)}, {"v2", vector_json(v.v2)}};
        }
      },
      set.descriptor());
}

Json to_json(const CaseSpec& spec) {
  Json j;
  if (spec.case_id == "1" || spec.case_id == "2" || spec.case_id == "3" || spec.case_id == "4") {
    j["case"] = std::stoi(spec.case_id);
  } else {
    j["case"] = "custom";
  }
  j["label"] = spec.case_id;
  j["horizon"] = spec.horizon;
  j["price"] = to_json(spec.price);
  j["eta"] = {{"lo", spec.eta.lo}, {"hi", spec.eta.hi}};
  j["b"] = spec.b;
  j["s1"] = spec.s1;
  j["window"] = spec.window == WindowMode::Full ? "full" : "random_endpoints";
  j["window_first"] = spec.window_first;
  j["window_last"] = spec.window_last;
  j["ramp"] = spec.ramp ? Json{{"lo", spec.ramp->lo}, {"hi", spec.ramp->hi}} : Json(nullptr);
  j["x_tilde_level"] = spec.x_tilde_level;
  j["demand"] = std::visit(
      [](const auto& d) -> Json {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, ZeroDemand>) {
          return {{"type", "zero"}};
        } else if constexpr (std::is_same_v<T, SyntheticValley>) {
          return {{"type", "synthetic_valley"}, {"peak", d.peak}, {"trough", d.trough}, {"trough_hour", d.trough_hour}};
        } else {
          return {{"type", "file"}, {"path", d.path}};
        }
      },
      spec.demand);
  if (spec.kappa.size() != 0) j["kappa"] = vector_json(spec.kappa);
  return j;
}

Json to_json(const GameDescription& game) {
  Json j;
  j["price"] = to_json(game.price);
  Json agents = Json::array();
  for (const auto& a : game.agents) {
    Json s = to_json(a);
    if (!agents.empty() && agents.back()["set"] == s) {
      agents.back()["count"] = agents.back()["count"].get<long>() + 1;
    } else {
      agents.push_back({{"set", s}, {"count", 1}});
    }
  }
  j["agents"] = agents;
  j["d"] = vector_json(game.d);
  if (game.kappa.size() != 0) j["kappa"] = vector_json(game.kappa);
  return j;
}

GameDescription describe_game(const Game& game) {
  GameDescription g;
  g.price = game.price();
  for (const auto& s : game.agent_sets()) g.agents.push_back(*s);
  g.d = game.d();
  g.kappa = game.kappa();
  return g;
}

Json to_json(const RunConfig& c) {
  Json j;
  if (c.command) j["command"] = to_string(*c.command);
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
  if (c.game) j["game"] = to_json(*c.game);
  if (c.scenario) j["scenario"] = to_json(*c.scenario);
  Json s;
  s["step_size"] = c.solver.step_size ? Json(*c.solver.step_size) : Json("auto");
  s["max_iters"] = c.solver.max_iters;
  s["residual_tol"] = c.solver.residual_tol;
  s["seed"] = c.solver.seed;
  s["backtracking"] = c.solver.backtracking;
  s["verify"] = c.solver.verify == VerifyMode::Auto ? "auto" : c.solver.verify == VerifyMode::Always ? "always" : "never";
  s["verify_tol"] = c.solver.verify_tol;
  j["solver"] = s;
  j["M_list"] = c.M_list;
  j["samples"] = c.samples;
  j["base_seed"] = c.base_seed;
  j["multi_start"] = c.multi_start;
  j["record_timing"] = c.record_timing;
  if (c.counterexample) {
    j["counterexample"] = {{"f", to_json(c.counterexample->f)},
                           {"z_bar", vector_json(c.counterexample->z_bar)},
                           {"d", vector_json(c.counterexample->d)}};
  }
  if (c.anarchy_class) {
    static const char* names[] = {"members", "affine", "monomial", "polynomial"};
    Json a;
    a["class"] = names[static_cast<int>(c.anarchy_class->kind)];
    a["degree"] = c.anarchy_class->degree;
    if (!c.anarchy_class->members.empty()) {
      Json m = Json::array();
      for (const auto& f : c.anarchy_class->members) m.push_back(to_json(f));
      a["members"] = m;
    }
    j["anarchy"] = a;
  }
  return j;
}

std::string sweep_csv(const std::vector<SweepRecord>& records) {
  std::string s = "case_id,M,seed,J_nash,J_social,poa,bound,alpha_L,residual_nash,iterations,wall_time_ms\n";
  for (const auto& r : records) {
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.case_id, r.M, r.seed, csv_number(r.J_nash),
                     csv_number(r.J_social), csv_number(r.poa), csv_optional(r.bound), csv_optional(r.alpha_L),
                     csv_number(r.residual_nash), r.iterations, r.wall_time_ms);
  }
  return s;
}

std::string poa_csv(const std::vector<SweepSummary>& summary) {
  std::string s = "M,samples,skipped,worst_poa\n";
  for (const auto& m : summary) s += fmt::format("{},{},{},{}\n", m.M, m.samples, m.skipped, csv_number(m.worst_poa));
  return s;
}

std::string costgap_csv(const std::vector<SweepSummary>& summary) {
  std::string s = "M,count,gap_min,gap_q25,gap_median,gap_q75,gap_max,gap_mean\n";
  for (const auto& m : summary) {
    s += fmt::format("{},{},{},{},{},{},{},{}\n", m.M, m.samples - m.skipped, csv_number(m.gap_min),
                     csv_number(m.gap_q25), csv_number(m.gap_median), csv_number(m.gap_q75), csv_number(m.gap_max),
                     csv_number(m.gap_mean));
  }
  return s;
}

void write_results(const std::vector<SweepRecord>& records, const std::string& dir) {
  if (records.empty()) throw ValidationError("no sweep records to write");
  std::vector<SweepRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const SweepRecord& a, const SweepRecord& b) { return std::tie(a.M, a.seed) < std::tie(b.M, b.seed); });
  ensure_dir(dir);
  const auto summary = summarize(sorted);
  const std::filesystem::path base(dir);
  write_file(base / "sweep.csv", sweep_csv(sorted));
  write_file(base / "poa_vs_M.csv", poa_csv(summary));
  write_file(base / "costgap_vs_M.csv", costgap_csv(summary));
}

int threads_from_environment() {
  const char* v = std::getenv("CHARGEGAME_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n <= 0) return 0;
  return static_cast<int>(n);
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  if (!config.command) {
    err << "chargegame: config: command: no command given\n";
    return kExitValidation;
  }
  Reader r;
  check_requirements(config, *config.command, r);
  if (!r.issues.empty()) {
    for (const auto& i : r.issues) err << fmt::format("chargegame: config: {}: {}\n", i.path, i.message);
    return kExitValidation;
  }
  try {
    switch (*config.command) {
      case Command::Validate:
        return run_validate(config, out);
      case Command::Solve:
        return run_solve(config, out, err);
      case Command::Sweep:
        return run_sweep(config, out, err);
      case Command::Counterexample:
        return run_counterexample(config, out, err);
      case Command::AnarchyValue:
        return run_anarchy(config, out);
      case Command::EvGen:
        return run_ev_gen(config, out);
    }
  } catch (const GeometryError& e) {
    err << "chargegame: geometry: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Error& e) {
    const std::string what = e.what();
    const bool refused = what.rfind("refused", 0) == 0;
    err << "chargegame: " << (refused ? "refused" : "validation") << ": " << what << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "chargegame: io: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace chargegame::cli
