#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "chargegame/errors.hpp"
#include "chargegame/ev_scenarios.hpp"

using namespace chargegame;

TEST_CASE("slot clock") {
  CHECK(slot_start_hour(1) == 17);
  CHECK(slot_start_hour(9) == 1);
  CHECK(slot_start_hour(10) == 2);
  CHECK(slot_start_hour(18) == 10);
  CHECK(slot_start_hour(24) == 16);
  for (int s = 1; s <= 24; ++s) CHECK(slot_for_hour(slot_start_hour(s)) == s);
}

TEST_CASE("overnight schedule price") {
  const auto p = overnight_schedule_price();
  for (int t = 0; t < 24; ++t) {
    const int slot = t + 1;
    if (slot >= 10 && slot <= 18) {
      CHECK(p.component_value(t, 2.0) == doctest::Approx(0.3));
    } else {
      CHECK(p.component_value(t, 2.0) == doctest::Approx(0.15));
    }
  }
}

TEST_CASE("generate_fleet") {
  SUBCASE("case 2 is homogeneous with zero demand") {
    const Game g = generate_fleet(case_spec(2), 40, 5);
    CHECK(g.agents() == 40);
    CHECK(g.d() == Vector::Zero(24));
    const auto fleet = generate_fleet_params(case_spec(2), 40, 5);
    for (const auto& p : fleet.params) {
      CHECK(p.theta() == 9.0);
      CHECK(p.t_min == 1);
      CHECK(p.t_max == 18);
      CHECK_FALSE(p.r.has_value());
    }
    CHECK(fleet.rejections == 0);
  }
  SUBCASE("case 4 energy range") {
    const auto fleet = generate_fleet_params(case_spec(4), 500, 6);
    for (const auto& p : fleet.params) {
      CHECK(p.theta() >= 5.0);
      CHECK(p.theta() <= 13.0);
    }
  }
  SUBCASE("case 1 windows and nonempty sets") {
    const auto spec = case_spec(1);
    const auto fleet = generate_fleet_params(spec, 300, 7);
    CHECK(fleet.params.size() == 300);
    for (const auto& p : fleet.params) {
      CHECK(p.t_min >= 1);
      CHECK(p.t_max <= 18);
      CHECK(p.t_min <= p.t_max);
      REQUIRE(p.r.has_value());
      CHECK(*p.r >= 1.0);
      CHECK(*p.r <= 7.0);
      CHECK(p.to_set(24).check_nonempty().nonempty);
    }
    CHECK(fleet.attempts == 300 + fleet.rejections);
  }
  SUBCASE("identical inputs give identical games") {
    const auto a = generate_fleet_params(case_spec(1), 50, 11);
    const auto b = generate_fleet_params(case_spec(1), 50, 11);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
      CHECK(a.params[i].eta == b.params[i].eta);
      CHECK(a.params[i].t_min == b.params[i].t_min);
      CHECK(a.params[i].t_max == b.params[i].t_max);
      CHECK(*a.params[i].r == *b.params[i].r);
    }
    // The first agents do not depend on M.
    const auto c = generate_fleet_params(case_spec(1), 10, 11);
    for (std::size_t i = 0; i < c.params.size(); ++i) CHECK(c.params[i].eta == a.params[i].eta);
  }
  SUBCASE("energy means match the distributions") {
    auto spec = case_spec(1);
    spec.ramp.reset();
    spec.window = WindowMode::Full;
    const auto fleet = generate_fleet_params(spec, 10000, 12);
    double mean = 0.0;
    for (const auto& p : fleet.params) mean += p.theta();
    mean /= 10000.0;
    const double se = (10.0 / std::sqrt(12.0)) / std::sqrt(10000.0);
    CHECK(std::abs(mean - 10.0) <= 3.0 * se);

    const auto fixed = generate_fleet_params(case_spec(2), 10000, 12);
    double mean2 = 0.0;
    for (const auto& p : fixed.params) mean2 += p.theta();
    CHECK(mean2 / 10000.0 == doctest::Approx(9.0));
  }
  SUBCASE("mostly empty draws are rejected") {
    auto spec = case_spec(2);
    spec.eta = {5.0, 120.0};  // capacity is 18 * 3.3 = 59.4
    CHECK_THROWS_AS(generate_fleet_params(spec, 20, 1), ValidationError);
  }
  SUBCASE("theta from charge levels") {
    auto spec = case_spec(2);
    spec.b = 0.9;
    spec.s1 = 1.0;
    spec.eta = {10.0, 10.0};
    const auto fleet = generate_fleet_params(spec, 3, 1);
    CHECK(fleet.params[0].theta() == doctest::Approx(10.0));
  }
}

TEST_CASE("demand_profile") {
  CHECK(demand_profile(ZeroDemand{}).d == Vector::Zero(24));

  const auto valley = demand_profile(SyntheticValley{});
  Eigen::Index argmin = 0;
  valley.d.minCoeff(&argmin);
  const int hour = slot_start_hour(static_cast<int>(argmin) + 1);
  CHECK(hour >= 2);
  CHECK(hour <= 5);
  CHECK(valley.d.minCoeff() == doctest::Approx(0.3));
  CHECK(valley.d.maxCoeff() == doctest::Approx(1.0));
  CHECK(valley.kappa == Vector::Ones(24));

  const auto path = (std::filesystem::temp_directory_path() / "chargegame_demand_roundtrip.csv").string();
  write_demand_csv(path, valley.d);
  CHECK(demand_profile(DemandFile{path}).d == valley.d);

  {
    std::ofstream out(path);
    for (int i = 0; i < 23; ++i) out << "1.0\n";
  }
  CHECK_THROWS_AS(demand_profile(DemandFile{path}), ValidationError);
  {
    std::ofstream out(path);
    for (int i = 0; i < 24; ++i) out << (i == 3 ? "-1\n" : "1\n");
  }
  CHECK_THROWS_AS(demand_profile(DemandFile{path}), ValidationError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(demand_profile(DemandFile{path}), ValidationError);
}
