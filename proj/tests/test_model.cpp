#include "mfrbsde/errors.hpp"
#include "mfrbsde/model.hpp"

#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <random>

using namespace mfrbsde;

TEST_CASE("TimeGrid invariants") {
  const TimeGrid g(0.7, 9);
  CHECK(g.dt() > 0.0);
  CHECK(g.time(0) == 0.0);
  CHECK(g.time(9) == 0.7);
  const VectorXd t = g.times();
  REQUIRE(t.size() == 10);
  for (Index i = 0; i + 1 < t.size(); ++i) CHECK(t[i] < t[i + 1]);
  CHECK_THROWS_AS(TimeGrid(1.0, 0), ModelError);
  CHECK_THROWS_AS(TimeGrid(-1.0, 4), ModelError);
}

TEST_CASE("ForwardModel invariants") {
  CHECK_THROWS_AS(ForwardModel::geometric(0.0, 0.0, 0.2).check(), ModelError);
  CHECK_THROWS_AS(ForwardModel::arithmetic(0.0, 0.0, -1.0).check(), ModelError);
  CHECK_NOTHROW(ForwardModel::brownian(1.0).check());
}

TEST_CASE("simulate_paths") {
  SUBCASE("brownian identity dynamics") {
    const auto e = simulate_paths(ForwardModel::brownian(0.0), TimeGrid(1.0, 1), 1, 5);
    CHECK(e.x(0, 1) == e.dB(0, 0));
    CHECK(e.x(0, 0) == 0.0);
  }
  SUBCASE("zero volatility geometric") {
    const auto e = simulate_paths(ForwardModel::geometric(2.0, 0.0, 0.0), TimeGrid(1.0, 4), 10, 5);
    CHECK((e.x.array() == 2.0).all());
  }
  SUBCASE("exact transitions") {
    const auto fwd = ForwardModel::geometric(1.3, 0.05, 0.3);
    const TimeGrid g(2.0, 8);
    const auto e = simulate_paths(fwd, g, 50, 9);
    for (Index k = 0; k < 50; ++k) {
      const double b = e.dB.row(k).sum();
      const double exact = 1.3 * std::exp((0.05 - 0.045) * 2.0 + 0.3 * b);
      CHECK(e.x(k, 8) == doctest::Approx(exact).epsilon(1e-12));
    }
  }
  SUBCASE("CLT bound and increment variance") {
    const TimeGrid g(1.0, 50);
    const auto e = simulate_paths(ForwardModel::brownian(0.0), g, 100000, 2024);
    CHECK(std::abs(e.x.col(50).mean()) < 4.0 * std::sqrt(1.0) / std::pow(10.0, 2.5));
    const double var = e.dB.array().square().mean();
    CHECK(var == doctest::Approx(g.dt()).epsilon(0.01));
  }
  SUBCASE("thread count does not change the ensemble") {
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto a = simulate_paths(ForwardModel::arithmetic(0.0, 0.1, 0.5), TimeGrid(1.0, 20), 999, 77);
    omp_set_num_threads(4);
    const auto b = simulate_paths(ForwardModel::arithmetic(0.0, 0.1, 0.5), TimeGrid(1.0, 20), 999, 77);
    omp_set_num_threads(saved);
    CHECK((a.x.array() == b.x.array()).all());
    CHECK((a.dB.array() == b.dB.array()).all());
    const auto c = simulate_paths(ForwardModel::arithmetic(0.0, 0.1, 0.5), TimeGrid(1.0, 20), 999, 78);
    CHECK((a.dB.array() != c.dB.array()).any());
  }
}

TEST_CASE("ObstacleSpec rejects gamma1 >= 1") {
  CHECK_THROWS_WITH_AS(ObstacleSpec::affine(1.0, 0.0, 1.0), doctest::Contains("gamma1 < 1"),
                       ModelError);
  CHECK_NOTHROW(ObstacleSpec::affine(0.99, 0.0, 1.0));
}

TEST_CASE("y - h(y, m) is strictly increasing for accepted obstacles") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  const ObstacleSpec h = ObstacleSpec::affine(-0.7, 0.4, 0.2);
  for (int s = 0; s < 1000; ++s) {
    const double y = u(rng), d = std::abs(u(rng)) + 1e-3;
    const LawView m = LawView::point(u(rng));
    const double g0 = y - h(0.0, 0.0, y, m), g1 = y + d - h(0.0, 0.0, y + d, m);
    CHECK(g1 - g0 >= (1.0 - h.gamma1()) * d - 1e-12);
  }
}

TEST_CASE("validate") {
  const TimeGrid g(1.0, 10);
  SUBCASE("terminal compatibility with h = 0.3 m") {
    ProblemSpec p(g, ForwardModel::brownian(), DriverSpec::zero(), ObstacleSpec::affine(0.0, 0.3, 0.0),
                  TerminalSpec::constant(1.0));
    const auto r = validate(p, 2000);
    REQUIRE(r.find("terminal_compatibility") != nullptr);
    CHECK(r.find("terminal_compatibility")->passed);
    CHECK(r.ok());
  }
  SUBCASE("incompatible terminal") {
    ProblemSpec p(g, ForwardModel::brownian(), DriverSpec::zero(), ObstacleSpec::constant(1.0),
                  TerminalSpec::constant(0.0));
    const auto r = validate(p, 500);
    CHECK_FALSE(r.find("terminal_compatibility")->passed);
    CHECK_FALSE(r.ok());
  }
  SUBCASE("mis-declared Lipschitz constant is caught with a witness") {
    DriverSpec f = DriverSpec::linear(0.5, 0.0, 0.0);
    f.lip_y = 0.4;
    ProblemSpec p(g, ForwardModel::brownian(), f, ObstacleSpec::inactive(), TerminalSpec::constant(0.0));
    const auto r = validate(p, 500);
    const auto* c = r.find("driver_lipschitz_y");
    REQUIRE(c != nullptr);
    CHECK_FALSE(c->passed);
    CHECK_FALSE(c->witness.empty());
  }
  SUBCASE("infeasible contraction constants") {
    ProblemSpec p(g, ForwardModel::brownian(), DriverSpec::zero(), ObstacleSpec::affine(0.5, 0.5, -10.0),
                  TerminalSpec::constant(0.0));
    const auto r = validate(p, 500);
    CHECK_FALSE(r.find("contraction_feasible")->passed);
    CHECK(r.find("contraction_feasible")->worst == doctest::Approx(std::sqrt(2.5)));
  }
  SUBCASE("domination probe") {
    DriverSpec f;
    f.eval = [](double, double, double y, std::span<const double> z, const LawView&) {
      return 0.1 * std::sin(z[0]) + y;
    };
    f.lip_y = 1.0;
    f.lip_z = 0.1;
    f.domination = Domination{[](double, double, double y, const LawView&) { return 0.1 + y; }, 1.0, 0.0};
    ProblemSpec p(g, ForwardModel::brownian(), f, ObstacleSpec::inactive(), TerminalSpec::constant(0.0));
    const auto r = validate(p, 2000);
    REQUIRE(r.find("domination") != nullptr);
    CHECK(r.find("domination")->passed);
  }
}

TEST_CASE("insurance problem") {
  const TimeGrid g(1.0, 20);
  const auto fwd = ForwardModel::geometric(1.0, 0.0, 0.2);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);

  SUBCASE("zeroed coefficients") {
    InsuranceParams ip;
    ip.alpha = ip.beta = ip.delta_rate = [](double) { return 0.0; };
    ip.fee = [](double) { return 0.0; };
    ip.fee_lipschitz = 0.0;
    const ProblemSpec p = insurance_problem(ip, g, fwd);
    for (int s = 0; s < 200; ++s) {
      const double y = u(rng), m = u(rng);
      const LawView law = LawView::point(m);
      CHECK(p.driver(0.3, 1.0, y, 0.0, law) == 0.0);
      CHECK(p.obstacle(0.3, 1.0, y, law) == doctest::Approx(1.0 + 0.5 * std::max(m - 1.0, 0.0)));
    }
  }
  SUBCASE("linear reserve equation") {
    InsuranceParams ip;
    ip.beta = [](double) { return 0.0; };
    ip.delta_rate = [](double) { return 0.04; };
    const ProblemSpec p = insurance_problem(ip, g, fwd);
    for (int s = 0; s < 200; ++s) {
      const double y = u(rng);
      CHECK(p.driver(0.5, 1.0, y, 0.0, LawView::point(u(rng))) == doctest::Approx(0.1 - 0.04 * y));
    }
    CHECK(p.driver.monotone_in_m);
  }
  SUBCASE("defaults") {
    const ProblemSpec p = insurance_default();
    CHECK(p.obstacle.gamma1() == doctest::Approx(0.01));
    CHECK(p.obstacle.gamma2() == doctest::Approx(0.5));
    // Dense finite-difference probe of the declared constants.
    double sy = 0.0, sm = 0.0, hy = 0.0, hm = 0.0;
    for (int s = 0; s < 20000; ++s) {
      const double t = std::abs(u(rng)) / 3.0, y = u(rng), m = u(rng), d = 1e-3 + std::abs(u(rng)) / 3.0;
      const LawView l0 = LawView::point(m), l1 = LawView::point(m + d);
      sy = std::max(sy, std::abs(p.driver(t, 1.0, y + d, 0.0, l0) - p.driver(t, 1.0, y, 0.0, l0)) / d);
      sm = std::max(sm, std::abs(p.driver(t, 1.0, y, 0.0, l1) - p.driver(t, 1.0, y, 0.0, l0)) / d);
      hy = std::max(hy, std::abs(p.obstacle(t, 1.0, y + d, l0) - p.obstacle(t, 1.0, y, l0)) / d);
      hm = std::max(hm, std::abs(p.obstacle(t, 1.0, y, l1) - p.obstacle(t, 1.0, y, l0)) / d);
    }
    CHECK(sy <= p.driver.lip_y + 1e-12);
    CHECK(sm <= p.driver.lip_m + 1e-12);
    CHECK(hy <= p.obstacle.gamma1() + 1e-12);
    CHECK(hm <= p.obstacle.gamma2() + 1e-12);
    CHECK(sy == doctest::Approx(p.driver.lip_y).epsilon(1e-9));

    const auto r = validate(p, 10000);
    CHECK(r.ok());
    // beta > 0 makes f decrease in m where the max branch flips; reported, not fatal.
    const auto* mono = r.find("driver_monotone_m_probe");
    REQUIRE(mono != nullptr);
    CHECK(mono->informational);
    CHECK_FALSE(mono->passed);
  }
  SUBCASE("mu outside (0, 1)") {
    InsuranceParams ip;
    ip.mu = 1.0;
    CHECK_THROWS_AS(insurance_problem(ip, g, fwd), ModelError);
    ip.mu = 0.0;
    CHECK_THROWS_AS(insurance_problem(ip, g, fwd), ModelError);
  }
}
