#include "mfrbsde/condexp.hpp"
#include "mfrbsde/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mfrbsde;

namespace {

VectorXd normals(Index n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  VectorXd v(n);
  for (Index k = 0; k < n; ++k) v[k] = g(rng);
  return v;
}

}  // namespace

TEST_CASE("regression fit_condexp") {
  const VectorXd x = normals(2000, 1);
  const RegressionEngine eng;
  SUBCASE("constant targets") {
    const VectorXd c = fit_condexp(eng, x, VectorXd::Constant(2000, 3.25));
    CHECK((c.array() - 3.25).abs().maxCoeff() <= 1e-12);
  }
  SUBCASE("polynomial targets are reproduced") {
    const VectorXd y = (x.array().square() - 2.0 * x.array() + 0.5).matrix();
    const VectorXd c = fit_condexp(RegressionEngine{2, 0.0}, x, y);
    CHECK((c - y).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("residuals are orthogonal to the basis") {
    const VectorXd y = (x.array().sin() + normals(2000, 2).array()).matrix();
    const RegressionProjector proj(RegressionEngine{3, 0.0}, x);
    const VectorXd r = y - proj.fit(x, y);
    double row[8];
    VectorXd inner = VectorXd::Zero(proj.columns());
    for (Index k = 0; k < x.size(); ++k) {
      proj.basis(x[k], row);
      for (int a = 0; a < proj.columns(); ++a) inner[a] += row[a] * r[k];
    }
    CHECK((inner / 2000.0).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("rank deficiency without ridge") {
    VectorXd two(100);
    for (Index k = 0; k < 100; ++k) two[k] = k % 2 == 0 ? -1.0 : 1.0;
    CHECK_THROWS_WITH_AS(RegressionProjector(RegressionEngine{3, 0.0}, two),
                         doctest::Contains("ridge > 0"), NumericalError);
    CHECK_NOTHROW(RegressionProjector(RegressionEngine{3, 1e-8}, two));
  }
  SUBCASE("too few paths") {
    CHECK_THROWS_AS(RegressionProjector(RegressionEngine{3, 1e-8}, x.head(3)), NumericalError);
  }
}

TEST_CASE("regression estimate_z") {
  const Index n = 40000;
  const double dt = 0.01;
  const VectorXd x = normals(n, 3);
  const VectorXd db = normals(n, 4, std::sqrt(dt));
  SUBCASE("deterministic targets") {
    const VectorXd z = estimate_z(RegressionEngine{}, x, (x.array() * 0.0 + 2.0).matrix(), db, dt);
    CHECK(z.cwiseAbs().maxCoeff() <= 1e-9);
  }
  SUBCASE("targets independent of dB") {
    const VectorXd z = estimate_z(RegressionEngine{}, x, x.array().square().matrix(), db, dt);
    CHECK(std::abs(z.mean()) <= 4.0 / std::sqrt(static_cast<double>(n)) * 10.0);
  }
  SUBCASE("targets x + dB give Z = 1") {
    const VectorXd z = estimate_z(RegressionEngine{}, x, x + db, db, dt);
    CHECK(z.mean() == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("lattice engine") {
  const TimeGrid g(1.0, 16);
  SUBCASE("one-step average and slope") {
    const LatticeEngine e(ForwardModel::brownian(0.0), g);
    VectorXd next(2);
    next << 1.0, 3.0;
    CHECK(fit_condexp(e, 0, next)[0] == 2.0);
    CHECK(estimate_z(e, 0, next)[0] == doctest::Approx(2.0 / (2.0 * std::sqrt(g.dt()))));
    CHECK_THROWS_AS(e.expect(0, VectorXd::Zero(3)), ModelError);
  }
  SUBCASE("Z of the state is exactly one on a brownian lattice") {
    const LatticeEngine e(ForwardModel::brownian(0.5), g);
    for (Index i = 0; i < g.steps(); ++i) {
      const VectorXd z = e.z(i, e.states(i + 1));
      CHECK((z.array() - 1.0).abs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("geometric two-node difference") {
    const double vol = 0.3;
    const LatticeEngine e(ForwardModel::geometric(1.0, 0.0, vol), g);
    const double sdt = std::sqrt(g.dt());
    for (Index i = 0; i < 4; ++i) {
      const VectorXd z = e.z(i, e.states(i + 1));
      const auto x = e.states(i);
      for (Index j = 0; j <= i; ++j) {
        const double expect =
            x[j] * std::exp(-0.5 * vol * vol * g.dt()) * std::sinh(vol * sdt) / sdt;
        CHECK(z[j] == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
  SUBCASE("tower property reproduces moments") {
    const auto fwd = ForwardModel::arithmetic(0.2, 0.1, 0.7);
    const LatticeEngine e(fwd, g);
    VectorXd v = e.states(g.steps());
    VectorXd v2 = v.array().square().matrix();
    for (Index i = g.steps() - 1; i >= 0; --i) {
      v = e.expect(i, v);
      v2 = e.expect(i, v2);
    }
    CHECK(v[0] == doctest::Approx(0.2 + 0.1).epsilon(1e-12));
    CHECK(v2[0] == doctest::Approx(0.09 + 0.49).epsilon(1e-12));
    CHECK(e.weights(g.steps()).sum() == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("regression error shrinks like 1/sqrt(paths) against lattice truth") {
  // Linear test problem: E[x_T^2 | x_t] = x_t^2 + (T - t) for brownian x.
  const TimeGrid g(1.0, 4);
  auto rmse = [&](Index paths) {
    double total = 0.0;
    const int reps = 12;
    for (int r = 0; r < reps; ++r) {
      const auto ens = simulate_paths(ForwardModel::brownian(0.0), g, paths, 100 + r);
      const VectorXd xt = ens.x.col(2);
      const VectorXd target = (ens.x.col(4).array().square() + 0.3 * ens.dB.col(3).array()).matrix();
      const VectorXd fit = fit_condexp(RegressionEngine{3, 1e-8}, xt, target);
      const VectorXd truth = (xt.array().square() + 0.5).matrix();
      total += (fit - truth).squaredNorm() / static_cast<double>(paths);
    }
    return std::sqrt(total / reps);
  };
  const double ratio = rmse(1000) / rmse(10000);
  CHECK(ratio >= 2.0);
  CHECK(ratio <= 5.0);
}
