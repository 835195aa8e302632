#include "mfrbsde/errors.hpp"
#include "mfrbsde/law.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

using namespace mfrbsde;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

VectorXd random_sample(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  VectorXd v(n);
  for (Index k = 0; k < n; ++k) v[k] = g(rng);
  return v;
}

// Cost of the coupling k -> perm[k] between samples a and b (both unsorted).
double coupling_cost(const VectorXd& a, const VectorXd& b, const std::vector<int>& perm, double p) {
  double s = 0.0;
  for (std::size_t k = 0; k < perm.size(); ++k)
    s += std::pow(std::abs(a[static_cast<Index>(k)] - b[perm[k]]), p);
  return std::pow(s / static_cast<double>(perm.size()), 1.0 / p);
}

}  // namespace

TEST_CASE("law_of summarises a column") {
  const LawView c = law_of(VectorXd::Constant(5, 2.5));
  CHECK(c.mean() == 2.5);
  CHECK((c.sample().array() == 2.5).all());

  const LawView two = law_of(vec({3.0, 1.0}));
  CHECK(two.mean() == 2.0);
  CHECK(two.sample()[0] == 1.0);
  CHECK(two.sample()[1] == 3.0);

  std::mt19937_64 rng(11);
  const LawView normal = law_of(random_sample(rng, 100000));
  CHECK(std::abs(normal.mean()) < 0.013);
  CHECK(std::is_sorted(normal.sample().data(), normal.sample().data() + normal.size()));

  CHECK_THROWS_AS(LawView::empirical(VectorXd()), ModelError);
}

TEST_CASE("weighted laws normalise and sort") {
  const LawView w = LawView::weighted(vec({3.0, 1.0, 2.0}), vec({1.0, 2.0, 1.0}));
  CHECK(w.mean() == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(w.sample()[0] == 1.0);
  CHECK(w.weight(0) == doctest::Approx(0.5));
  CHECK(w.quantile(0.5) == 1.0);
  CHECK(w.quantile(0.51) == 2.0);
  CHECK(w.quantile(1.0) == 3.0);
}

TEST_CASE("wasserstein_p examples") {
  CHECK(wasserstein_p(law_of(vec({0.0, 2.0})), law_of(vec({1.0, 3.0})), 1.0) == 1.0);
  const LawView a = law_of(vec({0.3, -1.0, 2.0}));
  CHECK(wasserstein_p(a, a, 2.0) == 0.0);
  // Unequal sizes: {0, 1} and {0, 0, 1, 1} are the same measure.
  CHECK(wasserstein_p(law_of(vec({0.0, 1.0})), law_of(vec({0.0, 0.0, 1.0, 1.0})), 2.0) ==
        doctest::Approx(0.0).epsilon(1e-15));
  // Equal weights given explicitly agree with the uniform representation.
  const VectorXd s = vec({0.1, 0.7, -0.4, 2.0});
  CHECK(wasserstein_p(law_of(s), law_of(s, VectorXd::Ones(4)), 1.5) <= 1e-15);
}

TEST_CASE("distance to a point mass is the p-th moment") {
  std::mt19937_64 rng(3);
  for (double p : {1.0, 1.5, 2.0, 3.0}) {
    const VectorXd y = random_sample(rng, 257);
    const double moment = std::pow(y.array().abs().pow(p).mean(), 1.0 / p);
    CHECK(std::abs(wasserstein_p(law_of(y), LawView::point(0.0), p) - moment) <= 1e-12);
  }
}

TEST_CASE("sorted coupling beats every permutation for n <= 6") {
  std::mt19937_64 rng(5);
  for (int n = 1; n <= 6; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      for (double p : {1.0, 2.0, 3.5}) {
        const VectorXd a = random_sample(rng, n), b = random_sample(rng, n);
        VectorXd as = a, bs = b;
        std::sort(as.data(), as.data() + n);
        std::sort(bs.data(), bs.data() + n);
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        double best = INFINITY;
        do {
          best = std::min(best, coupling_cost(as, bs, perm, p));
        } while (std::next_permutation(perm.begin(), perm.end()));
        const double w = wasserstein_p(law_of(a), law_of(b), p);
        if (p > 1.0)
          CHECK(w == best);
        else
          CHECK(std::abs(w - best) <= 1e-14);
      }
    }
  }
}

TEST_CASE("wasserstein_p is a metric and grows with p") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> size(1, 40);
  for (int rep = 0; rep < 1000; ++rep) {
    const Index n = size(rng);
    const LawView a = law_of(random_sample(rng, n)), b = law_of(random_sample(rng, n)),
                  c = law_of(random_sample(rng, n));
    const double p = 1.0 + 2.0 * (rep % 5) / 4.0;
    const double ab = wasserstein_p(a, b, p), ba = wasserstein_p(b, a, p);
    CHECK(ab == ba);
    CHECK(ab >= 0.0);
    CHECK(wasserstein_p(a, c, p) <= ab + wasserstein_p(b, c, p) + 1e-12);
  }
  // Identity up to multiset equality.
  const VectorXd s = vec({4.0, -1.0, 0.5, 0.5});
  CHECK(wasserstein_p(law_of(s), law_of(s.reverse()), 2.0) == 0.0);

  const LawView a = law_of(random_sample(rng, 100)), b = law_of(random_sample(rng, 100));
  double prev = 0.0;
  for (double p = 1.0; p <= 6.0; p += 0.25) {
    const double w = wasserstein_p(a, b, p);
    CHECK(w >= prev - 1e-15);
    prev = w;
  }
}

TEST_CASE("curve_distance") {
  std::mt19937_64 rng(13);
  std::vector<LawView> base;
  for (int i = 0; i < 6; ++i) base.push_back(law_of(random_sample(rng, 50)));
  const LawCurve a(base);
  CHECK(curve_distance(a, a, 2.0, CurveMetric::mean_only) == 0.0);
  CHECK(curve_distance(a, a, 2.0, CurveMetric::wasserstein) == 0.0);

  std::vector<LawView> shifted = base;
  shifted[3] = LawView::empirical((base[3].sample().array() + 0.2).matrix());
  CHECK(curve_distance(a, LawCurve(shifted), 2.0, CurveMetric::mean_only) ==
        doctest::Approx(0.2).epsilon(1e-14));
  CHECK(curve_distance(a, LawCurve(shifted), 2.0, CurveMetric::mean_only, 4) == 0.0);

  CHECK_THROWS_AS(curve_distance(a, LawCurve(std::vector<LawView>(base.begin(), base.end() - 1)),
                                 2.0, CurveMetric::mean_only),
                  ModelError);

  // Jensen: W_p >= |mean difference|; coupling inequality for path-coupled samples.
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<LawView> u, v;
    double coupled = 0.0;
    for (int i = 0; i < 4; ++i) {
      const VectorXd x = random_sample(rng, 30);
      const VectorXd y = x + 0.5 * random_sample(rng, 30);
      u.push_back(law_of(x));
      v.push_back(law_of(y));
      coupled = std::max(coupled, std::sqrt((x - y).array().square().mean()));
    }
    const LawCurve cu(u), cv(v);
    const double w = curve_distance(cu, cv, 2.0, CurveMetric::wasserstein);
    CHECK(w >= curve_distance(cu, cv, 2.0, CurveMetric::mean_only) - 1e-14);
    CHECK(w <= coupled + 1e-14);
  }
}

TEST_CASE("scaled law") {
  const LawView a = law_of(vec({1.0, 2.0, 4.0}));
  const LawView s = a.scaled(0.5);
  CHECK(s.mean() == doctest::Approx(a.mean() * 0.5));
  CHECK(s.sample()[2] == 2.0);
}
