#include "mfrbsde/solution.hpp"

#include "mfrbsde/errors.hpp"

#include <algorithm>

namespace mfrbsde {

VectorXd SolutionBundle::mean_y() const {
  VectorXd m(static_cast<Index>(y.size()));
  for (Index i = 0; i < m.size(); ++i) m[i] = engine->mean(i, y[static_cast<std::size_t>(i)]);
  return m;
}

double SolutionBundle::sup_distance(const SolutionBundle& other) const {
  if (other.y.size() != y.size()) throw ModelError("sup_distance: bundles have different grids");
  double d = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (other.y[i].size() != y[i].size())
      throw ModelError("sup_distance: bundles live on different state spaces");
    if (y[i].size() > 0) d = std::max(d, (y[i] - other.y[i]).cwiseAbs().maxCoeff());
  }
  return d;
}

LawCurve law_curve_of(const Engine& engine, const std::vector<VectorXd>& y, bool full_sample) {
  std::vector<LawView> laws;
  laws.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto step = static_cast<Index>(i);
    if (!full_sample) {
      laws.push_back(LawView::point(engine.mean(step, y[i])));
      continue;
    }
    const VectorXd& w = engine.weights(step);
    laws.push_back(w.size() == 0 ? law_of(y[i]) : law_of(y[i], w));
  }
  return LawCurve(std::move(laws));
}

}  // namespace mfrbsde
