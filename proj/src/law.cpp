#include "mfrbsde/law.hpp"

#include "mfrbsde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mfrbsde {

LawView::LawView() : mean_(0.0), sample_(VectorXd::Zero(1)) {}

LawView LawView::point(double value) {
  LawView law;
  law.mean_ = value;
  law.sample_ = VectorXd::Constant(1, value);
  return law;
}

LawView LawView::empirical(const VectorXd& sample) {
  if (sample.size() == 0) throw ModelError("empirical law of an empty sample");
  LawView law;
  law.mean_ = sample.mean();
  law.sample_ = sample;
  std::sort(law.sample_.begin(), law.sample_.end());
  return law;
}

LawView LawView::weighted(const VectorXd& values, const VectorXd& weights) {
  if (values.size() == 0) throw ModelError("weighted law of an empty sample");
  if (values.size() != weights.size()) throw ModelError("weighted law: size mismatch");
  const double total = weights.sum();
  if (!(total > 0.0)) throw ModelError("weighted law: weights must have positive mass");

  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values[a] < values[b]; });

  LawView law;
  law.sample_.resize(values.size());
  law.weights_.resize(values.size());
  for (Index k = 0; k < values.size(); ++k) {
    law.sample_[k] = values[order[static_cast<std::size_t>(k)]];
    law.weights_[k] = weights[order[static_cast<std::size_t>(k)]] / total;
  }
  law.mean_ = values.dot(weights) / total;
  return law;
}

double LawView::variance() const {
  double acc = 0.0;
  for (Index k = 0; k < size(); ++k) {
    const double d = sample_[k] - mean_;
    acc += weight(k) * d * d;
  }
  return acc;
}

double LawView::quantile(double u) const {
  if (uniform()) {
    const auto n = static_cast<double>(size());
    auto k = static_cast<Index>(std::ceil(u * n)) - 1;
    return sample_[std::clamp<Index>(k, 0, size() - 1)];
  }
  double cum = 0.0;
  for (Index k = 0; k < size(); ++k) {
    cum += weights_[k];
    if (cum >= u) return sample_[k];
  }
  return sample_[size() - 1];
}

LawView LawView::scaled(double factor) const {
  if (!(factor > 0.0)) throw ModelError("LawView::scaled requires a positive factor");
  LawView law = *this;
  law.mean_ *= factor;
  law.sample_ *= factor;
  return law;
}

VectorXd LawCurve::means() const {
  VectorXd m(size());
  for (Index i = 0; i < size(); ++i) m[i] = (*this)[i].mean();
  return m;
}

double wasserstein_p(const LawView& a, const LawView& b, double p) {
  if (a.size() == 0 || b.size() == 0) throw ModelError("wasserstein_p: empty sample");
  if (!(p >= 1.0)) throw ModelError("wasserstein_p: p must be >= 1");

  const VectorXd& x = a.sample();
  const VectorXd& y = b.sample();

  if (a.uniform() && b.uniform() && a.size() == b.size()) {
    double acc = 0.0;
    for (Index k = 0; k < x.size(); ++k) acc += std::pow(std::abs(x[k] - y[k]), p);
    return std::pow(acc / static_cast<double>(x.size()), 1.0 / p);
  }

  // Walk both quantile functions, transporting the overlap of each pair of atoms.
  Index i = 0;
  Index j = 0;
  double ra = a.weight(0);
  double rb = b.weight(0);
  double acc = 0.0;
  constexpr double kDust = 1e-15;
  while (i < x.size() && j < y.size()) {
    const double mass = std::min(ra, rb);
    acc += mass * std::pow(std::abs(x[i] - y[j]), p);
    ra -= mass;
    rb -= mass;
    if (ra <= kDust) {
      if (++i < x.size()) ra += a.weight(i);
    }
    if (rb <= kDust) {
      if (++j < y.size()) rb += b.weight(j);
    }
  }
  return std::pow(acc, 1.0 / p);
}

double curve_distance(const LawCurve& a, const LawCurve& b, double p, CurveMetric metric,
                      Index first, Index last) {
  if (a.size() != b.size()) throw ModelError("curve_distance: grid mismatch");
  if (last < 0) last = a.size();
  double sup = 0.0;
  for (Index i = first; i < last; ++i) {
    const double d = metric == CurveMetric::mean_only ? std::abs(a[i].mean() - b[i].mean())
                                                      : wasserstein_p(a[i], b[i], p);
    sup = std::max(sup, d);
  }
  return sup;
}

LawView law_of(const VectorXd& values) { return LawView::empirical(values); }

LawView law_of(const VectorXd& values, const VectorXd& weights) {
  if (weights.size() == 0) return LawView::empirical(values);
  return LawView::weighted(values, weights);
}

LawView law_of(const Eigen::MatrixXd& y_paths, Index i) {
  return LawView::empirical(y_paths.col(i));
}

}  // namespace mfrbsde
