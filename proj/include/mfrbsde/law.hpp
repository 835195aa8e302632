#pragma once

#include <Eigen/Core>

#include <vector>

namespace mfrbsde {

using Eigen::Index;
using Eigen::VectorXd;

/// Summary of a one-dimensional marginal law: its mean and the sorted support
/// of an empirical (optionally weighted) measure.
///
/// An empty weight vector means every atom carries mass 1/size(). Lattice
/// marginals use explicit binomial weights.
class LawView {
 public:
  /// Point mass at zero.
  LawView();

  /// Point mass at `value`. Also used as the cheap "mean only" summary when a
  /// problem never looks past the first moment.
  static LawView point(double value);

  /// Equally weighted empirical law. Throws ModelError on an empty sample.
  static LawView empirical(const VectorXd& sample);

  /// Weighted empirical law; weights are normalised to sum to one.
  static LawView weighted(const VectorXd& values, const VectorXd& weights);

  double mean() const noexcept { return mean_; }
  const VectorXd& sample() const noexcept { return sample_; }
  const VectorXd& weights() const noexcept { return weights_; }
  Index size() const noexcept { return sample_.size(); }
  bool uniform() const noexcept { return weights_.size() == 0; }
  double weight(Index k) const noexcept {
    return uniform() ? 1.0 / static_cast<double>(sample_.size()) : weights_[k];
  }

  double variance() const;

  /// Left-continuous quantile function F^{-1}(u), u in (0, 1].
  double quantile(double u) const;

  /// Law of c*X for c > 0.
  LawView scaled(double factor) const;

 private:
  double mean_ = 0.0;
  VectorXd sample_;
  VectorXd weights_;
};

/// One LawView per grid point t_0..t_N.
class LawCurve {
 public:
  LawCurve() = default;
  explicit LawCurve(std::vector<LawView> laws) : laws_(std::move(laws)) {}
  LawCurve(Index points, const LawView& law) : laws_(static_cast<std::size_t>(points), law) {}

  Index size() const noexcept { return static_cast<Index>(laws_.size()); }
  const LawView& operator[](Index i) const { return laws_[static_cast<std::size_t>(i)]; }
  LawView& operator[](Index i) { return laws_[static_cast<std::size_t>(i)]; }

  VectorXd means() const;

 private:
  std::vector<LawView> laws_;
};

enum class CurveMetric { mean_only, wasserstein };

/// p-Wasserstein distance between one-dimensional laws, computed with the
/// monotone (quantile) coupling, which is optimal in one dimension.
double wasserstein_p(const LawView& a, const LawView& b, double p);

/// sup over grid points of |m_i - m'_i| or of W_p(law_i, law'_i).
/// Only indices in [first, last) are compared; last = -1 means "to the end".
double curve_distance(const LawCurve& a, const LawCurve& b, double p, CurveMetric metric,
                      Index first = 0, Index last = -1);

/// Empirical law of one column of path values.
LawView law_of(const VectorXd& values);
LawView law_of(const VectorXd& values, const VectorXd& weights);

/// Column i of a path-by-time matrix.
LawView law_of(const Eigen::MatrixXd& y_paths, Index i);

}  // namespace mfrbsde
