#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "heml/errors.hpp"
#include "heml/types.hpp"

namespace heml {

enum class MetricTag { Euclidean, Snr };

inline const char* metric_name(MetricTag m) {
  return m == MetricTag::Euclidean ? "euclidean" : "snr";
}

namespace detail {

// Population variance over the coefficients of a vector expression,
// accumulated in double.
template <class Derived>
double population_variance(const Eigen::MatrixBase<Derived>& v) {
  const auto x = v.derived().template cast<double>().array();
  const double mean = x.mean();
  return (x - mean).square().sum() / static_cast<double>(v.size());
}

}  // namespace detail

// Var(x - y) / Var(x) over embedding dimensions. Asymmetric: x is the
// anchor whose variance normalizes the ratio. Zero when x == y.
template <class DA, class DB>
double snr_distance(const Eigen::MatrixBase<DA>& x,
                    const Eigen::MatrixBase<DB>& y) {
  if (x.size() != y.size()) {
    throw ShapeError("snr_distance: embedding dims differ");
  }
  if (x.size() < 2) {
    throw UsageError("snr_distance: needs at least 2 dimensions");
  }
  const double var_anchor = detail::population_variance(x.derived());
  if (var_anchor <= kDegeneracyEps) {
    throw DegenerateError("snr_distance: anchor variance below guard");
  }
  const VectorD diff =
      x.derived().template cast<double>().reshaped() -
      y.derived().template cast<double>().reshaped();
  return detail::population_variance(diff) / var_anchor;
}

// Monotone map of [0, inf) onto [0, 1): d / (1 + d).
inline double normalize_distance(double d) {
  if (d < 0.0) {
    throw UsageError("normalize_distance: negative distance");
  }
  return d / (1.0 + d);
}

template <class DA, class DB>
double cosine_similarity(const Eigen::MatrixBase<DA>& x,
                         const Eigen::MatrixBase<DB>& y) {
  if (x.size() != y.size()) {
    throw ShapeError("cosine_similarity: dims differ");
  }
  const VectorD a = x.derived().template cast<double>().reshaped();
  const VectorD b = y.derived().template cast<double>().reshaped();
  const double na = a.norm();
  const double nb = b.norm();
  if (na <= kDegeneracyEps || nb <= kDegeneracyEps) {
    throw DegenerateError("cosine_similarity: zero-norm input");
  }
  return a.dot(b) / (na * nb);
}

template <class DA, class DB>
double euclidean_distance(const Eigen::MatrixBase<DA>& x,
                          const Eigen::MatrixBase<DB>& y) {
  if (x.size() != y.size()) {
    throw ShapeError("euclidean_distance: dims differ");
  }
  return (x.derived().template cast<double>().reshaped() -
          y.derived().template cast<double>().reshaped())
      .norm();
}

struct DistanceMatrix {
  MatrixD values;  // entry (i, j): row i as anchor against row j
  MetricTag metric = MetricTag::Euclidean;

  Index size() const { return values.rows(); }
};

// All pairwise distances between rows; diagonal is exactly zero.
template <class S>
DistanceMatrix pairwise_distances(const Matrix<S>& embeddings, MetricTag metric) {
  const Index n = embeddings.rows();
  if (n < 2) {
    throw UsageError("pairwise_distances: needs at least 2 rows");
  }
  if (metric == MetricTag::Snr) {
    std::vector<Index> degenerate;
    for (Index i = 0; i < n; ++i) {
      if (detail::population_variance(embeddings.row(i)) <= kDegeneracyEps) {
        degenerate.push_back(i);
      }
    }
    if (!degenerate.empty()) {
      std::string msg = "pairwise_distances: degenerate anchor rows:";
      for (Index i : degenerate) msg += " " + std::to_string(i);
      throw DegenerateError(msg);
    }
  }

  DistanceMatrix out;
  out.metric = metric;
  out.values = MatrixD::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      out.values(i, j) =
          metric == MetricTag::Euclidean
              ? euclidean_distance(embeddings.row(i), embeddings.row(j))
              : snr_distance(embeddings.row(i), embeddings.row(j));
    }
  }
  return out;
}

}  // namespace heml
