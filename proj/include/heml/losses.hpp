#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "heml/distances.hpp"
#include "heml/errors.hpp"
#include "heml/mining.hpp"
#include "heml/types.hpp"

namespace heml {

enum class LossKind { TripletMargin, SnrContrastive, NTXent };

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::TripletMargin: return "triplet";
    case LossKind::SnrContrastive: return "snr";
    case LossKind::NTXent: return "ntxent";
  }
  return "triplet";
}

inline LossKind loss_from_name(const std::string& s) {
  if (s == "triplet") return LossKind::TripletMargin;
  if (s == "snr") return LossKind::SnrContrastive;
  if (s == "ntxent") return LossKind::NTXent;
  throw ParseError("unknown loss: " + s);
}

// abs keeps the penalty |d_ap - d_an + m|; hinge clamps it at zero.
enum class MarginMode { Abs, Hinge };

inline const char* margin_mode_name(MarginMode m) {
  return m == MarginMode::Abs ? "abs" : "hinge";
}

inline MarginMode margin_mode_from_name(const std::string& s) {
  if (s == "abs") return MarginMode::Abs;
  if (s == "hinge") return MarginMode::Hinge;
  throw ParseError("unknown margin mode: " + s);
}

template <class S>
struct LossResult {
  double loss = 0.0;
  Matrix<S> grad;  // same shape as the embeddings
};

namespace detail {

// d/dx_k and d/dy_k of Var(x - y)/Var(x), anchor x. All double.
struct SnrGrad {
  VectorD wrt_anchor;
  VectorD wrt_other;
  double value = 0.0;
};

inline SnrGrad snr_distance_with_grad(const VectorD& x, const VectorD& y) {
  const Index n = x.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double x_mean = x.mean();
  const VectorD x_cent = x.array() - x_mean;
  const double var_x = x_cent.squaredNorm() * inv_n;
  if (var_x <= kDegeneracyEps) {
    throw DegenerateError("snr gradient: anchor variance below guard");
  }
  const VectorD u = x - y;
  const double u_mean = u.mean();
  const VectorD u_cent = u.array() - u_mean;
  const double var_u = u_cent.squaredNorm() * inv_n;

  SnrGrad g;
  g.value = var_u / var_x;
  g.wrt_anchor = (2.0 * inv_n / var_x) * u_cent -
                 (2.0 * inv_n * var_u / (var_x * var_x)) * x_cent;
  g.wrt_other = (-2.0 * inv_n / var_x) * u_cent;
  return g;
}

}  // namespace detail

// Mean over triplets of |d_ap - d_an + m| (abs) or max(0, d_ap - d_an + m)
// (hinge), d euclidean on embeddings. Subgradient 0 at kinks. An empty
// triplet list is defined as loss 0 with zero gradient.
template <class S>
LossResult<S> triplet_margin_loss(const Matrix<S>& embeddings,
                                  const std::vector<Triplet>& triplets,
                                  double m, MarginMode mode) {
  if (m <= 0.0) {
    throw UsageError("triplet_margin_loss: margin must be positive");
  }
  require_finite(embeddings, "triplet_margin_loss embeddings");

  const Index n = embeddings.rows();
  LossResult<S> result;
  result.grad = Matrix<S>::Zero(n, embeddings.cols());
  if (triplets.empty()) return result;

  const MatrixD e = embeddings.template cast<double>();
  MatrixD grad = MatrixD::Zero(n, e.cols());
  const double inv_t = 1.0 / static_cast<double>(triplets.size());
  double total = 0.0;

  for (const Triplet& t : triplets) {
    if (t.anchor < 0 || t.anchor >= n || t.positive < 0 || t.positive >= n ||
        t.negative < 0 || t.negative >= n) {
      throw UsageError("triplet_margin_loss: triplet index out of range");
    }
    const VectorD ap = e.row(t.anchor) - e.row(t.positive);
    const VectorD an = e.row(t.anchor) - e.row(t.negative);
    const double d_ap = ap.norm();
    const double d_an = an.norm();
    const double arg = d_ap - d_an + m;

    double sign = 0.0;
    if (mode == MarginMode::Abs) {
      total += std::abs(arg);
      sign = arg > 0.0 ? 1.0 : (arg < 0.0 ? -1.0 : 0.0);
    } else {
      total += std::max(0.0, arg);
      sign = arg > 0.0 ? 1.0 : 0.0;
    }
    if (sign == 0.0) continue;

    if (d_ap > 0.0) {
      const VectorD g_ap = (sign * inv_t / d_ap) * ap;
      grad.row(t.anchor) += g_ap.transpose();
      grad.row(t.positive) -= g_ap.transpose();
    }
    if (d_an > 0.0) {
      const VectorD g_an = (sign * inv_t / d_an) * an;
      grad.row(t.anchor) -= g_an.transpose();
      grad.row(t.negative) += g_an.transpose();
    }
  }

  result.loss = total * inv_t;
  result.grad = grad.template cast<S>();
  return result;
}

// Mean over ordered positive pairs of d_SNR plus lambda times the mean
// over ordered negative pairs of max(0, margin - d_SNR). The first index
// of a pair is the anchor whose variance normalizes the ratio.
template <class S>
LossResult<S> snr_contrastive_loss(const Matrix<S>& embeddings,
                                   const std::vector<std::int32_t>& labels,
                                   double margin, double lambda = 1.0) {
  const Index n = embeddings.rows();
  if (static_cast<Index>(labels.size()) != n) {
    throw UsageError("snr_contrastive_loss: labels length mismatch");
  }
  if (margin <= 0.0) {
    throw UsageError("snr_contrastive_loss: margin must be positive");
  }
  require_finite(embeddings, "snr_contrastive_loss embeddings");

  Index n_pos = 0;
  Index n_neg = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      (labels[i] == labels[j] ? n_pos : n_neg) += 1;
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("snr_contrastive_loss: batch needs at least one positive "
                    "and one negative pair");
  }

  const MatrixD e = embeddings.template cast<double>();
  MatrixD grad = MatrixD::Zero(n, e.cols());
  double pos_sum = 0.0;
  double neg_sum = 0.0;

  for (Index i = 0; i < n; ++i) {
    const VectorD anchor = e.row(i).transpose();
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto g = detail::snr_distance_with_grad(anchor, e.row(j).transpose());
      if (labels[i] == labels[j]) {
        pos_sum += g.value;
        const double w = 1.0 / static_cast<double>(n_pos);
        grad.row(i) += w * g.wrt_anchor.transpose();
        grad.row(j) += w * g.wrt_other.transpose();
      } else if (g.value < margin) {
        neg_sum += margin - g.value;
        const double w = -lambda / static_cast<double>(n_neg);
        grad.row(i) += w * g.wrt_anchor.transpose();
        grad.row(j) += w * g.wrt_other.transpose();
      }
    }
  }

  LossResult<S> result;
  result.loss = pos_sum / static_cast<double>(n_pos) +
                lambda * neg_sum / static_cast<double>(n_neg);
  result.grad = grad.template cast<S>();
  return result;
}

// Mean over anchor-positive pairs of -log softmax(s_ap / tau) where the
// softmax runs over all k != anchor and s is cosine similarity. Anchors
// with no positive are skipped with a warning.
template <class S>
LossResult<S> ntxent_loss(const Matrix<S>& embeddings,
                          const std::vector<std::int32_t>& labels,
                          double temperature, WarningLog* warnings = nullptr) {
  const Index n = embeddings.rows();
  if (static_cast<Index>(labels.size()) != n) {
    throw UsageError("ntxent_loss: labels length mismatch");
  }
  if (temperature <= 0.0) {
    throw UsageError("ntxent_loss: temperature must be positive");
  }
  if (n < 2) {
    throw UsageError("ntxent_loss: needs at least 2 samples");
  }
  require_finite(embeddings, "ntxent_loss embeddings");

  const MatrixD e = embeddings.template cast<double>();
  VectorD norms(n);
  for (Index i = 0; i < n; ++i) {
    norms(i) = e.row(i).norm();
    if (norms(i) <= kDegeneracyEps) {
      throw DegenerateError("ntxent_loss: zero-norm embedding at row " +
                            std::to_string(i));
    }
  }
  MatrixD unit = e;
  for (Index i = 0; i < n; ++i) unit.row(i) /= norms(i);
  const MatrixD sim = unit * unit.transpose();  // cosine similarities

  Index n_pairs = 0;
  std::vector<Index> pos_count(n, 0);
  for (Index a = 0; a < n; ++a) {
    for (Index p = 0; p < n; ++p) {
      if (p != a && labels[p] == labels[a]) pos_count[a] += 1;
    }
    if (pos_count[a] == 0) {
      if (warnings) {
        warnings->add("anchor_skipped",
                      "ntxent_loss: anchor " + std::to_string(a) +
                          " has no positive");
      }
    } else {
      n_pairs += pos_count[a];
    }
  }
  if (n_pairs == 0) {
    throw DataError("ntxent_loss: no anchor has a positive");
  }

  // dL/ds accumulated first, then mapped through the cosine derivative.
  MatrixD ds = MatrixD::Zero(n, n);
  double total = 0.0;
  const double inv_pairs = 1.0 / static_cast<double>(n_pairs);

  for (Index a = 0; a < n; ++a) {
    if (pos_count[a] == 0) continue;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < n; ++k) {
      if (k != a) max_logit = std::max(max_logit, sim(a, k) / temperature);
    }
    double denom = 0.0;
    for (Index k = 0; k < n; ++k) {
      if (k != a) denom += std::exp(sim(a, k) / temperature - max_logit);
    }
    const double log_denom = std::log(denom) + max_logit;

    for (Index p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      total += log_denom - sim(a, p) / temperature;
      ds(a, p) -= inv_pairs / temperature;
    }
    const double softmax_weight =
        inv_pairs * static_cast<double>(pos_count[a]) / temperature;
    for (Index k = 0; k < n; ++k) {
      if (k == a) continue;
      ds(a, k) += softmax_weight *
                  std::exp(sim(a, k) / temperature - max_logit) / denom;
    }
  }

  MatrixD grad = MatrixD::Zero(n, e.cols());
  for (Index a = 0; a < n; ++a) {
    for (Index k = 0; k < n; ++k) {
      if (k == a || ds(a, k) == 0.0) continue;
      // d s_ak / d e_a and / d e_k
      const VectorD d_wrt_a =
          (unit.row(k).transpose() - sim(a, k) * unit.row(a).transpose()) /
          norms(a);
      const VectorD d_wrt_k =
          (unit.row(a).transpose() - sim(a, k) * unit.row(k).transpose()) /
          norms(k);
      grad.row(a) += ds(a, k) * d_wrt_a.transpose();
      grad.row(k) += ds(a, k) * d_wrt_k.transpose();
    }
  }

  LossResult<S> result;
  result.loss = total * inv_pairs;
  result.grad = grad.template cast<S>();
  return result;
}

// d(x, y) - alpha * log S(x, y) with d euclidean and S cosine similarity.
template <class DA, class DB>
double sem_guided_loss(const Eigen::MatrixBase<DA>& x,
                       const Eigen::MatrixBase<DB>& y, double alpha) {
  if (alpha < 0.0) {
    throw UsageError("sem_guided_loss: alpha must be non-negative");
  }
  const double sim = cosine_similarity(x, y);
  if (sim <= 0.0) {
    throw DomainError("sem_guided_loss: similarity must be positive");
  }
  return euclidean_distance(x, y) - alpha * std::log(sim);
}

}  // namespace heml
