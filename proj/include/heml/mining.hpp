#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heml/distances.hpp"
#include "heml/errors.hpp"
#include "heml/types.hpp"

namespace heml {

// (anchor, positive, negative) index triple: anchor and positive share a
// label, the negative does not.
struct Triplet {
  Index anchor = 0;
  Index positive = 0;
  Index negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

enum class MinerKind { AllTriplets, SemiHard };

inline const char* miner_name(MinerKind m) {
  return m == MinerKind::AllTriplets ? "all" : "semihard";
}

inline MinerKind miner_from_name(const std::string& s) {
  if (s == "all") return MinerKind::AllTriplets;
  if (s == "semihard") return MinerKind::SemiHard;
  throw ParseError("unknown miner: " + s);
}

// AllTriplets: every valid (a, p, n), a/p/n ascending.
// SemiHard: for each (a, p), the negative minimizing d_an subject to
// d_ap < d_an < d_ap + m; if none qualifies, the hardest negative
// (smallest d_an) is used. Ties break to the smallest index.
inline std::vector<Triplet> mine_triplets(const DistanceMatrix& dmat,
                                          const std::vector<std::int32_t>& labels,
                                          MinerKind strategy, double m,
                                          WarningLog* warnings = nullptr) {
  const Index n = dmat.size();
  if (static_cast<Index>(labels.size()) != n) {
    throw UsageError("mine_triplets: labels length does not match matrix");
  }

  bool has_two_classes = false;
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] != labels[0]) {
      has_two_classes = true;
      break;
    }
  }
  if (!has_two_classes) {
    if (warnings) {
      warnings->add("single_class", "mine_triplets: batch has a single class");
    }
    return {};
  }

  std::vector<Triplet> out;
  for (Index a = 0; a < n; ++a) {
    for (Index p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      if (strategy == MinerKind::AllTriplets) {
        for (Index neg = 0; neg < n; ++neg) {
          if (labels[neg] == labels[a]) continue;
          out.push_back({a, p, neg});
        }
      } else {
        const double d_ap = dmat.values(a, p);
        Index best_window = -1;
        Index best_any = -1;
        for (Index neg = 0; neg < n; ++neg) {
          if (labels[neg] == labels[a]) continue;
          const double d_an = dmat.values(a, neg);
          if (best_any < 0 || d_an < dmat.values(a, best_any)) {
            best_any = neg;
          }
          if (d_an > d_ap && d_an < d_ap + m) {
            if (best_window < 0 || d_an < dmat.values(a, best_window)) {
              best_window = neg;
            }
          }
        }
        out.push_back({a, p, best_window >= 0 ? best_window : best_any});
      }
    }
  }
  return out;
}

}  // namespace heml
