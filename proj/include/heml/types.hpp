#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "heml/errors.hpp"

namespace heml {

// Row-major storage: one embedding / sample per row, rows contiguous.
template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;
using VectorF = Vector<float>;
using VectorD = Vector<double>;

using Index = Eigen::Index;

// Guard below which a variance or norm counts as degenerate.
inline constexpr double kDegeneracyEps = 1e-12;

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite value encountered");
  }
}

// Accumulated warning records; ops that can warn accept an optional sink.
struct WarningLog {
  struct Entry {
    std::string code;
    std::string message;
  };
  std::vector<Entry> entries;

  void add(std::string code, std::string message) {
    entries.push_back({std::move(code), std::move(message)});
  }
  std::size_t count(const std::string& code) const {
    std::size_t n = 0;
    for (const auto& e : entries) {
      if (e.code == code) ++n;
    }
    return n;
  }
  bool empty() const { return entries.empty(); }
};

}  // namespace heml
