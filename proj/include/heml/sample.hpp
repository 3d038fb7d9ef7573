#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heml/types.hpp"

namespace heml {

// One segment (or combined segment) of one underlying image: a feature
// vector over the full-length canvas, its support mask, and the label.
// Outside the mask the features hold the manifest background value.
struct SegmentSample {
  std::string segment_id;
  VectorF features;
  std::vector<std::uint8_t> mask;  // 0/1 per canvas position
  std::int32_t label = 0;
};

// Column-oriented set of samples sharing one segment_id; row i of
// features/masks and labels[i] describe the same underlying image.
struct Dataset {
  std::string segment_id;
  MatrixF features;            // n x dim
  Matrix<std::uint8_t> masks;  // n x dim
  std::vector<std::int32_t> labels;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }

  SegmentSample sample(Index i) const;
  void validate() const;
};

// Overlays parts onto one canvas: the earliest-listed part whose mask
// covers a position wins; covered-by-none positions keep the background
// (which every part carries outside its own mask). Emits one warning
// record per overlapping position.
SegmentSample compose_segments(const std::vector<SegmentSample>& parts,
                               WarningLog* warnings = nullptr);

// Index-aligned composition of whole datasets; labels must agree row by
// row since rows describe the same underlying image.
Dataset compose_datasets(const std::vector<const Dataset*>& parts,
                         WarningLog* warnings = nullptr);

std::string join_segment_ids(const std::vector<std::string>& ids);

}  // namespace heml
