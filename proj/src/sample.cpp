#include "heml/sample.hpp"

#include <string>

#include "heml/errors.hpp"

namespace heml {

SegmentSample Dataset::sample(Index i) const {
  if (i < 0 || i >= size()) {
    throw UsageError("Dataset::sample: index out of range");
  }
  SegmentSample s;
  s.segment_id = segment_id;
  s.features = features.row(i).transpose();
  s.mask.assign(masks.row(i).data(), masks.row(i).data() + dim());
  s.label = labels[i];
  return s;
}

void Dataset::validate() const {
  if (masks.rows() != features.rows() || masks.cols() != features.cols()) {
    throw ShapeError("Dataset: masks shape does not match features");
  }
  if (static_cast<Index>(labels.size()) != features.rows()) {
    throw ShapeError("Dataset: labels length does not match features");
  }
  require_finite(features, "Dataset features");
  for (Index i = 0; i < masks.rows(); ++i) {
    for (Index j = 0; j < masks.cols(); ++j) {
      if (masks(i, j) > 1) {
        throw DataError("Dataset: mask entries must be 0 or 1");
      }
    }
  }
}

std::string join_segment_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += "+";
    out += ids[i];
  }
  return out;
}

SegmentSample compose_segments(const std::vector<SegmentSample>& parts,
                               WarningLog* warnings) {
  if (parts.empty()) {
    throw UsageError("compose_segments: empty part list");
  }
  const Index dim = parts.front().features.size();
  std::vector<std::string> ids;
  for (const auto& p : parts) {
    if (p.features.size() != dim ||
        static_cast<Index>(p.mask.size()) != dim) {
      throw ShapeError("compose_segments: parts disagree on input_dim");
    }
    if (p.label != parts.front().label) {
      throw DataError("compose_segments: label disagreement between '" +
                      parts.front().segment_id + "' and '" + p.segment_id +
                      "'");
    }
    ids.push_back(p.segment_id);
  }

  SegmentSample out;
  out.segment_id = join_segment_ids(ids);
  out.label = parts.front().label;
  out.features = parts.front().features;  // background where nothing covers
  out.mask.assign(dim, 0);
  for (Index pos = 0; pos < dim; ++pos) {
    int covers = 0;
    for (const auto& p : parts) {
      if (!p.mask[pos]) continue;
      ++covers;
      if (covers == 1) {
        out.features(pos) = p.features(pos);
        out.mask[pos] = 1;
      }
    }
    if (covers > 1 && warnings) {
      warnings->add("mask_overlap",
                    "compose_segments: position " + std::to_string(pos) +
                        " covered by " + std::to_string(covers) +
                        " parts; earliest wins");
    }
  }
  return out;
}

Dataset compose_datasets(const std::vector<const Dataset*>& parts,
                         WarningLog* warnings) {
  if (parts.empty()) {
    throw UsageError("compose_datasets: empty part list");
  }
  const Index n = parts.front()->size();
  const Index dim = parts.front()->dim();
  std::vector<std::string> ids;
  for (const Dataset* p : parts) {
    if (p->size() != n) {
      throw DataError("compose_datasets: parts disagree on sample count");
    }
    if (p->dim() != dim) {
      throw ShapeError("compose_datasets: parts disagree on input_dim");
    }
    ids.push_back(p->segment_id);
  }
  for (Index i = 0; i < n; ++i) {
    for (const Dataset* p : parts) {
      if (p->labels[i] != parts.front()->labels[i]) {
        throw DataError("compose_datasets: label disagreement at row " +
                        std::to_string(i) + " between '" +
                        parts.front()->segment_id + "' and '" + p->segment_id +
                        "'");
      }
    }
  }

  Dataset out;
  out.segment_id = join_segment_ids(ids);
  out.labels = parts.front()->labels;
  out.features = parts.front()->features;
  out.masks = Matrix<std::uint8_t>::Zero(n, dim);
  for (Index pos = 0; pos < dim; ++pos) {
    Index overlapping_rows = 0;
    for (Index i = 0; i < n; ++i) {
      int covers = 0;
      for (const Dataset* p : parts) {
        if (!p->masks(i, pos)) continue;
        ++covers;
        if (covers == 1) {
          out.features(i, pos) = p->features(i, pos);
          out.masks(i, pos) = 1;
        }
      }
      if (covers > 1) ++overlapping_rows;
    }
    if (overlapping_rows > 0 && warnings) {
      warnings->add("mask_overlap",
                    "compose_datasets: position " + std::to_string(pos) +
                        " overlaps in " + std::to_string(overlapping_rows) +
                        " rows; earliest part wins");
    }
  }
  return out;
}

}  // namespace heml
