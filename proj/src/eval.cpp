#include "heml/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "heml/errors.hpp"
#include "heml/mlp.hpp"
#include "heml/sample.hpp"
#include "heml/train.hpp"

namespace heml {

template <class S>
double precision_at_k(const Matrix<S>& embeddings,
                      const std::vector<std::int32_t>& labels, Index k) {
  const Index n = embeddings.rows();
  if (n < 2) {
    throw UsageError("precision_at_k: needs at least 2 samples");
  }
  if (static_cast<Index>(labels.size()) != n) {
    throw UsageError("precision_at_k: labels length mismatch");
  }
  if (k < 1 || k >= n) {
    throw UsageError("precision_at_k: k must lie in [1, n-1], got " +
                     std::to_string(k));
  }
  require_finite(embeddings, "precision_at_k embeddings");

  double total = 0.0;
  std::vector<std::pair<double, Index>> neighbors;
  neighbors.reserve(n - 1);
  for (Index q = 0; q < n; ++q) {
    neighbors.clear();
    for (Index j = 0; j < n; ++j) {
      if (j == q) continue;
      const double d = (embeddings.row(q).template cast<double>() -
                        embeddings.row(j).template cast<double>())
                           .norm();
      neighbors.emplace_back(d, j);
    }
    std::sort(neighbors.begin(), neighbors.end());
    Index hits = 0;
    for (Index i = 0; i < k; ++i) {
      if (labels[neighbors[i].second] == labels[q]) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(k);
  }
  return total / static_cast<double>(n);
}

template double precision_at_k<float>(const MatrixF&,
                                      const std::vector<std::int32_t>&, Index);
template double precision_at_k<double>(const MatrixD&,
                                       const std::vector<std::int32_t>&, Index);

EvalReport evaluate_node(const Checkpoint& checkpoint, const Dataset& data,
                         const std::vector<Index>& ks) {
  if (ks.empty()) {
    throw UsageError("evaluate_node: no k values given");
  }
  if (data.segment_id != checkpoint.name) {
    throw UsageError("evaluate_node: dataset segment '" + data.segment_id +
                     "' does not match node '" + checkpoint.name + "'");
  }
  const auto [embeddings, cache] =
      mlp_forward(checkpoint.model, data.features);

  EvalReport report;
  report.node_id = checkpoint.node_id;
  report.name = checkpoint.name;
  report.n_queries = data.size();

  std::set<Index> unique_ks(ks.begin(), ks.end());
  for (Index k : unique_ks) {
    report.precision.emplace_back(k,
                                  precision_at_k(embeddings, data.labels, k));
  }
  return report;
}

std::string report_to_json(const std::vector<EvalReport>& reports) {
  nlohmann::ordered_json j;
  j["metric"] = "euclidean";
  auto& nodes = j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json node;
    node["node_id"] = r.node_id;
    node["name"] = r.name;
    node["n_queries"] = r.n_queries;
    nlohmann::ordered_json precision;
    for (const auto& [k, p] : r.precision) {
      precision[std::to_string(k)] = p;
    }
    node["precision"] = precision;
    nodes.push_back(node);
  }
  return j.dump(2) + "\n";
}

std::string report_table(const std::vector<EvalReport>& reports) {
  std::set<Index> all_ks;
  std::size_t name_width = 7;  // "Segment"
  for (const auto& r : reports) {
    for (const auto& [k, p] : r.precision) all_ks.insert(k);
    name_width = std::max(name_width, r.name.size());
  }

  std::ostringstream out;
  out << std::left;
  out.width(static_cast<std::streamsize>(name_width));
  out << "Segment";
  for (Index k : all_ks) {
    std::string header = "P@" + std::to_string(k);
    out << "  ";
    out.width(7);
    out << header;
  }
  out << "\n";
  for (const auto& r : reports) {
    out.width(static_cast<std::streamsize>(name_width));
    out << r.name;
    for (Index k : all_ks) {
      const auto it =
          std::find_if(r.precision.begin(), r.precision.end(),
                       [&](const auto& kp) { return kp.first == k; });
      char buf[16];
      if (it != r.precision.end()) {
        std::snprintf(buf, sizeof(buf), "%.3f", it->second);
      } else {
        std::snprintf(buf, sizeof(buf), "-");
      }
      out << "  ";
      out.width(7);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace heml
