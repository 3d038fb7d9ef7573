#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "heml/types.hpp"

namespace heml {

struct Checkpoint;
struct Dataset;

// Mean over all queries of the fraction of the k nearest gallery
// neighbors sharing the query's label. Gallery is the query set with
// self excluded, distances euclidean, ties broken by ascending index.
template <class S>
double precision_at_k(const Matrix<S>& embeddings,
                      const std::vector<std::int32_t>& labels, Index k);

extern template double precision_at_k<float>(const MatrixF&,
                                             const std::vector<std::int32_t>&,
                                             Index);
extern template double precision_at_k<double>(const MatrixD&,
                                              const std::vector<std::int32_t>&,
                                              Index);

struct EvalReport {
  int node_id = -1;
  std::string name;
  std::vector<std::pair<Index, double>> precision;  // (k, P@k), k ascending
  Index n_queries = 0;
  std::string metric = "euclidean";
};

// Embeds the dataset with the checkpoint's model and scores every k.
EvalReport evaluate_node(const Checkpoint& checkpoint, const Dataset& data,
                         const std::vector<Index>& ks);

std::string report_to_json(const std::vector<EvalReport>& reports);

// Aligned-column text table, one row per node in the given order.
std::string report_table(const std::vector<EvalReport>& reports);

}  // namespace heml
