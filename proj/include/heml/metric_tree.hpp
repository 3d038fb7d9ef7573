#pragma once

#include <map>
#include <string>
#include <vector>

#include "heml/mlp.hpp"
#include "heml/sample.hpp"
#include "heml/schedule.hpp"
#include "heml/train.hpp"

namespace heml {

// Trunk + embedder restored for one schedule node.
struct InferenceModel {
  int node_id = -1;
  std::string name;
  EmbedderModel<float> model;
};

InferenceModel inference_from_checkpoint(const Checkpoint& ckpt);

// Embeds one segment sample; the sample's composed id must match the
// node (a "hair" model only accepts hair segments).
VectorF embed(const InferenceModel& inference, const SegmentSample& sample);

// One schedule node annotated for a query pair. raw is the symmetrized
// SNR distance (d(a,b) + d(b,a)) / 2, normalized maps it into [0, 1),
// and the local decision is y = 1 - normalized.
struct MetricTreeNode {
  int id = -1;
  std::string name;
  std::vector<int> children;
  int level = 0;
  double raw = 0.0;
  double normalized = 0.0;
  double decision = 0.0;
  double subtree_decision = 0.0;  // sum of leaf decisions below this node
  std::map<Index, double> precision;  // optional P@K annotations
};

struct MetricTree {
  std::vector<MetricTreeNode> nodes;  // indexed by schedule node id
  int root_id = -1;
  Index leaf_count = 0;
  std::string query_a;
  std::string query_b;
  double z = 0.0;  // global decision: sum of leaf decisions

  const MetricTreeNode& root() const { return nodes.at(root_id); }
};

// Composes both queries up the schedule, embeds them at every node with
// that node's saved weights, and records the per-node distances and
// decisions. Queries map leaf segment name -> sample.
MetricTree build_metric_tree(const CheckpointStore& store,
                             const CombinationSchedule& schedule,
                             const std::map<std::string, SegmentSample>& query_a,
                             const std::map<std::string, SegmentSample>& query_b,
                             WarningLog* warnings = nullptr);

// Recomputes the bookkeeping sums; returns the global decision z.
double aggregate_decisions(MetricTree& tree);

// The node's local decision y for a sample pair, computed end to end in
// double precision (the differentiable path behind feature_importance).
double node_decision(const InferenceModel& inference, const SegmentSample& a,
                     const SegmentSample& b);

// Exact gradient of the local decision with respect to the first
// query's features (or the second's when wrt_b is set).
VectorF feature_importance(const InferenceModel& inference,
                           const SegmentSample& a, const SegmentSample& b,
                           bool wrt_b = false);

// Scalar importance of one segment: the gradient summed over its mask.
double segment_importance(const VectorF& importance,
                          const std::vector<std::uint8_t>& mask);

// format "json": {nodes:[{id,name,children,raw,normalized,decision}],root,z};
// format "dot": one digraph, labels "name\nd=<normalized, 3 decimals>".
std::string export_tree(const MetricTree& tree, const std::string& format);

}  // namespace heml
