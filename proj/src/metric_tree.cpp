#include "heml/metric_tree.hpp"

#include <cstdio>
#include <utility>

#include <json.hpp>

#include "heml/distances.hpp"
#include "heml/errors.hpp"
#include "heml/losses.hpp"

namespace heml {

namespace {

// Symmetrized SNR distance of two embeddings plus its gradients, all in
// double. Training keeps the raw asymmetric form; reports symmetrize.
struct PairDistance {
  double raw = 0.0;
  VectorD grad_a;
  VectorD grad_b;
};

PairDistance symmetrized_snr(const VectorD& a, const VectorD& b) {
  const auto ab = detail::snr_distance_with_grad(a, b);
  const auto ba = detail::snr_distance_with_grad(b, a);
  PairDistance out;
  out.raw = 0.5 * (ab.value + ba.value);
  out.grad_a = 0.5 * (ab.wrt_anchor + ba.wrt_other);
  out.grad_b = 0.5 * (ab.wrt_other + ba.wrt_anchor);
  return out;
}

MatrixF sample_as_row(const SegmentSample& sample) {
  MatrixF row(1, sample.features.size());
  row.row(0) = sample.features.transpose();
  return row;
}

void check_sample(const InferenceModel& inference, const SegmentSample& s) {
  if (s.segment_id != inference.name) {
    throw UsageError("embed: sample segment '" + s.segment_id +
                     "' does not match node '" + inference.name + "'");
  }
  if (s.features.size() != inference.model.input_dim()) {
    throw ShapeError("embed: sample has " + std::to_string(s.features.size()) +
                     " features, model expects " +
                     std::to_string(inference.model.input_dim()));
  }
}

}  // namespace

InferenceModel inference_from_checkpoint(const Checkpoint& ckpt) {
  validate_model(ckpt.model);
  return InferenceModel{ckpt.node_id, ckpt.name, ckpt.model};
}

VectorF embed(const InferenceModel& inference, const SegmentSample& sample) {
  check_sample(inference, sample);
  const auto [embedding, cache] =
      mlp_forward(inference.model, sample_as_row(sample));
  return embedding.row(0).transpose();
}

MetricTree build_metric_tree(const CheckpointStore& store,
                             const CombinationSchedule& schedule,
                             const std::map<std::string, SegmentSample>& query_a,
                             const std::map<std::string, SegmentSample>& query_b,
                             WarningLog* warnings) {
  std::string missing;
  for (const auto& node : schedule.nodes) {
    if (!node.is_leaf()) continue;
    for (const auto* q : {&query_a, &query_b}) {
      if (!q->count(node.name)) {
        if (!missing.empty()) missing += ", ";
        missing += node.name;
      }
    }
  }
  if (!missing.empty()) {
    throw UsageError("build_metric_tree: queries missing leaf segments: " +
                     missing);
  }
  if (!store.complete(schedule)) {
    throw DataError("build_metric_tree: checkpoint store is incomplete");
  }

  // Compose both queries up the schedule. Query labels carry no meaning
  // for a comparison, so they are normalized before composing.
  std::vector<SegmentSample> composed_a(schedule.size());
  std::vector<SegmentSample> composed_b(schedule.size());
  auto leaf_sample = [](const std::map<std::string, SegmentSample>& q,
                        const std::string& name) {
    SegmentSample s = q.at(name);
    s.segment_id = name;
    s.label = 0;
    return s;
  };
  for (const auto& node : schedule.nodes) {
    if (node.is_leaf()) {
      composed_a[node.id] = leaf_sample(query_a, node.name);
      composed_b[node.id] = leaf_sample(query_b, node.name);
    } else {
      std::vector<SegmentSample> parts_a, parts_b;
      for (int child : node.children) {
        parts_a.push_back(composed_a[child]);
        parts_b.push_back(composed_b[child]);
      }
      composed_a[node.id] = compose_segments(parts_a, warnings);
      composed_b[node.id] = compose_segments(parts_b, warnings);
    }
  }

  MetricTree tree;
  tree.root_id = schedule.root_id;
  tree.leaf_count = schedule.leaf_count;
  tree.nodes.resize(schedule.size());
  for (const auto& node : schedule.nodes) {
    const auto inference = inference_from_checkpoint(store.by_node.at(node.id));
    check_sample(inference, composed_a[node.id]);
    check_sample(inference, composed_b[node.id]);
    const auto [emb_a, cache_a] =
        mlp_forward(inference.model, sample_as_row(composed_a[node.id]));
    const auto [emb_b, cache_b] =
        mlp_forward(inference.model, sample_as_row(composed_b[node.id]));

    MetricTreeNode out;
    out.id = node.id;
    out.name = node.name;
    out.children = node.children;
    out.level = node.level;
    out.raw = symmetrized_snr(cache_a.output.row(0).transpose(),
                              cache_b.output.row(0).transpose())
                  .raw;
    out.normalized = normalize_distance(out.raw);
    out.decision = 1.0 - out.normalized;
    tree.nodes[node.id] = std::move(out);
  }
  aggregate_decisions(tree);
  return tree;
}

double aggregate_decisions(MetricTree& tree) {
  if (tree.nodes.empty() || tree.root_id < 0 ||
      tree.root_id >= static_cast<int>(tree.nodes.size())) {
    throw UsageError("aggregate_decisions: empty or rootless tree");
  }
  double z = 0.0;
  for (auto& node : tree.nodes) {
    if (node.children.empty()) {
      node.subtree_decision = node.decision;
      z += node.decision;
    } else {
      node.subtree_decision = 0.0;  // filled after children (ids ascend)
      for (int child : node.children) {
        if (child < 0 || child >= node.id) {
          throw UsageError("aggregate_decisions: child ids must precede "
                           "their parent");
        }
        node.subtree_decision += tree.nodes[child].subtree_decision;
      }
    }
  }
  tree.z = z;
  return z;
}

double node_decision(const InferenceModel& inference, const SegmentSample& a,
                     const SegmentSample& b) {
  check_sample(inference, a);
  check_sample(inference, b);
  const auto [emb_a, cache_a] = mlp_forward(inference.model, sample_as_row(a));
  const auto [emb_b, cache_b] = mlp_forward(inference.model, sample_as_row(b));
  const double raw = symmetrized_snr(cache_a.output.row(0).transpose(),
                                     cache_b.output.row(0).transpose())
                         .raw;
  return 1.0 - normalize_distance(raw);
}

VectorF feature_importance(const InferenceModel& inference,
                           const SegmentSample& a, const SegmentSample& b,
                           bool wrt_b) {
  check_sample(inference, a);
  check_sample(inference, b);
  const auto [emb_a, cache_a] = mlp_forward(inference.model, sample_as_row(a));
  const auto [emb_b, cache_b] = mlp_forward(inference.model, sample_as_row(b));
  const auto pair = symmetrized_snr(cache_a.output.row(0).transpose(),
                                    cache_b.output.row(0).transpose());

  // y = 1 - raw / (1 + raw), so dy/draw = -1 / (1 + raw)^2.
  const double dy_draw = -1.0 / ((1.0 + pair.raw) * (1.0 + pair.raw));
  const VectorD& grad_emb = wrt_b ? pair.grad_b : pair.grad_a;
  MatrixF upstream(1, grad_emb.size());
  upstream.row(0) = (dy_draw * grad_emb).transpose().cast<float>();

  const auto back = mlp_backward(inference.model, wrt_b ? cache_b : cache_a,
                                 upstream);
  return back.input_grads.row(0).transpose();
}

double segment_importance(const VectorF& importance,
                          const std::vector<std::uint8_t>& mask) {
  if (static_cast<Index>(mask.size()) != importance.size()) {
    throw ShapeError("segment_importance: mask length mismatch");
  }
  double sum = 0.0;
  for (Index i = 0; i < importance.size(); ++i) {
    if (mask[i]) sum += importance(i);
  }
  return sum;
}

std::string export_tree(const MetricTree& tree, const std::string& format) {
  if (tree.nodes.empty()) {
    throw UsageError("export_tree: empty tree");
  }
  if (format == "json") {
    nlohmann::ordered_json j;
    auto& nodes = j["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : tree.nodes) {
      nlohmann::ordered_json node;
      node["id"] = n.id;
      node["name"] = n.name;
      node["children"] = n.children;
      node["raw"] = n.raw;
      node["normalized"] = n.normalized;
      node["decision"] = n.decision;
      nodes.push_back(node);
    }
    j["root"] = tree.root_id;
    j["z"] = tree.z;
    return j.dump(2) + "\n";
  }
  if (format == "dot") {
    std::string out = "digraph metric_tree {\n";
    for (const auto& n : tree.nodes) {
      std::string escaped;
      for (char c : n.name) {
        if (c == '"' || c == '\\') escaped += '\\';
        escaped += c;
      }
      char value[32];
      std::snprintf(value, sizeof(value), "%.3f", n.normalized);
      out += "  n" + std::to_string(n.id) + " [label=\"" + escaped +
             "\\nd=" + value + "\"];\n";
    }
    for (const auto& n : tree.nodes) {
      for (int child : n.children) {
        out += "  n" + std::to_string(n.id) + " -> n" + std::to_string(child) +
               ";\n";
      }
    }
    out += "}\n";
    return out;
  }
  throw UsageError("export_tree: unknown format '" + format + "'");
}

}  // namespace heml
