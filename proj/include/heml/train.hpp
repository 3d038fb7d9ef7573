#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "heml/losses.hpp"
#include "heml/manifest.hpp"
#include "heml/mining.hpp"
#include "heml/mlp.hpp"
#include "heml/sample.hpp"
#include "heml/schedule.hpp"

namespace heml {

struct TrainConfig {
  Index epochs = 30;
  Index batch_size = 32;
  double learning_rate = 0.05;
  double margin = 0.1;
  MarginMode margin_mode = MarginMode::Abs;
  LossKind loss = LossKind::TripletMargin;
  MinerKind miner = MinerKind::SemiHard;
  std::uint64_t seed = 1234;
  Index embed_dim = 8;
  double temperature = 0.5;  // NTXent only
  double alpha = 1.0;        // semantic weighting
  double lambda = 1.0;       // dissimilar-pair weight
  ModelShape shape;

  void validate() const;
};

// Trained parameters for one schedule node plus how they were produced.
struct Checkpoint {
  int format_version = 1;
  int node_id = -1;
  std::string name;
  EmbedderModel<float> model;
  TrainConfig config;            // echo of the run configuration
  std::uint64_t seed = 0;        // the per-node seed actually used
  std::vector<double> history;   // per-epoch mean loss
  int best_epoch = -1;           // epoch whose params were kept; -1 = final
};

struct CheckpointStore {
  std::map<int, Checkpoint> by_node;
  std::uint64_t manifest_hash = 0;

  bool complete(const CombinationSchedule& schedule) const {
    for (const auto& n : schedule.nodes) {
      if (!by_node.count(n.id)) return false;
    }
    return true;
  }
};

// Per-leaf datasets; val is optional and drives best-epoch selection.
struct LeafData {
  std::map<std::string, Dataset> train;
  std::map<std::string, Dataset> val;
};

LeafData load_leaf_data(const SegmentManifest& manifest);

// Derived stream indices inside train_segment: the fresh model is seeded
// with mix_seed(config.seed, kInitStream) and epoch shuffling with
// mix_seed(config.seed, kShuffleStream).
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kShuffleStream = 2;

// Runs epochs x batches of forward -> mine -> loss -> backward -> step
// with class-balanced batches. Deterministic in (seed, data, config).
Checkpoint train_segment(const Dataset& data, const TrainConfig& config,
                         const std::optional<EmbedderModel<float>>& init = {},
                         const Dataset* validation = nullptr,
                         WarningLog* warnings = nullptr);

// Weight-averaged initialization from two trained children; the
// one-child overload copies the child verbatim (pass-through nodes).
EmbedderModel<float> init_from_children(const Checkpoint& left,
                                        const Checkpoint& right);
EmbedderModel<float> init_from_children(const Checkpoint& only);

// Training data of a schedule node: the leaf dataset itself, or the
// index-aligned composition of its children, built bottom-up.
Dataset node_dataset(const CombinationSchedule& schedule, int node_id,
                     const std::map<std::string, Dataset>& leaves,
                     WarningLog* warnings = nullptr);

// Trains every schedule node level by level, leaves first; combined
// nodes start from their children's averaged weights. With jobs > 1,
// nodes within a level run concurrently; per-node seeds make the result
// identical to the sequential run.
CheckpointStore train_bottom_up(const SegmentManifest& manifest,
                                const LeafData& data,
                                const TrainConfig& config, int jobs = 1,
                                WarningLog* warnings = nullptr);

// Node seed derivation shared by train_bottom_up and its tests.
inline std::uint64_t node_seed(std::uint64_t global_seed, int node_id) {
  return mix_seed(global_seed, static_cast<std::uint64_t>(node_id));
}

}  // namespace heml
