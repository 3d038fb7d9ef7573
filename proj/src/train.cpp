#include "heml/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>
#include <utility>

#include "heml/errors.hpp"
#include "heml/eval.hpp"
#include "heml/rng.hpp"

namespace heml {

namespace {

constexpr double kDivergenceThreshold = 1e6;

void fisher_yates(std::vector<Index>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.next_below(i)]);
  }
}

// Class-balanced sample order for one epoch: each class shuffled without
// replacement, then classes interleaved round-robin so every batch sees
// both classes while sizes allow.
std::vector<Index> epoch_order(
    const std::map<std::int32_t, std::vector<Index>>& by_class,
    SplitMix64& rng) {
  std::vector<std::vector<Index>> shuffled;
  for (const auto& [label, indices] : by_class) {
    shuffled.push_back(indices);
    fisher_yates(shuffled.back(), rng);
  }
  std::vector<Index> order;
  std::vector<std::size_t> cursor(shuffled.size(), 0);
  bool advanced = true;
  while (advanced) {
    advanced = false;
    for (std::size_t c = 0; c < shuffled.size(); ++c) {
      if (cursor[c] < shuffled[c].size()) {
        order.push_back(shuffled[c][cursor[c]++]);
        advanced = true;
      }
    }
  }
  return order;
}

LossResult<float> batch_loss(const MatrixF& embeddings,
                             const std::vector<std::int32_t>& labels,
                             const TrainConfig& cfg, WarningLog* warnings) {
  switch (cfg.loss) {
    case LossKind::TripletMargin: {
      const auto dmat = pairwise_distances(embeddings, MetricTag::Euclidean);
      const auto triplets =
          mine_triplets(dmat, labels, cfg.miner, cfg.margin, warnings);
      return triplet_margin_loss(embeddings, triplets, cfg.margin,
                                 cfg.margin_mode);
    }
    case LossKind::SnrContrastive:
      return snr_contrastive_loss(embeddings, labels, cfg.margin, cfg.lambda);
    case LossKind::NTXent:
      return ntxent_loss(embeddings, labels, cfg.temperature, warnings);
  }
  throw UsageError("train: unknown loss");
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw UsageError("config: epochs must be >= 0");
  if (batch_size < 1) throw UsageError("config: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw UsageError("config: learning_rate must be > 0");
  if (margin <= 0.0) throw UsageError("config: margin must be > 0");
  if (embed_dim < 1) throw UsageError("config: embed_dim must be >= 1");
  if (temperature <= 0.0) throw UsageError("config: temperature must be > 0");
  if (alpha < 0.0) throw UsageError("config: alpha must be >= 0");
  if (lambda < 0.0) throw UsageError("config: lambda must be >= 0");
  if (shape.trunk_hidden.empty() || shape.embedder_hidden < 1) {
    throw UsageError("config: invalid model shape");
  }
}

LeafData load_leaf_data(const SegmentManifest& manifest) {
  LeafData out;
  for (const auto& name : manifest.segments) {
    out.train[name] = load_dataset(manifest, name, "train");
  }
  if (manifest.has_split("val")) {
    for (const auto& name : manifest.segments) {
      out.val[name] = load_dataset(manifest, name, "val");
    }
  }
  return out;
}

Checkpoint train_segment(const Dataset& data, const TrainConfig& config,
                         const std::optional<EmbedderModel<float>>& init,
                         const Dataset* validation, WarningLog* warnings) {
  config.validate();
  data.validate();
  if (data.size() < 2) {
    throw TrainingError("train_segment: dataset needs at least 2 samples");
  }

  std::map<std::int32_t, std::vector<Index>> by_class;
  for (Index i = 0; i < data.size(); ++i) {
    by_class[data.labels[i]].push_back(i);
  }
  if (by_class.size() < 2) {
    throw TrainingError("train_segment: dataset has a single class");
  }

  EmbedderModel<float> model;
  if (init) {
    if (init->input_dim() != data.dim() ||
        init->embed_dim() != config.embed_dim) {
      throw ShapeError("train_segment: init architecture does not match "
                       "dataset/config");
    }
    model = *init;
  } else {
    model = make_embedder<float>(data.dim(), config.embed_dim, config.shape,
                                 mix_seed(config.seed, kInitStream));
  }

  Checkpoint ckpt;
  ckpt.name = data.segment_id;
  ckpt.config = config;
  ckpt.seed = config.seed;

  SplitMix64 shuffle_rng(mix_seed(config.seed, kShuffleStream));
  EmbedderModel<float> best_model = model;
  double best_p1 = -1.0;
  int best_epoch = -1;
  const bool track_best = validation && validation->size() >= 2;

  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(by_class, shuffle_rng);
    double loss_sum = 0.0;
    Index executed = 0;

    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + config.batch_size);
      const Index rows = static_cast<Index>(end - start);
      MatrixF batch(rows, data.dim());
      std::vector<std::int32_t> labels(rows);
      for (Index r = 0; r < rows; ++r) {
        batch.row(r) = data.features.row(order[start + r]);
        labels[r] = data.labels[order[start + r]];
      }
      const bool mixed =
          std::any_of(labels.begin(), labels.end(),
                      [&](std::int32_t l) { return l != labels[0]; });
      if (!mixed) continue;  // tail batch with one class: nothing to mine

      try {
        auto [embeddings, cache] = mlp_forward(model, batch);
        const auto loss = batch_loss(embeddings, labels, config, warnings);
        const auto back = mlp_backward(model, cache, loss.grad);
        model = sgd_step(model, back.param_grads, config.learning_rate);
        loss_sum += loss.loss;
      } catch (const NumericError& e) {
        throw TrainingError("train_segment: diverged at epoch " +
                            std::to_string(epoch) + ": " + e.what());
      }
      ++executed;
    }

    const double epoch_loss = executed > 0 ? loss_sum / executed : 0.0;
    if (!std::isfinite(epoch_loss) || epoch_loss > kDivergenceThreshold) {
      throw TrainingError("train_segment: diverged at epoch " +
                          std::to_string(epoch) + " (mean loss " +
                          std::to_string(epoch_loss) + ")");
    }
    ckpt.history.push_back(epoch_loss);

    if (track_best) {
      const auto [val_emb, val_cache] =
          mlp_forward(model, validation->features);
      const double p1 = precision_at_k(val_emb, validation->labels, 1);
      if (p1 > best_p1) {
        best_p1 = p1;
        best_model = model;
        best_epoch = static_cast<int>(epoch);
      }
    }
  }

  ckpt.model = track_best && best_epoch >= 0 ? best_model : model;
  ckpt.best_epoch = track_best ? best_epoch : -1;
  return ckpt;
}

EmbedderModel<float> init_from_children(const Checkpoint& left,
                                        const Checkpoint& right) {
  if (!left.model.same_architecture(right.model)) {
    throw ShapeError("init_from_children: child architectures differ");
  }
  return average_params(left.model, right.model);
}

EmbedderModel<float> init_from_children(const Checkpoint& only) {
  return only.model;
}

Dataset node_dataset(const CombinationSchedule& schedule, int node_id,
                     const std::map<std::string, Dataset>& leaves,
                     WarningLog* warnings) {
  if (node_id < 0 || node_id >= schedule.size()) {
    throw UsageError("node_dataset: node id out of range");
  }
  std::vector<Dataset> per_node(static_cast<std::size_t>(node_id) + 1);
  for (int id = 0; id <= node_id; ++id) {
    const auto& node = schedule.node(id);
    if (node.is_leaf()) {
      const auto it = leaves.find(node.name);
      if (it == leaves.end()) {
        throw DataError("node_dataset: missing leaf dataset '" + node.name +
                        "'");
      }
      per_node[id] = it->second;
      per_node[id].segment_id = node.name;
    } else {
      std::vector<const Dataset*> parts;
      for (int child : node.children) parts.push_back(&per_node[child]);
      per_node[id] = compose_datasets(parts, warnings);
    }
  }
  return std::move(per_node[node_id]);
}

CheckpointStore train_bottom_up(const SegmentManifest& manifest,
                                const LeafData& data,
                                const TrainConfig& config, int jobs,
                                WarningLog* warnings) {
  config.validate();
  if (jobs < 1) throw UsageError("train_bottom_up: jobs must be >= 1");
  const auto schedule = build_schedule(manifest);

  for (const auto& node : schedule.nodes) {
    if (node.is_leaf() && !data.train.count(node.name)) {
      throw TrainingError("train_bottom_up: missing train dataset for leaf '" +
                          node.name + "'");
    }
  }
  const bool use_val = !data.val.empty();
  if (use_val) {
    for (const auto& node : schedule.nodes) {
      if (node.is_leaf() && !data.val.count(node.name)) {
        throw TrainingError("train_bottom_up: missing val dataset for leaf '" +
                            node.name + "'");
      }
    }
  }

  // All node datasets up front, children before parents.
  const Index n_nodes = schedule.size();
  std::vector<Dataset> train_ds(n_nodes);
  std::vector<Dataset> val_ds(use_val ? n_nodes : 0);
  for (int id = 0; id < n_nodes; ++id) {
    const auto& node = schedule.node(id);
    if (node.is_leaf()) {
      train_ds[id] = data.train.at(node.name);
      train_ds[id].segment_id = node.name;
      if (use_val) {
        val_ds[id] = data.val.at(node.name);
        val_ds[id].segment_id = node.name;
      }
    } else {
      std::vector<const Dataset*> parts;
      for (int child : node.children) parts.push_back(&train_ds[child]);
      train_ds[id] = compose_datasets(parts, warnings);
      if (use_val) {
        std::vector<const Dataset*> val_parts;
        for (int child : node.children) val_parts.push_back(&val_ds[child]);
        val_ds[id] = compose_datasets(val_parts, nullptr);
      }
    }
  }

  CheckpointStore store;
  store.manifest_hash = manifest_hash(manifest);

  for (int level = 0; level <= schedule.max_level(); ++level) {
    const auto ids = schedule.ids_at_level(level);
    std::vector<Checkpoint> results(ids.size());
    std::vector<WarningLog> logs(ids.size());
    std::vector<std::exception_ptr> failures(ids.size());

    auto run_one = [&](std::size_t slot) {
      const int id = ids[slot];
      const auto& node = schedule.node(id);
      try {
        std::optional<EmbedderModel<float>> init;
        if (node.children.size() == 2) {
          init = init_from_children(store.by_node.at(node.children[0]),
                                    store.by_node.at(node.children[1]));
        } else if (node.children.size() == 1) {
          init = init_from_children(store.by_node.at(node.children[0]));
        }
        TrainConfig node_cfg = config;
        node_cfg.seed = node_seed(config.seed, id);
        Checkpoint ckpt =
            train_segment(train_ds[id], node_cfg, init,
                          use_val ? &val_ds[id] : nullptr, &logs[slot]);
        ckpt.node_id = id;
        ckpt.name = node.name;
        ckpt.config = config;  // echo the run-level config
        results[slot] = std::move(ckpt);
      } catch (...) {
        failures[slot] = std::current_exception();
      }
    };

    const int workers =
        std::min<int>(jobs, static_cast<int>(ids.size()));
    if (workers <= 1) {
      for (std::size_t slot = 0; slot < ids.size(); ++slot) run_one(slot);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t slot = static_cast<std::size_t>(w);
               slot < ids.size(); slot += static_cast<std::size_t>(workers)) {
            run_one(slot);
          }
        });
      }
      for (auto& t : pool) t.join();
    }

    for (std::size_t slot = 0; slot < ids.size(); ++slot) {
      if (failures[slot]) {
        const auto& node = schedule.node(ids[slot]);
        try {
          std::rethrow_exception(failures[slot]);
        } catch (const std::exception& e) {
          throw TrainingError("node " + std::to_string(node.id) + " ('" +
                              node.name + "') failed: " + e.what());
        }
      }
      if (warnings) {
        for (auto& entry : logs[slot].entries) {
          warnings->entries.push_back(std::move(entry));
        }
      }
      store.by_node[ids[slot]] = std::move(results[slot]);
    }
  }
  return store;
}

}  // namespace heml
