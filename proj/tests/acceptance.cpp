// Acceptance suite: one check per shipped guarantee, each printed as a
// PASS/FAIL line with its runtime. Exits non-zero if anything fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "heml/checkpoint_io.hpp"
#include "heml/distances.hpp"
#include "heml/eval.hpp"
#include "heml/hseg.hpp"
#include "heml/losses.hpp"
#include "heml/manifest.hpp"
#include "heml/metric_tree.hpp"
#include "heml/mining.hpp"
#include "heml/mlp.hpp"
#include "heml/schedule.hpp"
#include "heml/synthetic.hpp"
#include "heml/train.hpp"
#include "support/cli_runner.hpp"
#include "support/oracles.hpp"

using namespace heml;
namespace fs = std::filesystem;

namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define REQUIRE_THAT(cond, detail)                                          \
  do {                                                                      \
    if (!(cond)) {                                                          \
      std::ostringstream oss_;                                              \
      oss_ << "check failed: " #cond " [" << detail << "]";                 \
      throw CheckFailure(oss_.str());                                       \
    }                                                                       \
  } while (0)

// ---------------------------------------------------------------------
// 1. Gradient suite: analytic loss gradients vs central differences at
//    the production float storage, 1e-4 relative, >=5 seeded instances.
// ---------------------------------------------------------------------

bool instance_is_kink_free(const MatrixD& emb,
                           const std::vector<std::int32_t>& labels,
                           LossKind kind, double margin) {
  constexpr double gap = 0.03;
  if (kind == LossKind::TripletMargin) {
    const auto d = pairwise_distances(emb, MetricTag::Euclidean);
    for (Index i = 0; i < emb.rows(); ++i) {
      for (Index j = 0; j < emb.rows(); ++j) {
        if (i != j && d.values(i, j) < gap) return false;
      }
    }
    const auto trips = mine_triplets(d, labels, MinerKind::AllTriplets, margin);
    for (const auto& t : trips) {
      const double arg = d.values(t.anchor, t.positive) -
                         d.values(t.anchor, t.negative) + margin;
      if (std::abs(arg) < gap) return false;
    }
  }
  if (kind == LossKind::SnrContrastive) {
    for (Index i = 0; i < emb.rows(); ++i) {
      if (detail::population_variance(emb.row(i)) < 0.1) return false;
      for (Index j = 0; j < emb.rows(); ++j) {
        if (i == j || labels[i] == labels[j]) continue;
        if (std::abs(margin - snr_distance(emb.row(i), emb.row(j))) < gap) {
          return false;
        }
      }
    }
  }
  return true;
}

void criterion_gradients() {
  const std::vector<std::int32_t> labels = {0, 0, 1, 1, 0, 1};
  const double margin = 0.35;

  struct Case {
    const char* name;
    LossKind kind;
    MarginMode mode;
  };
  const Case cases[] = {
      {"triplet-abs", LossKind::TripletMargin, MarginMode::Abs},
      {"triplet-hinge", LossKind::TripletMargin, MarginMode::Hinge},
      {"snr-contrastive", LossKind::SnrContrastive, MarginMode::Abs},
      {"ntxent", LossKind::NTXent, MarginMode::Abs},
  };

  for (const auto& c : cases) {
    auto loss_of = [&](const MatrixF& e) -> LossResult<float> {
      switch (c.kind) {
        case LossKind::TripletMargin: {
          const auto d = pairwise_distances(e, MetricTag::Euclidean);
          const auto trips =
              mine_triplets(d, labels, MinerKind::AllTriplets, margin);
          return triplet_margin_loss(e, trips, margin, c.mode);
        }
        case LossKind::SnrContrastive:
          return snr_contrastive_loss(e, labels, margin);
        case LossKind::NTXent:
          return ntxent_loss(e, labels, 0.5);
      }
      throw CheckFailure("unreachable");
    };

    int verified = 0;
    std::uint64_t seed = 9000;
    while (verified < 5 && seed < 9600) {
      const auto emb_d = oracle::random_matrix<double>(6, 5, seed++, 1.5);
      if (!instance_is_kink_free(emb_d, labels, c.kind, margin)) continue;
      const MatrixF emb = emb_d.cast<float>();

      // Mined triplets must stay fixed while differentiating.
      std::vector<Triplet> trips;
      if (c.kind == LossKind::TripletMargin) {
        const auto d = pairwise_distances(emb, MetricTag::Euclidean);
        trips = mine_triplets(d, labels, MinerKind::AllTriplets, margin);
      }
      auto frozen_loss = [&](const MatrixF& e) {
        if (c.kind == LossKind::TripletMargin) {
          return triplet_margin_loss(e, trips, margin, c.mode).loss;
        }
        return loss_of(e).loss;
      };

      const auto analytic = c.kind == LossKind::TripletMargin
                                ? triplet_margin_loss(emb, trips, margin, c.mode)
                                : loss_of(emb);
      REQUIRE_THAT(analytic.loss >= 0.0, c.name);
      const auto fd = oracle::central_diff_grad<float>(emb, frozen_loss);
      const double err = oracle::max_rel_err(analytic.grad.cast<double>(), fd);
      REQUIRE_THAT(err < 1e-4, c.name << " seed " << seed - 1 << " err " << err);
      ++verified;
    }
    REQUIRE_THAT(verified == 5, c.name << " found only " << verified
                                       << " clean instances");
  }
}

// ---------------------------------------------------------------------
// 2. Distance axioms.
// ---------------------------------------------------------------------

void criterion_distance_axioms() {
  SplitMix64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = oracle::random_matrix<double>(1, 8, 100 + trial, 2.0);
    REQUIRE_THAT(std::abs(snr_distance(x.row(0), x.row(0))) <= 1e-12, trial);
  }

  const auto emb = oracle::random_matrix<float>(30, 6, 77);
  const auto d = pairwise_distances(emb, MetricTag::Euclidean);
  for (Index i = 0; i < d.size(); ++i) {
    REQUIRE_THAT(d.values(i, i) == 0.0, i);
    for (Index j = 0; j < d.size(); ++j) {
      REQUIRE_THAT(d.values(i, j) == d.values(j, i), i << "," << j);
      REQUIRE_THAT(d.values(i, j) >= 0.0, i << "," << j);
    }
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const Index i = static_cast<Index>(rng.next_below(30));
    const Index j = static_cast<Index>(rng.next_below(30));
    const Index k = static_cast<Index>(rng.next_below(30));
    REQUIRE_THAT(d.values(i, k) <= d.values(i, j) + d.values(j, k) + 1e-12,
                 "triangle " << i << "," << j << "," << k);
  }

  for (int trial = 0; trial < 500; ++trial) {
    const double raw = 1000.0 * rng.next_unit();
    const double norm = normalize_distance(raw);
    REQUIRE_THAT(norm >= 0.0 && norm < 1.0, raw);
  }
  REQUIRE_THAT(normalize_distance(0.0) == 0.0, "zero maps to zero");
}

// ---------------------------------------------------------------------
// 3. Miner oracle on every label multiset with n <= 8.
// ---------------------------------------------------------------------

void partitions_of(int n, int max_part, std::vector<int>& current,
                   std::vector<std::vector<int>>& out) {
  if (n == 0) {
    out.push_back(current);
    return;
  }
  for (int part = std::min(n, max_part); part >= 1; --part) {
    current.push_back(part);
    partitions_of(n - part, part, current, out);
    current.pop_back();
  }
}

void criterion_miner_oracle() {
  const double margin = 0.4;
  std::uint64_t seed = 7000;
  for (int n = 2; n <= 8; ++n) {
    std::vector<std::vector<int>> partitions;
    std::vector<int> scratch;
    partitions_of(n, n, scratch, partitions);

    for (const auto& partition : partitions) {
      std::vector<std::int32_t> labels;
      for (std::size_t c = 0; c < partition.size(); ++c) {
        for (int i = 0; i < partition[c]; ++i) {
          labels.push_back(static_cast<std::int32_t>(c));
        }
      }
      const auto emb = oracle::random_matrix<float>(n, 3, seed++);
      const auto d = pairwise_distances(emb, MetricTag::Euclidean);

      const auto all = mine_triplets(d, labels, MinerKind::AllTriplets, margin);
      std::set<std::tuple<Index, Index, Index>> got;
      for (const auto& t : all) got.insert({t.anchor, t.positive, t.negative});
      REQUIRE_THAT(got == oracle::enumerate_triplets(labels),
                   "n=" << n << " parts=" << partition.size());
      REQUIRE_THAT(got.size() == all.size(), "duplicate triplets");

      const auto semi = mine_triplets(d, labels, MinerKind::SemiHard, margin);
      for (const auto& t : semi) {
        REQUIRE_THAT(got.count({t.anchor, t.positive, t.negative}) == 1,
                     "semihard not a subset");
        // Brute-force window scan: the chosen negative must be the
        // in-window minimum, or the global hardest if the window is empty.
        const double d_ap = d.values(t.anchor, t.positive);
        Index want = -1;
        bool want_in_window = false;
        for (Index c = 0; c < n; ++c) {
          if (labels[c] == labels[t.anchor]) continue;
          const double d_ac = d.values(t.anchor, c);
          const bool in_window = d_ac > d_ap && d_ac < d_ap + margin;
          if (want < 0) {
            want = c;
            want_in_window = in_window;
            continue;
          }
          const double d_want = d.values(t.anchor, want);
          if (in_window && (!want_in_window || d_ac < d_want)) {
            want = c;
            want_in_window = true;
          } else if (!in_window && !want_in_window && d_ac < d_want) {
            want = c;
          }
        }
        REQUIRE_THAT(t.negative == want,
                     "window rule at anchor " << t.anchor);
      }
    }
  }
}

// ---------------------------------------------------------------------
// 4. Precision@K against the O(n^2) brute-force evaluator.
// ---------------------------------------------------------------------

void criterion_precision_oracle() {
  for (std::uint64_t run = 0; run < 50; ++run) {
    const Index n = 10 + static_cast<Index>(run) * 10;  // up to 500
    const auto emb = oracle::random_matrix<double>(n, 5, 40000 + run);
    const auto labels =
        oracle::random_labels(n, 2 + static_cast<Index>(run % 4), run);
    for (Index k : {Index{1}, Index{2}, Index{8}}) {
      if (k >= n) continue;
      const double got = precision_at_k(emb, labels, k);
      const double want = oracle::precision_at_k_bruteforce(emb, labels, k);
      REQUIRE_THAT(got == want, "run " << run << " k " << k);
    }
  }
}

// ---------------------------------------------------------------------
// 5. Hierarchy benefit on the Xor construction.
// ---------------------------------------------------------------------

double node_p1(const CheckpointStore& store, const CombinationSchedule& schedule,
               const std::map<std::string, Dataset>& split, int id) {
  const auto ds = node_dataset(schedule, id, split);
  const auto report = evaluate_node(store.by_node.at(id), ds, {1});
  return report.precision.front().second;
}

void criterion_xor_hierarchy() {
  SyntheticSpec spec;
  spec.mode = SyntheticMode::Xor;
  spec.n_segments = 4;  // two designated + two noise leaves
  spec.n_per_class = 200;
  spec.input_dim = 64;
  spec.noise_sigma = 0.05;
  spec.seed = 20240917;
  const auto gen = generate_synthetic(spec);

  TrainConfig cfg;
  cfg.epochs = 40;  // within the 50-epoch budget
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05;
  cfg.embed_dim = 8;
  cfg.seed = 1;
  LeafData data{gen.splits.at("train"), gen.splits.at("val")};
  const auto store = train_bottom_up(gen.manifest, data, cfg);
  const auto schedule = build_schedule(gen.manifest);

  const auto& val = gen.splits.at("val");
  const double leaf0 = node_p1(store, schedule, val, 0);
  const double leaf1 = node_p1(store, schedule, val, 1);
  const double combined = node_p1(store, schedule, val, 4);  // s0+s1

  std::printf("    designated leaves P@1 = %.3f / %.3f, combined P@1 = %.3f\n",
              leaf0, leaf1, combined);
  REQUIRE_THAT(leaf0 <= 0.65, "leaf s0 P@1 " << leaf0);
  REQUIRE_THAT(leaf1 <= 0.65, "leaf s1 P@1 " << leaf1);
  REQUIRE_THAT(combined >= 0.90, "combined P@1 " << combined);
}

// ---------------------------------------------------------------------
// 6. Prototype convergence.
// ---------------------------------------------------------------------

void criterion_prototype_convergence() {
  SyntheticSpec spec;
  spec.mode = SyntheticMode::Prototype;
  spec.n_segments = 4;
  spec.n_per_class = 100;
  spec.input_dim = 64;
  spec.noise_sigma = 0.05;
  spec.seed = 31337;
  const auto gen = generate_synthetic(spec);

  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 32;
  // Small enough steps that the converged loss sits well under the
  // 10%-of-initial bar instead of bouncing around the SGD noise floor.
  cfg.learning_rate = 0.02;
  cfg.embed_dim = 8;
  cfg.seed = 2;
  LeafData data{gen.splits.at("train"), gen.splits.at("val")};
  const auto store = train_bottom_up(gen.manifest, data, cfg);
  const auto schedule = build_schedule(gen.manifest);

  const double root_p1 =
      node_p1(store, schedule, gen.splits.at("val"), schedule.root_id);
  const auto& history = store.by_node.at(schedule.root_id).history;
  std::printf("    root P@1 = %.3f, loss %.4f -> %.4f\n", root_p1,
              history.front(), history.back());
  REQUIRE_THAT(root_p1 >= 0.95, "root P@1 " << root_p1);
  REQUIRE_THAT(history.back() < 0.1 * history.front(),
               "loss " << history.front() << " -> " << history.back());
}

// ---------------------------------------------------------------------
// 7. Weight-average initialization, bitwise.
// ---------------------------------------------------------------------

void criterion_weight_average() {
  const auto a = make_embedder<float>(12, 4, ModelShape{}, 51);
  const auto b = make_embedder<float>(12, 4, ModelShape{}, 52);
  Checkpoint ca, cb;
  ca.model = a;
  cb.model = b;

  const auto mean = init_from_children(ca, cb);
  auto check_mlp = [&](const MlpParams<float>& m, const MlpParams<float>& pa,
                       const MlpParams<float>& pb) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      for (Index r = 0; r < m.layers[l].weight.rows(); ++r) {
        for (Index c = 0; c < m.layers[l].weight.cols(); ++c) {
          const float want = static_cast<float>(
              (static_cast<double>(pa.layers[l].weight(r, c)) +
               static_cast<double>(pb.layers[l].weight(r, c))) /
              2.0);
          REQUIRE_THAT(m.layers[l].weight(r, c) == want,
                       "layer " << l << " (" << r << "," << c << ")");
        }
      }
      for (Index c = 0; c < m.layers[l].bias.size(); ++c) {
        const float want = static_cast<float>(
            (static_cast<double>(pa.layers[l].bias(c)) +
             static_cast<double>(pb.layers[l].bias(c))) /
            2.0);
        REQUIRE_THAT(m.layers[l].bias(c) == want, "bias " << l << "," << c);
      }
    }
  };
  check_mlp(mean.trunk, a.trunk, b.trunk);
  check_mlp(mean.embedder, a.embedder, b.embedder);

  const auto self = init_from_children(ca, ca);
  REQUIRE_THAT(models_equal(self, a), "self-average is the identity");
}

// ---------------------------------------------------------------------
// 8. Determinism of cmd_train across reruns and job counts.
// ---------------------------------------------------------------------

void criterion_determinism() {
  const auto data_dir = cli::fresh_dir("acc_det_data");
  auto r = cli::run("gen --out " + data_dir.string() +
                    " --mode prototype --n-per-class 10 --n-segments 4 "
                    "--dim 16 --noise 0.05 --seed 99");
  REQUIRE_THAT(r.exit_code == 0, r.output);

  const std::string base = "train --manifest " +
                           (data_dir / "manifest.json").string() +
                           " --epochs 3 --seed 5 --out ";
  const auto out1 = cli::fresh_dir("acc_det_1");
  const auto out2 = cli::fresh_dir("acc_det_2");
  const auto out4 = cli::fresh_dir("acc_det_4");
  REQUIRE_THAT(cli::run(base + out1.string() + " --jobs 1").exit_code == 0,
               "first run");
  REQUIRE_THAT(cli::run(base + out2.string() + " --jobs 1").exit_code == 0,
               "second run");
  REQUIRE_THAT(cli::run(base + out4.string() + " --jobs 4").exit_code == 0,
               "parallel run");

  for (int id = 0; id < 7; ++id) {
    const auto rel = fs::path("store") / checkpoint_filename(id);
    const auto bytes = cli::slurp(out1 / rel);
    REQUIRE_THAT(!bytes.empty(), "node " << id);
    REQUIRE_THAT(bytes == cli::slurp(out2 / rel), "rerun node " << id);
    REQUIRE_THAT(bytes == cli::slurp(out4 / rel), "jobs node " << id);
  }
}

// ---------------------------------------------------------------------
// 9. Tree contract on the 16-leaf structure.
// ---------------------------------------------------------------------

void criterion_tree_contract() {
  SyntheticSpec spec;
  spec.n_segments = 16;
  spec.n_per_class = 4;
  spec.input_dim = 64;
  spec.seed = 7;
  const auto gen = generate_synthetic(spec);

  TrainConfig cfg;
  cfg.epochs = 0;  // seeded inits are valid inference models
  cfg.embed_dim = 8;
  cfg.seed = 3;
  LeafData data{gen.splits.at("train"), {}};
  const auto store = train_bottom_up(gen.manifest, data, cfg);
  const auto schedule = build_schedule(gen.manifest);
  REQUIRE_THAT(schedule.size() == 31, "16 leaves make 31 nodes");
  REQUIRE_THAT(schedule.max_level() == 4, "five levels");

  std::map<std::string, SegmentSample> query;
  for (const auto& [name, ds] : gen.splits.at("train")) {
    query[name] = ds.sample(0);
  }
  const auto tree = build_metric_tree(store, schedule, query, query);
  REQUIRE_THAT(tree.nodes.size() == 31, "tree mirrors the schedule");
  for (const auto& node : tree.nodes) {
    REQUIRE_THAT(node.raw == 0.0, "node " << node.id);
    REQUIRE_THAT(node.decision == 1.0, "node " << node.id);
    REQUIRE_THAT(node.children == schedule.node(node.id).children,
                 "topology at " << node.id);
  }
  REQUIRE_THAT(std::abs(tree.z - 16.0) < 1e-12, "z " << tree.z);

  const std::string text = export_tree(tree, "json");
  const auto parsed = nlohmann::ordered_json::parse(text);
  REQUIRE_THAT(parsed.dump(2) + "\n" == text, "json round trip");
}

// ---------------------------------------------------------------------
// 10. Binary formats round-trip and reject corruption.
// ---------------------------------------------------------------------

void criterion_format_roundtrips() {
  const auto dir = cli::fresh_dir("acc_formats");
  const auto gen = generate_synthetic(
      {.n_per_class = 5, .n_segments = 2, .input_dim = 8, .seed = 123});

  // HSEG: write -> read -> write, byte-identical.
  const auto& ds = gen.splits.at("train").at("s0");
  save_hseg(dir / "a.hseg", ds);
  save_hseg(dir / "b.hseg", load_hseg(dir / "a.hseg", "s0"));
  REQUIRE_THAT(cli::slurp(dir / "a.hseg") == cli::slurp(dir / "b.hseg"),
               "hseg bytes");

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.embed_dim = 3;
  cfg.shape.trunk_hidden = {6};
  cfg.shape.embedder_hidden = 4;
  auto ckpt = train_segment(ds, cfg);
  ckpt.node_id = 0;
  save_checkpoint(dir / "a.hemlckpt", ckpt);
  save_checkpoint(dir / "b.hemlckpt", load_checkpoint(dir / "a.hemlckpt"));
  REQUIRE_THAT(cli::slurp(dir / "a.hemlckpt") == cli::slurp(dir / "b.hemlckpt"),
               "checkpoint bytes");

  // Corrupted headers must be rejected as format errors.
  auto corrupt = [&](const fs::path& src, const fs::path& dst, std::size_t pos,
                     char value) {
    std::string bytes = cli::slurp(src);
    bytes[pos] = value;
    std::ofstream out(dst, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  corrupt(dir / "a.hseg", dir / "bad_magic.hseg", 0, 'Z');
  corrupt(dir / "a.hseg", dir / "bad_version.hseg", 4, 9);
  corrupt(dir / "a.hemlckpt", dir / "bad_magic.hemlckpt", 1, 'z');
  corrupt(dir / "a.hemlckpt", dir / "bad_header.hemlckpt", 14, '}');

  auto expect_format_error = [&](auto&& fn, const char* what) {
    try {
      fn();
      throw CheckFailure(std::string("expected FormatError: ") + what);
    } catch (const FormatError&) {
    }
  };
  expect_format_error([&] { load_hseg(dir / "bad_magic.hseg", "s0"); },
                      "hseg magic");
  expect_format_error([&] { load_hseg(dir / "bad_version.hseg", "s0"); },
                      "hseg version");
  expect_format_error([&] { load_checkpoint(dir / "bad_magic.hemlckpt"); },
                      "checkpoint magic");
  expect_format_error([&] { load_checkpoint(dir / "bad_header.hemlckpt"); },
                      "checkpoint header");

  // Truncation anywhere in the payload is caught.
  {
    const std::string bytes = cli::slurp(dir / "a.hseg");
    std::ofstream out(dir / "short.hseg", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
  }
  expect_format_error([&] { load_hseg(dir / "short.hseg", "s0"); },
                      "hseg truncation");
}

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;  // 0 = no stated limit
  std::function<void()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "loss gradients match finite differences", 10.0, criterion_gradients},
      {2, "distance axioms", 5.0, criterion_distance_axioms},
      {3, "miner equals exhaustive enumeration", 10.0, criterion_miner_oracle},
      {4, "precision@k equals brute force", 30.0, criterion_precision_oracle},
      {5, "xor hierarchy benefit", 180.0, criterion_xor_hierarchy},
      {6, "prototype convergence", 120.0, criterion_prototype_convergence},
      {7, "weight-average init is the bitwise mean", 0.0,
       criterion_weight_average},
      {8, "training is byte-deterministic", 0.0, criterion_determinism},
      {9, "metric tree contract", 0.0, criterion_tree_contract},
      {10, "binary formats round-trip", 0.0, criterion_format_roundtrips},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string error;
    try {
      c.run();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (error.empty() && c.time_limit_s > 0.0 && elapsed > c.time_limit_s) {
      std::ostringstream oss;
      oss << "exceeded time limit (" << elapsed << "s > " << c.time_limit_s
          << "s)";
      error = oss.str();
    }
    if (error.empty()) {
      std::printf("PASS  %2d  %-45s (%.2fs)\n", c.id, c.name, elapsed);
    } else {
      std::printf("FAIL  %2d  %-45s (%.2fs): %s\n", c.id, c.name, elapsed,
                  error.c_str());
      ++failures;
    }
  }
  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
