#include "heml/synthetic.hpp"

#include <vector>

#include "heml/errors.hpp"
#include "heml/rng.hpp"

namespace heml {

namespace {

// Independent stream indices; the draw order below is part of the
// reproducibility contract.
constexpr std::uint64_t kPrototypeStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kValStream = 3;

void check_spec(const SyntheticSpec& spec) {
  if (spec.n_per_class < 1) {
    throw UsageError("generate_synthetic: n_per_class must be at least 1");
  }
  if (spec.n_segments < 1) {
    throw UsageError("generate_synthetic: n_segments must be at least 1");
  }
  if (spec.input_dim < 1 || spec.input_dim % spec.n_segments != 0) {
    throw UsageError(
        "generate_synthetic: input_dim must be a positive multiple of "
        "n_segments");
  }
  if (spec.noise_sigma < 0.0) {
    throw UsageError("generate_synthetic: noise_sigma must be non-negative");
  }
  if (spec.mode == SyntheticMode::Xor && spec.n_segments < 2) {
    throw UsageError("generate_synthetic: Xor mode needs two designated "
                     "segments");
  }
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  check_spec(spec);

  const Index n_segments = spec.n_segments;
  const Index block = spec.input_dim / n_segments;
  const Index n = 2 * spec.n_per_class;

  SyntheticData out;
  out.manifest.input_dim = spec.input_dim;
  out.manifest.background_value = 0.0f;
  for (Index s = 0; s < n_segments; ++s) {
    out.manifest.segments.push_back("s" + std::to_string(s));
  }

  // Prototypes for every (class, segment), drawn even in Xor mode so the
  // stream layout does not depend on the mode.
  SplitMix64 proto_rng(mix_seed(spec.seed, kPrototypeStream));
  std::vector<MatrixD> prototypes(2, MatrixD(n_segments, block));
  for (int label = 0; label < 2; ++label) {
    for (Index s = 0; s < n_segments; ++s) {
      for (Index c = 0; c < block; ++c) {
        prototypes[label](s, c) = proto_rng.next_symmetric();
      }
    }
  }

  for (const auto& [split, stream] :
       std::initializer_list<std::pair<const char*, std::uint64_t>>{
           {"train", kTrainStream}, {"val", kValStream}}) {
    SplitMix64 rng(mix_seed(spec.seed, stream));

    std::map<std::string, Dataset> datasets;
    for (Index s = 0; s < n_segments; ++s) {
      Dataset d;
      d.segment_id = out.manifest.segments[s];
      d.features = MatrixF::Zero(n, spec.input_dim);
      d.masks = Matrix<std::uint8_t>::Zero(n, spec.input_dim);
      for (Index i = 0; i < n; ++i) {
        for (Index c = 0; c < block; ++c) d.masks(i, s * block + c) = 1;
      }
      datasets[d.segment_id] = std::move(d);
    }

    // Row layout: n_per_class samples of class 0, then class 1. In Xor
    // mode factor pairs are stratified half-and-half within each class,
    // so each designated factor is exactly label-balanced.
    for (Index i = 0; i < n; ++i) {
      const std::int32_t label = i < spec.n_per_class ? 0 : 1;
      const Index within = i % spec.n_per_class;
      double f0 = 0.0, f1 = 0.0;
      if (spec.mode == SyntheticMode::Xor) {
        const bool first_half = within < (spec.n_per_class + 1) / 2;
        f0 = first_half ? 1.0 : -1.0;
        f1 = (label == 1) == first_half ? 1.0 : -1.0;  // product == label sign
      }
      for (Index s = 0; s < n_segments; ++s) {
        Dataset& d = datasets[out.manifest.segments[s]];
        d.labels.push_back(label);
        for (Index c = 0; c < block; ++c) {
          double base = 0.0;
          if (spec.mode == SyntheticMode::Prototype) {
            base = prototypes[label](s, c);
          } else if (s == 0) {
            base = f0;
          } else if (s == 1) {
            base = f1;
          }
          d.features(i, s * block + c) = static_cast<float>(
              base + spec.noise_sigma * rng.next_gaussian());
        }
      }
    }

    for (auto& [name, d] : datasets) {
      out.manifest.splits[split][name] =
          std::string(split) + "/" + name + ".hseg";
    }
    out.splits[split] = std::move(datasets);
  }
  return out;
}

}  // namespace heml
