#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "heml/manifest.hpp"
#include "heml/sample.hpp"

namespace heml {

enum class SyntheticMode { Prototype, Xor };

inline const char* synthetic_mode_name(SyntheticMode m) {
  return m == SyntheticMode::Prototype ? "prototype" : "xor";
}

// Two-class segment data with analytically known structure over
// contiguous equal-width blocks, one block per segment.
//
// Prototype: each (class, segment) has its own prototype plus Gaussian
// noise, so every segment is individually informative.
// Xor: the first two segments carry +-1 latent factors whose product
// decides the label; either one alone is uninformative, only their
// combination separates the classes. Remaining segments are pure noise.
struct SyntheticSpec {
  Index n_per_class = 100;  // per class, per split
  Index n_segments = 4;
  Index input_dim = 64;
  double noise_sigma = 0.05;
  SyntheticMode mode = SyntheticMode::Prototype;
  std::uint64_t seed = 1234;
};

struct SyntheticData {
  SegmentManifest manifest;  // splits point at "<split>/<segment>.hseg"
  // split name -> segment name -> dataset ("train" and "val")
  std::map<std::string, std::map<std::string, Dataset>> splits;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace heml
