#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "heml/sample.hpp"
#include "heml/types.hpp"

namespace heml {

// Explicit pairing plan: a leaf name, or a node with one or two children.
// One-child nodes are pass-throughs.
struct PairingNode {
  std::string leaf;                   // non-empty exactly for leaf nodes
  std::vector<PairingNode> children;  // size 1 or 2 otherwise

  bool is_leaf() const { return !leaf.empty(); }
};

// Named leaf segments over a fixed-length canvas, plus where each
// split's sample files live. Paths resolve relative to the manifest.
struct SegmentManifest {
  std::vector<std::string> segments;
  Index input_dim = 0;
  float background_value = 0.0f;
  std::optional<PairingNode> pairing;
  // split name -> segment name -> path (relative to base_dir or absolute)
  std::map<std::string, std::map<std::string, std::string>> splits;
  std::filesystem::path base_dir;

  bool has_split(const std::string& split) const {
    return splits.count(split) > 0;
  }
  std::filesystem::path split_path(const std::string& split,
                                   const std::string& segment) const;
};

SegmentManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const SegmentManifest& manifest,
                   const std::filesystem::path& path);

// FNV-1a over the canonical serialized form.
std::uint64_t manifest_hash(const SegmentManifest& manifest);

// Reads one segment of one split and checks it against the manifest.
Dataset load_dataset(const SegmentManifest& manifest,
                     const std::string& segment_id, const std::string& split);

}  // namespace heml
