#pragma once

#include <filesystem>

#include "heml/manifest.hpp"
#include "heml/schedule.hpp"
#include "heml/train.hpp"

namespace heml {

// Checkpoint file, little-endian and bit-exact:
//   magic "HEMLCKP1", u32 header length, JSON header (node id,
//   architecture dims, activations, seed, loss, epochs, history, config
//   echo), then raw f32 parameters in layer order: trunk first, per
//   layer the row-major weights then the bias.

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline std::string checkpoint_filename(int node_id) {
  return "node_" + std::to_string(node_id) + ".hemlckpt";
}

// A store on disk is a directory of node_<id>.hemlckpt files plus
// store.json carrying the manifest hash.
void save_store(const std::filesystem::path& dir, const CheckpointStore& store);

CheckpointStore load_store(const std::filesystem::path& dir,
                           const SegmentManifest& manifest);

}  // namespace heml
