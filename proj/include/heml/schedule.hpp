#pragma once

#include <string>
#include <vector>

#include "heml/manifest.hpp"
#include "heml/types.hpp"

namespace heml {

// Binary combination tree over the manifest segments. Leaves come first
// (ids 0..L-1 in manifest order); every internal node appears after
// its children, so ascending id order is a valid processing order.
struct ScheduleNode {
  int id = -1;
  std::string name;
  std::vector<int> children;  // empty for leaves, 1 for pass-through, else 2
  int level = 0;

  bool is_leaf() const { return children.empty(); }
};

struct CombinationSchedule {
  std::vector<ScheduleNode> nodes;  // indexed by id
  int root_id = -1;
  Index leaf_count = 0;

  const ScheduleNode& node(int id) const { return nodes.at(id); }
  Index size() const { return static_cast<Index>(nodes.size()); }
  int max_level() const;
  // Ids of every node at the given level, ascending.
  std::vector<int> ids_at_level(int level) const;
};

// Honors the manifest pairing when given; otherwise pairs left to right
// in manifest order level by level, promoting an odd node unchanged.
CombinationSchedule build_schedule(const SegmentManifest& manifest);

}  // namespace heml
