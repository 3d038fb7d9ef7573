#include "heml/schedule.hpp"

#include <algorithm>
#include <map>

#include "heml/errors.hpp"

namespace heml {

int CombinationSchedule::max_level() const {
  int level = 0;
  for (const auto& n : nodes) level = std::max(level, n.level);
  return level;
}

std::vector<int> CombinationSchedule::ids_at_level(int level) const {
  std::vector<int> out;
  for (const auto& n : nodes) {
    if (n.level == level) out.push_back(n.id);
  }
  return out;
}

namespace {

int build_from_pairing(const PairingNode& plan,
                       const std::map<std::string, int>& leaf_ids,
                       CombinationSchedule& schedule) {
  if (plan.is_leaf()) {
    const auto it = leaf_ids.find(plan.leaf);
    if (it == leaf_ids.end()) {
      throw ScheduleError("pairing references unknown segment '" + plan.leaf +
                          "'");
    }
    return it->second;
  }
  if (plan.children.empty() || plan.children.size() > 2) {
    throw ScheduleError("pairing node must have 1 or 2 children");
  }
  ScheduleNode node;
  for (const auto& child : plan.children) {
    const int child_id = build_from_pairing(child, leaf_ids, schedule);
    node.children.push_back(child_id);
    node.level = std::max(node.level, schedule.nodes[child_id].level + 1);
    if (!node.name.empty()) node.name += "+";
    node.name += schedule.nodes[child_id].name;
  }
  node.id = static_cast<int>(schedule.nodes.size());
  schedule.nodes.push_back(node);
  return node.id;
}

}  // namespace

CombinationSchedule build_schedule(const SegmentManifest& manifest) {
  if (manifest.segments.empty()) {
    throw ScheduleError("build_schedule: manifest has no segments");
  }

  CombinationSchedule schedule;
  schedule.leaf_count = static_cast<Index>(manifest.segments.size());
  std::map<std::string, int> leaf_ids;
  for (std::size_t i = 0; i < manifest.segments.size(); ++i) {
    ScheduleNode leaf;
    leaf.id = static_cast<int>(i);
    leaf.name = manifest.segments[i];
    leaf.level = 0;
    schedule.nodes.push_back(leaf);
    leaf_ids[leaf.name] = leaf.id;
  }

  if (manifest.pairing) {
    schedule.root_id = build_from_pairing(*manifest.pairing, leaf_ids, schedule);
    // Every leaf must sit under the root exactly once.
    std::vector<int> uses(schedule.nodes.size(), 0);
    for (const auto& node : schedule.nodes) {
      for (int child : node.children) ++uses[child];
    }
    for (Index i = 0; i < schedule.leaf_count; ++i) {
      const int expected = schedule.root_id == static_cast<int>(i) ? 0 : 1;
      if (uses[i] != expected) {
        throw ScheduleError("pairing must reference segment '" +
                            schedule.nodes[i].name + "' exactly once");
      }
    }
    return schedule;
  }

  // Left-to-right pairing per level; an odd node carries over unchanged.
  std::vector<int> current;
  for (Index i = 0; i < schedule.leaf_count; ++i) {
    current.push_back(static_cast<int>(i));
  }
  while (current.size() > 1) {
    std::vector<int> next;
    for (std::size_t i = 0; i + 1 < current.size(); i += 2) {
      const auto& left = schedule.nodes[current[i]];
      const auto& right = schedule.nodes[current[i + 1]];
      ScheduleNode node;
      node.id = static_cast<int>(schedule.nodes.size());
      node.name = left.name + "+" + right.name;
      node.children = {left.id, right.id};
      node.level = std::max(left.level, right.level) + 1;
      schedule.nodes.push_back(node);
      next.push_back(node.id);
    }
    if (current.size() % 2 == 1) next.push_back(current.back());
    current = std::move(next);
  }
  schedule.root_id = current.front();
  return schedule;
}

}  // namespace heml
