#include "heml/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "heml/errors.hpp"
#include "heml/hseg.hpp"

namespace heml {

namespace {

using ordered_json = nlohmann::ordered_json;

PairingNode parse_pairing(const ordered_json& j, const std::string& path) {
  PairingNode node;
  if (j.is_string()) {
    node.leaf = j.get<std::string>();
    if (node.leaf.empty()) {
      throw ParseError(path + ": empty segment name");
    }
    return node;
  }
  if (!j.is_array() || j.empty() || j.size() > 2) {
    throw ParseError(path + ": pairing nodes are a segment name or an array "
                            "of 1..2 children");
  }
  for (std::size_t i = 0; i < j.size(); ++i) {
    node.children.push_back(
        parse_pairing(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return node;
}

ordered_json pairing_to_json(const PairingNode& node) {
  if (node.is_leaf()) return node.leaf;
  ordered_json arr = ordered_json::array();
  for (const auto& c : node.children) arr.push_back(pairing_to_json(c));
  return arr;
}

void collect_leaves(const PairingNode& node, std::vector<std::string>& out) {
  if (node.is_leaf()) {
    out.push_back(node.leaf);
    return;
  }
  for (const auto& c : node.children) collect_leaves(c, out);
}

ordered_json manifest_to_json(const SegmentManifest& m) {
  ordered_json j;
  j["segments"] = m.segments;
  j["input_dim"] = m.input_dim;
  j["background_value"] = m.background_value;
  if (m.pairing) j["pairing"] = pairing_to_json(*m.pairing);
  if (!m.splits.empty()) {
    ordered_json splits;
    for (const auto& [split, files] : m.splits) {
      ordered_json per_segment;
      for (const auto& [segment, path] : files) per_segment[segment] = path;
      splits[split] = per_segment;
    }
    j["splits"] = splits;
  }
  return j;
}

void validate_manifest(const SegmentManifest& m) {
  if (m.segments.empty()) {
    throw ParseError("segments: at least one segment is required");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < m.segments.size(); ++i) {
    const auto& name = m.segments[i];
    if (name.empty()) {
      throw ParseError("segments[" + std::to_string(i) + "]: empty name");
    }
    if (!seen.insert(name).second) {
      throw ParseError("segments[" + std::to_string(i) + "]: duplicate name '" +
                       name + "'");
    }
  }
  if (m.input_dim < 1) {
    throw ParseError("input_dim: must be at least 1");
  }
  if (m.pairing) {
    std::vector<std::string> leaves;
    collect_leaves(*m.pairing, leaves);
    std::set<std::string> used;
    for (const auto& leaf : leaves) {
      if (!seen.count(leaf)) {
        throw ParseError("pairing: unknown segment '" + leaf + "'");
      }
      if (!used.insert(leaf).second) {
        throw ParseError("pairing: segment '" + leaf +
                         "' referenced more than once");
      }
    }
    if (used.size() != m.segments.size()) {
      for (const auto& name : m.segments) {
        if (!used.count(name)) {
          throw ParseError("pairing: segment '" + name + "' is missing");
        }
      }
    }
  }
  for (const auto& [split, files] : m.splits) {
    for (const auto& [segment, path] : files) {
      if (!seen.count(segment)) {
        throw ParseError("splits." + split + ": unknown segment '" + segment +
                         "'");
      }
      if (path.empty()) {
        throw ParseError("splits." + split + "." + segment + ": empty path");
      }
    }
  }
}

}  // namespace

std::filesystem::path SegmentManifest::split_path(
    const std::string& split, const std::string& segment) const {
  const auto split_it = splits.find(split);
  if (split_it == splits.end()) {
    throw UsageError("manifest has no split '" + split + "'");
  }
  const auto file_it = split_it->second.find(segment);
  if (file_it == split_it->second.end()) {
    throw UsageError("split '" + split + "' has no file for segment '" +
                     segment + "'");
  }
  std::filesystem::path p = file_it->second;
  return p.is_absolute() ? p : base_dir / p;
}

SegmentManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("manifest: cannot open " + path.string());

  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest: invalid JSON in " + path.string() + ": " +
                     e.what());
  }

  SegmentManifest m;
  m.base_dir = path.has_parent_path() ? path.parent_path()
                                      : std::filesystem::path(".");
  try {
    if (!j.contains("segments")) throw ParseError("segments: missing field");
    m.segments = j.at("segments").get<std::vector<std::string>>();
    if (!j.contains("input_dim")) throw ParseError("input_dim: missing field");
    m.input_dim = j.at("input_dim").get<Index>();
    if (j.contains("background_value")) {
      m.background_value = j.at("background_value").get<float>();
    }
    if (j.contains("pairing")) {
      m.pairing = parse_pairing(j.at("pairing"), "pairing");
    }
    if (j.contains("splits")) {
      for (const auto& [split, files] : j.at("splits").items()) {
        for (const auto& [segment, file] : files.items()) {
          m.splits[split][segment] = file.get<std::string>();
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest: malformed field in " + path.string() + ": " +
                     e.what());
  }
  validate_manifest(m);
  return m;
}

void save_manifest(const SegmentManifest& manifest,
                   const std::filesystem::path& path) {
  validate_manifest(manifest);
  std::ofstream out(path);
  if (!out) throw ParseError("manifest: cannot write " + path.string());
  out << manifest_to_json(manifest).dump(2) << "\n";
}

std::uint64_t manifest_hash(const SegmentManifest& manifest) {
  const std::string dump = manifest_to_json(manifest).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Dataset load_dataset(const SegmentManifest& manifest,
                     const std::string& segment_id, const std::string& split) {
  bool known = false;
  for (const auto& s : manifest.segments) {
    if (s == segment_id) {
      known = true;
      break;
    }
  }
  if (!known) {
    throw UsageError("load_dataset: unknown segment '" + segment_id + "'");
  }
  Dataset data = load_hseg(manifest.split_path(split, segment_id), segment_id);
  if (data.dim() != manifest.input_dim) {
    throw FormatError("load_dataset: file dim " + std::to_string(data.dim()) +
                      " does not match manifest input_dim " +
                      std::to_string(manifest.input_dim) + " for segment '" +
                      segment_id + "'");
  }
  // Background invariant: outside the mask, features carry the manifest
  // background value exactly.
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) {
      if (!data.masks(i, j) &&
          data.features(i, j) != manifest.background_value) {
        throw DataError("load_dataset: sample " + std::to_string(i) +
                        " position " + std::to_string(j) +
                        " is outside the mask but differs from the background "
                        "value");
      }
    }
  }
  return data;
}

}  // namespace heml
