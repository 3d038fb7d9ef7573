#include "heml/checkpoint_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "heml/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace heml {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'H', 'E', 'M', 'L', 'C', 'K', 'P', '1'};

ordered_json mlp_to_json(const MlpParams<float>& p) {
  ordered_json dims = ordered_json::array();
  ordered_json acts = ordered_json::array();
  for (const auto& l : p.layers) {
    dims.push_back({l.in_dim(), l.out_dim()});
    acts.push_back(activation_name(l.activation));
  }
  return ordered_json{{"dims", dims}, {"activations", acts}};
}

MlpParams<float> mlp_from_json(const ordered_json& j) {
  MlpParams<float> p;
  const auto& dims = j.at("dims");
  const auto& acts = j.at("activations");
  if (dims.size() != acts.size()) {
    throw FormatError("checkpoint: dims/activations length mismatch");
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    DenseLayer<float> layer;
    const Index in = dims[i].at(0).get<Index>();
    const Index out = dims[i].at(1).get<Index>();
    if (in < 1 || out < 1) {
      throw FormatError("checkpoint: non-positive layer dimension");
    }
    layer.weight.resize(in, out);
    layer.bias.resize(out);
    layer.activation = activation_from_name(acts[i].get<std::string>());
    p.layers.push_back(std::move(layer));
  }
  return p;
}

ordered_json header_json(const Checkpoint& ckpt) {
  ordered_json j;
  j["format_version"] = ckpt.format_version;
  j["node_id"] = ckpt.node_id;
  j["name"] = ckpt.name;
  j["seed"] = ckpt.seed;
  j["loss"] = loss_name(ckpt.config.loss);
  j["epochs"] = ckpt.config.epochs;
  j["history"] = ckpt.history;
  j["best_epoch"] = ckpt.best_epoch;
  j["architecture"] = ordered_json{
      {"input_dim", ckpt.model.input_dim()},
      {"embed_dim", ckpt.model.embed_dim()},
      {"trunk", mlp_to_json(ckpt.model.trunk)},
      {"embedder", mlp_to_json(ckpt.model.embedder)},
  };
  j["config"] = ordered_json{
      {"epochs", ckpt.config.epochs},
      {"batch_size", ckpt.config.batch_size},
      {"learning_rate", ckpt.config.learning_rate},
      {"margin", ckpt.config.margin},
      {"margin_mode", margin_mode_name(ckpt.config.margin_mode)},
      {"loss", loss_name(ckpt.config.loss)},
      {"miner", miner_name(ckpt.config.miner)},
      {"seed", ckpt.config.seed},
      {"embed_dim", ckpt.config.embed_dim},
      {"temperature", ckpt.config.temperature},
      {"alpha", ckpt.config.alpha},
      {"lambda", ckpt.config.lambda},
  };
  return j;
}

void write_params(std::ostream& out, const MlpParams<float>& p) {
  for (const auto& l : p.layers) {
    out.write(reinterpret_cast<const char*>(l.weight.data()),
              static_cast<std::streamsize>(sizeof(float)) * l.weight.size());
    out.write(reinterpret_cast<const char*>(l.bias.data()),
              static_cast<std::streamsize>(sizeof(float)) * l.bias.size());
  }
}

void read_params(std::istream& in, MlpParams<float>& p, const char* what) {
  for (auto& l : p.layers) {
    in.read(reinterpret_cast<char*>(l.weight.data()),
            static_cast<std::streamsize>(sizeof(float)) * l.weight.size());
    in.read(reinterpret_cast<char*>(l.bias.data()),
            static_cast<std::streamsize>(sizeof(float)) * l.bias.size());
    if (!in) {
      throw FormatError(std::string("checkpoint: truncated parameters (") +
                        what + ")");
    }
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  validate_model(ckpt.model);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("checkpoint: cannot open for writing: " + path.string());
  }
  const std::string header = header_json(ckpt).dump();
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t header_len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_params(out, ckpt.model.trunk);
  write_params(out, ckpt.model.embedder);
  if (!out) throw FormatError("checkpoint: write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open: " + path.string());

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic in " + path.string());
  }
  std::uint32_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in) throw FormatError("checkpoint: truncated header length");

  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec || file_size < sizeof(kMagic) + sizeof(header_len) + header_len) {
    throw FormatError("checkpoint: header length exceeds file size in " +
                      path.string());
  }

  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (!in) throw FormatError("checkpoint: truncated header");

  ordered_json j;
  try {
    j = ordered_json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: invalid header JSON in " + path.string() +
                      ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.format_version = j.at("format_version").get<int>();
    if (ckpt.format_version != 1) {
      throw FormatError("checkpoint: unsupported format version " +
                        std::to_string(ckpt.format_version));
    }
    ckpt.node_id = j.at("node_id").get<int>();
    ckpt.name = j.at("name").get<std::string>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.history = j.at("history").get<std::vector<double>>();
    ckpt.best_epoch = j.at("best_epoch").get<int>();

    const auto& arch = j.at("architecture");
    ckpt.model.trunk = mlp_from_json(arch.at("trunk"));
    ckpt.model.embedder = mlp_from_json(arch.at("embedder"));

    const auto& cfg = j.at("config");
    ckpt.config.epochs = cfg.at("epochs").get<Index>();
    ckpt.config.batch_size = cfg.at("batch_size").get<Index>();
    ckpt.config.learning_rate = cfg.at("learning_rate").get<double>();
    ckpt.config.margin = cfg.at("margin").get<double>();
    ckpt.config.margin_mode =
        margin_mode_from_name(cfg.at("margin_mode").get<std::string>());
    ckpt.config.loss = loss_from_name(cfg.at("loss").get<std::string>());
    ckpt.config.miner = miner_from_name(cfg.at("miner").get<std::string>());
    ckpt.config.seed = cfg.at("seed").get<std::uint64_t>();
    ckpt.config.embed_dim = cfg.at("embed_dim").get<Index>();
    ckpt.config.temperature = cfg.at("temperature").get<double>();
    ckpt.config.alpha = cfg.at("alpha").get<double>();
    ckpt.config.lambda = cfg.at("lambda").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: malformed header in " + path.string() +
                      ": " + e.what());
  } catch (const ParseError& e) {
    throw FormatError("checkpoint: malformed header in " + path.string() +
                      ": " + e.what());
  }

  // Rebuild the shape echo from the stored architecture.
  ckpt.config.shape.trunk_hidden.clear();
  for (const auto& l : ckpt.model.trunk.layers) {
    ckpt.config.shape.trunk_hidden.push_back(l.out_dim());
  }
  if (!ckpt.model.embedder.layers.empty()) {
    ckpt.config.shape.embedder_hidden = ckpt.model.embedder.layers[0].out_dim();
  }

  read_params(in, ckpt.model.trunk, "trunk");
  read_params(in, ckpt.model.embedder, "embedder");
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw FormatError("checkpoint: trailing bytes in " + path.string());
  }
  if (static_cast<Index>(ckpt.history.size()) != ckpt.config.epochs) {
    throw FormatError("checkpoint: history length does not match epochs in " +
                      path.string());
  }
  try {
    validate_model(ckpt.model);
  } catch (const Error& e) {
    throw FormatError("checkpoint: invalid model in " + path.string() + ": " +
                      e.what());
  }
  return ckpt;
}

void save_store(const std::filesystem::path& dir, const CheckpointStore& store) {
  std::filesystem::create_directories(dir);
  ordered_json meta;
  meta["format_version"] = 1;
  meta["manifest_hash"] = store.manifest_hash;
  auto& nodes = meta["nodes"] = ordered_json::array();
  for (const auto& [id, ckpt] : store.by_node) {
    save_checkpoint(dir / checkpoint_filename(id), ckpt);
    nodes.push_back(ordered_json{{"id", id}, {"name", ckpt.name}});
  }
  std::ofstream out(dir / "store.json");
  if (!out) throw FormatError("store: cannot write " + (dir / "store.json").string());
  out << meta.dump(2) << "\n";
}

CheckpointStore load_store(const std::filesystem::path& dir,
                           const SegmentManifest& manifest) {
  const auto schedule = build_schedule(manifest);
  const auto meta_path = dir / "store.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) {
    throw DataError("store: missing " + meta_path.string());
  }
  ordered_json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("store: invalid store.json: " + std::string(e.what()));
  }

  CheckpointStore store;
  try {
    store.manifest_hash = meta.at("manifest_hash").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("store: malformed store.json: " + std::string(e.what()));
  }
  if (store.manifest_hash != manifest_hash(manifest)) {
    throw DataError("store: manifest hash mismatch; the store was trained "
                    "against a different manifest");
  }

  for (const auto& node : schedule.nodes) {
    const auto path = dir / checkpoint_filename(node.id);
    if (!std::filesystem::exists(path)) {
      throw DataError("store: incomplete, missing checkpoint for node " +
                      std::to_string(node.id) + " ('" + node.name + "')");
    }
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.node_id != node.id || ckpt.name != node.name) {
      throw FormatError("store: checkpoint " + path.string() +
                        " does not match schedule node " +
                        std::to_string(node.id) + " ('" + node.name + "')");
    }
    store.by_node[node.id] = std::move(ckpt);
  }
  return store;
}

}  // namespace heml
