#include "dnres/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dnres {
namespace {

constexpr std::size_t kPreambleSize = sizeof(kCheckpointMagic) + 1 + 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

nlohmann::json provenance_to_json(const std::vector<ProvenanceEntry>& prov) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : prov) {
    arr.push_back({{"stage", e.stage}, {"event", e.event}, {"node", e.node}, {"replaced", e.replaced}});
  }
  return arr;
}

LayerNode node_from_json(const nlohmann::json& j) {
  LayerNode n;
  n.kind = parse_layer_kind(j.at("kind").get<std::string>());
  n.name = j.at("name").get<std::string>();
  n.in_channels = j.at("in").get<int>();
  n.out_channels = j.at("out").get<int>();
  n.kernel = j.at("k").get<int>();
  n.pad = j.at("pad").get<int>();
  if (n.kind != LayerKind::relu) {
    if (n.in_channels <= 0 || n.out_channels <= 0 || n.kernel <= 0 || n.kernel % 2 == 0 || n.pad < 0 ||
        n.in_channels > 4096 || n.out_channels > 4096 || n.kernel > 31) {
      throw FormatError("checkpoint: layer '" + n.name + "' has invalid dimensions");
    }
    if ((n.kind == LayerKind::resblock || n.kind == LayerKind::ds_resblock || n.kind == LayerKind::depthwise_conv) &&
        n.in_channels != n.out_channels) {
      throw FormatError("checkpoint: layer '" + n.name + "' must preserve channel count");
    }
  }
  return n;
}

}  // namespace

nlohmann::json topology_to_json(const std::vector<LayerNode>& topology) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& n : topology) {
    arr.push_back({{"kind", to_string(n.kind)},
                   {"name", n.name},
                   {"in", n.in_channels},
                   {"out", n.out_channels},
                   {"k", n.kernel},
                   {"pad", n.pad}});
  }
  return arr;
}

std::vector<std::uint8_t> serialize_checkpoint(const Network& net, const nlohmann::json& training) {
  std::size_t payload = 0;
  for (auto p : net.parameters()) payload += p.size();

  nlohmann::json header = {{"format", "dnres-checkpoint"},
                           {"stage_count", net.stage_count()},
                           {"layers", topology_to_json(net.topology())},
                           {"provenance", provenance_to_json(net.provenance())},
                           {"training", training},
                           {"payload_floats", payload}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPreambleSize + text.size() + 4 * payload);
  out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  out.push_back(kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (auto p : net.parameters()) {
    for (float v : p) put_f32(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreambleSize) throw FormatError("checkpoint: file truncated before header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("checkpoint: bad magic (not a dnres checkpoint)");
  }
  const std::uint8_t version = bytes[sizeof(kCheckpointMagic)];
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t header_len = get_u32(bytes.data() + sizeof(kCheckpointMagic) + 1);
  if (bytes.size() - kPreambleSize < header_len) throw FormatError("checkpoint: file truncated inside header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreambleSize, bytes.begin() + kPreambleSize + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    if (header.at("format") != "dnres-checkpoint") throw FormatError("checkpoint: unexpected format tag");
    std::vector<Layer<float>> layers;
    for (const auto& j : header.at("layers")) layers.push_back(make_layer<float>(node_from_json(j)));
    std::vector<ProvenanceEntry> prov;
    for (const auto& j : header.at("provenance")) {
      prov.push_back({j.at("stage").get<int>(), j.at("event").get<std::string>(), j.at("node").get<std::string>(),
                      j.at("replaced").get<std::string>()});
    }
    Network net(std::move(layers), header.at("stage_count").get<int>(), std::move(prov));

    std::size_t expected = 0;
    for (auto p : net.parameters()) expected += p.size();
    if (header.at("payload_floats").get<std::size_t>() != expected) {
      throw FormatError("checkpoint: payload size in header does not match topology");
    }
    const std::size_t payload_bytes = bytes.size() - kPreambleSize - header_len;
    if (payload_bytes < 4 * expected) throw FormatError("checkpoint: file truncated inside weight payload");
    if (payload_bytes > 4 * expected) throw FormatError("checkpoint: trailing bytes after weight payload");

    const std::uint8_t* p = bytes.data() + kPreambleSize + header_len;
    for (auto span : net.parameters()) {
      for (float& v : span) {
        v = std::bit_cast<float>(get_u32(p));
        p += 4;
      }
    }
    ckpt.network = std::move(net);
    ckpt.training = header.contains("training") ? header.at("training") : nlohmann::json::object();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path, const nlohmann::json& training) {
  const auto bytes = serialize_checkpoint(net, training);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace dnres
