#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

#include "dnres/network.hpp"

namespace dnres {

/// On-disk layout, all integers little-endian:
///
///   bytes 0..7   magic "DNRESCKP"
///   byte  8      format version (kCheckpointVersion)
///   bytes 9..12  u32 header length L
///   L bytes      UTF-8 JSON header (topology, provenance, training metadata,
///                payload element count)
///   rest         raw IEEE-754 f32 weights then biases, layer by layer in
///                declaration order
inline constexpr std::uint8_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'D', 'N', 'R', 'E', 'S', 'C', 'K', 'P'};

struct Checkpoint {
  Network network;
  nlohmann::json training = nlohmann::json::object();
};

std::vector<std::uint8_t> serialize_checkpoint(const Network& net,
                                               const nlohmann::json& training = nlohmann::json::object());
/// Throws FormatError on bad magic, version mismatch, malformed header,
/// truncation or trailing bytes. Never returns a partial network.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path,
                     const nlohmann::json& training = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json topology_to_json(const std::vector<LayerNode>& topology);

}  // namespace dnres
