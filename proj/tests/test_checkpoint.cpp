#include <gtest/gtest.h>

#include <fstream>

#include "dnres/checkpoint.hpp"
#include "test_support.hpp"

using namespace dnres;

namespace {

Network sample_net() {
  Rng rng(21);
  Network net = build_base<float>(rng);
  net = insert_resblock(net, rng);
  net = insert_resblock(net, rng);
  net = evolve_block_to_ds(net, 0, rng);
  return net;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = dnres::test::temp_dir("checkpoint_roundtrip");
  const Network net = sample_net();
  const nlohmann::json meta = {{"seed", 5}, {"optimizer", "adam"}};
  save_checkpoint(net, dir / "a.ckpt", meta);
  const Checkpoint loaded = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(loaded.network, net);
  EXPECT_EQ(loaded.training, meta);
  save_checkpoint(loaded.network, dir / "b.ckpt", loaded.training);
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
}

TEST(Checkpoint, ForwardIsBitwiseEqualAfterLoad) {
  const Network net = sample_net();
  const auto bytes = serialize_checkpoint(net);
  const Network back = deserialize_checkpoint(bytes).network;
  Rng rng(3);
  TensorF x(2, 1, 33, 33);
  for (float& v : x.data()) v = static_cast<float>(rng.uniform());
  EXPECT_EQ(back.forward(x), net.forward(x));
  EXPECT_EQ(back.provenance(), net.provenance());
  EXPECT_EQ(back.stage_count(), net.stage_count());
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = serialize_checkpoint(sample_net());
  ASSERT_GT(bytes.size(), 13u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "DNRESCKP");
  EXPECT_EQ(bytes[8], kCheckpointVersion);
  const std::uint32_t len = bytes[9] | (bytes[10] << 8) | (bytes[11] << 16) | (static_cast<std::uint32_t>(bytes[12]) << 24);
  const auto header = nlohmann::json::parse(bytes.begin() + 13, bytes.begin() + 13 + len);
  EXPECT_EQ(header.at("format"), "dnres-checkpoint");
  const std::size_t floats = header.at("payload_floats").get<std::size_t>();
  EXPECT_EQ(bytes.size(), 13 + len + 4 * floats);
  EXPECT_EQ(floats, count_params(sample_net(), ParamCountMode::with_bias));
}

TEST(Checkpoint, PayloadIsLittleEndianFloat) {
  Rng rng(1);
  Network net = build_base<float>(rng);
  net.mutable_layers()[0].conv.weights[0] = 1.0f;  // 0x3f800000
  const auto bytes = serialize_checkpoint(net);
  const std::uint32_t len = bytes[9] | (bytes[10] << 8) | (bytes[11] << 16) | (static_cast<std::uint32_t>(bytes[12]) << 24);
  const std::size_t off = 13 + len;
  EXPECT_EQ(bytes[off + 0], 0x00);
  EXPECT_EQ(bytes[off + 1], 0x00);
  EXPECT_EQ(bytes[off + 2], 0x80);
  EXPECT_EQ(bytes[off + 3], 0x3f);
}

TEST(Checkpoint, EveryTruncationIsRejected) {
  const auto bytes = serialize_checkpoint(sample_net());
  for (std::size_t n : {std::size_t{0}, std::size_t{5}, std::size_t{8}, std::size_t{12}, std::size_t{40},
                        bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_THROW(deserialize_checkpoint(cut), FormatError) << n << " bytes";
  }
}

TEST(Checkpoint, CorruptionIsRejected) {
  auto bytes = serialize_checkpoint(sample_net());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[8] = kCheckpointVersion + 1;
  EXPECT_THROW(deserialize_checkpoint(bad_version), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(trailing), FormatError);
  auto bad_json = bytes;
  bad_json[13] = '!';
  EXPECT_THROW(deserialize_checkpoint(bad_json), FormatError);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ckpt"), IoError);
}
