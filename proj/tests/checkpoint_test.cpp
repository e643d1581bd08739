#include <gtest/gtest.h>

#include <filesystem>

#include "parc2/checkpoint.hpp"

namespace parc2 {
namespace {

Model<float> small_model(std::uint64_t seed) {
  Rng rng(seed);
  return build_model<float>(ModelConfig::named("XT", 64), rng);
}

std::uint64_t header_len(const std::vector<char> &bytes) {
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data(), 8);
  return len;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto m = small_model(1);
  const auto bytes = serialize_checkpoint(m);
  const auto back = deserialize_checkpoint<float>(bytes);
  EXPECT_EQ(back.config, m.config);
  std::vector<std::vector<float>> a, b;
  for_each_tensor(m, [&](const std::string &, const std::vector<float> &v, const auto &) { a.push_back(v); });
  for_each_tensor(back, [&](const std::string &, const std::vector<float> &v, const auto &) { b.push_back(v); });
  EXPECT_EQ(a, b);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
}

TEST(Checkpoint, SameSeedSameBytes) {
  EXPECT_EQ(serialize_checkpoint(small_model(3)), serialize_checkpoint(small_model(3)));
}

TEST(Checkpoint, LayoutIsAligned) {
  const auto bytes = serialize_checkpoint(small_model(2));
  const auto h = parse_checkpoint_header(bytes);
  EXPECT_EQ(h.payload_base % 64, 0u);
  EXPECT_GE(h.payload_base, 8 + header_len(bytes));
  for (const auto &t : h.manifest)
    EXPECT_EQ(t.at("byte_offset").get<std::size_t>() % 64, 0u);
  const auto j = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len(bytes)));
  EXPECT_EQ(j.at("magic"), "PARC2");
  EXPECT_EQ(j.at("format_version"), 1);
}

TEST(Checkpoint, TruncatedFileRejected) {
  auto bytes = serialize_checkpoint(small_model(4));
  bytes.resize(bytes.size() - 100);
  try {
    (void)deserialize_checkpoint<float>(bytes);
    FAIL();
  } catch (const CheckpointError &e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }
  bytes.resize(4);
  EXPECT_THROW(deserialize_checkpoint<float>(bytes), CheckpointError);
}

TEST(Checkpoint, BadMagicRejected) {
  auto bytes = serialize_checkpoint(small_model(5));
  const auto pos = std::string(bytes.begin(), bytes.end()).find("PARC2");
  ASSERT_NE(pos, std::string::npos);
  bytes[pos + 4] = 'X';
  EXPECT_THROW(deserialize_checkpoint<float>(bytes), CheckpointError);
}

TEST(Checkpoint, PrecisionMismatchRejected) {
  EXPECT_THROW(deserialize_checkpoint<double>(serialize_checkpoint(small_model(6))), CheckpointError);
}

TEST(Checkpoint, ConfigMismatchNamesTensor) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "parc2_ckpt_mismatch.bin").string();
  checkpoint_save(small_model(7), path);
  auto other = ModelConfig::named("XT", 64);
  other.channels[2] = 200;
  try {
    (void)checkpoint_load<float>(path, other);
    FAIL();
  } catch (const CheckpointError &e) {
    EXPECT_NE(std::string(e.what()).find("stages.2"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(checkpoint_load<float>(path, ModelConfig::named("XT", 64)));
  std::filesystem::remove(path);
}

TEST(Checkpoint, ResizedModelRoundTrips) {
  const auto m = adapt_to_resolution(small_model(8), 96, 96);
  const auto back = deserialize_checkpoint<float>(serialize_checkpoint(m));
  EXPECT_EQ(back.config.input_h, 96u);
  EXPECT_EQ(back.stages[0].blocks[0].spatial.oversized.k_h, m.stages[0].blocks[0].spatial.oversized.k_h);
}

TEST(Checkpoint, MissingFileThrows) {
  EXPECT_THROW(read_file("/nonexistent/parc2.bin"), CheckpointError);
}

} // namespace
} // namespace parc2
