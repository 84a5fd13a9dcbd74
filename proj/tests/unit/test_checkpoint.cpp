#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "bytet5/checkpoint.hpp"
#include "bytet5/error.hpp"

using namespace bytet5;
using namespace bytet5::checkpoint;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config = model::preset("tiny");
  c.params = model::init_parameters(c.config, 21);
  Rng rng(5);
  rng.next_u64();
  c.rng_state = rng.serialize();
  return c;
}

std::string serialized(const Checkpoint& c) {
  std::ostringstream out;
  write(out, c);
  return out.str();
}

}  // namespace

TEST(Checkpoint, StreamRoundTripIsBitwise) {
  const Checkpoint c = sample_checkpoint();
  const std::string bytes = serialized(c);
  std::istringstream in(bytes);
  const Checkpoint back = read(in);
  EXPECT_EQ(back.config, c.config);
  EXPECT_EQ(back.params, c.params);
  EXPECT_EQ(back.rng_state, c.rng_state);
  EXPECT_EQ(serialized(back), bytes);
}

TEST(Checkpoint, HeaderLayout) {
  const std::string bytes = serialized(sample_checkpoint());
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(bytes.substr(0, 8), std::string("BT5CKPT\0", 8));
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));
}

TEST(Checkpoint, RestoredRngContinuesStream) {
  Rng rng(5);
  rng.next_u64();
  Rng restored;
  restored.deserialize(sample_checkpoint().rng_state);
  EXPECT_EQ(restored.next_u64(), rng.next_u64());
}

TEST(Checkpoint, RejectsBadMagicVersionAndTruncation) {
  const std::string bytes = serialized(sample_checkpoint());
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream a(bad_magic);
  EXPECT_THROW(read(a), StructureError);

  std::string bad_version = bytes;
  bad_version[8] = 9;
  std::istringstream b(bad_version);
  EXPECT_THROW(read(b), StructureError);

  std::istringstream c(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read(c), StructureError);
}

TEST(Checkpoint, RejectsShapeMismatchWithConfig) {
  Checkpoint c = sample_checkpoint();
  c.params = model::init_parameters(model::preset("desk"), 1);
  const std::string bytes = serialized(c);
  std::istringstream in(bytes);
  EXPECT_THROW(read(in), StructureError);
}

TEST(Checkpoint, FileSaveLoad) {
  const auto path = std::filesystem::temp_directory_path() / "bytet5_checkpoint_test.bin";
  const Checkpoint c = sample_checkpoint();
  save(path, c);
  EXPECT_EQ(load(path).params, c.params);
  std::filesystem::remove(path);
  EXPECT_THROW(load(path), IoError);
}
