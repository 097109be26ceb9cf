#include <gtest/gtest.h>

#include "openchk/manifest.hpp"

using namespace openchk;

namespace {

CheckpointManifest sample() {
  CheckpointManifest m;
  m.user_id = 7;
  m.epoch = 12;
  m.level = 2;
  m.kind = CheckpointKind::Diff;
  m.base_epoch = 11;
  m.ranks = {{{0, 4, digest_of("t")}, {1, 1024, digest_of("grid0")}}, {{0, 4, digest_of("t")}, {1, 512, digest_of("grid1")}}};
  m.committed = true;
  return m;
}

}  // namespace

TEST(Manifest, TextLayout) {
  const auto text = encode_manifest(sample());
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch 12 id 7 level 2 kind DIFF base 11 ranks 2");
  EXPECT_NE(text.find("\nrank 1 ordinal 1 bytes 512 digest " + digest_of("grid1").hex() + "\n"), std::string::npos);
  CheckpointManifest full = sample();
  full.kind = CheckpointKind::Full;
  full.base_epoch.reset();
  EXPECT_EQ(encode_manifest(full).substr(0, 49), "epoch 12 id 7 level 2 kind FULL base none ranks 2");
}

TEST(Manifest, RoundTrip) {
  const auto m = sample();
  EXPECT_EQ(decode_manifest(encode_manifest(m)), m);
  EXPECT_TRUE(m.complete());
}

TEST(Manifest, CompletenessAndErrors) {
  auto m = sample();
  m.ranks[1].clear();
  EXPECT_FALSE(m.complete());
  EXPECT_THROW(decode_manifest(""), FormatError);
  EXPECT_THROW(decode_manifest("epoch x\n"), FormatError);
  EXPECT_THROW(decode_manifest("epoch 1 id 0 level 1 kind DIFF base none ranks 1\n"), FormatError);
  EXPECT_THROW(decode_manifest("epoch 1 id 0 level 1 kind FULL base none ranks 1\nrank 3 ordinal 0 bytes 1 digest " +
                               digest_of("a").hex() + "\n"),
               FormatError);
}

TEST(Digest, HexRoundTripAndWidth) {
  const auto d = digest_of("abc");
  EXPECT_EQ(d.hex(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(Digest::from_hex(d.hex()), d);
}
