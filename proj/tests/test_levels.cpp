#include <gtest/gtest.h>

#include <random>

#include "openchk/digest.hpp"
#include "openchk/levels.hpp"
#include "test_util.hpp"

using namespace openchk;

namespace {

struct Staged {
  Layout layout;
  std::vector<Bytes> payloads;
};

// Writes one payload per rank at (level, epoch) and applies `scheme` for every rank.
Staged stage(const fs::path& root, const Scheme& scheme, int world, std::mt19937_64& rng, std::size_t max_len,
             int level = 3, std::uint64_t epoch = 1) {
  Staged s{Layout{root}, {}};
  FsSink sink;
  for (int r = 0; r < world; ++r) {
    s.payloads.push_back(testutil::random_bytes(rng, 1 + rng() % max_len));
    sink.write(s.layout.payload(level, epoch, r), s.payloads.back(), ArtifactRole::Payload);
  }
  for (int r = 0; r < world; ++r) apply_scheme(scheme, r, world, epoch, level, s.layout, sink, s.payloads[static_cast<std::size_t>(r)]);
  return s;
}

}  // namespace

TEST(Profiles, LevelMaps) {
  EXPECT_EQ(map_level(make_profile("fti-like"), 4).tag, SchemeTag::Global);
  EXPECT_EQ(map_level(make_profile("fti-like"), 2).tag, SchemeTag::Partner);
  EXPECT_EQ(map_level(make_profile("veloc-like"), 1).tag, SchemeTag::Local);
  EXPECT_EQ(map_level(make_profile("scr-like"), 3).tag, SchemeTag::Xor);
  EXPECT_THROW(map_level(make_profile("scr-like"), 4), LevelError);
  EXPECT_THROW(map_level(make_profile("fti-like"), 0), LevelError);
  EXPECT_THROW(make_profile("mystery"), ConfigError);
  for (auto name : profile_names()) {
    const auto p = make_profile(name);
    for (int l = 1; l <= p.level_count(); ++l) EXPECT_NO_THROW(map_level(p, l));
    EXPECT_THROW(map_level(p, p.level_count() + 1), LevelError);
  }
}

TEST(Profiles, GroupSizes) {
  EXPECT_EQ(default_group_size(4), 4);
  EXPECT_EQ(default_group_size(6), 3);
  EXPECT_EQ(default_group_size(8), 4);
  EXPECT_EQ(default_group_size(5), 5);
  EXPECT_EQ(default_group_size(1), 0);
  EXPECT_THROW(validate_scheme({SchemeTag::Xor, 1, 3}, 4), SchemeError);
  EXPECT_THROW(validate_scheme({SchemeTag::Xor, 1, 1}, 4), SchemeError);
  EXPECT_NO_THROW(validate_scheme({SchemeTag::Xor, 1, 2}, 4));
}

TEST(Schemes, PartnerRingPlacement) {
  testutil::TempDir dir;
  std::mt19937_64 rng(1);
  const Scheme partner{SchemeTag::Partner, 1};
  const auto s = stage(dir.path(), partner, 4, rng, 64, 2);
  EXPECT_EQ(partner_of(partner, 2, 4), 3);
  EXPECT_EQ(read_file(s.layout.partner_copy(2, 1, 3, 2)), s.payloads[2]);
  EXPECT_EQ(read_file(s.layout.partner_copy(2, 1, 0, 3)), s.payloads[3]);
}

TEST(Schemes, XorParityIsExclusiveOr) {
  testutil::TempDir dir;
  std::mt19937_64 rng(2);
  const Scheme x{SchemeTag::Xor, 1, 4};
  const auto s = stage(dir.path(), x, 4, rng, 300);
  const auto rec = decode_parity(read_file(s.layout.parity(3, 1, 0)));
  EXPECT_EQ(rec.members, (std::vector<int>{0, 1, 2, 3}));
  Bytes acc = rec.parity;
  for (const auto& p : s.payloads) xor_into(acc, p);
  for (auto b : acc) ASSERT_EQ(b, std::byte{0});
}

TEST(Schemes, GlobalCopyMatchesStaged) {
  testutil::TempDir dir;
  std::mt19937_64 rng(3);
  const auto s = stage(dir.path(), {SchemeTag::Global}, 2, rng, 100, 4);
  for (int r = 0; r < 2; ++r)
    EXPECT_EQ(digest_of(read_file(s.layout.global_payload(1, r))), digest_of(s.payloads[static_cast<std::size_t>(r)]));
}

TEST(Schemes, PartnerAreaUnavailable) {
  testutil::TempDir dir;
  const Layout layout{dir.path()};
  // A plain file where the partner area should be.
  FsSink sink;
  sink.write(layout.epoch_dir(2, 1) / "partner", to_bytes("x"), ArtifactRole::Payload);
  EXPECT_THROW(apply_scheme({SchemeTag::Partner, 1}, 0, 2, 1, 2, layout, sink, to_bytes("data")), SchemeError);
}

TEST(Schemes, XorMissingMemberFailsApply) {
  testutil::TempDir dir;
  const Layout layout{dir.path()};
  FsSink sink;
  EXPECT_THROW(apply_scheme({SchemeTag::Xor, 1, 2}, 0, 2, 1, 3, layout, sink, to_bytes("data")), SchemeError);
}

TEST(Recovery, TwoLossesInOneGroupAreUnrecoverable) {
  testutil::TempDir dir;
  std::mt19937_64 rng(4);
  const Scheme x{SchemeTag::Xor, 1, 4};
  const auto s = stage(dir.path(), x, 4, rng, 200);
  simulate_node_loss(s.layout, 1);
  simulate_node_loss(s.layout, 2);
  EXPECT_THROW(recover_scheme(x, 1, 4, 1, 3, s.layout), Unrecoverable);
}

TEST(Recovery, LocalAndGlobalLimits) {
  testutil::TempDir dir;
  const Layout layout{dir.path()};
  EXPECT_THROW(recover_scheme({SchemeTag::Local}, 0, 1, 1, 1, layout), Unrecoverable);
  EXPECT_THROW(recover_scheme({SchemeTag::Global}, 0, 1, 1, 4, layout), Unrecoverable);
  EXPECT_THROW(recover_scheme({SchemeTag::Partner, 1}, 0, 2, 1, 2, layout), Unrecoverable);
}

TEST(Parity, HeaderErrors) {
  EXPECT_THROW(decode_parity(to_bytes("nope\n")), FormatError);
  EXPECT_THROW(decode_parity(to_bytes("xor group 0 members 0 1 lengths 2 3\nab")), FormatError);
  EXPECT_THROW(decode_parity(to_bytes("xor group 0 members x lengths 2\nab")), FormatError);
}

// ---- property: any single lost rank comes back bit-exact -------------------

TEST(Property, XorRecoversAnySingleLoss) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 120; ++trial) {
    testutil::TempDir dir;
    const int world = 2 + static_cast<int>(rng() % 7);
    const int g = default_group_size(world);
    const Scheme x{SchemeTag::Xor, 1, g};
    const auto s = stage(dir.path(), x, world, rng, 4096);
    const int lost = static_cast<int>(rng() % static_cast<std::uint64_t>(world));
    simulate_node_loss(s.layout, lost);
    ASSERT_FALSE(fs::exists(s.layout.payload(3, 1, lost)));
    ASSERT_EQ(recover_scheme(x, lost, world, 1, 3, s.layout), s.payloads[static_cast<std::size_t>(lost)])
        << "world " << world << " lost " << lost;
  }
}

TEST(Property, PartnerRecoversAnySingleLoss) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 60; ++trial) {
    testutil::TempDir dir;
    const int world = 2 + static_cast<int>(rng() % 6);
    const Scheme p{SchemeTag::Partner, 1};
    const auto s = stage(dir.path(), p, world, rng, 2048, 2);
    const int lost = static_cast<int>(rng() % static_cast<std::uint64_t>(world));
    simulate_node_loss(s.layout, lost);
    ASSERT_EQ(recover_scheme(p, lost, world, 1, 2, s.layout), s.payloads[static_cast<std::size_t>(lost)]);
  }
}
