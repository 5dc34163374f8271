#include <gtest/gtest.h>

#include <filesystem>

#include "dgec/io.hpp"

using namespace dgec;

namespace {
const std::filesystem::path kFixtures = DGEC_FIXTURE_DIR;
}

TEST(Cim1, MatchesGoldenBytes) {
  ComplexImage img(2, 3);
  for (std::size_t k = 0; k < 6; ++k) img.data[static_cast<Eigen::Index>(k)] = cplx(0.5 * k, -0.25 * k);
  EXPECT_EQ(encode_cim1(img), read_bytes(kFixtures / "golden_2x3.cim"));
  const ComplexImage back = load_cim1(kFixtures / "golden_2x3.cim");
  EXPECT_EQ(back.height, 2u);
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ((back.data - img.data).norm(), 0.0);
}

TEST(Cim1, RoundTripRoundsToFloat32) {
  ComplexImage img(4, 4);
  img.data.setConstant(cplx(1.0 / 3.0, 2.0));
  const ComplexImage back = decode_cim1(encode_cim1(img));
  EXPECT_NEAR(back.data[0].real(), 1.0 / 3.0, 1e-7);
  EXPECT_EQ(back.data[0].real(), static_cast<double>(static_cast<float>(1.0 / 3.0)));
}

TEST(Cim1, RejectsCorruptInput) {
  std::vector<std::uint8_t> bytes = read_bytes(kFixtures / "golden_2x3.cim");
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_cim1(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_cim1(truncated), FormatError);
  EXPECT_THROW(decode_cim1(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10)), FormatError);
  EXPECT_THROW(read_bytes(kFixtures / "missing.cim"), FormatError);
}

TEST(Msk1, MatchesGoldenBytes) {
  SamplingMask m;
  m.height = 4;
  m.width = 5;
  m.kind = MaskKind::kLine2d;
  m.acceleration = {5, 2};
  m.sampled.assign(20, 0);
  for (std::size_t i : {0, 3, 7, 8, 12, 19}) m.sampled[i] = 1;
  EXPECT_EQ(encode_msk1(m), read_bytes(kFixtures / "golden_4x5.msk"));
  const SamplingMask back = load_msk1(kFixtures / "golden_4x5.msk");
  EXPECT_EQ(back.sampled, m.sampled);
  EXPECT_EQ(back.kind, MaskKind::kLine2d);
  EXPECT_EQ(back.acceleration.num, 5u);
  EXPECT_EQ(back.acceleration.den, 2u);
}

TEST(Msk1, RejectsBadKindAndLength) {
  std::vector<std::uint8_t> bytes = read_bytes(kFixtures / "golden_4x5.msk");
  auto bad_kind = bytes;
  bad_kind[12] = 9;
  EXPECT_THROW(decode_msk1(bad_kind), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_msk1(extra), FormatError);
}
