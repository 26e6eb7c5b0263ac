// Copyright 2026 The pholid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstring>

#include "gradcheck.hpp"
#include "pholid/error.hpp"
#include "pholid/feature_io.hpp"
#include "tempdir.hpp"

namespace pholid {
namespace {

using testing::ReadFile;
using testing::TempDir;
using testing::WriteFile;

Matrix Float32Exact(Rng& rng, Eigen::Index n, Eigen::Index f) {
  Matrix m = testing::RandomMatrix(n, f, rng);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(m.data()[i]);
  return m;
}

TEST(FeatureFile, RoundTripIsBitExact) {
  TempDir dir;
  Rng rng(1);
  const Matrix m = Float32Exact(rng, 13, 5);
  WriteFeatureFile(dir / "a.phof", m);
  EXPECT_EQ(ReadFeatureFile(dir / "a.phof"), m);
  EXPECT_EQ(ReadFeatureHeader(dir / "a.phof"), (std::pair<std::size_t, std::size_t>{13, 5}));
}

TEST(FeatureFile, LayoutMatchesSpec) {
  TempDir dir;
  Matrix m(2, 2);
  m << 1, 2, 3, -0.5;
  WriteFeatureFile(dir / "x.phof", m);
  const std::string b = ReadFile(dir / "x.phof");
  ASSERT_EQ(b.size(), 16u + 16u);
  EXPECT_EQ(b.substr(0, 4), "PHOF");
  auto u32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[off + i]);
    return v;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), 2u);
  EXPECT_EQ(u32(12), 2u);
  // Row-major payload: the second float is m(0, 1) = 2.0f = 0x40000000.
  EXPECT_EQ(u32(20), 0x40000000u);
  EXPECT_EQ(u32(28), 0xbf000000u);  // -0.5f
}

TEST(FeatureFile, RejectsCorruption) {
  TempDir dir;
  Rng rng(2);
  WriteFeatureFile(dir / "ok.phof", Float32Exact(rng, 4, 3));
  const std::string good = ReadFile(dir / "ok.phof");
  WriteFile(dir / "short.phof", good.substr(0, good.size() - 1));
  EXPECT_THROW(ReadFeatureFile(dir / "short.phof"), Error);
  WriteFile(dir / "long.phof", good + "x");
  EXPECT_THROW(ReadFeatureFile(dir / "long.phof"), Error);
  std::string magic = good;
  magic[0] = 'X';
  WriteFile(dir / "magic.phof", magic);
  EXPECT_THROW(ReadFeatureFile(dir / "magic.phof"), Error);
  std::string version = good;
  version[4] = 9;
  WriteFile(dir / "version.phof", version);
  EXPECT_THROW(ReadFeatureFile(dir / "version.phof"), Error);
  std::string nan = good;
  const float qnan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(&nan[16], &qnan, 4);
  WriteFile(dir / "nan.phof", nan);
  EXPECT_THROW(ReadFeatureFile(dir / "nan.phof"), Error);
  EXPECT_THROW(ReadFeatureFile(dir / "missing.phof"), Error);
}

TEST(Npy, ReadsFloat32AndFloat64) {
  TempDir dir;
  auto npy = [&](const std::string& descr, const std::string& payload, std::size_t rows, std::size_t cols) {
    std::string header = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': (" +
                         std::to_string(rows) + ", " + std::to_string(cols) + "), }";
    while ((10 + header.size() + 1) % 64 != 0) header += ' ';
    header += '\n';
    std::string out = "\x93NUMPY";
    out += '\x01';
    out += '\x00';
    out += static_cast<char>(header.size() & 0xff);
    out += static_cast<char>(header.size() >> 8);
    return out + header + payload;
  };
  const float f32[] = {1.5f, -2.0f, 3.25f, 0.0f, 8.0f, 9.5f};
  WriteFile(dir / "a.npy", npy("<f4", std::string(reinterpret_cast<const char*>(f32), sizeof f32), 3, 2));
  Matrix expect(3, 2);
  expect << 1.5, -2, 3.25, 0, 8, 9.5;
  EXPECT_EQ(ReadNpy(dir / "a.npy"), expect);
  const double f64[] = {1.5, -2, 3.25, 0, 8, 9.5};
  WriteFile(dir / "b.npy", npy("<f8", std::string(reinterpret_cast<const char*>(f64), sizeof f64), 2, 3));
  EXPECT_EQ(ReadNpy(dir / "b.npy").row(1), RowVector(expect.reshaped<Eigen::RowMajor>().tail(3).transpose()));
  WriteFile(dir / "c.npy", npy("<i4", std::string(24, '\0'), 3, 2));
  EXPECT_THROW(ReadNpy(dir / "c.npy"), Error);
}

TEST(LabelMap, FirstAppearanceAndFileRoundTrip) {
  TempDir dir;
  LabelMap m;
  EXPECT_EQ(m.Intern("ar"), 0);
  EXPECT_EQ(m.Intern("zh"), 1);
  EXPECT_EQ(m.Intern("ar"), 0);
  EXPECT_EQ(m.size(), 2u);
  WriteLabelMap(dir / "labels.tsv", m);
  EXPECT_EQ(ReadLabelMap(dir / "labels.tsv"), m);
  WriteFile(dir / "gap.tsv", "a\t0\nb\t2\n");
  EXPECT_THROW(ReadLabelMap(dir / "gap.tsv"), Error);
  WriteFile(dir / "dup.tsv", "a\t0\nb\t0\n");
  EXPECT_THROW(ReadLabelMap(dir / "dup.tsv"), Error);
}

class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(5);
    for (const char* name : {"u1", "u2", "u3"}) {
      WriteFeatureFile(dir_ / (std::string(name) + ".phof"), Float32Exact(rng, 45, 4));
    }
  }
  TempDir dir_;
};

TEST_F(ManifestTest, FirstAppearanceOrder) {
  WriteFile(dir_ / "m.tsv", "u1.phof\tar\t45\nu2.phof\tzh\t45\nu3.phof\tar\t45\n");
  const auto m = LoadManifest(dir_ / "m.tsv");
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.n_classes(), 2u);
  EXPECT_EQ(*m.label_map.Find("ar"), 0);
  EXPECT_EQ(*m.label_map.Find("zh"), 1);
  EXPECT_EQ(m.entries[1].utterance_id(), "u2");
  EXPECT_EQ(m.entries[0].feature_path, dir_ / "u1.phof");
  const auto counts = m.ClassCounts();
  EXPECT_EQ(counts[0] + counts[1], m.entries.size());
}

TEST_F(ManifestTest, ExplicitMap) {
  WriteFile(dir_ / "m.tsv", "u1.phof\tar\t45\nu2.phof\tzh\t45\n");
  const LabelMap map({"zh", "ar"});
  EXPECT_EQ(*LoadManifest(dir_ / "m.tsv", map).label_map.Find("ar"), 1);
  EXPECT_THROW(LoadManifest(dir_ / "m.tsv", LabelMap({"ar"})), Error);
}

TEST_F(ManifestTest, Errors) {
  WriteFile(dir_ / "empty.tsv", "");
  EXPECT_THROW(LoadManifest(dir_ / "empty.tsv"), Error);
  WriteFile(dir_ / "bad.tsv", "u1.phof\tar\t45\nu2.phof\tzh\n");
  try {
    LoadManifest(dir_ / "bad.tsv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST_F(ManifestTest, LoadSegmentedChecksFrameCounts) {
  WriteFile(dir_ / "m.tsv", "u1.phof\tar\t45\nu2.phof\tzh\t45\n");
  const auto utts = LoadSegmented(LoadManifest(dir_ / "m.tsv"), 20);
  ASSERT_EQ(utts.size(), 2u);
  EXPECT_EQ(utts[1].label, 1);
  EXPECT_EQ(utts[1].n_segments, 2u);
  EXPECT_EQ(utts[0].utterance_id, "u1");
  WriteFile(dir_ / "wrong.tsv", "u1.phof\tar\t44\n");
  EXPECT_THROW(LoadSegmented(LoadManifest(dir_ / "wrong.tsv"), 20), Error);
}

TEST_F(ManifestTest, WriteRoundTrip) {
  WriteFile(dir_ / "m.tsv", "u1.phof\tar\t45\nu2.phof\tzh\t45\n");
  const auto m = LoadManifest(dir_ / "m.tsv");
  WriteManifest(dir_ / "m2.tsv", m);
  const auto again = LoadManifest(dir_ / "m2.tsv");
  EXPECT_EQ(ReadFile(dir_ / "m2.tsv"), ReadFile(dir_ / "m.tsv"));
  EXPECT_EQ(again.label_map, m.label_map);
}

}  // namespace
}  // namespace pholid
