/* Copyright 2026 The TAGL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "tagl/io.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "support.h"
#include "tagl/error.h"

namespace tagl {
namespace {

namespace fs = std::filesystem;
using testing::Gen;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("tagl_io_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void Spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

std::uint64_t OffsetOf(std::span<const std::uint8_t> bytes) {
  try {
    decode_ngrid(bytes);
  } catch (const ParseError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no parse error";
  return ~0ull;
}

TEST(NgridTest, HeaderLayoutOfSmallFloatGrid) {
  const Grid<float> g(GridShape(2, 2), 1, std::vector<float>{1.0f, -2.0f, 0.5f, 3.0f});
  const std::vector<std::uint8_t> b = encode_ngrid(g);
  ASSERT_EQ(b.size(), 21u + 16u);
  EXPECT_EQ(std::memcmp(b.data(), "NGRD", 4), 0);
  const std::uint8_t expect_header[17] = {1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_EQ(std::memcmp(b.data() + 4, expect_header, 17), 0);
  float second;
  std::memcpy(&second, b.data() + 25, 4);
  EXPECT_EQ(second, -2.0f);
}

TEST(NgridTest, RandomRoundTrips) {
  Gen gen(71);
  for (int trial = 0; trial < 200; ++trial) {
    const GridShape s = gen.shape(1, 9);
    const std::size_t ch = 1 + gen.index(4);
    if (trial % 2) {
      std::vector<float> v(s.pixels() * ch);
      for (float& x : v) x = static_cast<float>(gen.normal(100.0));
      const Grid<float> g(s, ch, v);
      const NgridGrid back = decode_ngrid(encode_ngrid(g));
      EXPECT_EQ(std::get<Grid<float>>(back), g);
    } else {
      std::vector<std::uint8_t> v(s.pixels() * ch);
      for (auto& x : v) x = static_cast<std::uint8_t>(gen.index(256));
      const Grid<std::uint8_t> g(s, ch, v);
      EXPECT_EQ(std::get<Grid<std::uint8_t>>(decode_ngrid(encode_ngrid(g))), g);
    }
  }
}

TEST(NgridTest, CorruptHeadersReportOffsets) {
  const Grid<float> g(GridShape(3, 2), 2, 0.25f);
  const std::vector<std::uint8_t> good = encode_ngrid(g);
  auto with = [&](std::size_t at, std::uint8_t v) {
    std::vector<std::uint8_t> b = good;
    b[at] = v;
    return b;
  };
  EXPECT_EQ(OffsetOf(with(0, 'X')), 0u);
  EXPECT_EQ(OffsetOf(with(4, 2)), 4u);
  std::vector<std::uint8_t> h0 = good;
  std::memset(h0.data() + 8, 0, 4);
  EXPECT_EQ(OffsetOf(h0), 8u);
  std::vector<std::uint8_t> w0 = good;
  std::memset(w0.data() + 12, 0, 4);
  EXPECT_EQ(OffsetOf(w0), 12u);
  std::vector<std::uint8_t> c0 = good;
  std::memset(c0.data() + 16, 0, 4);
  EXPECT_EQ(OffsetOf(c0), 16u);
  EXPECT_EQ(OffsetOf(with(20, 7)), 20u);
  const std::vector<std::uint8_t> short_header(good.begin(), good.begin() + 10);
  EXPECT_EQ(OffsetOf(short_header), 10u);
  const std::vector<std::uint8_t> short_payload(good.begin(), good.end() - 3);
  EXPECT_EQ(OffsetOf(short_payload), short_payload.size());
  std::vector<std::uint8_t> trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(OffsetOf(trailing), good.size());
}

TEST(NgridTest, TypedReadersCheckInvariants) {
  TempDir dir;
  const fs::path p = dir.path() / "g.ngrid";
  write_ngrid(p, Grid<float>(GridShape(1, 3), 1, std::vector<float>{0.1f, 1.5f, 0.2f}));
  EXPECT_NO_THROW(read_image(p));
  try {
    read_prob_map(p);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 21u + 4u);
  }
  EXPECT_THROW(read_label_map(p), ParseError);
  write_ngrid(p, Grid<std::uint8_t>(GridShape(1, 2), 1, std::vector<std::uint8_t>{3, 11}));
  EXPECT_THROW(read_label_map(p), ParseError);
  EXPECT_NO_THROW(read_label_map(p, 12));
  EXPECT_THROW(read_atlas(p), ParseError);
  EXPECT_THROW(read_image(dir.path() / "missing.ngrid"), IoError);
}

TEST(NgridTest, TypedRoundTrips) {
  TempDir dir;
  Gen gen(72);
  const GridShape s(4, 14);
  const ProbMap m(s, [&] {
    std::vector<double> v(s.pixels());
    for (double& x : v) x = static_cast<float>(gen.uniform());
    return v;
  }());
  write_prob_map(dir.path() / "p.ngrid", m);
  EXPECT_EQ(read_prob_map(dir.path() / "p.ngrid"), m);
  const LabelMap l = gen.labels(s, 11);
  write_label_map(dir.path() / "l.ngrid", l);
  EXPECT_EQ(read_label_map(dir.path() / "l.ngrid"), l);
  for (Level level : {Level::kBG, Level::kSG}) {
    const TerritoryAtlas a = testing::band_atlas(s, level);
    write_atlas(dir.path() / "a.ngrid", a);
    EXPECT_EQ(read_atlas(dir.path() / "a.ngrid"), a);
  }
}

Dataset SmallDataset() {
  PhantomConfig cfg;
  cfg.shape = GridShape(32, 32);
  cfg.seed = 5;
  cfg.lesion_rate = 0.5;
  return generate_dataset(cfg, 2, 1, 1);
}

TEST(DatasetIoTest, RoundTrip) {
  TempDir dir;
  const Dataset ds = SmallDataset();
  const fs::path manifest = write_dataset(dir.path(), ds);
  const LoadedDataset back = read_dataset(dir.path());
  ASSERT_EQ(back.train.size(), 2u);
  ASSERT_EQ(back.split("test").size(), 1u);
  EXPECT_EQ(back.phantom.seed, 5u);
  const PairedCase& a = ds.train[1];
  const PairedCase& b = back.train[1];
  EXPECT_EQ(a.case_id, b.case_id);
  EXPECT_EQ(a.truth_involved, b.truth_involved);
  EXPECT_EQ(a.sg.labels, b.sg.labels);
  EXPECT_EQ(*a.bg.atlas, *b.bg.atlas);
  for (std::size_t i = 0; i < a.bg.image.pixels(); ++i) {
    EXPECT_EQ(static_cast<float>(a.bg.image[i]), b.bg.image[i]);
  }
  EXPECT_THROW(back.split("holdout"), ValidationError);

  // Writing twice gives identical bytes.
  TempDir other;
  write_dataset(other.path(), ds);
  EXPECT_EQ(Slurp(manifest), Slurp(other.path() / "manifest.json"));
  EXPECT_EQ(Slurp(dir.path() / "cases" / (a.case_id + "_bg_image.ngrid")),
            Slurp(other.path() / "cases" / (a.case_id + "_bg_image.ngrid")));
}

class ManifestCorruption : public ::testing::Test {
 protected:
  void SetUp() override {
    write_dataset(dir_.path(), SmallDataset());
    text_ = Slurp(dir_.path() / "manifest.json");
  }
  void Replace(const std::string& from, const std::string& to) {
    const auto at = text_.find(from);
    ASSERT_NE(at, std::string::npos) << from;
    text_.replace(at, from.size(), to);
    Spit(dir_.path() / "manifest.json", text_);
  }
  TempDir dir_;
  std::string text_;
};

TEST_F(ManifestCorruption, WrongFormat) {
  Replace("\"tagl-dataset\"", "\"other\"");
  EXPECT_THROW(read_dataset(dir_.path()), ValidationError);
}

TEST_F(ManifestCorruption, WrongVersion) {
  Replace("\"version\": 1", "\"version\": 9");
  EXPECT_THROW(read_dataset(dir_.path()), ValidationError);
}

TEST_F(ManifestCorruption, DanglingPath) {
  Replace("_bg_image.ngrid", "_bg_gone.ngrid");
  EXPECT_THROW(read_dataset(dir_.path()), ValidationError);
}

TEST_F(ManifestCorruption, DuplicateId) {
  Replace("\"case_id\": \"" + case_id_for(1) + "\"", "\"case_id\": \"" + case_id_for(0) + "\"");
  EXPECT_THROW(read_dataset(dir_.path()), ValidationError);
}

TEST_F(ManifestCorruption, UnknownSplit) {
  Replace("\"split\": \"val\"", "\"split\": \"dev\"");
  EXPECT_THROW(read_dataset(dir_.path()), ValidationError);
}

TEST_F(ManifestCorruption, LevelMismatch) {
  Replace("\"atlas\": \"atlas_sg.ngrid\"", "\"atlas\": \"atlas_bg.ngrid\"");
  EXPECT_THROW(read_dataset(dir_.path()), ValidationError);
}

TEST_F(ManifestCorruption, SyntaxError) {
  Spit(dir_.path() / "manifest.json", text_.substr(0, text_.size() / 2));
  EXPECT_THROW(read_dataset(dir_.path()), ParseError);
}

TEST(CheckpointTest, RoundTripExact) {
  TempDir dir;
  Gen gen(73);
  CheckpointRecord r;
  r.epoch = 7;
  r.val_mean_dice = 0.123456789012345;
  r.val_consistency = 0.9;
  for (double& w : r.head.mutable_weights()) w = gen.normal();
  write_checkpoint(dir.path() / "ck", r, "{\"k\":1}");
  EXPECT_TRUE(fs::exists(dir.path() / "ck.ngrid"));
  const CheckpointRecord back = read_checkpoint(dir.path() / "ck.json");
  EXPECT_EQ(back.epoch, 7);
  EXPECT_EQ(back.val_mean_dice, r.val_mean_dice);
  EXPECT_EQ(back.head, r.head);
  // A weight grid that disagrees with the metadata is rejected.
  write_ngrid(dir.path() / "ck.ngrid",
              Grid<float>(GridShape(kFeatureCount, kAspectsClasses), 1, 0.0f));
  EXPECT_THROW(read_checkpoint(dir.path() / "ck.json"), ParseError);
}

TEST(ReportTest, FixedDecimals) {
  EXPECT_EQ(format_fixed(0.767), "0.767000");
  EXPECT_EQ(format_fixed(-0.0), "0.000000");
  EXPECT_EQ(format_fixed(-1e-9), "0.000000");
  EXPECT_EQ(format_fixed(1.0 / 3.0), "0.333333");
}

TEST(ReportTest, EmptyAblationTableIsHeaderOnly) {
  EXPECT_EQ(format_report(std::span<const AblationRow>(), ReportFormat::kCsv),
            "config,seed,test_mean_dice,test_mean_iou,test_consistency,aspects_mae,"
            "best_epoch,val_mean_dice\n");
}

TEST(ReportTest, AblationRowsAndDeterminism) {
  const std::vector<AblationRow> rows{{"ce_only", 1, 0.5, 0.25, 0.75, 1.5, 3, 0.6}};
  const std::string csv = format_report(std::span<const AblationRow>(rows), ReportFormat::kCsv);
  EXPECT_NE(csv.find("ce_only,1,0.500000,0.250000,0.750000,1.500000,3,0.600000\n"),
            std::string::npos);
  EXPECT_EQ(csv, format_report(std::span<const AblationRow>(rows), ReportFormat::kCsv));
}

TEST(ReportTest, EvalReportFormats) {
  EvalReport r;
  r.per_class_dice.assign(kAspectsClasses, 1.0);
  r.per_class_iou.assign(kAspectsClasses, 0.5);
  r.mean_dice = 1.0;
  r.mean_iou = 0.5;
  r.consistency = 0.767;
  const std::string json = format_report(r, ReportFormat::kJson);
  EXPECT_NE(json.find("\"consistency\":0.767000"), std::string::npos);
  EXPECT_NE(json.find("\"M6\":0.500000"), std::string::npos);
  const std::string csv = format_report(r, ReportFormat::kCsv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')).find("mean_dice,mean_iou,consistency,dice_background"),
            0u);
  TempDir dir;
  write_report(r, dir.path() / "a.csv", ReportFormat::kCsv);
  write_report(r, dir.path() / "b.csv", ReportFormat::kCsv);
  EXPECT_EQ(Slurp(dir.path() / "a.csv"), Slurp(dir.path() / "b.csv"));
  // A regular file where a directory is expected.
  EXPECT_THROW(write_text(dir.path() / "a.csv" / "x.csv", csv), IoError);
}

TEST(ReportTest, AspectsReport) {
  AspectsResult r;
  r.involved = {5, 8};
  r.score = 8;
  r.per_territory_fraction[4] = 0.75;
  const std::string csv = format_report(r, ReportFormat::kCsv);
  EXPECT_NE(csv.find("\n8,M1;M4,"), std::string::npos);
  EXPECT_NE(format_report(r, ReportFormat::kJson).find("\"M1\":0.750000"), std::string::npos);
}

TEST(ReportTest, ClassNames) {
  EXPECT_EQ(class_name(0), "background");
  EXPECT_EQ(class_name(3), "IC");
  EXPECT_EQ(class_name(10), "M6");
}

}  // namespace
}  // namespace tagl
