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
#include "tagl/phantom.h"

#include <algorithm>

#include <gtest/gtest.h>

#include "tagl/error.h"

namespace tagl {
namespace {

bool Has(const PairedCase& pc, int id) {
  return std::find(pc.truth_involved.begin(), pc.truth_involved.end(), id) !=
         pc.truth_involved.end();
}

PhantomConfig Small(std::uint64_t seed = 0) {
  PhantomConfig cfg;
  cfg.shape = GridShape(32, 32);
  cfg.seed = seed;
  return cfg;
}

TEST(BuildAtlasTest, DefaultBgLevel) {
  const AtlasBuild a = build_atlas(GridShape(128, 128), Level::kBG);
  EXPECT_EQ(a.atlas.masks().size(), 7u);
  std::size_t covered = 0;
  for (const BinaryMask& m : a.atlas.masks()) {
    EXPECT_GE(m.count(), kMinTerritoryPixels);
    for (std::size_t i = 0; i < m.pixels(); ++i) {
      if (m[i]) {
        EXPECT_TRUE(a.brain[i]);
      }
    }
    covered += m.count();
  }
  EXPECT_LT(covered, a.brain.count());
  // Territories sit in the image-left half only.
  for (std::size_t r = 0; r < 128; ++r) {
    for (std::size_t c = 64; c < 128; ++c) EXPECT_EQ(a.atlas.index_map()[r * 128 + c], 0);
  }
}

TEST(BuildAtlasTest, DeterministicAndSymmetricBase) {
  for (Level level : {Level::kBG, Level::kSG}) {
    const AtlasBuild a = build_atlas(GridShape(48, 40), level);
    const AtlasBuild b = build_atlas(GridShape(48, 40), level);
    EXPECT_EQ(a.atlas, b.atlas);
    EXPECT_EQ(a.base_intensity, b.base_intensity);
    EXPECT_EQ(flip_horizontal(a.base_intensity), a.base_intensity);
  }
}

TEST(BuildAtlasTest, TooSmall) {
  EXPECT_THROW(build_atlas(GridShape(16, 64), Level::kBG), GenerationError);
}

TEST(SampleCaseTest, DegenerateRates) {
  PhantomConfig none = Small();
  none.lesion_rate = 0.0;
  PhantomConfig all = Small();
  all.lesion_rate = 1.0;
  all.coupling_rho = 1.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const PairedCase a = sample_case(none, k);
    EXPECT_TRUE(a.truth_involved.empty());
    for (auto v : a.bg.labels.values()) EXPECT_EQ(v, 0);
    for (auto v : a.sg.labels.values()) EXPECT_EQ(v, 0);
    EXPECT_EQ(sample_case(all, k).truth_involved.size(), 10u);
  }
}

TEST(SampleCaseTest, ReproducibleAndOrderIndependent) {
  const PhantomConfig cfg = Small(7);
  const PhantomGenerator gen(cfg);
  const PairedCase late = gen.sample(5);
  for (std::uint64_t k = 0; k < 5; ++k) gen.sample(k);
  const PairedCase again = sample_case(cfg, 5);
  EXPECT_EQ(late.case_id, again.case_id);
  EXPECT_EQ(late.bg.image, again.bg.image);
  EXPECT_EQ(late.sg.labels, again.sg.labels);
  EXPECT_EQ(late.truth_involved, again.truth_involved);
  EXPECT_NE(case_stream_seed(7, 5), case_stream_seed(7, 6));
  EXPECT_NE(case_stream_seed(7, 5), case_stream_seed(8, 5));
}

TEST(SampleCaseTest, LabelsFollowTruthAndAtlas) {
  const PhantomGenerator gen(Small(3));
  for (std::uint64_t k = 0; k < 200; ++k) {
    const PairedCase pc = gen.sample(k);
    EXPECT_NO_THROW(check_label_atlas_consistency(pc));
    for (int id = 1; id <= kTerritoryCount; ++id) {
      const LevelSlice& s = pc.level(territory(id).level);
      const BinaryMask& m = s.atlas->mask(id);
      for (std::size_t i = 0; i < m.pixels(); ++i) {
        if (m[i]) {
          EXPECT_EQ(s.labels[i] == id, Has(pc, id));
        }
      }
    }
  }
}

TEST(SampleCaseTest, InfarctsAreHypodense) {
  PhantomConfig cfg = Small(4);
  cfg.noise_sigma = 0.0;
  cfg.lesion_rate = 1.0;
  const PhantomGenerator gen(cfg);
  const PairedCase pc = gen.sample(0);
  const AtlasBuild base = build_atlas(cfg.shape, Level::kBG);
  for (std::size_t i = 0; i < pc.bg.image.pixels(); ++i) {
    const double expect =
        base.base_intensity[i] - (pc.bg.labels[i] != 0 ? cfg.hypodensity_delta : 0.0);
    // Intensities are kept at f32 precision.
    EXPECT_EQ(pc.bg.image[i], static_cast<double>(static_cast<float>(expect)));
  }
}

TEST(SampleCaseTest, CouplingMonteCarlo) {
  PhantomConfig cfg = Small(11);
  cfg.noise_sigma = 0.0;
  const PhantomGenerator gen(cfg);
  std::size_t given = 0, both = 0;
  for (std::uint64_t k = 0; k < 10000; ++k) {
    const PairedCase pc = gen.sample(k);
    for (int m = 5; m <= 7; ++m) {
      if (!Has(pc, m)) continue;
      ++given;
      both += Has(pc, m + 3);
    }
  }
  const double p = static_cast<double>(both) / static_cast<double>(given);
  EXPECT_NEAR(p, 0.8 + 0.25 * 0.2, 0.02);
}

TEST(SampleCaseTest, NoCouplingMeansIndependence) {
  PhantomConfig cfg = Small(12);
  cfg.coupling_rho = 0.0;
  cfg.noise_sigma = 0.0;
  const PhantomGenerator gen(cfg);
  // 2x2 contingency table for each (Mk, Mk+3) pair.
  double n[3][2][2] = {};
  const std::size_t cases = 10000;
  for (std::uint64_t k = 0; k < cases; ++k) {
    const PairedCase pc = gen.sample(k);
    for (int m = 0; m < 3; ++m) n[m][Has(pc, 5 + m)][Has(pc, 8 + m)] += 1.0;
  }
  for (int m = 0; m < 3; ++m) {
    double chi2 = 0.0;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double row = n[m][a][0] + n[m][a][1];
        const double col = n[m][0][b] + n[m][1][b];
        const double e = row * col / static_cast<double>(cases);
        chi2 += (n[m][a][b] - e) * (n[m][a][b] - e) / e;
      }
    }
    // Critical value of chi-square with one degree of freedom at 0.01.
    EXPECT_LT(chi2, 6.635) << "pair " << m;
  }
}

TEST(AugmentTest, IdentityAndInvolution) {
  const PairedCase pc = sample_case(Small(5), 2);
  const PairedCase same = augment(pc, false, 0.0);
  EXPECT_EQ(same.bg.image, pc.bg.image);
  EXPECT_EQ(same.sg.labels, pc.sg.labels);
  const PairedCase twice = augment(augment(pc, true, 0.0), true, 0.0);
  EXPECT_EQ(twice.bg.image, pc.bg.image);
  EXPECT_EQ(twice.bg.labels, pc.bg.labels);
  EXPECT_EQ(*twice.sg.atlas, *pc.sg.atlas);
}

TEST(AugmentTest, FlipKeepsConsistencyAndTruth) {
  const PairedCase pc = sample_case(Small(6), 3);
  const PairedCase f = augment(pc, true, 0.03);
  EXPECT_NO_THROW(check_label_atlas_consistency(f));
  EXPECT_EQ(f.truth_involved, pc.truth_involved);
  EXPECT_NEAR(f.bg.image.at(0, 31), pc.bg.image.at(0, 0) + 0.03, 1e-12);
  EXPECT_THROW(augment(pc, false, 0.06), ValidationError);
}

TEST(DatasetTest, SplitsAreConsecutive) {
  const Dataset ds = generate_dataset(Small(9), 3, 2, 2);
  ASSERT_EQ(ds.train.size(), 3u);
  EXPECT_EQ(ds.val[0].case_id, sample_case(Small(9), 3).case_id);
  EXPECT_EQ(ds.test[1].bg.image, sample_case(Small(9), 6).bg.image);
  const Dataset threaded = generate_dataset(Small(9), 3, 2, 2, 3);
  EXPECT_EQ(threaded.test[1].bg.image, ds.test[1].bg.image);
}

TEST(PhantomConfigTest, Validation) {
  PhantomConfig cfg;
  cfg.lesion_rate = 1.5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = PhantomConfig{};
  cfg.noise_sigma = -1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

}  // namespace
}  // namespace tagl
