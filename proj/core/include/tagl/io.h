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
#ifndef TAGL_IO_H_
#define TAGL_IO_H_

// File formats: NGRID binary grids, dataset manifests, checkpoints, and
// JSON/CSV reports. Byte layouts and column orders are documented in
// FORMATS.md at the repository root.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tagl/aspects.h"
#include "tagl/grid.h"
#include "tagl/metrics.h"
#include "tagl/phantom.h"
#include "tagl/trainer.h"

namespace tagl {

// ---------------------------------------------------------------------------
// NGRID
//
//   offset  size  field
//   0       4     magic "NGRD"
//   4       4     version (u32 LE) = 1
//   8       4     height (u32 LE)
//   12      4     width (u32 LE)
//   16      4     channels (u32 LE)
//   20      1     dtype: 0 = u8, 1 = f32 (LE IEEE-754)
//   21      ...   payload, channel-outermost row-major, no trailing bytes

inline constexpr std::uint32_t kNgridVersion = 1;
inline constexpr std::size_t kNgridHeaderSize = 21;

enum class NgridDtype : std::uint8_t { kU8 = 0, kF32 = 1 };

using NgridGrid = std::variant<Grid<std::uint8_t>, Grid<float>>;

std::vector<std::uint8_t> encode_ngrid(const Grid<std::uint8_t>& grid);
std::vector<std::uint8_t> encode_ngrid(const Grid<float>& grid);
// Throws ParseError carrying the byte offset of the first bad field.
NgridGrid decode_ngrid(std::span<const std::uint8_t> bytes);

void write_ngrid(const std::filesystem::path& path,
                 const Grid<std::uint8_t>& grid);
void write_ngrid(const std::filesystem::path& path, const Grid<float>& grid);
NgridGrid read_ngrid(const std::filesystem::path& path);

// Typed views. Reals are stored as f32; labels and masks as u8.
void write_image(const std::filesystem::path& path, const Image& image);
void write_prob_map(const std::filesystem::path& path, const ProbMap& map);
void write_label_map(const std::filesystem::path& path, const LabelMap& labels);
void write_atlas(const std::filesystem::path& path, const TerritoryAtlas& atlas);

Image read_image(const std::filesystem::path& path);
ProbMap read_prob_map(const std::filesystem::path& path);
LabelMap read_label_map(const std::filesystem::path& path,
                        std::size_t classes = kAspectsClasses);
// Level follows from the channel count: 7 masks -> BG, 3 -> SG.
TerritoryAtlas read_atlas(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dataset manifest: <dir>/manifest.json plus per-case NGRID files.

inline constexpr int kManifestVersion = 1;

struct LoadedDataset {
  PhantomConfig phantom;
  std::vector<PairedCase> train;
  std::vector<PairedCase> val;
  std::vector<PairedCase> test;

  std::span<const PairedCase> split(std::string_view name) const;
};

// Writes every case and the manifest; returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir,
                                    const Dataset& ds);
// Validates that case ids are unique and every referenced file exists and
// parses. `manifest` may be the manifest file or its directory.
LoadedDataset read_dataset(const std::filesystem::path& manifest);

// ---------------------------------------------------------------------------
// Checkpoints: <stem>.ngrid holds the F x C weights as f32; <stem>.json
// holds metadata and the exact double weights used for evaluation.

void write_checkpoint(const std::filesystem::path& stem,
                      const CheckpointRecord& record,
                      const std::string& config_json = "{}");
CheckpointRecord read_checkpoint(const std::filesystem::path& json_path);

// ---------------------------------------------------------------------------
// Reports. Fields appear in a fixed order and reals use six decimals, so the
// same report always serializes to the same bytes.

enum class ReportFormat { kJson, kCsv };

std::string format_fixed(double value);

std::string format_report(const EvalReport& report, ReportFormat format);
std::string format_report(const AspectsResult& result, ReportFormat format);
std::string format_report(std::span<const AblationRow> rows,
                          ReportFormat format);
std::string format_case_reports(std::span<const CaseEvaluation> cases,
                                ReportFormat format);
std::string format_history(std::span<const EpochRecord> history);

void write_text(const std::filesystem::path& path, const std::string& text);

template <typename Report>
void write_report(const Report& report, const std::filesystem::path& path,
                  ReportFormat format) {
  write_text(path, format_report(report, format));
}

// Class names used as CSV/JSON keys: "background", then territory names.
std::string class_name(std::size_t class_index);

}  // namespace tagl

#endif  // TAGL_IO_H_
