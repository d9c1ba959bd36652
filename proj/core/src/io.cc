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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tagl/error.h"

namespace tagl {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'N', 'G', 'R', 'D'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint32_t checked_dim(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) {
    throw ValidationError(std::string("NGRID ") + what + " exceeds u32");
  }
  return static_cast<std::uint32_t>(v);
}

std::vector<std::uint8_t> encode_header(const GridShape& shape,
                                        std::size_t channels, NgridDtype dtype,
                                        std::size_t payload) {
  std::vector<std::uint8_t> out;
  out.reserve(kNgridHeaderSize + payload);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kNgridVersion);
  put_u32(out, checked_dim(shape.height(), "height"));
  put_u32(out, checked_dim(shape.width(), "width"));
  put_u32(out, checked_dim(channels, "channels"));
  out.push_back(static_cast<std::uint8_t>(dtype));
  return out;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create " + path.parent_path().string() + ": " +
                    ec.message());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

// Wraps a decode failure so that the message names the file.
template <typename Fn>
auto with_path(const fs::path& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

const Grid<std::uint8_t>& expect_u8(const NgridGrid& g) {
  if (const auto* p = std::get_if<Grid<std::uint8_t>>(&g)) return *p;
  throw ParseError("expected dtype 0 (u8)", 20);
}

const Grid<float>& expect_f32(const NgridGrid& g) {
  if (const auto* p = std::get_if<Grid<float>>(&g)) return *p;
  throw ParseError("expected dtype 1 (f32)", 20);
}

void expect_channels(std::size_t got, std::size_t want) {
  if (got != want) {
    throw ParseError("expected " + std::to_string(want) + " channel(s), got " +
                         std::to_string(got),
                     16);
  }
}

std::uint64_t f32_offset(std::size_t i) { return kNgridHeaderSize + 4 * i; }

}  // namespace

// ---------------------------------------------------------------------------
// NGRID

std::vector<std::uint8_t> encode_ngrid(const Grid<std::uint8_t>& grid) {
  auto out = encode_header(grid.shape(), grid.channels(), NgridDtype::kU8,
                           grid.size());
  out.insert(out.end(), grid.values().begin(), grid.values().end());
  return out;
}

std::vector<std::uint8_t> encode_ngrid(const Grid<float>& grid) {
  auto out = encode_header(grid.shape(), grid.channels(), NgridDtype::kF32,
                           4 * grid.size());
  for (float v : grid.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

NgridGrid decode_ngrid(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("bad NGRID magic", 0);
  }
  if (bytes.size() < kNgridHeaderSize) {
    throw ParseError("truncated NGRID header", bytes.size());
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kNgridVersion) {
    throw ParseError("unsupported NGRID version " + std::to_string(version), 4);
  }
  const std::uint32_t h = get_u32(bytes, 8);
  const std::uint32_t w = get_u32(bytes, 12);
  const std::uint32_t ch = get_u32(bytes, 16);
  if (h == 0) throw ParseError("NGRID height is zero", 8);
  if (w == 0) throw ParseError("NGRID width is zero", 12);
  if (ch == 0) throw ParseError("NGRID channel count is zero", 16);
  const std::uint8_t dtype = bytes[20];
  std::size_t elem = 0;
  if (dtype == static_cast<std::uint8_t>(NgridDtype::kU8)) {
    elem = 1;
  } else if (dtype == static_cast<std::uint8_t>(NgridDtype::kF32)) {
    elem = 4;
  } else {
    throw ParseError("unknown NGRID dtype " + std::to_string(dtype), 20);
  }
  const std::uint64_t count = std::uint64_t{h} * w * ch;
  const std::uint64_t payload = count * elem;
  const std::uint64_t have = bytes.size() - kNgridHeaderSize;
  if (have < payload) {
    throw ParseError("truncated NGRID payload: expected " +
                         std::to_string(payload) + " bytes, got " +
                         std::to_string(have),
                     bytes.size());
  }
  if (have > payload) {
    throw ParseError("trailing bytes after NGRID payload",
                     kNgridHeaderSize + payload);
  }
  const GridShape shape(h, w);
  const auto body = bytes.subspan(kNgridHeaderSize);
  if (elem == 1) {
    return Grid<std::uint8_t>(
        shape, ch, std::vector<std::uint8_t>(body.begin(), body.end()));
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<float>(get_u32(body, 4 * i));
  }
  return Grid<float>(shape, ch, std::move(values));
}

void write_ngrid(const fs::path& path, const Grid<std::uint8_t>& grid) {
  write_bytes(path, encode_ngrid(grid));
}

void write_ngrid(const fs::path& path, const Grid<float>& grid) {
  write_bytes(path, encode_ngrid(grid));
}

NgridGrid read_ngrid(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return with_path(path, [&] { return decode_ngrid(bytes); });
}

namespace {

Grid<float> to_f32(const detail::ValidatedGrid<double>& g) {
  std::vector<float> v(g.values().size());
  std::transform(g.values().begin(), g.values().end(), v.begin(),
                 [](double x) { return static_cast<float>(x); });
  return Grid<float>(g.shape(), 1, std::move(v));
}

}  // namespace

void write_image(const fs::path& path, const Image& image) {
  write_ngrid(path, to_f32(image));
}

void write_prob_map(const fs::path& path, const ProbMap& map) {
  write_ngrid(path, to_f32(map));
}

void write_label_map(const fs::path& path, const LabelMap& labels) {
  write_ngrid(path, labels.grid());
}

void write_atlas(const fs::path& path, const TerritoryAtlas& atlas) {
  const auto& masks = atlas.masks();
  const std::size_t n = masks.front().pixels();
  std::vector<std::uint8_t> values;
  values.reserve(n * masks.size());
  for (const BinaryMask& m : masks) {
    values.insert(values.end(), m.values().begin(), m.values().end());
  }
  write_ngrid(path, Grid<std::uint8_t>(atlas.shape(), masks.size(),
                                       std::move(values)));
}

Image read_image(const fs::path& path) {
  const NgridGrid g = read_ngrid(path);
  return with_path(path, [&] {
    const Grid<float>& f = expect_f32(g);
    expect_channels(f.channels(), 1);
    std::vector<double> v(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!std::isfinite(f[i])) throw ParseError("non-finite intensity", f32_offset(i));
      v[i] = f[i];
    }
    return Image(f.shape(), std::move(v));
  });
}

ProbMap read_prob_map(const fs::path& path) {
  const NgridGrid g = read_ngrid(path);
  return with_path(path, [&] {
    const Grid<float>& f = expect_f32(g);
    expect_channels(f.channels(), 1);
    std::vector<double> v(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!(f[i] >= 0.0f && f[i] <= 1.0f)) {
        throw ParseError("probability outside [0, 1]", f32_offset(i));
      }
      v[i] = f[i];
    }
    return ProbMap(f.shape(), std::move(v));
  });
}

LabelMap read_label_map(const fs::path& path, std::size_t classes) {
  const NgridGrid g = read_ngrid(path);
  return with_path(path, [&] {
    const Grid<std::uint8_t>& u = expect_u8(g);
    expect_channels(u.channels(), 1);
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (u[i] >= classes) {
        throw ParseError("label " + std::to_string(u[i]) + " out of range",
                         kNgridHeaderSize + i);
      }
    }
    return LabelMap(u.shape(), classes,
                    std::vector<std::uint8_t>(u.values().begin(), u.values().end()));
  });
}

TerritoryAtlas read_atlas(const fs::path& path) {
  const NgridGrid g = read_ngrid(path);
  return with_path(path, [&] {
    const Grid<std::uint8_t>& u = expect_u8(g);
    Level level;
    if (u.channels() == territories_at(Level::kBG).size()) {
      level = Level::kBG;
    } else if (u.channels() == territories_at(Level::kSG).size()) {
      level = Level::kSG;
    } else {
      throw ParseError("atlas needs 7 (BG) or 3 (SG) channels, got " +
                           std::to_string(u.channels()),
                       16);
    }
    std::vector<BinaryMask> masks;
    for (std::size_t c = 0; c < u.channels(); ++c) {
      const auto ch = u.channel(c);
      for (std::size_t i = 0; i < ch.size(); ++i) {
        if (ch[i] > 1) {
          throw ParseError("atlas mask value is not 0/1",
                           kNgridHeaderSize + c * u.pixels() + i);
        }
      }
      masks.emplace_back(u.shape(), std::vector<std::uint8_t>(ch.begin(), ch.end()));
    }
    return TerritoryAtlas(level, std::move(masks));
  });
}

// ---------------------------------------------------------------------------
// Dataset manifest

std::span<const PairedCase> LoadedDataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

namespace {

json phantom_to_json(const PhantomConfig& p) {
  return json{{"height", p.shape.height()},
              {"width", p.shape.width()},
              {"coupling_rho", p.coupling_rho},
              {"lesion_rate", p.lesion_rate},
              {"noise_sigma", p.noise_sigma},
              {"hypodensity_delta", p.hypodensity_delta},
              {"seed", p.seed}};
}

PhantomConfig phantom_from_json(const json& j) {
  PhantomConfig p;
  p.shape = GridShape(j.at("height").get<std::size_t>(),
                      j.at("width").get<std::size_t>());
  p.coupling_rho = j.at("coupling_rho").get<double>();
  p.lesion_rate = j.at("lesion_rate").get<double>();
  p.noise_sigma = j.at("noise_sigma").get<double>();
  p.hypodensity_delta = j.at("hypodensity_delta").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.validate();
  return p;
}

std::string level_key(Level l) { return l == Level::kBG ? "bg" : "sg"; }

json parse_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

}  // namespace

fs::path write_dataset(const fs::path& dir, const Dataset& ds) {
  json atlases = json::object();
  std::map<const TerritoryAtlas*, std::string> atlas_paths;
  auto atlas_path = [&](const std::shared_ptr<const TerritoryAtlas>& a) {
    auto it = atlas_paths.find(a.get());
    if (it != atlas_paths.end()) return it->second;
    std::string rel = "atlas_" + level_key(a->level());
    if (atlas_paths.size() >= 2) rel += "_" + std::to_string(atlas_paths.size());
    rel += ".ngrid";
    write_atlas(dir / rel, *a);
    atlas_paths.emplace(a.get(), rel);
    return rel;
  };

  json cases = json::array();
  auto emit = [&](const std::vector<PairedCase>& split, const char* name) {
    for (const PairedCase& pc : split) {
      json entry{{"case_id", pc.case_id}, {"split", name},
                 {"truth_involved", pc.truth_involved}};
      for (Level l : {Level::kBG, Level::kSG}) {
        const LevelSlice& s = pc.level(l);
        const std::string stem = "cases/" + pc.case_id + "_" + level_key(l);
        write_image(dir / (stem + "_image.ngrid"), s.image);
        write_label_map(dir / (stem + "_labels.ngrid"), s.labels);
        entry[level_key(l)] = json{{"image", stem + "_image.ngrid"},
                                   {"labels", stem + "_labels.ngrid"},
                                   {"atlas", atlas_path(s.atlas)}};
      }
      cases.push_back(std::move(entry));
    }
  };
  emit(ds.train, "train");
  emit(ds.val, "val");
  emit(ds.test, "test");

  json manifest{{"format", "tagl-dataset"},
                {"version", kManifestVersion},
                {"phantom", phantom_to_json(ds.phantom)},
                {"counts", {{"train", ds.train.size()},
                            {"val", ds.val.size()},
                            {"test", ds.test.size()}}},
                {"cases", std::move(cases)}};
  const fs::path out = dir / "manifest.json";
  write_text(out, manifest.dump(2) + "\n");
  return out;
}

LoadedDataset read_dataset(const fs::path& manifest_arg) {
  const fs::path manifest =
      fs::is_directory(manifest_arg) ? manifest_arg / "manifest.json" : manifest_arg;
  const fs::path root = manifest.parent_path();
  const json j = parse_json_file(manifest);
  auto fail = [&](const std::string& msg) {
    return ValidationError(manifest.string() + ": " + msg);
  };
  try {
    if (j.value("format", std::string()) != "tagl-dataset") {
      throw fail("not a tagl dataset manifest");
    }
    if (j.at("version").get<int>() != kManifestVersion) {
      throw fail("unsupported manifest version");
    }
    LoadedDataset out;
    out.phantom = phantom_from_json(j.at("phantom"));

    std::set<std::string> seen;
    std::map<std::string, std::shared_ptr<const TerritoryAtlas>> atlases;
    auto resolve = [&](const json& ref) {
      const fs::path p = root / ref.get<std::string>();
      if (!fs::exists(p)) throw fail("dangling path " + ref.get<std::string>());
      return p;
    };
    for (const json& c : j.at("cases")) {
      const std::string id = c.at("case_id").get<std::string>();
      if (!seen.insert(id).second) throw fail("duplicate case id " + id);
      PairedCase pc{id,
                    {Image::Filled(out.phantom.shape, 0.0),
                     LabelMap(out.phantom.shape, kAspectsClasses,
                              std::vector<std::uint8_t>(out.phantom.shape.pixels())),
                     nullptr},
                    {Image::Filled(out.phantom.shape, 0.0),
                     LabelMap(out.phantom.shape, kAspectsClasses,
                              std::vector<std::uint8_t>(out.phantom.shape.pixels())),
                     nullptr},
                    c.at("truth_involved").get<std::vector<int>>()};
      for (Level l : {Level::kBG, Level::kSG}) {
        const json& s = c.at(level_key(l));
        LevelSlice& slice = l == Level::kBG ? pc.bg : pc.sg;
        slice.image = read_image(resolve(s.at("image")));
        slice.labels = read_label_map(resolve(s.at("labels")));
        const std::string akey = s.at("atlas").get<std::string>();
        auto it = atlases.find(akey);
        if (it == atlases.end()) {
          it = atlases
                   .emplace(akey, std::make_shared<const TerritoryAtlas>(
                                      read_atlas(resolve(s.at("atlas")))))
                   .first;
        }
        slice.atlas = it->second;
        if (slice.atlas->level() != l) {
          throw fail("case " + id + ": atlas level does not match slice");
        }
        if (slice.image.shape() != out.phantom.shape ||
            slice.labels.shape() != out.phantom.shape ||
            slice.atlas->shape() != out.phantom.shape) {
          throw fail("case " + id + ": grid shape differs from phantom shape");
        }
      }
      check_label_atlas_consistency(pc);
      const std::string split = c.at("split").get<std::string>();
      if (split == "train") {
        out.train.push_back(std::move(pc));
      } else if (split == "val") {
        out.val.push_back(std::move(pc));
      } else if (split == "test") {
        out.test.push_back(std::move(pc));
      } else {
        throw fail("case " + id + ": unknown split '" + split + "'");
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw fail(std::string("malformed manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_checkpoint(const fs::path& stem, const CheckpointRecord& record,
                      const std::string& config_json) {
  const LinearHead& h = record.head;
  std::vector<float> w(h.weights().size());
  std::transform(h.weights().begin(), h.weights().end(), w.begin(),
                 [](double x) { return static_cast<float>(x); });
  fs::path grid_path = stem;
  grid_path += ".ngrid";
  fs::path json_path = stem;
  json_path += ".json";
  write_ngrid(grid_path, Grid<float>(GridShape(h.features(), h.classes()), 1,
                                     std::move(w)));
  json meta{{"format", "tagl-checkpoint"},
            {"version", 1},
            {"epoch", record.epoch},
            {"val_mean_dice", record.val_mean_dice},
            {"val_consistency", record.val_consistency},
            {"features", h.features()},
            {"classes", h.classes()},
            {"weights_file", grid_path.filename().string()},
            {"weights", std::vector<double>(h.weights().begin(), h.weights().end())},
            {"config", json::parse(config_json)}};
  write_text(json_path, meta.dump(2) + "\n");
}

CheckpointRecord read_checkpoint(const fs::path& json_path) {
  const json j = parse_json_file(json_path);
  try {
    if (j.value("format", std::string()) != "tagl-checkpoint") {
      throw ValidationError(json_path.string() + ": not a tagl checkpoint");
    }
    const auto f = j.at("features").get<std::size_t>();
    const auto c = j.at("classes").get<std::size_t>();
    std::vector<double> w = j.at("weights").get<std::vector<double>>();
    const fs::path grid_path =
        json_path.parent_path() / j.at("weights_file").get<std::string>();
    const NgridGrid g = read_ngrid(grid_path);
    with_path(grid_path, [&] {
      const Grid<float>& gw = expect_f32(g);
      if (gw.shape() != GridShape(f, c) || gw.channels() != 1) {
        throw ParseError("weight grid shape does not match metadata", 8);
      }
      for (std::size_t i = 0; i < w.size() && i < gw.size(); ++i) {
        if (static_cast<float>(w[i]) != gw[i]) {
          throw ParseError("weight grid disagrees with metadata", f32_offset(i));
        }
      }
      return 0;
    });
    CheckpointRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.val_mean_dice = j.at("val_mean_dice").get<double>();
    r.val_consistency = j.at("val_consistency").get<double>();
    r.head = LinearHead(f, c, std::move(w));
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(json_path.string() + ": malformed checkpoint: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

std::string format_fixed(double value) {
  if (!std::isfinite(value)) return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  if (std::strcmp(buf, "-0.000000") == 0) return "0.000000";
  return buf;
}

std::string class_name(std::size_t class_index) {
  if (class_index == 0) return "background";
  return std::string(territory(static_cast<int>(class_index)).name);
}

namespace {

// Minimal ordered JSON writer so reals keep their fixed six-decimal form.
class JsonWriter {
 public:
  JsonWriter& open(char c) {
    sep();
    out_ << c;
    first_ = true;
    return *this;
  }
  JsonWriter& close(char c) {
    out_ << c;
    first_ = false;
    return *this;
  }
  JsonWriter& key(std::string_view k) {
    sep();
    out_ << json(std::string(k)).dump() << ':';
    first_ = true;
    return *this;
  }
  JsonWriter& real(double v) { return raw(format_fixed(v)); }
  JsonWriter& integer(long long v) { return raw(std::to_string(v)); }
  JsonWriter& str(std::string_view s) { return raw(json(std::string(s)).dump()); }
  std::string done() { return out_.str() + "\n"; }

 private:
  JsonWriter& raw(const std::string& s) {
    sep();
    out_ << s;
    return *this;
  }
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }
  std::ostringstream out_;
  bool first_ = true;
};

void json_report_fields(JsonWriter& w, const EvalReport& r) {
  w.key("mean_dice").real(r.mean_dice);
  w.key("mean_iou").real(r.mean_iou);
  w.key("consistency").real(r.consistency);
  w.key("per_class_dice").open('{');
  for (std::size_t c = 0; c < r.per_class_dice.size(); ++c) {
    w.key(class_name(c)).real(r.per_class_dice[c]);
  }
  w.close('}');
  w.key("per_class_iou").open('{');
  for (std::size_t c = 0; c < r.per_class_iou.size(); ++c) {
    w.key(class_name(c)).real(r.per_class_iou[c]);
  }
  w.close('}');
}

std::string report_csv_header(std::size_t classes) {
  std::string h = "mean_dice,mean_iou,consistency";
  for (std::size_t c = 0; c < classes; ++c) h += ",dice_" + class_name(c);
  for (std::size_t c = 0; c < classes; ++c) h += ",iou_" + class_name(c);
  return h;
}

std::string report_csv_row(const EvalReport& r) {
  std::string row = format_fixed(r.mean_dice) + "," + format_fixed(r.mean_iou) +
                    "," + format_fixed(r.consistency);
  for (double d : r.per_class_dice) row += "," + format_fixed(d);
  for (double d : r.per_class_iou) row += "," + format_fixed(d);
  return row;
}

std::string involved_names(const std::vector<int>& ids) {
  std::string s;
  for (int id : ids) {
    if (!s.empty()) s += ';';
    s += territory(id).name;
  }
  return s;
}

// Quotes a CSV field when it needs it.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

}  // namespace

std::string format_report(const EvalReport& report, ReportFormat format) {
  if (format == ReportFormat::kCsv) {
    return report_csv_header(report.per_class_dice.size()) + "\n" +
           report_csv_row(report) + "\n";
  }
  JsonWriter w;
  w.open('{');
  json_report_fields(w, report);
  w.close('}');
  return w.done();
}

std::string format_report(const AspectsResult& result, ReportFormat format) {
  if (format == ReportFormat::kCsv) {
    std::string h = "score,involved";
    std::string row = std::to_string(result.score) + "," +
                      csv_field(involved_names(result.involved));
    for (const Territory& t : kTerritories) {
      h += ",fraction_" + std::string(t.name);
      row += "," + format_fixed(result.per_territory_fraction[t.id - 1]);
    }
    return h + "\n" + row + "\n";
  }
  JsonWriter w;
  w.open('{');
  w.key("score").integer(result.score);
  w.key("involved").open('[');
  for (int id : result.involved) w.str(territory(id).name);
  w.close(']');
  w.key("involved_ids").open('[');
  for (int id : result.involved) w.integer(id);
  w.close(']');
  w.key("per_territory_fraction").open('{');
  for (const Territory& t : kTerritories) {
    w.key(t.name).real(result.per_territory_fraction[t.id - 1]);
  }
  w.close('}');
  w.close('}');
  return w.done();
}

std::string format_report(std::span<const AblationRow> rows, ReportFormat format) {
  if (format == ReportFormat::kCsv) {
    std::string s =
        "config,seed,test_mean_dice,test_mean_iou,test_consistency,aspects_mae,"
        "best_epoch,val_mean_dice\n";
    for (const AblationRow& r : rows) {
      s += csv_field(r.config) + "," + std::to_string(r.seed) + "," +
           format_fixed(r.test_mean_dice) + "," + format_fixed(r.test_mean_iou) +
           "," + format_fixed(r.test_consistency) + "," +
           format_fixed(r.aspects_mae) + "," + std::to_string(r.best_epoch) +
           "," + format_fixed(r.val_mean_dice) + "\n";
    }
    return s;
  }
  JsonWriter w;
  w.open('[');
  for (const AblationRow& r : rows) {
    w.open('{');
    w.key("config").str(r.config);
    w.key("seed").integer(static_cast<long long>(r.seed));
    w.key("test_mean_dice").real(r.test_mean_dice);
    w.key("test_mean_iou").real(r.test_mean_iou);
    w.key("test_consistency").real(r.test_consistency);
    w.key("aspects_mae").real(r.aspects_mae);
    w.key("best_epoch").integer(r.best_epoch);
    w.key("val_mean_dice").real(r.val_mean_dice);
    w.close('}');
  }
  w.close(']');
  return w.done();
}

std::string format_case_reports(std::span<const CaseEvaluation> cases,
                                ReportFormat format) {
  if (format == ReportFormat::kCsv) {
    std::string s = "case_id,soft_dice,aspects_score,truth_score,loss_total,"
                    "loss_seg,loss_ta," +
                    report_csv_header(kAspectsClasses) + "\n";
    for (const CaseEvaluation& c : cases) {
      s += csv_field(c.case_id) + "," + format_fixed(c.soft_dice) + "," +
           std::to_string(c.aspects.score) + "," + std::to_string(c.truth_score) +
           "," + format_fixed(c.loss.total) + "," + format_fixed(c.loss.seg) +
           "," + format_fixed(c.loss.ta) + "," + report_csv_row(c.report) + "\n";
    }
    return s;
  }
  JsonWriter w;
  w.open('[');
  for (const CaseEvaluation& c : cases) {
    w.open('{');
    w.key("case_id").str(c.case_id);
    w.key("soft_dice").real(c.soft_dice);
    w.key("aspects_score").integer(c.aspects.score);
    w.key("truth_score").integer(c.truth_score);
    w.key("involved").open('[');
    for (int id : c.aspects.involved) w.str(territory(id).name);
    w.close(']');
    w.key("loss_total").real(c.loss.total);
    w.key("loss_seg").real(c.loss.seg);
    w.key("loss_ta").real(c.loss.ta);
    json_report_fields(w, c.report);
    w.close('}');
  }
  w.close(']');
  return w.done();
}

std::string format_history(std::span<const EpochRecord> history) {
  std::string s =
      "epoch,train_loss,train_seg,train_ta,train_dice,val_loss,val_seg,val_ta,"
      "val_dice,val_consistency\n";
  for (const EpochRecord& e : history) {
    s += std::to_string(e.epoch) + "," + format_fixed(e.train_loss.total) + "," +
         format_fixed(e.train_loss.seg) + "," + format_fixed(e.train_loss.ta) +
         "," + format_fixed(e.train_dice) + "," + format_fixed(e.val_loss.total) +
         "," + format_fixed(e.val_loss.seg) + "," + format_fixed(e.val_loss.ta) +
         "," + format_fixed(e.val_dice) + "," + format_fixed(e.val_consistency) +
         "\n";
  }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, std::span<const std::uint8_t>(
                        reinterpret_cast<const std::uint8_t*>(text.data()),
                        text.size()));
}

}  // namespace tagl
