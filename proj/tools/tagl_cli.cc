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
#include "tagl_cli.h"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tagl/aspects.h"
#include "tagl/error.h"
#include "tagl/gradcheck.h"
#include "tagl/io.h"
#include "tagl/phantom.h"
#include "tagl/trainer.h"

namespace tagl::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kVersion = "0.1.0";

// Bad flag values discovered after parsing; exits with kExitUsage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Runs `fn` and reports its ValidationError as a usage error naming `what`.
template <typename Fn>
void AsUsage(const std::string& what, Fn&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    throw UsageError(what + ": " + e.what());
  }
}

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string out_dir = "tagl-out";
  std::size_t threads = 1;
  std::string format = "json";

  ReportFormat report_format() const {
    return format == "csv" ? ReportFormat::kCsv : ReportFormat::kJson;
  }
  std::string ext() const { return format == "csv" ? ".csv" : ".json"; }
  fs::path out() const { return fs::path(out_dir); }
};

// Paths are stored absolute so that run.json re-executes from any directory.
CLI::Validator AbsolutePath() {
  return CLI::Validator(
      [](std::string& s) {
        s = fs::absolute(fs::path(s)).lexically_normal().string();
        return std::string();
      },
      "PATH");
}

const CLI::Validator kOnOff = CLI::IsMember({"on", "off"});

// ---------------------------------------------------------------------------
// Shared flag groups

struct PhantomFlags {
  std::string shape = "128x128";
  std::size_t n_train = 400;
  std::size_t n_val = 100;
  std::size_t n_test = 100;
  PhantomConfig cfg;
};

void AddPhantomFlags(CLI::App* app, PhantomFlags& f) {
  app->add_option("--shape", f.shape, "Grid size as HxW")->capture_default_str();
  app->add_option("--n-train", f.n_train, "Training cases")->capture_default_str();
  app->add_option("--n-val", f.n_val, "Validation cases")->capture_default_str();
  app->add_option("--n-test", f.n_test, "Test cases")->capture_default_str();
  app->add_option("--coupling-rho", f.cfg.coupling_rho,
                  "P(M1-M3 infarct extends to M4-M6)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app->add_option("--lesion-rate", f.cfg.lesion_rate,
                  "Per-territory infarct probability")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app->add_option("--noise-sigma", f.cfg.noise_sigma, "Gaussian noise level")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--hypodensity-delta", f.cfg.hypodensity_delta,
                  "Intensity drop inside infarcts")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
}

GridShape ParseShape(const std::string& s) {
  const auto x = s.find('x');
  std::size_t h = 0, w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    h = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    w = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw UsageError("--shape: expected HxW, got '" + s + "'");
  }
  if (h < kMinPhantomSide || w < kMinPhantomSide) {
    throw UsageError("--shape: sides must be >= " + std::to_string(kMinPhantomSide) +
                     ", got " + s);
  }
  return GridShape(h, w);
}

PhantomConfig ResolvePhantom(PhantomFlags& f, std::uint64_t seed) {
  PhantomConfig p = f.cfg;
  p.shape = ParseShape(f.shape);
  p.seed = seed;
  AsUsage("phantom", [&] { p.validate(); });
  return p;
}

struct TrainFlags {
  std::string tagl = "on";
  std::string adaptive = "on";
  std::string optimizer = "adam";
  std::string seg_loss = "ce";
  TrainConfig cfg;
};

void AddTrainFlags(CLI::App* app, TrainFlags& f, bool variant_flags) {
  if (variant_flags) {
    app->add_option("--tagl", f.tagl, "Add the territory-aware term")
        ->check(kOnOff)
        ->capture_default_str();
    app->add_option("--adaptive-weight", f.adaptive,
                    "Confidence weighting q (off: q = 1)")
        ->check(kOnOff)
        ->capture_default_str();
  }
  app->add_option("--lambda", f.cfg.tagl.lambda, "Weight of the TAGL term")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--tau", f.cfg.tagl.tau, "Gate threshold on the BG map")
      ->capture_default_str();
  app->add_flag("--detach-bg", f.cfg.detach_bg,
                "No TAGL gradient into the BG map");
  app->add_option("--optimizer", f.optimizer, "adam or sgd")
      ->check(CLI::IsMember({"adam", "sgd"}))
      ->capture_default_str();
  app->add_option("--lr", f.cfg.learning_rate, "Learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--beta1", f.cfg.adam_beta1)->capture_default_str();
  app->add_option("--beta2", f.cfg.adam_beta2)->capture_default_str();
  app->add_option("--adam-eps", f.cfg.adam_epsilon)->capture_default_str();
  app->add_option("--epochs", f.cfg.epochs)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--batch", f.cfg.batch)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--seg-loss", f.seg_loss, "ce or ce_dice")
      ->check(CLI::IsMember({"ce", "ce_dice"}))
      ->capture_default_str();
  app->add_option("--dice-smoothing", f.cfg.seg_loss.dice_smoothing)
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--mix", f.cfg.seg_loss.bce_dice_mix,
                  "CE share of the ce_dice hybrid")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app->add_flag("--augment", f.cfg.augment, "Random flips and intensity jitter");
  app->add_option("--jitter", f.cfg.augment_jitter, "Max intensity jitter")
      ->check(CLI::Range(0.0, kMaxJitter))
      ->capture_default_str();
}

TrainConfig ResolveTrain(const TrainFlags& f, const GlobalOptions& g) {
  TrainConfig cfg = f.cfg;
  cfg.tagl_enabled = f.tagl == "on";
  cfg.tagl.adaptive_weight_enabled = f.adaptive == "on";
  cfg.optimizer = *parse_optimizer_kind(f.optimizer);
  cfg.seg_loss.kind = *parse_seg_loss_kind(f.seg_loss);
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  AsUsage("train", [&] { cfg.validate(); });
  return cfg;
}

struct EvalFlags {
  double theta = kDefaultTheta;
  std::string rule = "mean";
  bool skip_absent = false;
};

void AddEvalFlags(CLI::App* app, EvalFlags& f) {
  app->add_option("--theta", f.theta, "Involvement threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app->add_option("--rule", f.rule,
                  "mean (mean probability) or fraction (pixels above 0.5)")
      ->check(CLI::IsMember({"mean", "fraction"}))
      ->capture_default_str();
  app->add_flag("--skip-absent-classes", f.skip_absent,
                "Leave classes absent from prediction and target out of means");
}

EvalSettings ResolveEval(const EvalFlags& f) {
  if (!(f.theta > 0.0 && f.theta < 1.0)) {
    throw UsageError("--theta: must lie strictly between 0 and 1");
  }
  EvalSettings s;
  s.theta = f.theta;
  s.rule = f.rule == "fraction" ? InvolvementRule::kPixelFraction
                                : InvolvementRule::kMeanProbability;
  s.metrics.skip_absent_classes = f.skip_absent;
  return s;
}

// ---------------------------------------------------------------------------
// Config echo

ordered_json PhantomJson(const PhantomConfig& p) {
  return ordered_json{{"height", p.shape.height()},
                      {"width", p.shape.width()},
                      {"coupling_rho", p.coupling_rho},
                      {"lesion_rate", p.lesion_rate},
                      {"noise_sigma", p.noise_sigma},
                      {"hypodensity_delta", p.hypodensity_delta},
                      {"seed", p.seed}};
}

ordered_json TrainJson(const TrainConfig& c) {
  return ordered_json{
      {"seg_loss", std::string(to_string(c.seg_loss.kind))},
      {"dice_smoothing", c.seg_loss.dice_smoothing},
      {"mix", c.seg_loss.bce_dice_mix},
      {"tagl_enabled", c.tagl_enabled},
      {"tau", c.tagl.tau},
      {"lambda", c.tagl.lambda},
      {"effective_lambda", c.effective_lambda()},
      {"adaptive_weight", c.tagl.adaptive_weight_enabled},
      {"detach_bg", c.detach_bg},
      {"epochs", c.epochs},
      {"optimizer", std::string(to_string(c.optimizer))},
      {"learning_rate", c.learning_rate},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_epsilon", c.adam_epsilon},
      {"batch", c.batch},
      {"augment", c.augment},
      {"augment_jitter", c.augment_jitter},
      {"seed", c.seed}};
}

TrainConfig TrainFromJson(const nlohmann::json& j) {
  TrainConfig c;
  const auto kind = parse_seg_loss_kind(j.at("seg_loss").get<std::string>());
  if (!kind) throw ValidationError("checkpoint: unknown seg_loss");
  c.seg_loss.kind = *kind;
  c.seg_loss.dice_smoothing = j.at("dice_smoothing").get<double>();
  c.seg_loss.bce_dice_mix = j.at("mix").get<double>();
  c.tagl_enabled = j.at("tagl_enabled").get<bool>();
  c.tagl.tau = j.at("tau").get<double>();
  c.tagl.lambda = j.at("lambda").get<double>();
  c.tagl.adaptive_weight_enabled = j.at("adaptive_weight").get<bool>();
  c.detach_bg = j.at("detach_bg").get<bool>();
  c.validate();
  return c;
}

ordered_json EvalJson(const EvalSettings& s) {
  return ordered_json{{"theta", s.theta},
                      {"rule", std::string(to_string(s.rule))},
                      {"skip_absent_classes", s.metrics.skip_absent_classes}};
}

// Echo of every option of `app` as the string that re-creates it.
ordered_json EchoFlags(const CLI::App& app) {
  ordered_json flags = ordered_json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_name();
    if (name == "--help" || name.rfind("--", 0) != 0) continue;
    if (opt->get_items_expected_max() == 0) {
      flags[name] = opt->count() > 0 ? "true" : "false";
    } else if (opt->count() > 0) {
      std::string joined;
      for (const std::string& r : opt->results()) {
        if (!joined.empty()) joined += ',';
        joined += r;
      }
      flags[name] = joined;
    } else if (!opt->get_default_str().empty()) {
      flags[name] = opt->get_default_str();
    }
  }
  return flags;
}

void WriteJson(const fs::path& path, const ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

// Writes run.json. `leaf` is the innermost parsed subcommand.
void WriteRunJson(const GlobalOptions& g, const CLI::App& root,
                  const CLI::App& leaf, const std::vector<std::string>& path,
                  ordered_json resolved) {
  fs::create_directories(g.out());
  ordered_json global = ordered_json::object();
  for (const char* name : {"--seed", "--out-dir", "--threads", "--format"}) {
    const CLI::Option* opt = root.get_option(name);
    global[name] = opt->count() > 0 ? opt->results().front() : opt->get_default_str();
  }
  // Defaults are echoed from the resolved values so a rerun is independent
  // of the working directory.
  global["--out-dir"] = g.out_dir;
  ordered_json run{{"tool", "tagl"},
                   {"version", kVersion},
                   {"command", path},
                   {"global", std::move(global)},
                   {"flags", EchoFlags(leaf)},
                   {"resolved", std::move(resolved)}};
  WriteJson(g.out() / "run.json", run);
}

void Say(const std::string& line) { std::cout << line << std::endl; }

// ---------------------------------------------------------------------------
// Commands

int CmdPhantomGen(const GlobalOptions& g, PhantomFlags& f, const CLI::App& root,
                  const CLI::App& leaf) {
  const PhantomConfig p = ResolvePhantom(f, g.seed);
  WriteRunJson(g, root, leaf, {"phantom", "gen"},
               ordered_json{{"phantom", PhantomJson(p)},
                            {"n_train", f.n_train},
                            {"n_val", f.n_val},
                            {"n_test", f.n_test},
                            {"threads", g.threads}});
  const Dataset ds = generate_dataset(p, f.n_train, f.n_val, f.n_test, g.threads);
  const fs::path manifest = write_dataset(g.out(), ds);
  Say("wrote " + std::to_string(ds.train.size() + ds.val.size() + ds.test.size()) +
      " cases to " + manifest.string());
  return kExitOk;
}

struct TrainArgs {
  std::string dataset;
  TrainFlags train;
};

int CmdTrain(const GlobalOptions& g, TrainArgs& a, const CLI::App& root,
             const CLI::App& leaf) {
  const TrainConfig cfg = ResolveTrain(a.train, g);
  WriteRunJson(g, root, leaf, {"train"},
               ordered_json{{"dataset", a.dataset}, {"train", TrainJson(cfg)},
                            {"threads", g.threads}});
  const LoadedDataset ds = read_dataset(a.dataset);
  if (ds.train.empty()) throw UsageError("train: dataset has no training cases");
  if (ds.val.empty()) throw UsageError("train: dataset has no validation cases");

  const FitResult fitted =
      fit(cfg, ds.train, ds.val, [&](const EpochRecord& e) {
        std::cerr << "epoch " << e.epoch << "/" << cfg.epochs
                  << " train_loss " << format_fixed(e.train_loss.total)
                  << " val_dice " << format_fixed(e.val_dice) << "\n";
      });
  write_text(g.out() / "history.csv", format_history(fitted.history));
  write_checkpoint(g.out() / "checkpoint", fitted.best, TrainJson(cfg).dump());
  WriteJson(g.out() / "train_summary.json",
            ordered_json{{"best_epoch", fitted.best.epoch},
                         {"val_mean_dice", fitted.best.val_mean_dice},
                         {"val_consistency", fitted.best.val_consistency},
                         {"epochs", cfg.epochs},
                         {"final_train_loss", fitted.history.back().train_loss.total},
                         {"final_val_dice", fitted.history.back().val_dice}});
  Say("best epoch " + std::to_string(fitted.best.epoch) + " val_mean_dice " +
      format_fixed(fitted.best.val_mean_dice));
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  EvalFlags eval;
};

int CmdEval(const GlobalOptions& g, EvalArgs& a, const CLI::App& root,
            const CLI::App& leaf) {
  const EvalSettings settings = ResolveEval(a.eval);
  fs::path ckpt = a.checkpoint;
  if (ckpt.extension() != ".json") ckpt.replace_extension(".json");
  WriteRunJson(g, root, leaf, {"eval"},
               ordered_json{{"checkpoint", ckpt.string()},
                            {"dataset", a.dataset},
                            {"split", a.split},
                            {"eval", EvalJson(settings)},
                            {"threads", g.threads}});
  const CheckpointRecord record = read_checkpoint(ckpt);
  TrainConfig cfg;
  {
    std::ifstream in(ckpt);
    cfg = TrainFromJson(nlohmann::json::parse(in).at("config"));
  }
  cfg.threads = g.threads;
  if (record.head.features() != kFeatureCount ||
      record.head.classes() != kAspectsClasses) {
    throw ValidationError("eval: checkpoint head is " +
                          std::to_string(record.head.features()) + "x" +
                          std::to_string(record.head.classes()) + ", expected " +
                          std::to_string(kFeatureCount) + "x" +
                          std::to_string(kAspectsClasses));
  }
  const LoadedDataset ds = read_dataset(a.dataset);
  const std::span<const PairedCase> cases = ds.split(a.split);
  if (cases.empty()) throw UsageError("eval: split '" + a.split + "' is empty");

  EvalSettings s = settings;
  s.dice_smoothing = cfg.seg_loss.dice_smoothing;
  const SplitEvaluation ev = evaluate(record.head, cases, cfg, s);
  write_text(g.out() / ("eval_cases" + g.ext()),
             format_case_reports(ev.cases, g.report_format()));
  write_report(ev.aggregate, g.out() / ("eval_report" + g.ext()), g.report_format());
  WriteJson(g.out() / "eval_summary.json",
            ordered_json{{"split", a.split},
                         {"cases", ev.cases.size()},
                         {"mean_dice", ev.aggregate.mean_dice},
                         {"mean_iou", ev.aggregate.mean_iou},
                         {"consistency", ev.aggregate.consistency},
                         {"mean_soft_dice", ev.mean_soft_dice},
                         {"aspects_mae", ev.aspects_mae},
                         {"mean_loss", ev.mean_loss.total}});
  Say(a.split + ": mean_dice " + format_fixed(ev.aggregate.mean_dice) +
      " mean_iou " + format_fixed(ev.aggregate.mean_iou) + " consistency " +
      format_fixed(ev.aggregate.consistency) + " aspects_mae " +
      format_fixed(ev.aspects_mae));
  return kExitOk;
}

struct GradcheckArgs {
  std::vector<std::size_t> sizes;
  GradcheckConfig cfg;
};

std::string Scientific(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

int CmdGradcheck(const GlobalOptions& g, GradcheckArgs& a, const CLI::App& root,
                 const CLI::App& leaf) {
  GradcheckConfig cfg = a.cfg;
  if (!a.sizes.empty()) cfg.sizes = a.sizes;
  cfg.seed = g.seed;
  AsUsage("gradcheck", [&] { cfg.validate(); });
  WriteRunJson(g, root, leaf, {"gradcheck"},
               ordered_json{{"sizes", cfg.sizes},
                            {"trials", cfg.trials},
                            {"epsilon", cfg.epsilon},
                            {"tolerance", cfg.tolerance},
                            {"e2e_epsilon", cfg.e2e_epsilon},
                            {"e2e_tolerance", cfg.e2e_tolerance},
                            {"e2e_size", cfg.e2e_size},
                            {"kink_margin", cfg.kink_margin},
                            {"seed", cfg.seed}});
  const std::vector<SuiteResult> results = run_gradcheck(cfg);
  bool ok = true;
  std::string csv = "suite,trials,worst_error,tolerance,passed\n";
  std::string json = "[";
  for (std::size_t k = 0; k < results.size(); ++k) {
    const SuiteResult& r = results[k];
    ok = ok && r.passed();
    Say(r.name + " trials " + std::to_string(r.trials) + " worst " +
        Scientific(r.worst_error) + " tol " + Scientific(r.tolerance) +
        (r.passed() ? " PASS" : " FAIL"));
    csv += r.name + "," + std::to_string(r.trials) + "," +
           Scientific(r.worst_error) + "," + Scientific(r.tolerance) + "," +
           (r.passed() ? "true" : "false") + "\n";
    json += std::string(k ? "," : "") + "{\"suite\":\"" + r.name +
            "\",\"trials\":" + std::to_string(r.trials) +
            ",\"worst_error\":" + Scientific(r.worst_error) +
            ",\"tolerance\":" + Scientific(r.tolerance) +
            ",\"passed\":" + (r.passed() ? "true" : "false") + "}";
  }
  json += "]\n";
  write_text(g.out() / ("gradcheck" + g.ext()),
             g.report_format() == ReportFormat::kCsv ? csv : json);
  Say(ok ? "gradcheck: all suites passed" : "gradcheck: FAILED");
  return ok ? kExitOk : kExitFailure;
}

struct AblateArgs {
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> configs;
  PhantomFlags phantom;
  TrainFlags train;
  EvalFlags eval;
};

int CmdAblate(const GlobalOptions& g, AblateArgs& a, const CLI::App& root,
              const CLI::App& leaf) {
  std::vector<std::uint64_t> seeds = a.seeds;
  if (seeds.empty()) {
    for (std::uint64_t k = 0; k < 5; ++k) seeds.push_back(g.seed + k);
  }
  std::vector<AblationVariant> variants;
  const std::vector<AblationVariant> all = default_ablation_matrix();
  if (a.configs.empty()) {
    variants = all;
  } else {
    for (const std::string& name : a.configs) {
      auto it = std::find_if(all.begin(), all.end(),
                             [&](const AblationVariant& v) { return v.name == name; });
      if (it == all.end()) throw UsageError("--configs: unknown config '" + name + "'");
      variants.push_back(*it);
    }
  }
  AblationSettings settings;
  settings.phantom = ResolvePhantom(a.phantom, g.seed);
  settings.train = ResolveTrain(a.train, g);
  settings.n_train = a.phantom.n_train;
  settings.n_val = a.phantom.n_val;
  settings.n_test = a.phantom.n_test;
  settings.eval = ResolveEval(a.eval);
  if (settings.n_train == 0 || settings.n_val == 0 || settings.n_test == 0) {
    throw UsageError("ablate: every split needs at least one case");
  }
  std::vector<std::string> names;
  for (const AblationVariant& v : variants) names.push_back(v.name);
  WriteRunJson(g, root, leaf, {"ablate"},
               ordered_json{{"seeds", seeds},
                            {"configs", names},
                            {"phantom", PhantomJson(settings.phantom)},
                            {"n_train", settings.n_train},
                            {"n_val", settings.n_val},
                            {"n_test", settings.n_test},
                            {"train", TrainJson(settings.train)},
                            {"eval", EvalJson(settings.eval)},
                            {"threads", g.threads}});

  const std::vector<AblationRow> rows =
      run_ablation(settings, variants, seeds, [](const AblationRow& r) {
        std::cerr << "seed " << r.seed << " " << r.config << " test_mean_dice "
                  << format_fixed(r.test_mean_dice) << " consistency "
                  << format_fixed(r.test_consistency) << "\n";
      });
  write_report(std::span<const AblationRow>(rows), g.out() / ("ablation" + g.ext()),
               g.report_format());

  ordered_json means = ordered_json::object();
  for (const std::string& name : names) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const AblationRow& r : rows) {
      if (r.config == name) {
        sum += r.test_mean_dice;
        ++n;
      }
    }
    means[name] = sum / static_cast<double>(n);
  }
  ordered_json summary{{"seeds", seeds}, {"mean_test_dice", means}};
  const bool have_pair =
      std::find(names.begin(), names.end(), "ce_tagl") != names.end() &&
      std::find(names.begin(), names.end(), "ce_only") != names.end();
  if (have_pair) {
    const double delta = ablation_dice_delta(rows, "ce_tagl", "ce_only");
    summary["dice_delta_ce_tagl_minus_ce_only"] = delta;
    Say("mean test Dice delta (ce_tagl - ce_only): " + format_fixed(delta));
  } else {
    Say("mean test Dice delta (ce_tagl - ce_only): n/a");
  }
  WriteJson(g.out() / "ablation_summary.json", summary);
  return kExitOk;
}

struct ScoreArgs {
  std::string bg_pred, sg_pred, bg_atlas, sg_atlas;
  EvalFlags eval;
};

// A probability map (f32) or a label map (u8, read as hard probabilities).
ProbMap ReadPrediction(const fs::path& path) {
  const NgridGrid g = read_ngrid(path);
  if (std::holds_alternative<Grid<float>>(g)) return read_prob_map(path);
  return hard_probability(read_label_map(path));
}

int CmdScore(const GlobalOptions& g, ScoreArgs& a, const CLI::App& root,
             const CLI::App& leaf) {
  const EvalSettings s = ResolveEval(a.eval);
  WriteRunJson(g, root, leaf, {"score"},
               ordered_json{{"bg_pred", a.bg_pred},
                            {"sg_pred", a.sg_pred},
                            {"bg_atlas", a.bg_atlas},
                            {"sg_atlas", a.sg_atlas},
                            {"eval", EvalJson(s)}});
  const TerritoryAtlas bg_atlas = read_atlas(a.bg_atlas);
  const TerritoryAtlas sg_atlas = read_atlas(a.sg_atlas);
  const AspectsResult r = aspects_score(ReadPrediction(a.bg_pred), bg_atlas,
                                        ReadPrediction(a.sg_pred), sg_atlas,
                                        s.theta, s.rule);
  write_report(r, g.out() / ("aspects" + g.ext()), g.report_format());
  std::string involved;
  for (int id : r.involved) involved += std::string(involved.empty() ? "" : ",") +
                                        std::string(territory(id).name);
  Say("ASPECTS " + std::to_string(r.score) +
      (involved.empty() ? "" : " (involved: " + involved + ")"));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Re-execution

std::vector<std::string> RerunArgs(const fs::path& run_json,
                                   const std::optional<std::string>& out_dir,
                                   const std::optional<std::size_t>& threads) {
  std::ifstream in(run_json);
  if (!in) throw IoError("cannot open " + run_json.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(run_json.string() + ": " + e.what(), e.byte);
  }
  try {
    if (j.at("tool").get<std::string>() != "tagl") {
      throw ValidationError(run_json.string() + ": not a tagl run.json");
    }
    std::vector<std::string> args{"tagl"};
    for (const auto& [name, value] : j.at("global").items()) {
      std::string v = value.get<std::string>();
      if (name == "--out-dir" && out_dir) v = *out_dir;
      if (name == "--threads" && threads) v = std::to_string(*threads);
      args.push_back(name);
      args.push_back(v);
    }
    for (const auto& part : j.at("command")) args.push_back(part.get<std::string>());
    for (const auto& [name, value] : j.at("flags").items()) {
      const std::string v = value.get<std::string>();
      if (v == "true" || v == "false") {
        // Boolean flags take no value.
        if (v == "true") args.push_back(name);
        continue;
      }
      args.push_back(name);
      args.push_back(v);
    }
    return args;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(run_json.string() + ": malformed run.json: " + e.what());
  }
}

int Dispatch(const std::vector<std::string>& args);

int Dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Territory-aware gated loss: phantoms, training, evaluation, "
               "ASPECTS scoring.",
               "tagl"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Root seed of every random stream")
      ->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and run.json")
      ->transform(AbsolutePath())
      ->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--format", g.format, "Report format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();

  CLI::App* phantom = app.add_subcommand("phantom", "Synthetic datasets");
  phantom->require_subcommand(1);
  CLI::App* gen = phantom->add_subcommand("gen", "Generate a paired BG/SG dataset");
  PhantomFlags phantom_flags;
  AddPhantomFlags(gen, phantom_flags);

  CLI::App* train = app.add_subcommand("train", "Train the linear head");
  TrainArgs train_args;
  train->add_option("--dataset", train_args.dataset, "Manifest file or directory")
      ->required()
      ->transform(AbsolutePath())
      ->check(CLI::ExistingPath);
  AddTrainFlags(train, train_args.train, true);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  EvalArgs eval_args;
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint .json")
      ->required()
      ->transform(AbsolutePath());
  eval->add_option("--dataset", eval_args.dataset, "Manifest file or directory")
      ->required()
      ->transform(AbsolutePath())
      ->check(CLI::ExistingPath);
  eval->add_option("--split", eval_args.split)
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  AddEvalFlags(eval, eval_args.eval);

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  GradcheckArgs gc_args;
  gradcheck->add_option("--size,--sizes", gc_args.sizes, "Grid sides (repeatable)")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--trials", gc_args.cfg.trials, "Instances per suite")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gradcheck->add_option("--epsilon", gc_args.cfg.epsilon)->capture_default_str();
  gradcheck->add_option("--tolerance", gc_args.cfg.tolerance)->capture_default_str();
  gradcheck->add_option("--e2e-epsilon", gc_args.cfg.e2e_epsilon)
      ->capture_default_str();
  gradcheck->add_option("--e2e-tolerance", gc_args.cfg.e2e_tolerance)
      ->capture_default_str();
  gradcheck->add_option("--e2e-size", gc_args.cfg.e2e_size)->capture_default_str();

  CLI::App* ablate = app.add_subcommand("ablate", "Seeds x configurations study");
  AblateArgs ab_args;
  ablate->add_option("--seeds", ab_args.seeds,
                     "Comma-separated seeds (default: --seed .. --seed+4)")
      ->delimiter(',');
  ablate->add_option("--configs", ab_args.configs,
                     "Subset of ce_only,ce_tagl,ce_tagl_fixed_q")
      ->delimiter(',');
  AddPhantomFlags(ablate, ab_args.phantom);
  AddTrainFlags(ablate, ab_args.train, false);
  AddEvalFlags(ablate, ab_args.eval);

  CLI::App* score = app.add_subcommand("score", "ASPECTS from prediction maps");
  ScoreArgs score_args;
  for (auto [flag, target] :
       {std::pair{"--bg-pred", &score_args.bg_pred},
        std::pair{"--sg-pred", &score_args.sg_pred},
        std::pair{"--bg-atlas", &score_args.bg_atlas},
        std::pair{"--sg-atlas", &score_args.sg_atlas}}) {
    score->add_option(flag, *target)
        ->required()
        ->transform(AbsolutePath())
        ->check(CLI::ExistingFile);
  }
  AddEvalFlags(score, score_args.eval);

  CLI::App* rerun = app.add_subcommand("rerun", "Re-execute a run from its run.json");
  std::string run_json;
  rerun->add_option("run_json", run_json, "Path to run.json")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e);
      return kExitOk;
    }
    std::cerr << "tagl: " << e.what() << "\n"
              << "Run with --help for usage.\n";
    return kExitUsage;
  }

  try {
    if (rerun->parsed()) {
      std::optional<std::string> out_dir;
      std::optional<std::size_t> threads;
      if (app.get_option("--out-dir")->count() > 0) out_dir = g.out_dir;
      if (app.get_option("--threads")->count() > 0) threads = g.threads;
      return Dispatch(RerunArgs(run_json, out_dir, threads));
    }
    if (gen->parsed()) return CmdPhantomGen(g, phantom_flags, app, *gen);
    if (train->parsed()) return CmdTrain(g, train_args, app, *train);
    if (eval->parsed()) return CmdEval(g, eval_args, app, *eval);
    if (gradcheck->parsed()) return CmdGradcheck(g, gc_args, app, *gradcheck);
    if (ablate->parsed()) return CmdAblate(g, ab_args, app, *ablate);
    if (score->parsed()) return CmdScore(g, score_args, app, *score);
  } catch (const UsageError& e) {
    std::cerr << "tagl: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "tagl: error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace

int run(const std::vector<std::string>& args) { return Dispatch(args); }

}  // namespace tagl::cli
