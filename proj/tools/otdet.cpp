/*
 * Copyright 2026 The otdet Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: synth, refine, score, eval, sweep.
//
// Exit codes: 0 success, 1 unexpected failure, 2 bad input (flags, files,
// formats, invalid values), 3 Sinkhorn non-convergence.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "otdet/otdet.hpp"

namespace fs = std::filesystem;

namespace otdet {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;

void EnsureParent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::optional<std::size_t> ParseBatch(const std::string& s) {
  if (s == "all") return std::nullopt;
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v < 1) {
    throw Error(ErrorCode::kInvalidArgument, "batch size must be 'all' or >= 1, got '" + s + "'");
  }
  return static_cast<std::size_t>(v);
}

double ParseReal(const std::string& s, const char* what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + ": cannot parse '" + s + "'");
  }
  return v;
}

FeatureMatrix LoadUnit(const fs::path& path) {
  auto m = ReadFeatures(path);
  if (!m.normalized()) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": rows are not unit norm");
  }
  return m;
}

struct ScoreFlags {
  double epsilon = 90.0;
  double alpha = 0.5;
  std::string batch = "all";
  double tau = 1.0;
  std::size_t max_iter = 100000;
  double tol = 1e-6;
  std::string metric = "cosine";
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  bool joint = false;

  void Register(CLI::App* app) {
    app->add_option("--epsilon", epsilon, "Sharpness of the transport plan")
        ->capture_default_str();
    app->add_option("--alpha", alpha, "Weight of the semantic score")->capture_default_str();
    app->add_option("--batch-size", batch, "Rows per transport problem, or 'all'")
        ->capture_default_str();
    app->add_option("--tau", tau, "Softmax temperature of the MCM baseline")
        ->capture_default_str();
    app->add_option("--max-iter", max_iter, "Sinkhorn iteration cap")->capture_default_str();
    app->add_option("--tol", tol, "L1 marginal tolerance")->capture_default_str();
    app->add_option("--metric", metric, "Cost metric")
        ->check(CLI::IsMember({"cosine", "l2"}))
        ->capture_default_str();
    seed_opt = app->add_option("--seed", seed, "Shuffle rows with this seed before batching");
    app->add_flag("--joint", joint, "Score all test files as one set of rows");
  }

  ScoreConfig ToConfig() const {
    ScoreConfig cfg;
    cfg.epsilon = epsilon;
    cfg.alpha = alpha;
    cfg.batch_size = ParseBatch(batch);
    cfg.baseline_tau = tau;
    cfg.compute_mcm = true;
    cfg.metric = metric == "l2" ? CostMetric::kL2 : CostMetric::kCosine;
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    if (seed_opt->count() > 0) cfg.shuffle_seed = seed;
    cfg.Validate();
    return cfg;
  }
};

struct ScoreSet {
  FeatureMatrix features;
  std::vector<std::string> ids;
};

ScoreSet LoadSet(const fs::path& path) {
  auto m = LoadUnit(path);
  auto ids = SampleIdsFor(path, m.rows());
  return {std::move(m), std::move(ids)};
}

// Scores each set on its own, or all sets as one block of rows when joint.
// Records come back grouped per set.
std::vector<std::vector<ScoreRecord>> ScoreSets(const std::vector<ScoreSet>& sets,
                                                const FeatureMatrix& text,
                                                const ScoreConfig& cfg, bool joint) {
  std::vector<std::vector<ScoreRecord>> out;
  if (!joint || sets.size() == 1) {
    for (const auto& s : sets) out.push_back(ScorePipeline(s.features, text, cfg, s.ids));
    return out;
  }
  std::vector<FeatureMatrix> parts;
  std::vector<std::string> ids;
  for (const auto& s : sets) {
    parts.push_back(s.features);
    ids.insert(ids.end(), s.ids.begin(), s.ids.end());
  }
  const auto all = ScorePipeline(ConcatRows(parts), text, cfg, ids);
  std::size_t at = 0;
  for (const auto& s : sets) {
    out.emplace_back(all.begin() + static_cast<std::ptrdiff_t>(at),
                     all.begin() + static_cast<std::ptrdiff_t>(at + s.ids.size()));
    at += s.ids.size();
  }
  return out;
}

DetectionReport EvaluateRecords(const std::vector<ScoreRecord>& id,
                                const std::vector<ScoreRecord>& ood, ScoreColumn column) {
  return Evaluate(ExtractColumn(id, column), ExtractColumn(ood, column));
}

// ---------------------------------------------------------------- synth

struct SynthCmd {
  SyntheticSpec spec;
  fs::path out = ".";

  void Register(CLI::App* app) {
    app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--seed", spec.seed)->capture_default_str();
    app->add_option("--labels", spec.n_labels, "Number of ID labels")->capture_default_str();
    app->add_option("--n-id", spec.n_id)->capture_default_str();
    app->add_option("--n-ood", spec.n_ood)->capture_default_str();
    app->add_option("--dim", spec.dim)->capture_default_str();
    app->add_option("--sigma", spec.noise_sigma, "Sample noise")->capture_default_str();
    app->add_option("--ood-offset", spec.ood_offset, "Min angle (rad) of OOD centres to labels")
        ->capture_default_str();
    app->add_option("--ood-clusters", spec.ood_clusters)->capture_default_str();
    app->add_option("--n-views", spec.n_views, "Views per sample (0: none)")
        ->capture_default_str();
    app->add_option("--view-sigma", spec.view_sigma)->capture_default_str();
    app->add_option("--distractor-fraction", spec.distractor_fraction)->capture_default_str();
    app->add_option("--distractor-pull", spec.distractor_pull)->capture_default_str();
  }

  int Run() const {
    const auto data = GenerateSynthetic(spec);
    fs::create_directories(out);
    WriteFeatures(data.text, out / "text.otdf");
    WriteLabels(LabelSet(data.label_names), out / "text.labels.txt");
    WriteFeatures(data.id, out / "id.otdf");
    WriteLines(out / "id.ids.txt", data.id_ids);
    WriteFeatures(data.ood, out / "ood.otdf");
    WriteLines(out / "ood.ids.txt", data.ood_ids);
    std::vector<std::string> truth;
    for (auto l : data.id_labels) truth.push_back(std::to_string(l));
    WriteLines(out / "id.truth.txt", truth);
    if (data.id_views) {
      WriteFeatures(data.id_views->views, out / "id_views.otdf");
      WriteManifest(data.id_views->manifest, out / "id_views.manifest.json");
      WriteFeatures(data.ood_views->views, out / "ood_views.otdf");
      WriteManifest(data.ood_views->manifest, out / "ood_views.manifest.json");
    }
    std::printf("wrote %zu labels, %zu ID and %zu OOD rows to %s\n", spec.n_labels,
                spec.n_id, spec.n_ood, out.string().c_str());
    return kExitOk;
  }
};

// ---------------------------------------------------------------- refine

struct SacrFlags {
  std::size_t k = 20;
  std::string confidence = "max-margin";
  bool no_consistency = false;

  void Register(CLI::App* app) {
    app->add_option("--k", k, "Views kept per sample")->capture_default_str();
    app->add_option("--confidence", confidence, "View ranking")
        ->check(CLI::IsMember({"max-margin", "min-margin", "min-entropy"}))
        ->capture_default_str();
    app->add_flag("--no-label-consistency", no_consistency,
                  "Keep views whose label disagrees with the original");
  }

  SacrConfig ToConfig() const {
    SacrConfig cfg;
    cfg.k = k;
    cfg.confidence = ParseConfidenceFunction(confidence);
    cfg.require_label_consistency = !no_consistency;
    cfg.Validate();
    return cfg;
  }
};

struct RefineCmd {
  fs::path views, manifest, text, test, out;
  SacrFlags sacr;

  void Register(CLI::App* app) {
    app->add_option("--views", views, "View features (OTDF)")->required();
    app->add_option("--manifest", manifest, "View bundle manifest (JSON)")->required();
    app->add_option("--text", text, "Label features (OTDF)")->required();
    app->add_option("--test", test,
                    "Original-image features indexed by original_row (default: --views)");
    app->add_option("--out", out, "Refined features (OTDF)")->required();
    sacr.Register(app);
  }

  int Run() const {
    const auto cfg = sacr.ToConfig();
    const auto v = LoadUnit(views);
    const auto m = ReadManifest(manifest);
    const auto t = LoadUnit(text);
    std::optional<FeatureMatrix> originals;
    if (!test.empty()) originals = LoadUnit(test);
    const auto result = RefineAll(v, m, t, cfg, originals ? &*originals : nullptr);
    EnsureParent(out);
    WriteFeatures(result.refined, out);
    std::vector<std::string> ids;
    std::size_t fallbacks = 0;
    for (const auto& d : result.decisions) {
      ids.push_back(d.sample_id);
      fallbacks += d.fallback_used ? 1 : 0;
    }
    WriteLines(SidecarPath(out, ".ids.txt"), ids);
    detail::DumpFile(SidecarPath(out, ".decisions.jsonl"), DecisionsToJsonl(result.decisions));
    std::printf("refined %zu samples (%zu fell back to the original)\n", ids.size(), fallbacks);
    return kExitOk;
  }
};

// ---------------------------------------------------------------- score

struct ScoreCmd {
  std::vector<fs::path> tests;
  fs::path text, out;
  ScoreFlags flags;

  void Register(CLI::App* app) {
    app->add_option("--test", tests, "Test features (OTDF); repeatable")->required();
    app->add_option("--text", text, "Label features (OTDF)")->required();
    app->add_option("--out", out, "Scores CSV")->required();
    flags.Register(app);
  }

  int Run() const {
    const auto cfg = flags.ToConfig();
    const auto t = LoadUnit(text);
    std::vector<ScoreSet> sets;
    for (const auto& p : tests) sets.push_back(LoadSet(p));
    std::vector<ScoreRecord> all;
    for (auto& part : ScoreSets(sets, t, cfg, flags.joint)) {
      all.insert(all.end(), part.begin(), part.end());
    }
    EnsureParent(out);
    WriteScoresCsv(all, out);
    std::printf("scored %zu rows\n", all.size());
    return kExitOk;
  }
};

// ---------------------------------------------------------------- eval

std::vector<ScoreRecord> WithPrefix(const std::vector<ScoreRecord>& recs,
                                    const std::string& prefix) {
  std::vector<ScoreRecord> out;
  for (const auto& r : recs) {
    if (r.sample_id.rfind(prefix, 0) == 0) out.push_back(r);
  }
  return out;
}

void PrintReport(const DetectionReport& r) {
  std::printf("fpr95 %.2f%%  auroc %.2f%%  threshold %s  (n_id %zu, n_ood %zu)\n",
              100.0 * r.fpr95, 100.0 * r.auroc, FormatDouble(r.threshold).c_str(), r.n_id,
              r.n_ood);
}

struct EvalCmd {
  fs::path id, ood, scores, out = ".";
  std::string id_prefix = "id_", ood_prefix = "ood_";
  std::string column = "s_ot";
  std::size_t bins = kDefaultDensityBins;

  void Register(CLI::App* app) {
    auto* g = app->add_option_group("inputs", "Two score files, or one joint file");
    auto* i = g->add_option("--id", id, "ID scores CSV");
    auto* o = g->add_option("--ood", ood, "OOD scores CSV");
    auto* s = g->add_option("--scores", scores, "Joint scores CSV, split by id prefix");
    i->needs(o);
    o->needs(i);
    s->excludes(i)->excludes(o);
    g->require_option(1, 2);
    app->add_option("--id-prefix", id_prefix)->capture_default_str();
    app->add_option("--ood-prefix", ood_prefix)->capture_default_str();
    app->add_option("--score-column", column)
        ->check(CLI::IsMember({"s_ot", "s_sem", "s_dist", "s_mcm"}))
        ->capture_default_str();
    app->add_option("--bins", bins, "Density bins")->capture_default_str();
    app->add_option("--out", out, "Directory for metrics.json and density.csv")
        ->capture_default_str();
  }

  int Run() const {
    std::vector<ScoreRecord> id_recs, ood_recs;
    if (!scores.empty()) {
      const auto all = ReadScoresCsv(scores);
      id_recs = WithPrefix(all, id_prefix);
      ood_recs = WithPrefix(all, ood_prefix);
    } else {
      id_recs = ReadScoresCsv(id);
      ood_recs = ReadScoresCsv(ood);
    }
    const auto col = ParseScoreColumn(column);
    const auto id_s = ExtractColumn(id_recs, col);
    const auto ood_s = ExtractColumn(ood_recs, col);
    const auto report = Evaluate(id_s, ood_s);
    const auto density = Density(id_s, ood_s, bins);
    fs::create_directories(out);
    detail::DumpFile(out / "metrics.json", MetricsToJson(report));
    detail::DumpFile(out / "density.csv", DensityToCsv(density));
    PrintReport(report);
    return kExitOk;
  }
};

// ---------------------------------------------------------------- sweep

struct SweepCmd {
  fs::path id, ood, text, out;
  fs::path id_views, id_manifest, ood_views, ood_manifest;
  std::string axis;
  std::vector<std::string> values;
  std::string column = "s_ot";
  ScoreFlags flags;
  SacrFlags sacr;

  void Register(CLI::App* app) {
    app->add_option("--id", id, "ID test features (OTDF)")->required();
    app->add_option("--ood", ood, "OOD test features (OTDF)")->required();
    app->add_option("--text", text, "Label features (OTDF)")->required();
    app->add_option("--out", out, "Sweep CSV")->required();
    app->add_option("--axis", axis)
        ->required()
        ->check(CLI::IsMember({"alpha", "epsilon", "batch", "k"}));
    app->add_option("--values", values, "Comma-separated grid")->required()->delimiter(',');
    app->add_option("--score-column", column)
        ->check(CLI::IsMember({"s_ot", "s_sem", "s_dist", "s_mcm"}))
        ->capture_default_str();
    app->add_option("--id-views", id_views, "ID view features, for the k axis");
    app->add_option("--id-manifest", id_manifest);
    app->add_option("--ood-views", ood_views, "OOD view features, for the k axis");
    app->add_option("--ood-manifest", ood_manifest);
    flags.Register(app);
    sacr.Register(app);
  }

  int Run() const {
    auto cfg = flags.ToConfig();
    const auto col = ParseScoreColumn(column);
    const auto t = LoadUnit(text);
    const std::vector<ScoreSet> sets{LoadSet(id), LoadSet(ood)};

    struct Views {
      FeatureMatrix views;
      ViewBundleManifest manifest;
    };
    std::vector<Views> views;
    if (axis == "k") {
      if (id_views.empty() || id_manifest.empty() || ood_views.empty() ||
          ood_manifest.empty()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "the k axis needs --id-views, --id-manifest, --ood-views and "
                    "--ood-manifest");
      }
      views.push_back({LoadUnit(id_views), ReadManifest(id_manifest)});
      views.push_back({LoadUnit(ood_views), ReadManifest(ood_manifest)});
    }

    // alpha only re-mixes cached scores.
    std::optional<std::vector<std::vector<ScoreRecord>>> cached;
    if (axis == "alpha") cached = ScoreSets(sets, t, cfg, flags.joint);

    std::string csv = "axis,value,fpr95,auroc,threshold,status\n";
    std::size_t failed = 0;
    for (const auto& value : values) {
      std::string row = axis + "," + value + ",";
      try {
        std::vector<std::vector<ScoreRecord>> recs;
        if (axis == "alpha") {
          const double a = ParseReal(value, "alpha");
          recs = {Reweight((*cached)[0], a), Reweight((*cached)[1], a)};
        } else if (axis == "epsilon") {
          auto c = cfg;
          c.epsilon = ParseReal(value, "epsilon");
          c.Validate();
          recs = ScoreSets(sets, t, c, flags.joint);
        } else if (axis == "batch") {
          auto c = cfg;
          c.batch_size = ParseBatch(value);
          recs = ScoreSets(sets, t, c, flags.joint);
        } else {
          auto s = sacr.ToConfig();
          const double kv = ParseReal(value, "k");
          if (kv < 1 || kv != static_cast<double>(static_cast<std::size_t>(kv))) {
            throw Error(ErrorCode::kInvalidArgument, "k must be a positive integer");
          }
          s.k = static_cast<std::size_t>(kv);
          std::vector<ScoreSet> refined;
          for (std::size_t i = 0; i < 2; ++i) {
            auto r = RefineAll(views[i].views, views[i].manifest, t, s, &sets[i].features);
            std::vector<std::string> ids;
            for (const auto& d : r.decisions) ids.push_back(d.sample_id);
            refined.push_back({std::move(r.refined), std::move(ids)});
          }
          recs = ScoreSets(refined, t, cfg, flags.joint);
        }
        const auto rep = EvaluateRecords(recs[0], recs[1], col);
        row += FormatDouble(rep.fpr95) + "," + FormatDouble(rep.auroc) + "," +
               FormatDouble(rep.threshold) + ",ok";
      } catch (const Error& e) {
        ++failed;
        std::string what = e.what();
        for (char& ch : what) {
          if (ch == ',' || ch == '\n') ch = ';';
        }
        std::fprintf(stderr, "sweep point %s=%s failed: %s\n", axis.c_str(), value.c_str(),
                     e.what());
        row += ",,,failed: " + what;
      }
      csv += row + "\n";
    }
    EnsureParent(out);
    detail::DumpFile(out, csv);
    std::printf("swept %zu %s values (%zu failed)\n", values.size(), axis.c_str(), failed);
    return kExitOk;
  }
};

int Main(int argc, char** argv) {
  CLI::App app{"Entropic-OT out-of-distribution scoring over precomputed embeddings"};
  app.set_config("--config", "", "TOML/INI file of flag values; flags on the command line win");
  app.require_subcommand(1);

  SynthCmd synth;
  RefineCmd refine;
  ScoreCmd score;
  EvalCmd eval;
  SweepCmd sweep;
  auto* synth_app = app.add_subcommand("synth", "Write a synthetic embedding fixture");
  auto* refine_app = app.add_subcommand("refine", "Fuse label-consistent views per sample");
  auto* score_app = app.add_subcommand("score", "Score test rows against the labels");
  auto* eval_app = app.add_subcommand("eval", "FPR95, AUROC and density from score files");
  auto* sweep_app = app.add_subcommand("sweep", "Metrics over a grid of one setting");
  synth.Register(synth_app);
  refine.Register(refine_app);
  score.Register(score_app);
  eval.Register(eval_app);
  sweep.Register(sweep_app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*synth_app) return synth.Run();
    if (*refine_app) return refine.Run();
    if (*score_app) return score.Run();
    if (*eval_app) return eval.Run();
    if (*sweep_app) return sweep.Run();
  } catch (const NonConvergenceError& e) {
    std::fprintf(stderr, "otdet: %s\n", e.what());
    return kExitSolver;
  } catch (const Error& e) {
    std::fprintf(stderr, "otdet: %s\n", e.what());
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "otdet: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "otdet: unexpected failure: %s\n", e.what());
    return kExitOther;
  }
  return kExitOther;
}

}  // namespace
}  // namespace otdet

int main(int argc, char** argv) { return otdet::Main(argc, argv); }
