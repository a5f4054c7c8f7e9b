// zrs/pipeline.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Pipeline orchestration: JSON configuration, per-command execution, and
// machine-readable run reports.
//
// Commands and their artifacts, all inside the work directory:
//   synth    corpus/            manifest, segments, features, truth files
//   cluster  cluster/           per-language ZRSM model + label CSV + CDF report
//   filter   filter/P_<tag>/    per-language filtered labels + filter report
//   align    align/P_<tag>/     per-language ZRSH model, transcriptions,
//                               phone- and state-level alignment CSVs
//   train    train/P_<tag>/     ZRSN network + JSON-lines training log
//   extract  extract/P_<tag>/   BNF feature files + manifest
//   abx      abx/               JSON + CSV reports per condition (and per P
//                               when scoring bottleneck features)
//   run-all  all of the above plus a linking report with the raw-vs-BNF table
//
// Every command writes exactly one RunReport (reports/<command>_report.json),
// also on failure. Configuration is strict JSON: unknown keys are errors.
// All artifact files are pure functions of (inputs, config, seed); the run
// reports additionally carry wall-clock timings, so byte-stability is
// guaranteed for artifacts, not reports.
//
// Languages are processed independently end to end: clustering, alignment
// and ABX scoring never mix frames or segments across language ids, and the
// reported ABX numbers average the per-language overall values.

#ifndef ZRS_PIPELINE_HPP_
#define ZRS_PIPELINE_HPP_

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "zrs/abx.hpp"
#include "zrs/dpgmm.hpp"
#include "zrs/feature_store.hpp"
#include "zrs/frame_matrix.hpp"
#include "zrs/hmm.hpp"
#include "zrs/label_filter.hpp"
#include "zrs/mtl.hpp"
#include "zrs/rng.hpp"
#include "zrs/synthetic.hpp"

namespace zrs {

/// Configuration problems exit with code 2; everything else with 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MtlTaskSpec {
  std::string name;
  std::string source;       // dpgmm | dpgmm-hmm-phone | dpgmm-hmm-state | external
  std::string language;     // empty = all languages
  std::string labels_path;  // external source only
};

struct PipelineConfig {
  std::string manifest_path;  // empty = <work_dir>/corpus/manifest.csv
  std::string segments_path;  // empty = alongside the manifest
  std::string work_dir = "work";

  bool cmvn = true;
  std::uint32_t splice_context = 2;

  std::optional<SyntheticSpec> synth;

  double dpgmm_alpha = 1.0;
  std::uint32_t dpgmm_sweeps = 40;
  double dpgmm_kappa0 = 1e-2;
  double dpgmm_a0 = 1.0;

  std::vector<double> p_values{1.0};

  HmmTrainConfig hmm;

  std::vector<std::uint32_t> shared_dims{32, 32};
  std::uint32_t bottleneck_dim = 8;
  std::vector<std::uint32_t> post_dims{32};
  MtlTrainConfig mtl;
  std::vector<MtlTaskSpec> tasks;

  std::string condition = "both";  // within | across | both
  bool flat_average = false;
  std::string abx_features = "raw";  // raw | bnf

  std::uint64_t seed = 0;
  std::uint64_t digest = 0;  // FNV-1a of the canonical config dump
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& context,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("config: " + context + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed)
      if (it.key() == key) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("config: unknown key \"" + it.key() + "\" in " +
                        context);
  }
}

inline std::vector<double> parse_p_grid(const std::string& grid) {
  double a = 0, b = 0, step = 0;
  if (std::sscanf(grid.c_str(), "%lf:%lf:%lf", &a, &b, &step) != 3)
    throw ConfigError("config: P grid must be a:b:step, got " + grid);
  if (!(step > 0.0) || !(a > 0.0) || a > b || b > 1.0)
    throw ConfigError("config: invalid P grid " + grid);
  std::vector<double> values;
  for (int k = 0;; ++k) {
    double p = a + k * step;
    if (p > b + 1e-9) break;
    values.push_back(std::min(p, 1.0));
  }
  return values;
}

inline std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", p);
  return buf;
}

inline void validate_p(double p) {
  if (!(p > 0.0) || p > 1.0)
    throw ConfigError("config: P must be in (0, 1], got " + format_p(p));
}

}  // namespace detail

inline PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
  PipelineConfig c;
  detail::check_keys(j, "top level",
                     {"paths", "features", "synth", "dpgmm", "filter", "hmm",
                      "mtl", "abx", "seed"});
  try {
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      detail::check_keys(p, "paths", {"manifest", "segments", "work_dir"});
      if (p.contains("manifest")) c.manifest_path = p["manifest"];
      if (p.contains("segments")) c.segments_path = p["segments"];
      if (p.contains("work_dir")) c.work_dir = p["work_dir"];
    }
    if (j.contains("features")) {
      const auto& f = j["features"];
      detail::check_keys(f, "features", {"cmvn", "splice_context"});
      if (f.contains("cmvn")) c.cmvn = f["cmvn"];
      if (f.contains("splice_context")) c.splice_context = f["splice_context"];
    }
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      detail::check_keys(s, "synth",
                         {"num_languages", "speakers_per_language",
                          "utterances_per_speaker", "units_per_utterance",
                          "num_units", "dim", "separation", "shift_scale",
                          "mean_dwell"});
      SyntheticSpec spec;
      if (s.contains("num_languages")) spec.num_languages = s["num_languages"];
      if (s.contains("speakers_per_language"))
        spec.speakers_per_language = s["speakers_per_language"];
      if (s.contains("utterances_per_speaker"))
        spec.utterances_per_speaker = s["utterances_per_speaker"];
      if (s.contains("units_per_utterance"))
        spec.units_per_utterance = s["units_per_utterance"];
      if (s.contains("num_units")) spec.num_units = s["num_units"];
      if (s.contains("dim")) spec.dim = s["dim"];
      if (s.contains("separation")) spec.separation = s["separation"];
      if (s.contains("shift_scale")) spec.shift_scale = s["shift_scale"];
      if (s.contains("mean_dwell")) spec.mean_dwell = s["mean_dwell"];
      try {
        spec.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
      c.synth = spec;
    }
    if (j.contains("dpgmm")) {
      const auto& d = j["dpgmm"];
      detail::check_keys(d, "dpgmm", {"alpha", "sweeps", "kappa0", "a0"});
      if (d.contains("alpha")) c.dpgmm_alpha = d["alpha"];
      if (d.contains("sweeps")) c.dpgmm_sweeps = d["sweeps"];
      if (d.contains("kappa0")) c.dpgmm_kappa0 = d["kappa0"];
      if (d.contains("a0")) c.dpgmm_a0 = d["a0"];
      if (!(c.dpgmm_alpha > 0.0) || !(c.dpgmm_kappa0 > 0.0) ||
          !(c.dpgmm_a0 > 0.0) || c.dpgmm_sweeps == 0)
        throw ConfigError("config: invalid dpgmm settings");
    }
    if (j.contains("filter")) {
      const auto& f = j["filter"];
      detail::check_keys(f, "filter", {"P", "P_grid"});
      if (f.contains("P") && f.contains("P_grid"))
        throw ConfigError("config: give either filter.P or filter.P_grid");
      if (f.contains("P")) {
        c.p_values = {f["P"].get<double>()};
        detail::validate_p(c.p_values[0]);
      } else if (f.contains("P_grid")) {
        c.p_values = detail::parse_p_grid(f["P_grid"]);
      }
    }
    if (j.contains("hmm")) {
      const auto& h = j["hmm"];
      detail::check_keys(h, "hmm", {"iterations", "num_components"});
      if (h.contains("iterations")) c.hmm.iterations = h["iterations"];
      if (h.contains("num_components"))
        c.hmm.num_components = h["num_components"];
      try {
        c.hmm.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
    if (j.contains("mtl")) {
      const auto& m = j["mtl"];
      detail::check_keys(m, "mtl",
                         {"shared_dims", "bottleneck_dim", "post_dims",
                          "learning_rate", "halving_patience", "minibatch",
                          "max_epochs", "cv_fraction", "tasks"});
      if (m.contains("shared_dims"))
        c.shared_dims = m["shared_dims"].get<std::vector<std::uint32_t>>();
      if (m.contains("bottleneck_dim")) c.bottleneck_dim = m["bottleneck_dim"];
      if (m.contains("post_dims"))
        c.post_dims = m["post_dims"].get<std::vector<std::uint32_t>>();
      if (m.contains("learning_rate")) c.mtl.learning_rate = m["learning_rate"];
      if (m.contains("halving_patience"))
        c.mtl.halving_patience = m["halving_patience"];
      if (m.contains("minibatch")) c.mtl.minibatch = m["minibatch"];
      if (m.contains("max_epochs")) c.mtl.max_epochs = m["max_epochs"];
      if (m.contains("cv_fraction")) c.mtl.cv_fraction = m["cv_fraction"];
      try {
        c.mtl.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
      if (m.contains("tasks")) {
        for (const auto& t : m["tasks"]) {
          detail::check_keys(t, "mtl.tasks[]",
                             {"name", "source", "language", "labels"});
          MtlTaskSpec task;
          if (t.contains("name")) task.name = t["name"];
          if (!t.contains("source"))
            throw ConfigError("config: mtl task without source");
          task.source = t["source"];
          if (task.source != "dpgmm" && task.source != "dpgmm-hmm-phone" &&
              task.source != "dpgmm-hmm-state" && task.source != "external")
            throw ConfigError("config: unknown task source " + task.source);
          if (t.contains("language")) task.language = t["language"];
          if (t.contains("labels")) task.labels_path = t["labels"];
          if (task.source == "external" && task.labels_path.empty())
            throw ConfigError("config: external task needs a labels path");
          if (task.name.empty()) {
            task.name = task.source;
            if (!task.language.empty()) task.name += "_" + task.language;
          }
          c.tasks.push_back(std::move(task));
        }
      }
    }
    if (j.contains("abx")) {
      const auto& a = j["abx"];
      detail::check_keys(a, "abx", {"condition", "flat_average", "features"});
      if (a.contains("condition")) c.condition = a["condition"];
      if (c.condition != "within" && c.condition != "across" &&
          c.condition != "both")
        throw ConfigError("config: abx condition must be within|across|both");
      if (a.contains("flat_average")) c.flat_average = a["flat_average"];
      if (a.contains("features")) c.abx_features = a["features"];
      if (c.abx_features != "raw" && c.abx_features != "bnf")
        throw ConfigError("config: abx features must be raw|bnf");
    }
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.digest = fnv1a64(j.dump());
  return c;
}

namespace detail {

inline void write_json_file(const std::filesystem::path& path,
                            const nlohmann::json& j) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

/// The corpus a command operates on: raw features plus the normalized view
/// used by clustering, alignment and the MLP front end.
struct LoadedCorpus {
  std::filesystem::path manifest_path;
  CorpusManifest manifest;
  std::map<std::string, FrameMatrix> raw;
  std::map<std::string, FrameMatrix> processed;
  std::vector<std::string> languages;  // sorted unique

  std::vector<const UtteranceEntry*> utterances_of(
      const std::string& language) const {
    std::vector<const UtteranceEntry*> out;
    for (const auto& u : manifest.utterances)
      if (language.empty() || u.language_id == language) out.push_back(&u);
    return out;
  }
};

struct CommandContext {
  PipelineConfig config;
  std::filesystem::path work_dir;
  std::uint64_t seed = 0;
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();
  std::vector<std::string> artifacts;

  std::filesystem::path manifest_path() const {
    if (!config.manifest_path.empty()) return config.manifest_path;
    return work_dir / "corpus" / "manifest.csv";
  }
  std::filesystem::path segments_path() const {
    if (!config.segments_path.empty()) return config.segments_path;
    return manifest_path().parent_path() / "segments.csv";
  }
  void add_artifact(const std::filesystem::path& p) {
    artifacts.push_back(p.string());
  }
};

class StageTimer {
 public:
  StageTimer(CommandContext& ctx, std::string name)
      : ctx_(ctx), name_(std::move(name)),
        start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    auto elapsed = std::chrono::steady_clock::now() - start_;
    ctx_.timings[name_] =
        std::chrono::duration<double>(elapsed).count();
  }

 private:
  CommandContext& ctx_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

inline LoadedCorpus load_corpus(const CommandContext& ctx) {
  LoadedCorpus corpus;
  corpus.manifest_path = ctx.manifest_path();
  if (!std::filesystem::exists(corpus.manifest_path))
    throw ConfigError("manifest not found: " + corpus.manifest_path.string());
  std::filesystem::path segments = ctx.segments_path();
  corpus.manifest = read_manifest(corpus.manifest_path, segments);
  std::set<std::string> langs;
  for (const auto& u : corpus.manifest.utterances) {
    FrameMatrix m = read_feature_file(
        resolve_feature_path(corpus.manifest_path, u.path));
    corpus.processed[u.utt_id] =
        ctx.config.cmvn ? cmvn(m) : m;
    corpus.raw[u.utt_id] = std::move(m);
    langs.insert(u.language_id);
  }
  corpus.languages.assign(langs.begin(), langs.end());
  return corpus;
}

inline std::filesystem::path cluster_dir(const CommandContext& ctx) {
  return ctx.work_dir / "cluster";
}
inline std::filesystem::path filter_dir(const CommandContext& ctx, double p) {
  return ctx.work_dir / "filter" / ("P_" + format_p(p));
}
inline std::filesystem::path align_dir(const CommandContext& ctx, double p) {
  return ctx.work_dir / "align" / ("P_" + format_p(p));
}
inline std::filesystem::path train_dir(const CommandContext& ctx, double p) {
  return ctx.work_dir / "train" / ("P_" + format_p(p));
}
inline std::filesystem::path extract_dir(const CommandContext& ctx, double p) {
  return ctx.work_dir / "extract" / ("P_" + format_p(p));
}

}  // namespace detail

inline void cmd_synth(detail::CommandContext& ctx) {
  if (!ctx.config.synth)
    throw ConfigError("synth: config has no synth section");
  detail::StageTimer timer(ctx, "synth");
  auto out_dir = ctx.work_dir / "corpus";
  SyntheticCorpus corpus = generate_synthetic_corpus(
      *ctx.config.synth, derive_seed(ctx.seed, "synth"), out_dir);
  ctx.add_artifact(out_dir / "manifest.csv");
  ctx.add_artifact(out_dir / "segments.csv");
  ctx.add_artifact(out_dir / "true_labels.csv");
  ctx.add_artifact(out_dir / "true_transcriptions.csv");
  ctx.metrics["synth"] = {
      {"utterances", corpus.manifest.utterances.size()},
      {"segments", corpus.manifest.segments.size()},
  };
}

inline void cmd_cluster(detail::CommandContext& ctx) {
  detail::StageTimer timer(ctx, "cluster");
  detail::LoadedCorpus corpus = detail::load_corpus(ctx);
  auto out_dir = detail::cluster_dir(ctx);
  std::filesystem::create_directories(out_dir);

  nlohmann::json cdf_report = nlohmann::json::object();
  for (const auto& lang : corpus.languages) {
    auto entries = corpus.utterances_of(lang);
    std::uint64_t total_frames = 0;
    std::uint32_t dim = 0;
    for (const auto* u : entries) {
      const auto& m = corpus.processed.at(u->utt_id);
      total_frames += m.num_frames();
      dim = m.dim();
    }
    FrameMatrix pooled(static_cast<std::uint32_t>(total_frames), dim);
    std::uint32_t row = 0;
    for (const auto* u : entries) {
      const auto& m = corpus.processed.at(u->utt_id);
      for (std::uint32_t t = 0; t < m.num_frames(); ++t, ++row)
        for (std::uint32_t d = 0; d < dim; ++d)
          pooled.at(row, d) = m.at(t, d);
    }

    DpgmmConfig config;
    config.alpha = ctx.config.dpgmm_alpha;
    config.sweeps = ctx.config.dpgmm_sweeps;
    config.prior.kappa0 = ctx.config.dpgmm_kappa0;
    config.prior.a0 = ctx.config.dpgmm_a0;
    config.seed = derive_seed(ctx.seed, "cluster:" + lang);
    DpgmmModel model = dpgmm_fit(pooled, config);

    LabelMap labels;
    std::vector<LabelSequence> sequences;
    for (const auto* u : entries) {
      LabelSequence seq = dpgmm_assign(model, corpus.processed.at(u->utt_id));
      sequences.push_back(seq);
      labels[u->utt_id] = std::move(seq);
    }

    auto model_path = out_dir / (lang + ".zrsm");
    auto labels_path = out_dir / (lang + "_labels.csv");
    write_dpgmm_model(model_path, model);
    write_labels_csv(labels_path, labels);
    ctx.add_artifact(model_path);
    ctx.add_artifact(labels_path);

    nlohmann::json cdf = nlohmann::json::array();
    for (const auto& [k, q] : cluster_cdf(sequences)) cdf.push_back({k, q});
    cdf_report[lang] = {{"num_clusters", model.num_clusters()},
                        {"num_frames", total_frames},
                        {"cdf", cdf}};
    ctx.metrics["cluster"][lang] = {{"K", model.num_clusters()},
                                    {"frames", total_frames}};
  }
  auto report_path = out_dir / "cdf_report.json";
  detail::write_json_file(report_path, {{"languages", cdf_report}});
  ctx.add_artifact(report_path);
}

inline void cmd_filter(detail::CommandContext& ctx) {
  detail::StageTimer timer(ctx, "filter");
  detail::LoadedCorpus corpus = detail::load_corpus(ctx);
  auto in_dir = detail::cluster_dir(ctx);

  for (double p : ctx.config.p_values) {
    auto out_dir = detail::filter_dir(ctx, p);
    std::filesystem::create_directories(out_dir);
    nlohmann::json report_langs = nlohmann::json::object();
    for (const auto& lang : corpus.languages) {
      auto labels_path = in_dir / (lang + "_labels.csv");
      auto model_path = in_dir / (lang + ".zrsm");
      if (!std::filesystem::exists(labels_path))
        throw ConfigError("filter: missing labels " + labels_path.string());
      LabelMap labels = read_labels_csv(labels_path);
      std::uint32_t num_clusters =
          read_dpgmm_model(model_path).num_clusters();

      auto entries = corpus.utterances_of(lang);
      LabelSequence pooled;
      for (const auto* u : entries) {
        const auto& seq = labels.at(u->utt_id);
        pooled.insert(pooled.end(), seq.begin(), seq.end());
      }
      FilterResult result = filter_labels(pooled, num_clusters, p);

      LabelMap filtered;
      for (const auto* u : entries)
        filtered[u->utt_id] =
            apply_filter(labels.at(u->utt_id), result.removed_clusters);
      auto out_path = out_dir / (lang + "_labels.csv");
      write_labels_csv(out_path, filtered);
      ctx.add_artifact(out_path);

      report_langs[lang] = {
          {"K", num_clusters},
          {"N", pooled.size()},
          {"P", p},
          {"K_cut", result.k_cut},
          {"removed_frames", result.removed_positions.size()},
          {"retained_fraction",
           1.0 - static_cast<double>(result.removed_positions.size()) /
                     static_cast<double>(pooled.size())},
      };
    }
    auto report_path = out_dir / "filter_report.json";
    detail::write_json_file(report_path, {{"P", p},
                                          {"languages", report_langs}});
    ctx.add_artifact(report_path);
    ctx.metrics["filter"][detail::format_p(p)] = report_langs;
  }
}

inline void cmd_align(detail::CommandContext& ctx) {
  detail::StageTimer timer(ctx, "align");
  detail::LoadedCorpus corpus = detail::load_corpus(ctx);

  for (double p : ctx.config.p_values) {
    auto in_dir = detail::filter_dir(ctx, p);
    auto out_dir = detail::align_dir(ctx, p);
    std::filesystem::create_directories(out_dir);

    for (const auto& lang : corpus.languages) {
      auto labels_path = in_dir / (lang + "_labels.csv");
      if (!std::filesystem::exists(labels_path))
        throw ConfigError("align: missing labels " + labels_path.string());
      LabelMap labels = read_labels_csv(labels_path);

      auto entries = corpus.utterances_of(lang);
      std::vector<FrameMatrix> features;
      std::vector<PseudoTranscription> transcriptions;
      TranscriptionMap transcription_map;
      for (const auto* u : entries) {
        features.push_back(corpus.processed.at(u->utt_id));
        transcriptions.push_back(collapse(labels.at(u->utt_id)));
        transcription_map[u->utt_id] = transcriptions.back();
      }

      HmmModel init = hmm_init_uniform(features, transcriptions);
      HmmTrainConfig train_config = ctx.config.hmm;
      HmmTrainResult trained =
          hmm_em_train(init, features, transcriptions, train_config);

      LabelMap alignment;
      std::uint64_t skipped = 0;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (transcriptions[i].empty()) {
          ++skipped;
          continue;
        }
        alignment[entries[i]->utt_id] =
            viterbi_align(trained.model, features[i], transcriptions[i])
                .frame_units;
      }

      auto model_path = out_dir / (lang + ".zrsh");
      auto transcription_path = out_dir / (lang + "_transcriptions.csv");
      auto phone_path = out_dir / (lang + "_alignment_phone.csv");
      auto state_path = out_dir / (lang + "_alignment_state.csv");
      write_hmm_model(model_path, trained.model);
      write_transcriptions_csv(transcription_path, transcription_map);
      write_labels_csv(phone_path, alignment);
      write_labels_csv(state_path, alignment);
      ctx.add_artifact(model_path);
      ctx.add_artifact(transcription_path);
      ctx.add_artifact(phone_path);
      ctx.add_artifact(state_path);

      nlohmann::json ll = nlohmann::json::array();
      for (double v : trained.iteration_log_likelihood) ll.push_back(v);
      ctx.metrics["align"][detail::format_p(p)][lang] = {
          {"units", trained.model.units.size()},
          {"log_likelihood", ll},
          {"skipped_utterances", skipped},
          {"warnings", trained.warnings},
      };
    }
  }
}

namespace detail {

/// Spliced, normalized network input for one utterance.
inline FrameMatrix mtl_input(const CommandContext& ctx,
                             const LoadedCorpus& corpus,
                             const std::string& utt_id) {
  return splice(corpus.processed.at(utt_id), ctx.config.splice_context);
}

/// Builds one task's dataset from its label source; class ids are dense
/// ranks of the sorted distinct label values.
inline TaskDataset build_task_dataset(const CommandContext& ctx,
                                      const LoadedCorpus& corpus,
                                      const MtlTaskSpec& task, double p) {
  std::filesystem::path labels_path;
  if (task.source == "dpgmm") {
    if (task.language.empty())
      throw ConfigError("train: task " + task.name + " needs a language");
    labels_path = filter_dir(ctx, p) / (task.language + "_labels.csv");
  } else if (task.source == "dpgmm-hmm-phone") {
    if (task.language.empty())
      throw ConfigError("train: task " + task.name + " needs a language");
    labels_path = align_dir(ctx, p) / (task.language + "_alignment_phone.csv");
  } else if (task.source == "dpgmm-hmm-state") {
    if (task.language.empty())
      throw ConfigError("train: task " + task.name + " needs a language");
    labels_path = align_dir(ctx, p) / (task.language + "_alignment_state.csv");
  } else {
    labels_path = task.labels_path;
  }
  if (!std::filesystem::exists(labels_path))
    throw ConfigError("train: missing labels for task " + task.name + ": " +
                      labels_path.string());
  LabelMap labels = read_labels_csv(labels_path);

  std::vector<std::vector<float>> rows;
  std::vector<std::int32_t> raw_targets;
  std::set<std::int32_t> distinct;
  std::uint32_t dim = 0;
  for (const auto* u : corpus.utterances_of(task.language)) {
    auto it = labels.find(u->utt_id);
    if (it == labels.end()) continue;
    FrameMatrix input = mtl_input(ctx, corpus, u->utt_id);
    if (it->second.size() != input.num_frames())
      throw std::runtime_error("train: label length mismatch for " +
                               u->utt_id);
    dim = input.dim();
    for (std::uint32_t t = 0; t < input.num_frames(); ++t) {
      std::int32_t label = it->second[t];
      if (label == kRemovedLabel) continue;
      auto row = input.row(t);
      rows.emplace_back(row.begin(), row.end());
      raw_targets.push_back(label);
      distinct.insert(label);
    }
  }
  if (rows.empty())
    throw std::runtime_error("train: task " + task.name + " has no frames");
  if (distinct.size() < 2)
    throw std::runtime_error("train: task " + task.name +
                             " has fewer than 2 classes");

  std::map<std::int32_t, std::uint32_t> class_of;
  for (std::int32_t label : distinct)
    class_of.emplace(label, static_cast<std::uint32_t>(class_of.size()));

  TaskDataset ds;
  ds.task_id = task.name;
  ds.frames = FrameMatrix(static_cast<std::uint32_t>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::uint32_t d = 0; d < dim; ++d)
      ds.frames.at(static_cast<std::uint32_t>(i), d) = rows[i][d];
  for (std::int32_t label : raw_targets)
    ds.targets.push_back(class_of.at(label));
  return ds;
}

}  // namespace detail

inline void cmd_train(detail::CommandContext& ctx) {
  detail::StageTimer timer(ctx, "train");
  if (ctx.config.tasks.empty())
    throw ConfigError("train: empty task list");
  detail::LoadedCorpus corpus = detail::load_corpus(ctx);

  for (double p : ctx.config.p_values) {
    std::vector<TaskDataset> datasets;
    for (const auto& task : ctx.config.tasks)
      datasets.push_back(detail::build_task_dataset(ctx, corpus, task, p));

    MtlArchitecture arch;
    arch.input_dim = datasets[0].frames.dim();
    arch.shared_dims = ctx.config.shared_dims;
    arch.bottleneck_dim = ctx.config.bottleneck_dim;
    arch.post_dims = ctx.config.post_dims;
    for (const auto& ds : datasets) {
      std::uint32_t classes = 0;
      for (auto y : ds.targets) classes = std::max(classes, y + 1);
      arch.head_classes.push_back(classes);
    }
    MtlNetwork net =
        build_mtl_network(arch, derive_seed(ctx.seed, "mtl:init"));
    MtlTrainConfig train_config = ctx.config.mtl;
    train_config.seed = derive_seed(ctx.seed, "mtl:train");
    MtlTrainResult result = mtl_train(net, datasets, train_config);

    auto out_dir = detail::train_dir(ctx, p);
    std::filesystem::create_directories(out_dir);
    auto net_path = out_dir / "network.zrsn";
    write_mtl_network(net_path, result.net);
    ctx.add_artifact(net_path);

    auto log_path = out_dir / "training_log.jsonl";
    {
      auto os = detail::open_out(log_path);
      for (const auto& e : result.epochs) {
        nlohmann::json line = {{"epoch", e.epoch},
                               {"lr", e.learning_rate},
                               {"cv_combined", e.cv_combined}};
        for (std::size_t task = 0; task < datasets.size(); ++task) {
          line["train_loss_per_task"][datasets[task].task_id] =
              e.train_loss_per_task[task];
          line["cv_loss_per_task"][datasets[task].task_id] =
              e.cv_loss_per_task[task];
        }
        os << line.dump() << '\n';
      }
    }
    ctx.add_artifact(log_path);
    ctx.metrics["train"][detail::format_p(p)] = {
        {"epochs", result.epochs.size()},
        {"final_cv",
         result.epochs.empty() ? 0.0 : result.epochs.back().cv_combined}};
  }
}

inline void cmd_extract(detail::CommandContext& ctx) {
  detail::StageTimer timer(ctx, "extract");
  detail::LoadedCorpus corpus = detail::load_corpus(ctx);

  for (double p : ctx.config.p_values) {
    auto net_path = detail::train_dir(ctx, p) / "network.zrsn";
    if (!std::filesystem::exists(net_path))
      throw ConfigError("extract: missing network " + net_path.string());
    MtlNetwork net = read_mtl_network(net_path);

    auto out_dir = detail::extract_dir(ctx, p);
    std::filesystem::create_directories(out_dir / "features");
    CorpusManifest bnf_manifest = corpus.manifest;
    for (auto& u : bnf_manifest.utterances) {
      FrameMatrix bnf =
          extract_bnf(net, detail::mtl_input(ctx, corpus, u.utt_id));
      u.path = "features/" + u.utt_id + ".zrsf";
      write_feature_file(out_dir / u.path, bnf);
    }
    auto manifest_path = out_dir / "manifest.csv";
    write_manifest(manifest_path, bnf_manifest);
    write_segments(out_dir / "segments.csv", bnf_manifest.segments);
    ctx.add_artifact(manifest_path);
    ctx.metrics["extract"][detail::format_p(p)] = {
        {"bottleneck_dim", net.bottleneck_dim()},
        {"utterances", bnf_manifest.utterances.size()}};
  }
}

namespace detail {

/// Per-language evaluation of one condition over one feature view.
/// Returns the report JSON plus the language-averaged overall error.
inline std::pair<nlohmann::json, double> abx_evaluate_corpus(
    const CommandContext& ctx, const std::filesystem::path& manifest_path,
    const std::filesystem::path& segments_path, AbxCondition condition) {
  CorpusManifest manifest = read_manifest(manifest_path, segments_path);
  if (manifest.segments.empty())
    throw std::runtime_error("abx: no segment annotations in " +
                             segments_path.string());

  std::map<std::string, std::vector<const UtteranceEntry*>> by_language;
  for (const auto& u : manifest.utterances)
    by_language[u.language_id].push_back(&u);
  std::map<std::string, std::string> language_of_utt;
  for (const auto& u : manifest.utterances)
    language_of_utt[u.utt_id] = u.language_id;

  nlohmann::json languages = nlohmann::json::object();
  double total = 0.0;
  std::size_t evaluated = 0;
  std::uint64_t skipped = 0;
  for (const auto& [lang, entries] : by_language) {
    CorpusManifest sub;
    for (const auto* u : entries) sub.utterances.push_back(*u);
    for (const auto& seg : manifest.segments)
      if (language_of_utt.at(seg.utt_id) == lang) sub.segments.push_back(seg);
    if (sub.segments.empty()) continue;

    std::map<std::string, FrameMatrix> features;
    for (const auto* u : entries)
      features[u->utt_id] =
          read_feature_file(resolve_feature_path(manifest_path, u->path));

    AbxTaskSet tasks = build_abx_tasks(sub, features, condition);
    AbxResult result =
        evaluate_abx(tasks, dtw_segment_distance, ctx.config.flat_average);

    nlohmann::json per_pair = nlohmann::json::array();
    for (const auto& cell : result.per_pair)
      per_pair.push_back({{"x", cell.category_x},
                          {"y", cell.category_y},
                          {"speaker_context", cell.speaker_context},
                          {"eps_xy", cell.eps_xy},
                          {"eps_yx", cell.eps_yx},
                          {"eps_sym", cell.eps_sym}});
    nlohmann::json pair_means = nlohmann::json::array();
    for (const auto& pm : result.per_pair_means)
      pair_means.push_back(
          {{"x", pm.category_x}, {"y", pm.category_y}, {"eps_sym", pm.eps_sym}});
    languages[lang] = {{"condition", result.condition},
                       {"per_pair", per_pair},
                       {"per_pair_means", pair_means},
                       {"overall", result.overall},
                       {"skipped_cells", result.skipped_cells}};
    total += result.overall;
    skipped += result.skipped_cells;
    ++evaluated;
  }
  if (evaluated == 0) throw std::runtime_error("abx: no evaluable language");
  double overall = total / static_cast<double>(evaluated);
  nlohmann::json report = {{"condition", to_string(condition)},
                           {"languages", languages},
                           {"overall", overall},
                           {"skipped_cells", skipped}};
  return {report, overall};
}

inline void abx_write_csv(const std::filesystem::path& path,
                          const nlohmann::json& report) {
  auto os = open_out(path);
  os << "condition,language,x,y,speaker_context,eps_xy,eps_yx,eps_sym\n";
  for (const auto& [lang, block] : report["languages"].items())
    for (const auto& cell : block["per_pair"]) {
      os << report["condition"].get<std::string>() << ',' << lang << ','
         << cell["x"].get<std::string>() << ',' << cell["y"].get<std::string>()
         << ',' << cell["speaker_context"].get<std::string>() << ','
         << cell["eps_xy"].get<double>() << ',' << cell["eps_yx"].get<double>()
         << ',' << cell["eps_sym"].get<double>() << '\n';
    }
}

inline std::vector<AbxCondition> conditions_of(const std::string& condition) {
  if (condition == "within") return {AbxCondition::kWithin};
  if (condition == "across") return {AbxCondition::kAcross};
  return {AbxCondition::kWithin, AbxCondition::kAcross};
}

}  // namespace detail

inline void cmd_abx(detail::CommandContext& ctx) {
  detail::StageTimer timer(ctx, "abx");
  auto out_dir = ctx.work_dir / "abx";
  std::filesystem::create_directories(out_dir);

  struct View {
    std::string tag;
    std::filesystem::path manifest, segments;
  };
  std::vector<View> views;
  if (ctx.config.abx_features == "raw") {
    views.push_back({"raw", ctx.manifest_path(), ctx.segments_path()});
  } else {
    for (double p : ctx.config.p_values) {
      auto dir = detail::extract_dir(ctx, p);
      if (!std::filesystem::exists(dir / "manifest.csv"))
        throw ConfigError("abx: missing BNF manifest in " + dir.string());
      views.push_back({"bnf_P_" + detail::format_p(p), dir / "manifest.csv",
                       dir / "segments.csv"});
    }
  }

  for (const auto& view : views) {
    for (AbxCondition condition :
         detail::conditions_of(ctx.config.condition)) {
      auto [report, overall] = detail::abx_evaluate_corpus(
          ctx, view.manifest, view.segments, condition);
      report["features"] = view.tag;
      auto base = view.tag + "_" + to_string(condition);
      detail::write_json_file(out_dir / (base + ".json"), report);
      detail::abx_write_csv(out_dir / (base + ".csv"), report);
      ctx.add_artifact(out_dir / (base + ".json"));
      ctx.add_artifact(out_dir / (base + ".csv"));
      ctx.metrics["abx"][view.tag][to_string(condition)] = overall;
    }
  }
}

inline void cmd_run_all(detail::CommandContext& ctx) {
  if (ctx.config.tasks.empty())
    throw ConfigError("run-all: empty task list");
  if (ctx.config.synth) cmd_synth(ctx);

  cmd_cluster(ctx);
  cmd_filter(ctx);
  cmd_align(ctx);
  cmd_train(ctx);
  cmd_extract(ctx);

  detail::StageTimer timer(ctx, "abx");
  auto out_dir = ctx.work_dir / "abx";
  std::filesystem::create_directories(out_dir);
  auto conditions = detail::conditions_of(ctx.config.condition);

  std::map<std::string, double> raw_overall;
  for (AbxCondition condition : conditions) {
    auto [report, overall] = detail::abx_evaluate_corpus(
        ctx, ctx.manifest_path(), ctx.segments_path(), condition);
    report["features"] = "raw";
    auto base = "raw_" + to_string(condition);
    detail::write_json_file(out_dir / (base + ".json"), report);
    detail::abx_write_csv(out_dir / (base + ".csv"), report);
    ctx.add_artifact(out_dir / (base + ".json"));
    raw_overall[to_string(condition)] = overall;
    ctx.metrics["abx"]["raw"][to_string(condition)] = overall;
  }

  nlohmann::json per_p = nlohmann::json::array();
  for (double p : ctx.config.p_values) {
    auto dir = detail::extract_dir(ctx, p);
    nlohmann::json row = {{"P", p}};
    for (AbxCondition condition : conditions) {
      auto [report, overall] = detail::abx_evaluate_corpus(
          ctx, dir / "manifest.csv", dir / "segments.csv", condition);
      auto tag = "bnf_P_" + detail::format_p(p);
      report["features"] = tag;
      auto base = tag + "_" + to_string(condition);
      detail::write_json_file(out_dir / (base + ".json"), report);
      detail::abx_write_csv(out_dir / (base + ".csv"), report);
      ctx.add_artifact(out_dir / (base + ".json"));
      row[to_string(condition)] = overall;
      double raw = raw_overall[to_string(condition)];
      if (raw > 0.0)
        row[to_string(condition) + "_relative_improvement"] =
            (raw - overall) / raw;
      ctx.metrics["abx"][tag][to_string(condition)] = overall;
    }
    per_p.push_back(row);
  }

  nlohmann::json raw_json = nlohmann::json::object();
  for (const auto& [condition, overall] : raw_overall)
    raw_json[condition] = overall;
  ctx.metrics["run_all"] = {{"raw", raw_json}, {"per_P", per_p}};
}

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> work_dir;
  std::optional<double> p;
  std::optional<std::string> p_grid;
  std::optional<std::string> condition;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfigError = 2;

/// Runs one CLI verb: loads the config, applies overrides, executes, and
/// writes reports/<verb>_report.json exactly once, also on failure.
inline int run_command(const std::string& verb,
                       const std::string& config_path,
                       const CliOverrides& overrides, std::ostream& err) {
  std::string report_verb = verb;
  for (auto& ch : report_verb)
    if (ch == '-') ch = '_';

  detail::CommandContext ctx;
  nlohmann::json report;
  report["command"] = verb;
  int exit_code = kExitOk;
  std::string error_text;

  try {
    nlohmann::json raw = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw ConfigError("cannot open config: " + config_path);
      try {
        is >> raw;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
    ctx.config = parse_pipeline_config(raw);
    if (overrides.work_dir) ctx.config.work_dir = *overrides.work_dir;
    if (overrides.seed) ctx.config.seed = *overrides.seed;
    if (overrides.p) {
      detail::validate_p(*overrides.p);
      ctx.config.p_values = {*overrides.p};
    }
    if (overrides.p_grid)
      ctx.config.p_values = detail::parse_p_grid(*overrides.p_grid);
    if (overrides.condition) {
      if (*overrides.condition != "within" &&
          *overrides.condition != "across" && *overrides.condition != "both")
        throw ConfigError("condition must be within|across|both");
      ctx.config.condition = *overrides.condition;
    }
    ctx.work_dir = ctx.config.work_dir;
    ctx.seed = ctx.config.seed;
  } catch (const ConfigError& e) {
    error_text = e.what();
    exit_code = kExitConfigError;
    if (overrides.work_dir) ctx.work_dir = *overrides.work_dir;
  }

  if (exit_code == kExitOk) {
    report["config_digest"] = ctx.config.digest;
    report["seed"] = ctx.seed;
    try {
      if (verb == "synth")
        cmd_synth(ctx);
      else if (verb == "cluster")
        cmd_cluster(ctx);
      else if (verb == "filter")
        cmd_filter(ctx);
      else if (verb == "align")
        cmd_align(ctx);
      else if (verb == "train")
        cmd_train(ctx);
      else if (verb == "extract")
        cmd_extract(ctx);
      else if (verb == "abx")
        cmd_abx(ctx);
      else if (verb == "run-all")
        cmd_run_all(ctx);
      else
        throw ConfigError("unknown command: " + verb);
    } catch (const ConfigError& e) {
      error_text = e.what();
      exit_code = kExitConfigError;
    } catch (const std::exception& e) {
      error_text = e.what();
      exit_code = kExitFailure;
    }
  }

  report["timings"] = ctx.timings;
  report["artifacts"] = ctx.artifacts;
  report["metrics"] = ctx.metrics;
  if (!error_text.empty()) {
    report["error"] = error_text;
    err << "error: " << error_text << "\n";
  }

  std::filesystem::path report_dir =
      (ctx.work_dir.empty() ? std::filesystem::path(".") : ctx.work_dir) /
      "reports";
  try {
    std::filesystem::create_directories(report_dir);
    detail::write_json_file(report_dir / (report_verb + "_report.json"),
                            report);
  } catch (const std::exception& e) {
    err << "error: cannot write run report: " << e.what() << "\n";
    if (exit_code == kExitOk) exit_code = kExitFailure;
  }
  return exit_code;
}

}  // namespace zrs

#endif  // ZRS_PIPELINE_HPP_
