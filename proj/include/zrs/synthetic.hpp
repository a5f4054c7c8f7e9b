// zrs/synthetic.hpp

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

// Desk-scale synthetic corpus generator. Each utterance is a left-to-right
// chain over unit types with geometric dwell; frames are drawn from per-unit
// diagonal Gaussians (unit variance) and shifted by a per-speaker offset.
// Unit means sit on scaled hypercube corners so every pair of units is at
// least `separation` apart in some coordinate.
//
// Written artifacts, all under out_dir:
//   manifest.csv, segments.csv, features/<utt_id>.zrsf,
//   true_labels.csv (generating unit per frame),
//   true_transcriptions.csv (unit sequence per utterance).

#ifndef ZRS_SYNTHETIC_HPP_
#define ZRS_SYNTHETIC_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "zrs/feature_store.hpp"
#include "zrs/frame_matrix.hpp"
#include "zrs/rng.hpp"

namespace zrs {

struct SyntheticSpec {
  std::uint32_t num_languages = 1;
  std::uint32_t speakers_per_language = 2;
  std::uint32_t utterances_per_speaker = 4;
  std::uint32_t units_per_utterance = 10;
  std::uint32_t num_units = 4;
  std::uint32_t dim = 8;
  double separation = 6.0;
  double shift_scale = 0.0;
  double mean_dwell = 3.0;

  void validate() const {
    if (num_languages == 0 || speakers_per_language == 0 ||
        utterances_per_speaker == 0 || units_per_utterance == 0)
      throw std::invalid_argument("synthetic spec: counts must be positive");
    if (num_units == 0) throw std::invalid_argument("synthetic spec: U == 0");
    if (dim == 0) throw std::invalid_argument("synthetic spec: D == 0");
    std::uint32_t bits = 0;
    while ((1u << bits) < num_units) ++bits;
    if (bits > dim)
      throw std::invalid_argument(
          "synthetic spec: dim too small to separate " +
          std::to_string(num_units) + " units");
    if (separation < 0.0 || shift_scale < 0.0)
      throw std::invalid_argument("synthetic spec: negative scale");
    if (mean_dwell < 1.0)
      throw std::invalid_argument("synthetic spec: mean_dwell < 1");
    if (num_units == 1 && units_per_utterance > 1)
      throw std::invalid_argument(
          "synthetic spec: one unit cannot fill a multi-unit utterance "
          "without adjacent repeats");
  }
};

/// In-memory view of a generated corpus, including the generator's own
/// parameters so tests can check recovery against ground truth.
struct SyntheticCorpus {
  CorpusManifest manifest;
  LabelMap true_labels;
  TranscriptionMap true_transcriptions;
  std::vector<std::vector<double>> unit_means;          // U rows of D
  std::map<std::string, std::vector<double>> speaker_shifts;
};

inline std::vector<std::vector<double>> synthetic_unit_means(
    const SyntheticSpec& spec) {
  std::vector<std::vector<double>> means(spec.num_units,
                                         std::vector<double>(spec.dim, 0.0));
  for (std::uint32_t u = 0; u < spec.num_units; ++u)
    for (std::uint32_t d = 0; d < spec.dim; ++d)
      if ((u >> d) & 1u) means[u][d] = spec.separation;
  return means;
}

inline SyntheticCorpus generate_synthetic_corpus(
    const SyntheticSpec& spec, std::uint64_t seed,
    const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir / "features");

  SyntheticCorpus corpus;
  corpus.unit_means = synthetic_unit_means(spec);
  Rng rng(seed);

  for (std::uint32_t l = 0; l < spec.num_languages; ++l) {
    std::string language_id = "lang" + std::to_string(l);
    for (std::uint32_t s = 0; s < spec.speakers_per_language; ++s) {
      std::string speaker_id = language_id + "_spk" + std::to_string(s);
      std::vector<double> shift(spec.dim);
      for (auto& v : shift) v = spec.shift_scale * rng.normal();
      corpus.speaker_shifts[speaker_id] = shift;

      for (std::uint32_t uttn = 0; uttn < spec.utterances_per_speaker;
           ++uttn) {
        std::string utt_id = speaker_id + "_utt" + std::to_string(uttn);

        std::vector<std::int32_t> units(spec.units_per_utterance);
        for (std::uint32_t i = 0; i < spec.units_per_utterance; ++i) {
          if (spec.num_units == 1) {
            units[i] = 0;
          } else if (i == 0) {
            units[i] = static_cast<std::int32_t>(
                rng.uniform_int(spec.num_units));
          } else {
            auto v = rng.uniform_int(spec.num_units - 1);
            units[i] = static_cast<std::int32_t>(
                v + (v >= static_cast<std::uint64_t>(units[i - 1]) ? 1 : 0));
          }
        }

        std::vector<std::uint32_t> dwell(spec.units_per_utterance);
        std::uint32_t total = 0;
        for (auto& d : dwell) {
          d = 1 + static_cast<std::uint32_t>(
                      rng.geometric(1.0 / spec.mean_dwell));
          total += d;
        }

        FrameMatrix features(total, spec.dim);
        std::vector<std::int32_t> frame_labels(total);
        std::vector<std::uint32_t> unit_start(spec.units_per_utterance);
        std::vector<std::uint32_t> unit_end(spec.units_per_utterance);
        std::uint32_t t = 0;
        for (std::uint32_t i = 0; i < spec.units_per_utterance; ++i) {
          unit_start[i] = t;
          const auto& mean = corpus.unit_means[units[i]];
          for (std::uint32_t k = 0; k < dwell[i]; ++k, ++t) {
            frame_labels[t] = units[i];
            for (std::uint32_t d = 0; d < spec.dim; ++d)
              features.at(t, d) = static_cast<float>(
                  mean[d] + rng.normal() + shift[d]);
          }
          unit_end[i] = t;
        }

        std::string rel_path = "features/" + utt_id + ".zrsf";
        write_feature_file(out_dir / rel_path, features);
        corpus.manifest.utterances.push_back(
            {utt_id, speaker_id, language_id, rel_path});
        corpus.true_labels[utt_id] = std::move(frame_labels);
        corpus.true_transcriptions[utt_id] = units;

        for (std::uint32_t i = 1; i + 1 < spec.units_per_utterance; ++i) {
          std::string category = std::to_string(units[i - 1]) + "-" +
                                 std::to_string(units[i]) + "-" +
                                 std::to_string(units[i + 1]);
          corpus.manifest.segments.push_back({utt_id, unit_start[i - 1],
                                              unit_end[i + 1], category,
                                              speaker_id});
        }
      }
    }
  }

  corpus.manifest.validate();
  write_manifest(out_dir / "manifest.csv", corpus.manifest);
  write_segments(out_dir / "segments.csv", corpus.manifest.segments);
  write_labels_csv(out_dir / "true_labels.csv", corpus.true_labels);
  write_transcriptions_csv(out_dir / "true_transcriptions.csv",
                           corpus.true_transcriptions);
  return corpus;
}

}  // namespace zrs

#endif  // ZRS_SYNTHETIC_HPP_
