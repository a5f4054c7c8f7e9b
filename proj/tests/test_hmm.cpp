// tests/test_hmm.cpp

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

#include <cmath>

#include "catch2/catch_amalgamated.hpp"
#include "oracles.hpp"
#include "zrs/hmm.hpp"
#include "zrs/rng.hpp"

using zrs::FrameMatrix;
using zrs::HmmModel;
using zrs::HmmState;
using zrs::PseudoTranscription;
using zrs_test::TempDir;

namespace {

HmmState single_gaussian(std::vector<double> mean, double variance,
                         double p_loop) {
  HmmState s;
  s.weights = {1.0};
  s.means = {std::move(mean)};
  s.variances = {std::vector<double>(s.means[0].size(), variance)};
  s.p_loop = p_loop;
  return s;
}

HmmModel random_model(zrs::Rng& rng, std::uint32_t dim,
                      const std::vector<std::int32_t>& unit_ids) {
  HmmModel model;
  model.dim = dim;
  for (auto unit : unit_ids) {
    std::vector<double> mean(dim);
    for (auto& v : mean) v = 4.0 * rng.normal();
    model.units[unit] =
        single_gaussian(std::move(mean), 0.3 + rng.uniform(),
                        0.2 + 0.6 * rng.uniform());
  }
  return model;
}

}  // namespace

TEST_CASE("collapse drops sentinels then merges runs") {
  CHECK(zrs::collapse({1, 3, 3, 3, 7, 10, 10}) ==
        PseudoTranscription{1, 3, 7, 10});
  CHECK(zrs::collapse({1, 1, zrs::kRemovedLabel, 1}) == PseudoTranscription{1});
  CHECK(zrs::collapse({}) == PseudoTranscription{});
  CHECK(zrs::collapse({zrs::kRemovedLabel, zrs::kRemovedLabel}) ==
        PseudoTranscription{});

  zrs::Rng rng(13);
  for (int rep = 0; rep < 200; ++rep) {
    zrs::LabelSequence labels(rng.uniform_int(30));
    for (auto& label : labels)
      label = rng.uniform() < 0.15
                  ? zrs::kRemovedLabel
                  : static_cast<std::int32_t>(1 + rng.uniform_int(4));
    PseudoTranscription once = zrs::collapse(labels);
    CHECK(zrs::collapse(once) == once);
    CHECK(once.size() <= labels.size());
    for (std::size_t i = 1; i < once.size(); ++i)
      CHECK(once[i] != once[i - 1]);
  }
}

TEST_CASE("single-unit transcriptions align every frame to that unit") {
  zrs::Rng rng(29);
  HmmModel model = random_model(rng, 2, {7});
  FrameMatrix m(6, 2);
  for (std::uint32_t t = 0; t < 6; ++t)
    for (std::uint32_t d = 0; d < 2; ++d)
      m.at(t, d) = static_cast<float>(rng.normal());
  zrs::AlignResult r = zrs::viterbi_align(model, m, {7});
  CHECK(r.frame_units == zrs::LabelSequence(6, 7));
  CHECK(std::isfinite(r.log_likelihood));

  CHECK_THROWS(zrs::viterbi_align(model, FrameMatrix(1, 2), {7, 7}));
}

TEST_CASE("viterbi matches the exhaustive segmentation oracle") {
  zrs::Rng rng(31);
  int checked = 0;
  for (int rep = 0; rep < 150; ++rep) {
    std::uint32_t num_units = 1 + rng.uniform_int(3);
    std::vector<std::int32_t> ids;
    for (std::uint32_t u = 0; u < num_units; ++u)
      ids.push_back(static_cast<std::int32_t>(u + 1));
    std::uint32_t dim = 1 + rng.uniform_int(3);
    HmmModel model = random_model(rng, dim, ids);
    std::uint32_t frames = num_units + rng.uniform_int(11 - num_units);
    FrameMatrix m(frames, dim);
    for (std::uint32_t t = 0; t < frames; ++t)
      for (std::uint32_t d = 0; d < dim; ++d)
        m.at(t, d) = static_cast<float>(3.0 * rng.normal());
    PseudoTranscription transcription(ids.begin(), ids.end());

    zrs::AlignResult got = zrs::viterbi_align(model, m, transcription);
    zrs_test::ViterbiOracleResult want =
        zrs_test::viterbi_oracle(model, m, transcription);
    REQUIRE(got.log_likelihood == want.log_likelihood);
    REQUIRE(got.frame_units == want.frame_units);
    ++checked;
  }
  REQUIRE(checked == 150);
}

TEST_CASE("viterbi tie-breaking prefers the latest boundaries") {
  // two identical states and a 50% loop probability make every segmentation
  // of equal length equally likely
  HmmModel model;
  model.dim = 1;
  model.units[1] = single_gaussian({0.0}, 1.0, 0.5);
  model.units[2] = single_gaussian({0.0}, 1.0, 0.5);
  FrameMatrix m(5, 1);
  for (std::uint32_t t = 0; t < 5; ++t) m.at(t, 0) = 1.5f;

  zrs::AlignResult got = zrs::viterbi_align(model, m, {1, 2});
  zrs_test::ViterbiOracleResult want =
      zrs_test::viterbi_oracle(model, m, {1, 2});
  CHECK(got.log_likelihood == want.log_likelihood);
  CHECK(got.frame_units == want.frame_units);
  // latest boundary: unit 2 takes only the final frame
  CHECK(got.frame_units == zrs::LabelSequence{1, 1, 1, 1, 2});
}

TEST_CASE("a sharp feature change places the boundary within one frame") {
  HmmModel model;
  model.dim = 1;
  model.units[1] = single_gaussian({0.0}, 1.0, 0.8);
  model.units[2] = single_gaussian({6.0}, 1.0, 0.8);
  FrameMatrix m(10, 1);
  zrs::Rng rng(41);
  const std::uint32_t true_boundary = 6;
  for (std::uint32_t t = 0; t < 10; ++t)
    m.at(t, 0) =
        static_cast<float>((t < true_boundary ? 0.0 : 6.0) + 0.3 * rng.normal());
  zrs::AlignResult r = zrs::viterbi_align(model, m, {1, 2});
  std::uint32_t boundary = 0;
  while (boundary < 10 && r.frame_units[boundary] == 1) ++boundary;
  CHECK(boundary >= true_boundary - 1);
  CHECK(boundary <= true_boundary + 1);

  // alignment is a monotone surjection
  CHECK(r.frame_units.front() == 1);
  CHECK(r.frame_units.back() == 2);
}

TEST_CASE("uniform initialization splits frames evenly, remainder trailing") {
  // T=10, 2 units: frames 0-4 to unit 1, frames 5-9 to unit 2
  FrameMatrix m(10, 1);
  for (std::uint32_t t = 0; t < 10; ++t) m.at(t, 0) = static_cast<float>(t);
  HmmModel model = zrs::hmm_init_uniform({m}, {{1, 2}});
  CHECK(model.units.at(1).means[0][0] == Catch::Approx(2.0));  // mean 0..4
  CHECK(model.units.at(2).means[0][0] == Catch::Approx(7.0));  // mean 5..9

  // T=7, 3 units: spans 2, 2, 3
  FrameMatrix m7(7, 1);
  for (std::uint32_t t = 0; t < 7; ++t) m7.at(t, 0) = static_cast<float>(t);
  HmmModel model7 = zrs::hmm_init_uniform({m7}, {{1, 2, 3}});
  CHECK(model7.units.at(1).means[0][0] == Catch::Approx(0.5));   // 0,1
  CHECK(model7.units.at(2).means[0][0] == Catch::Approx(2.5));   // 2,3
  CHECK(model7.units.at(3).means[0][0] == Catch::Approx(5.0));   // 4,5,6

  for (const auto& [unit, state] : model7.units) {
    CHECK(state.p_loop >= 0.5);
    CHECK(state.p_loop <= 0.99);
    for (double v : state.variances[0]) CHECK(v >= zrs::kHmmVarianceFloor);
  }

  // one utterance, one unit: emission mean is the utterance frame mean
  HmmModel single = zrs::hmm_init_uniform({m7}, {{9}});
  CHECK(single.units.at(9).means[0][0] == Catch::Approx(3.0));

  CHECK_THROWS(zrs::hmm_init_uniform({FrameMatrix(1, 1)}, {{1, 2}}));
}

TEST_CASE("EM keeps the total Viterbi log-likelihood non-decreasing") {
  zrs::Rng rng(59);
  std::vector<FrameMatrix> features;
  std::vector<PseudoTranscription> transcriptions;
  for (int utt = 0; utt < 6; ++utt) {
    PseudoTranscription t;
    std::int32_t prev = -1;
    for (int u = 0; u < 4; ++u) {
      std::int32_t unit;
      do {
        unit = static_cast<std::int32_t>(1 + rng.uniform_int(3));
      } while (unit == prev);
      t.push_back(unit);
      prev = unit;
    }
    std::uint32_t frames_per_unit = 4;
    FrameMatrix m(static_cast<std::uint32_t>(t.size()) * frames_per_unit, 2);
    std::uint32_t row = 0;
    for (auto unit : t)
      for (std::uint32_t k = 0; k < frames_per_unit; ++k, ++row) {
        m.at(row, 0) = static_cast<float>(2.5 * unit + 0.5 * rng.normal());
        m.at(row, 1) = static_cast<float>(-1.5 * unit + 0.5 * rng.normal());
      }
    features.push_back(std::move(m));
    transcriptions.push_back(std::move(t));
  }

  HmmModel init = zrs::hmm_init_uniform(features, transcriptions);
  zrs::HmmTrainConfig config;
  config.iterations = 15;
  zrs::HmmTrainResult r = zrs::hmm_em_train(init, features, transcriptions,
                                            config);
  REQUIRE(r.iteration_log_likelihood.size() == 15);
  for (std::size_t i = 1; i < r.iteration_log_likelihood.size(); ++i)
    CHECK(r.iteration_log_likelihood[i] >=
          r.iteration_log_likelihood[i - 1] - 1e-6);
  CHECK(r.warnings.empty());
  for (const auto& [unit, state] : r.model.units) {
    CHECK(state.p_loop >= 0.01);
    CHECK(state.p_loop <= 0.99);
  }
}

TEST_CASE("single-unit EM converges to the exact ML mean in one iteration") {
  FrameMatrix m(8, 1);
  double sum = 0;
  for (std::uint32_t t = 0; t < 8; ++t) {
    m.at(t, 0) = static_cast<float>(t * 0.7 - 2.0);
    sum += m.at(t, 0);
  }
  HmmModel init = zrs::hmm_init_uniform({m}, {{3}});
  zrs::HmmTrainConfig config;
  config.iterations = 1;
  zrs::HmmTrainResult r = zrs::hmm_em_train(init, {m}, {{3}}, config);
  CHECK(r.model.units.at(3).means[0][0] == Catch::Approx(sum / 8.0));
}

TEST_CASE("well-separated two-unit data recovers the generating means") {
  zrs::Rng rng(61);
  const double sigma = 0.4;
  std::vector<FrameMatrix> features;
  std::vector<PseudoTranscription> transcriptions;
  for (int utt = 0; utt < 100; ++utt) {
    FrameMatrix m(12, 1);
    for (std::uint32_t t = 0; t < 12; ++t)
      m.at(t, 0) = static_cast<float>((t < 6 ? 0.0 : 5.0 * sigma * 5) +
                                      sigma * rng.normal());
    features.push_back(std::move(m));
    transcriptions.push_back({1, 2});
  }
  HmmModel init = zrs::hmm_init_uniform(features, transcriptions);
  zrs::HmmTrainConfig config;
  config.iterations = 10;
  zrs::HmmTrainResult r =
      zrs::hmm_em_train(init, features, transcriptions, config);
  CHECK(std::abs(r.model.units.at(1).means[0][0] - 0.0) < 0.1 * sigma);
  CHECK(std::abs(r.model.units.at(2).means[0][0] - 10.0) < 0.1 * sigma);
}

TEST_CASE("utterances with empty transcriptions are skipped with a warning") {
  FrameMatrix m(4, 1);
  for (std::uint32_t t = 0; t < 4; ++t) m.at(t, 0) = static_cast<float>(t);
  FrameMatrix all_removed(2, 1);  // frames whose labels were all filtered out
  HmmModel init = zrs::hmm_init_uniform({m, all_removed}, {{1}, {}});
  zrs::HmmTrainConfig config;
  config.iterations = 2;
  zrs::HmmTrainResult r =
      zrs::hmm_em_train(init, {m, all_removed}, {{1}, {}}, config);
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("hmm model file round-trips") {
  zrs::Rng rng(71);
  HmmModel model = random_model(rng, 3, {2, 5, 9});
  TempDir dir;
  zrs::write_hmm_model(dir / "m.zrsh", model);
  HmmModel back = zrs::read_hmm_model(dir / "m.zrsh");
  REQUIRE(back.units.size() == model.units.size());
  CHECK(back.dim == model.dim);
  for (const auto& [unit, state] : model.units) {
    const auto& b = back.units.at(unit);
    CHECK(b.weights == state.weights);
    CHECK(b.means == state.means);
    CHECK(b.variances == state.variances);
    CHECK(b.p_loop == state.p_loop);
  }
}
