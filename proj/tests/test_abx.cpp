// tests/test_abx.cpp

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
#include "zrs/abx.hpp"
#include "zrs/rng.hpp"

using zrs::FrameMatrix;
using zrs::Segment;
using zrs_test::TempDir;

namespace {

FrameMatrix random_segment(zrs::Rng& rng, std::uint32_t frames,
                           std::uint32_t dim) {
  FrameMatrix m(frames, dim);
  for (std::uint32_t t = 0; t < frames; ++t)
    for (std::uint32_t d = 0; d < dim; ++d)
      m.at(t, d) = static_cast<float>(rng.normal());
  return m;
}

std::vector<Segment> random_segments(zrs::Rng& rng, std::size_t count,
                                     const std::string& category,
                                     const std::string& speaker) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back({random_segment(rng, 1 + rng.uniform_int(4), 3), category,
                   speaker});
  return out;
}

}  // namespace

TEST_CASE("cosine distance matches hand values") {
  std::vector<float> a = {1.0f, 0.0f};
  std::vector<float> b = {0.0f, 1.0f};
  std::vector<float> c = {1.0f, 1.0f};
  std::vector<float> na = {-1.0f, 0.0f};
  CHECK(zrs::cosine_distance(a, a) == Catch::Approx(0.0).margin(1e-12));
  CHECK(zrs::cosine_distance(a, b) == Catch::Approx(1.0));
  CHECK(zrs::cosine_distance(a, na) == Catch::Approx(2.0));
  CHECK(zrs::cosine_distance(a, c) == Catch::Approx(1.0 - 1.0 / std::sqrt(2.0)));
  std::vector<float> zero = {0.0f, 0.0f};
  CHECK_THROWS(zrs::cosine_distance(a, zero));
  std::vector<float> wide = {1.0f, 2.0f, 3.0f};
  CHECK_THROWS(zrs::cosine_distance(a, wide));
}

TEST_CASE("dtw equals the exhaustive path minimum on small segments") {
  zrs::Rng rng(7);
  for (int rep = 0; rep < 150; ++rep) {
    std::uint32_t dim = 1 + rng.uniform_int(3);
    FrameMatrix a = random_segment(rng, 1 + rng.uniform_int(6), dim);
    FrameMatrix b = random_segment(rng, 1 + rng.uniform_int(6), dim);
    double got = zrs::dtw_distance(a, b);
    double want = zrs_test::dtw_oracle(a, b);
    CHECK(std::abs(got - want) <= 1e-12);
    CHECK(std::abs(zrs::dtw_distance(b, a) - got) <= 1e-12);
  }
}

TEST_CASE("dtw basics: identity, single frames, dimension checks") {
  zrs::Rng rng(8);
  FrameMatrix a = random_segment(rng, 4, 3);
  CHECK(zrs::dtw_distance(a, a) == Catch::Approx(0.0).margin(1e-12));

  FrameMatrix u = random_segment(rng, 1, 3);
  FrameMatrix v = random_segment(rng, 1, 3);
  CHECK(zrs::dtw_distance(u, v) ==
        Catch::Approx(zrs::cosine_distance(u.row(0), v.row(0))));

  CHECK_THROWS(zrs::dtw_distance(a, random_segment(rng, 2, 2)));
  CHECK_THROWS(zrs::dtw_distance(a, FrameMatrix(0, 3)));
}

TEST_CASE("asymmetric ABX error matches triple enumeration") {
  zrs::Rng rng(9);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t nx = 2 + rng.uniform_int(4);
    std::size_t ny = 1 + rng.uniform_int(5);
    auto sx = random_segments(rng, nx, "x", "s");
    auto sy = random_segments(rng, ny, "y", "s");
    double got = zrs::abx_error_asym(sx, sy, zrs::dtw_segment_distance);
    double want = zrs_test::abx_oracle_asym(sx, sy, zrs::dtw_segment_distance);
    REQUIRE(std::abs(got - want) <= 1e-12);
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
  CHECK_THROWS(zrs::abx_error_asym(random_segments(rng, 1, "x", "s"),
                                   random_segments(rng, 1, "y", "s"),
                                   zrs::dtw_segment_distance));
}

TEST_CASE("hand-built distance tables give exact rational errors") {
  // |Sx|=2, |Sy|=1: two triples
  std::vector<Segment> sx = {{FrameMatrix(1, 1), "x", "s"},
                             {FrameMatrix(1, 1), "x", "s"}};
  std::vector<Segment> sy = {{FrameMatrix(1, 1), "y", "s"}};
  sx[0].features.at(0, 0) = 0;
  sx[1].features.at(0, 0) = 1;
  sy[0].features.at(0, 0) = 2;
  auto table = [](const Segment& a, const Segment& b) {
    // d(u, v) = |u - v| over the stored scalar tags
    return std::abs(a.features.at(0, 0) - b.features.at(0, 0));
  };
  // triple (A=0, X=1): d(0,1)=1 vs d(2,1)=1 -> tie 0.5
  // triple (A=1, X=0): d(1,0)=1 vs d(2,0)=2 -> correct 0
  CHECK(zrs::abx_error_asym(sx, sy, table) == Catch::Approx(0.25));

  // all equal distances: pure tie -> 0.5 exactly
  auto constant = [](const Segment&, const Segment&) { return 1.0; };
  CHECK(zrs::abx_error_asym(sx, sy, constant) == 0.5);
  // the symmetric form needs two items on both sides (reverse direction)
  std::vector<Segment> sy2 = {{FrameMatrix(1, 1), "y", "s"},
                              {FrameMatrix(1, 1), "y", "s"}};
  CHECK(zrs::abx_error_sym(sx, sy2, constant) == 0.5);
  CHECK_THROWS_AS(zrs::abx_error_sym(sx, sy, constant),
                  std::invalid_argument);

  // strictly increasing transforms leave the error unchanged
  auto squared = [&table](const Segment& a, const Segment& b) {
    double d = table(a, b);
    return d * d + 3.0;
  };
  CHECK(zrs::abx_error_asym(sx, sy, squared) ==
        zrs::abx_error_asym(sx, sy, table));
}

TEST_CASE("symmetric error is invariant under swapping the categories") {
  zrs::Rng rng(10);
  auto sx = random_segments(rng, 3, "x", "s");
  auto sy = random_segments(rng, 4, "y", "s");
  double xy = zrs::abx_error_sym(sx, sy, zrs::dtw_segment_distance);
  double yx = zrs::abx_error_sym(sy, sx, zrs::dtw_segment_distance);
  CHECK(xy == Catch::Approx(yx).margin(1e-15));
}

namespace {

/// Tiny corpus: every segment is one whole utterance.
struct TinyCorpus {
  zrs::CorpusManifest manifest;
  std::map<std::string, FrameMatrix> features;

  void add(const std::string& utt, const std::string& speaker,
           const std::string& category, FrameMatrix m) {
    manifest.utterances.push_back({utt, speaker, "lang0", utt + ".zrsf"});
    manifest.segments.push_back(
        {utt, 0, m.num_frames(), category, speaker});
    features[utt] = std::move(m);
  }
};

}  // namespace

TEST_CASE("task construction respects the speaker conditions") {
  zrs::Rng rng(11);
  TinyCorpus corpus;
  int n = 0;
  for (const std::string& spk : {"s1", "s2"})
    for (const std::string& cat : {"a", "b"})
      for (int i = 0; i < 2; ++i)
        corpus.add("u" + std::to_string(n++), spk, cat,
                   random_segment(rng, 3, 2));

  zrs::AbxTaskSet within = zrs::build_abx_tasks(
      corpus.manifest, corpus.features, zrs::AbxCondition::kWithin);
  // one category pair x two speakers
  CHECK(within.tasks.size() == 2);
  CHECK(within.skipped_cells == 0);
  for (const auto& task : within.tasks) {
    CHECK(task.category_x == "a");
    CHECK(task.category_y == "b");
    for (auto i : task.x_items)
      CHECK(within.items[i].speaker_id == within.items[task.y_items[0]].speaker_id);
  }

  zrs::AbxTaskSet across = zrs::build_abx_tasks(
      corpus.manifest, corpus.features, zrs::AbxCondition::kAcross);
  // one category pair x two ordered speaker pairs
  CHECK(across.tasks.size() == 2);
  for (const auto& task : across.tasks) {
    REQUIRE(!task.x_probe.empty());
    for (auto i : task.x_probe)
      CHECK(across.items[i].speaker_id != across.items[task.x_items[0]].speaker_id);
  }

  // single speaker: across-speaker evaluation is impossible
  TinyCorpus solo;
  int m = 0;
  for (const std::string& cat : {"a", "b"})
    for (int i = 0; i < 2; ++i)
      solo.add("v" + std::to_string(m++), "s1", cat,
               random_segment(rng, 3, 2));
  zrs::AbxTaskSet none = zrs::build_abx_tasks(solo.manifest, solo.features,
                                              zrs::AbxCondition::kAcross);
  CHECK(none.tasks.empty());
  CHECK(none.skipped_cells > 0);
}

TEST_CASE("aggregation averages speaker contexts before category pairs") {
  std::vector<zrs::AbxCellResult> cells = {
      {"a", "b", "s1", 0.1, 0.3, 0.2},
      {"a", "b", "s2", 0.3, 0.5, 0.4},
      {"a", "c", "s1", 0.4, 0.4, 0.4},
  };
  zrs::AbxResult two_level = zrs::abx_aggregate(cells, false);
  REQUIRE(two_level.per_pair_means.size() == 2);
  CHECK(two_level.per_pair_means[0].eps_sym == Catch::Approx(0.3));
  CHECK(two_level.per_pair_means[1].eps_sym == Catch::Approx(0.4));
  CHECK(two_level.overall == Catch::Approx(0.35));

  zrs::AbxResult flat = zrs::abx_aggregate(cells, true);
  CHECK(flat.overall == Catch::Approx((0.2 + 0.4 + 0.4) / 3.0));

  // single cell: identity; two pairs 0.2 / 0.4 -> 0.3 covered above
  zrs::AbxResult single = zrs::abx_aggregate({cells[0]}, false);
  CHECK(single.overall == Catch::Approx(0.2));
  CHECK_THROWS(zrs::abx_aggregate({}, false));

  // permutation invariance
  std::vector<zrs::AbxCellResult> shuffled = {cells[2], cells[0], cells[1]};
  CHECK(zrs::abx_aggregate(shuffled, false).overall ==
        Catch::Approx(two_level.overall));
}

TEST_CASE("random features score at chance level") {
  zrs::Rng rng(12);
  TinyCorpus corpus;
  int n = 0;
  for (const std::string& spk : {"s1", "s2"})
    for (const std::string& cat : {"a", "b"})
      for (int i = 0; i < 12; ++i)
        corpus.add("u" + std::to_string(n++), spk, cat,
                   random_segment(rng, 3 + rng.uniform_int(3), 16));

  for (auto condition :
       {zrs::AbxCondition::kWithin, zrs::AbxCondition::kAcross}) {
    zrs::AbxTaskSet tasks =
        zrs::build_abx_tasks(corpus.manifest, corpus.features, condition);
    zrs::AbxResult result = zrs::evaluate_abx(tasks);
    CHECK(result.overall > 0.35);
    CHECK(result.overall < 0.65);
    for (const auto& cell : result.per_pair) {
      CHECK(cell.eps_sym ==
            Catch::Approx(0.5 * (cell.eps_xy + cell.eps_yx)));
    }
  }
}

TEST_CASE("separated features reach near-zero error") {
  zrs::Rng rng(13);
  TinyCorpus corpus;
  int n = 0;
  for (const std::string& spk : {"s1", "s2"})
    for (int cat = 0; cat < 2; ++cat)
      for (int i = 0; i < 4; ++i) {
        FrameMatrix m(3, 4);
        for (std::uint32_t t = 0; t < 3; ++t)
          for (std::uint32_t d = 0; d < 4; ++d)
            m.at(t, d) = static_cast<float>(
                (d == static_cast<std::uint32_t>(cat) ? 8.0 : 0.0) +
                0.1 * rng.normal());
        corpus.add("u" + std::to_string(n++), spk,
                   cat == 0 ? "a" : "b", std::move(m));
      }
  zrs::AbxTaskSet tasks = zrs::build_abx_tasks(
      corpus.manifest, corpus.features, zrs::AbxCondition::kWithin);
  zrs::AbxResult result = zrs::evaluate_abx(tasks);
  CHECK(result.overall < 0.05);
}
