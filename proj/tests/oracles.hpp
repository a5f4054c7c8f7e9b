// tests/oracles.hpp

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

// Brute-force reference implementations used to cross-check the library.
// Everything here trades speed for obvious correctness: plain enumeration,
// no dynamic programming, no shared code with the headers under test.

#ifndef ZRS_TESTS_ORACLES_HPP_
#define ZRS_TESTS_ORACLES_HPP_

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "zrs/abx.hpp"
#include "zrs/frame_matrix.hpp"
#include "zrs/hmm.hpp"

namespace zrs_test {

/// Self-deleting scratch directory for file-format and pipeline tests.
class TempDir {
 public:
  TempDir() {
    static std::atomic<std::uint64_t> counter{0};
    auto base = std::filesystem::temp_directory_path();
    path_ = base / ("zrs_test_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is),
                     std::istreambuf_iterator<char>());
}

/// Adjusted Rand index between two labelings of the same points.
inline double adjusted_rand_index(const std::vector<std::int32_t>& a,
                                  const std::vector<std::int32_t>& b) {
  auto comb2 = [](double n) { return n * (n - 1.0) / 2.0; };
  std::map<std::pair<std::int32_t, std::int32_t>, std::uint64_t> cells;
  std::map<std::int32_t, std::uint64_t> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++cells[{a[i], b[i]}];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  double sum_cells = 0, sum_rows = 0, sum_cols = 0;
  for (const auto& [k, n] : cells) sum_cells += comb2(static_cast<double>(n));
  for (const auto& [k, n] : rows) sum_rows += comb2(static_cast<double>(n));
  for (const auto& [k, n] : cols) sum_cols += comb2(static_cast<double>(n));
  double total = comb2(static_cast<double>(a.size()));
  double expected = sum_rows * sum_cols / total;
  double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (sum_cells - expected) / (max_index - expected);
}

/// Reference for the label filter: recomputes the cut by summing the K'
/// largest counts from scratch for every K', then selects removed clusters
/// by rank. Ordering contract: occupancy descending, cluster id ascending.
struct FilterOracleResult {
  std::uint32_t k_cut = 0;
  std::set<std::uint32_t> removed_clusters;
  std::vector<std::size_t> removed_positions;
};

inline FilterOracleResult filter_oracle(
    const std::vector<std::int32_t>& labels, std::uint32_t num_clusters,
    double p) {
  std::vector<std::uint64_t> counts(num_clusters, 0);
  for (std::int32_t label : labels) ++counts[label - 1];
  std::uint64_t total = labels.size();

  std::vector<std::uint32_t> order;  // cluster ids, best rank first
  std::vector<bool> used(num_clusters, false);
  for (std::uint32_t rank = 0; rank < num_clusters; ++rank) {
    std::uint32_t best = num_clusters;
    for (std::uint32_t id = 0; id < num_clusters; ++id) {
      if (used[id]) continue;
      if (best == num_clusters || counts[id] > counts[best]) best = id;
    }
    used[best] = true;
    order.push_back(best);
  }

  FilterOracleResult result;
  for (std::uint32_t k = 1; k <= num_clusters; ++k) {
    std::uint64_t covered = 0;
    for (std::uint32_t i = 0; i < k; ++i) covered += counts[order[i]];
    if (static_cast<double>(covered) / static_cast<double>(total) >= p) {
      result.k_cut = k;
      break;
    }
  }
  for (std::uint32_t rank = result.k_cut; rank < num_clusters; ++rank)
    if (counts[order[rank]] > 0)
      result.removed_clusters.insert(order[rank] + 1);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (result.removed_clusters.count(static_cast<std::uint32_t>(labels[i])))
      result.removed_positions.push_back(i);
  return result;
}

/// Reference DTW: enumerates every monotone path and minimizes the
/// length-normalized total cost.
inline double dtw_oracle(const zrs::FrameMatrix& a, const zrs::FrameMatrix& b) {
  std::uint32_t ta = a.num_frames(), tb = b.num_frames();
  std::vector<std::vector<double>> cost(ta, std::vector<double>(tb));
  for (std::uint32_t i = 0; i < ta; ++i)
    for (std::uint32_t j = 0; j < tb; ++j)
      cost[i][j] = zrs::cosine_distance(a.row(i), b.row(j));

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> acc;  // running per-step costs along the current path
  auto walk = [&](auto&& self, std::uint32_t i, std::uint32_t j) -> void {
    acc.push_back(cost[i][j]);
    if (i + 1 == ta && j + 1 == tb) {
      double total = 0;
      for (double c : acc) total += c;
      best = std::min(best, total / static_cast<double>(acc.size()));
    } else {
      if (i + 1 < ta) self(self, i + 1, j);
      if (j + 1 < tb) self(self, i, j + 1);
      if (i + 1 < ta && j + 1 < tb) self(self, i + 1, j + 1);
    }
    acc.pop_back();
  };
  walk(walk, 0, 0);
  return best;
}

/// Reference asymmetric ABX error: direct loop over (A, B, X) triples.
inline double abx_oracle_asym(const std::vector<zrs::Segment>& sx,
                              const std::vector<zrs::Segment>& sy,
                              const zrs::SegmentDistance& dist) {
  double sum = 0;
  std::uint64_t triples = 0;
  for (std::size_t ai = 0; ai < sx.size(); ++ai)
    for (std::size_t bi = 0; bi < sy.size(); ++bi)
      for (std::size_t xi = 0; xi < sx.size(); ++xi) {
        if (xi == ai) continue;
        double da = dist(sx[ai], sx[xi]);
        double db = dist(sy[bi], sx[xi]);
        if (da > db)
          sum += 1.0;
        else if (da == db)
          sum += 0.5;
        ++triples;
      }
  return sum / static_cast<double>(triples);
}

/// Reference Viterbi alignment: enumerates every segmentation of T frames
/// into the transcription's units. Scores accumulate in frame order, exactly
/// like the DP recursion, so ties are bitwise ties; they resolve toward the
/// segmentation whose unit start times are latest, compared from the last
/// unit backward.
struct ViterbiOracleResult {
  std::vector<std::int32_t> frame_units;
  double log_likelihood = -std::numeric_limits<double>::infinity();
};

inline ViterbiOracleResult viterbi_oracle(
    const zrs::HmmModel& model, const zrs::FrameMatrix& features,
    const std::vector<std::int32_t>& transcription) {
  std::uint32_t num_frames = features.num_frames();
  std::size_t num_units = transcription.size();
  std::vector<std::vector<double>> emission(
      num_units, std::vector<double>(num_frames));
  std::vector<double> log_loop(num_units), log_adv(num_units);
  for (std::size_t u = 0; u < num_units; ++u) {
    const auto& state = model.state(transcription[u]);
    log_loop[u] = std::log(state.p_loop);
    log_adv[u] = std::log1p(-state.p_loop);
    for (std::uint32_t t = 0; t < num_frames; ++t)
      emission[u][t] = zrs::detail::hmm_log_emission(
          state, features.row(t).data(), features.dim());
  }

  ViterbiOracleResult best;
  std::vector<std::uint32_t> lengths(num_units, 0);
  std::vector<std::uint32_t> best_starts;

  auto score = [&]() {
    double ll = 0;
    std::uint32_t t = 0;
    for (std::size_t u = 0; u < num_units; ++u) {
      for (std::uint32_t i = 0; i < lengths[u]; ++i, ++t) {
        if (t == 0)
          ll = emission[u][t];
        else if (i == 0)
          ll = (ll + log_adv[u - 1]) + emission[u][t];
        else
          ll = (ll + log_loop[u]) + emission[u][t];
      }
    }
    return ll;
  };

  auto starts_later = [&](const std::vector<std::uint32_t>& starts) {
    for (std::size_t i = starts.size(); i-- > 0;) {
      if (starts[i] != best_starts[i]) return starts[i] > best_starts[i];
    }
    return false;
  };

  auto assign = [&](std::vector<std::uint32_t>* starts) {
    starts->clear();
    std::uint32_t t = 0;
    for (std::size_t u = 0; u < num_units; ++u) {
      starts->push_back(t);
      t += lengths[u];
    }
  };

  std::vector<std::uint32_t> starts;
  auto enumerate = [&](auto&& self, std::size_t u,
                       std::uint32_t remaining) -> void {
    if (u + 1 == num_units) {
      if (remaining == 0) return;
      lengths[u] = remaining;
      double ll = score();
      assign(&starts);
      if (ll > best.log_likelihood ||
          (ll == best.log_likelihood && starts_later(starts))) {
        best.log_likelihood = ll;
        best_starts = starts;
        best.frame_units.clear();
        for (std::size_t k = 0; k < num_units; ++k)
          for (std::uint32_t i = 0; i < lengths[k]; ++i)
            best.frame_units.push_back(transcription[k]);
      }
      return;
    }
    for (std::uint32_t len = 1;
         len + (num_units - u - 1) <= remaining; ++len) {
      lengths[u] = len;
      self(self, u + 1, remaining - len);
    }
  };
  if (num_units > 0 && num_frames >= num_units)
    enumerate(enumerate, 0, num_frames);
  return best;
}

}  // namespace zrs_test

#endif  // ZRS_TESTS_ORACLES_HPP_
