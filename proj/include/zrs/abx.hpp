// zrs/abx.hpp

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

// Triphone minimal-pair ABX evaluation.
//
// epsilon(x, y) is the probability that an item A of category x lies farther
// from another x item X than a category-y item B does, with ties counted as
// one half. Segment distances are DTW over per-frame cosine distances with
// steps {(1,0),(0,1),(1,1)}, anchored endpoints, and the accumulated cost
// divided by the path's cell count; the reported value is the minimum of
// that average over all monotone paths, which keeps the distance symmetric
// and tie-free under ties between paths of different lengths.
//
// WITHIN cells take A, B and X from one speaker; ACROSS cells take A and B
// from one speaker and X from a different one. Cells lacking the minimum
// item counts are skipped and counted, never imputed. Aggregation averages
// symmetric epsilons over speaker contexts within each category pair, then
// over category pairs; a flat mean over all cells is available as an option.

#ifndef ZRS_ABX_HPP_
#define ZRS_ABX_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zrs/feature_store.hpp"
#include "zrs/frame_matrix.hpp"

namespace zrs {

struct Segment {
  FrameMatrix features;
  std::string category;
  std::string speaker_id;
};

inline double cosine_distance(std::span<const float> u,
                              std::span<const float> v) {
  if (u.size() != v.size())
    throw std::invalid_argument("cosine_distance: dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t d = 0; d < u.size(); ++d) {
    dot += static_cast<double>(u[d]) * v[d];
    nu += static_cast<double>(u[d]) * u[d];
    nv += static_cast<double>(v[d]) * v[d];
  }
  if (nu == 0.0 || nv == 0.0)
    throw std::invalid_argument("cosine_distance: zero vector");
  return 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
}

/// Minimum over all anchored monotone warping paths of (accumulated cosine
/// cost / path cell count). Computed by a path-length-indexed DP.
inline double dtw_distance(const FrameMatrix& a, const FrameMatrix& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("dtw_distance: dimension mismatch");
  const std::uint32_t ta = a.num_frames(), tb = b.num_frames();
  if (ta == 0 || tb == 0)
    throw std::invalid_argument("dtw_distance: empty segment");

  std::vector<double> cost(static_cast<std::size_t>(ta) * tb);
  for (std::uint32_t i = 0; i < ta; ++i)
    for (std::uint32_t j = 0; j < tb; ++j)
      cost[static_cast<std::size_t>(i) * tb + j] =
          cosine_distance(a.row(i), b.row(j));

  const double inf = std::numeric_limits<double>::infinity();
  const std::uint32_t max_len = ta + tb - 1;
  std::vector<double> prev(cost.size(), inf), cur(cost.size(), inf);
  prev[0] = cost[0];  // length 1 path sits on cell (0, 0)

  double best = inf;
  if (ta == 1 && tb == 1) best = prev[0];
  for (std::uint32_t len = 2; len <= max_len; ++len) {
    for (std::uint32_t i = 0; i < ta; ++i) {
      for (std::uint32_t j = 0; j < tb; ++j) {
        std::size_t idx = static_cast<std::size_t>(i) * tb + j;
        double from = inf;
        if (i > 0) from = std::min(from, prev[idx - tb]);
        if (j > 0) from = std::min(from, prev[idx - 1]);
        if (i > 0 && j > 0) from = std::min(from, prev[idx - tb - 1]);
        cur[idx] = from == inf ? inf : from + cost[idx];
      }
    }
    double end = cur[cost.size() - 1];
    if (end != inf) best = std::min(best, end / len);
    std::swap(prev, cur);
  }
  return best;
}

using SegmentDistance =
    std::function<double(const Segment&, const Segment&)>;

inline double dtw_segment_distance(const Segment& a, const Segment& b) {
  return dtw_distance(a.features, b.features);
}

namespace detail {

/// Directed epsilon over precomputed distance tables. d_ax[a][x] holds
/// d(A_a, X_x) and d_bx[b][x] holds d(B_b, X_x). When same_set is true the
/// A and X pools are the same items and the x == a triples are excluded.
inline double abx_eps_from_tables(const std::vector<std::vector<double>>& d_ax,
                                  const std::vector<std::vector<double>>& d_bx,
                                  bool same_set) {
  const std::size_t na = d_ax.size();
  const std::size_t nb = d_bx.size();
  const std::size_t nx = na == 0 ? 0 : d_ax[0].size();
  double total = 0.0;
  std::uint64_t count = 0;
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t x = 0; x < nx; ++x) {
      if (same_set && x == a) continue;
      double dax = d_ax[a][x];
      for (std::size_t b = 0; b < nb; ++b) {
        double dbx = d_bx[b][x];
        if (dax > dbx)
          total += 1.0;
        else if (dax == dbx)
          total += 0.5;
        ++count;
      }
    }
  if (count == 0) throw std::invalid_argument("abx: no triples");
  return total / static_cast<double>(count);
}

}  // namespace detail

/// epsilon(x, y) with X drawn from Sx itself, so A ranges over the other
/// |Sx|-1 items (denominator |Sx| (|Sx|-1) |Sy|).
inline double abx_error_asym(const std::vector<Segment>& sx,
                             const std::vector<Segment>& sy,
                             const SegmentDistance& dist) {
  if (sx.size() < 2 || sy.empty())
    throw std::invalid_argument("abx_error_asym: insufficient items");
  std::vector<std::vector<double>> d_ax(sx.size(),
                                        std::vector<double>(sx.size(), 0.0));
  for (std::size_t i = 0; i < sx.size(); ++i)
    for (std::size_t j = 0; j < sx.size(); ++j)
      if (i != j) d_ax[i][j] = dist(sx[i], sx[j]);
  std::vector<std::vector<double>> d_bx(sy.size(),
                                        std::vector<double>(sx.size(), 0.0));
  for (std::size_t i = 0; i < sy.size(); ++i)
    for (std::size_t j = 0; j < sx.size(); ++j)
      d_bx[i][j] = dist(sy[i], sx[j]);
  return detail::abx_eps_from_tables(d_ax, d_bx, /*same_set=*/true);
}

inline double abx_error_sym(const std::vector<Segment>& sx,
                            const std::vector<Segment>& sy,
                            const SegmentDistance& dist) {
  return 0.5 * (abx_error_asym(sx, sy, dist) + abx_error_asym(sy, sx, dist));
}

enum class AbxCondition { kWithin, kAcross };

inline std::string to_string(AbxCondition c) {
  return c == AbxCondition::kWithin ? "within" : "across";
}

/// One evaluable cell: a category pair under a speaker context, holding
/// item indices for both directions' A/B/X roles.
struct AbxTask {
  std::string category_x, category_y;  // lexicographically x < y
  std::string speaker_context;         // "s" (within) or "s->s'" (across)
  std::vector<std::size_t> x_items;    // category x, A/B speaker
  std::vector<std::size_t> y_items;    // category y, A/B speaker
  std::vector<std::size_t> x_probe;    // X pool for the x->y direction
  std::vector<std::size_t> y_probe;    // X pool for the y->x direction
  bool probe_same_set = true;          // probes are the A pools themselves
};

struct AbxTaskSet {
  AbxCondition condition = AbxCondition::kWithin;
  std::vector<Segment> items;
  std::vector<AbxTask> tasks;
  std::uint64_t skipped_cells = 0;
};

/// Cuts annotated segments out of their utterances and enumerates task
/// cells for the condition. Cells below the minimum item counts are
/// skipped and counted; an empty task list is returned, not an error.
inline AbxTaskSet build_abx_tasks(
    const CorpusManifest& manifest,
    const std::map<std::string, FrameMatrix>& features,
    AbxCondition condition) {
  AbxTaskSet set;
  set.condition = condition;

  // (category, speaker) -> item indices, with deterministic key order.
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> pools;
  for (const auto& seg : manifest.segments) {
    auto it = features.find(seg.utt_id);
    if (it == features.end())
      throw std::invalid_argument("abx: no features for " + seg.utt_id);
    if (seg.end_frame > it->second.num_frames())
      throw std::invalid_argument("abx: segment past end of " + seg.utt_id);
    Segment s;
    s.features = slice_frames(it->second, seg.start_frame, seg.end_frame);
    s.category = seg.category;
    s.speaker_id = seg.speaker_id;
    pools[seg.category][seg.speaker_id].push_back(set.items.size());
    set.items.push_back(std::move(s));
  }

  std::vector<std::string> categories;
  for (const auto& [category, by_speaker] : pools)
    categories.push_back(category);
  std::vector<std::string> speakers;
  {
    std::map<std::string, bool> seen;
    for (const auto& [category, by_speaker] : pools)
      for (const auto& [speaker, items] : by_speaker) seen[speaker] = true;
    for (const auto& [speaker, unused] : seen) speakers.push_back(speaker);
  }

  auto pool = [&pools](const std::string& category,
                       const std::string& speaker)
      -> const std::vector<std::size_t>* {
    auto c = pools.find(category);
    if (c == pools.end()) return nullptr;
    auto s = c->second.find(speaker);
    if (s == c->second.end()) return nullptr;
    return &s->second;
  };

  for (std::size_t ci = 0; ci < categories.size(); ++ci) {
    for (std::size_t cj = ci + 1; cj < categories.size(); ++cj) {
      const std::string& cx = categories[ci];
      const std::string& cy = categories[cj];
      if (condition == AbxCondition::kWithin) {
        for (const auto& speaker : speakers) {
          const auto* px = pool(cx, speaker);
          const auto* py = pool(cy, speaker);
          if (!px || !py || px->size() < 2 || py->size() < 2) {
            ++set.skipped_cells;
            continue;
          }
          AbxTask task;
          task.category_x = cx;
          task.category_y = cy;
          task.speaker_context = speaker;
          task.x_items = *px;
          task.y_items = *py;
          task.x_probe = *px;
          task.y_probe = *py;
          task.probe_same_set = true;
          set.tasks.push_back(std::move(task));
        }
      } else if (speakers.size() < 2) {
        // probes need a second speaker; report the impossible cell explicitly
        set.skipped_cells += speakers.size();
      } else {
        for (const auto& speaker : speakers) {
          for (const auto& other : speakers) {
            if (other == speaker) continue;
            const auto* px = pool(cx, speaker);
            const auto* py = pool(cy, speaker);
            const auto* qx = pool(cx, other);
            const auto* qy = pool(cy, other);
            if (!px || !py || !qx || !qy || px->empty() || py->empty() ||
                qx->empty() || qy->empty()) {
              ++set.skipped_cells;
              continue;
            }
            AbxTask task;
            task.category_x = cx;
            task.category_y = cy;
            task.speaker_context = speaker + "->" + other;
            task.x_items = *px;
            task.y_items = *py;
            task.x_probe = *qx;
            task.y_probe = *qy;
            task.probe_same_set = false;
            set.tasks.push_back(std::move(task));
          }
        }
      }
    }
  }
  return set;
}

struct AbxCellResult {
  std::string category_x, category_y, speaker_context;
  double eps_xy = 0.0, eps_yx = 0.0, eps_sym = 0.0;
};

struct AbxPairMean {
  std::string category_x, category_y;
  double eps_sym = 0.0;
};

struct AbxResult {
  std::string condition;
  std::vector<AbxCellResult> per_pair;      // one row per task cell
  std::vector<AbxPairMean> per_pair_means;  // mean over speaker contexts
  double overall = 0.0;
  std::uint64_t skipped_cells = 0;
};

/// Two-level aggregation: symmetric epsilon averaged over speaker contexts
/// within each category pair, then over category pairs. flat_average takes
/// a plain mean over all cells instead.
inline AbxResult abx_aggregate(const std::vector<AbxCellResult>& cells,
                               bool flat_average = false) {
  if (cells.empty()) throw std::invalid_argument("abx_aggregate: no results");
  AbxResult r;
  r.per_pair = cells;
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> pairs;
  for (const auto& c : cells) {
    auto& agg = pairs[{c.category_x, c.category_y}];
    agg.first += c.eps_sym;
    agg.second += 1;
  }
  double overall = 0.0;
  for (const auto& [key, agg] : pairs) {
    double mean = agg.first / agg.second;
    r.per_pair_means.push_back({key.first, key.second, mean});
    overall += mean;
  }
  if (flat_average) {
    double total = 0.0;
    for (const auto& c : cells) total += c.eps_sym;
    r.overall = total / static_cast<double>(cells.size());
  } else {
    r.overall = overall / static_cast<double>(pairs.size());
  }
  return r;
}

/// Scores every task cell with memoized pairwise distances, then aggregates.
inline AbxResult evaluate_abx(const AbxTaskSet& set,
                              const SegmentDistance& dist = dtw_segment_distance,
                              bool flat_average = false) {
  if (set.tasks.empty()) throw std::invalid_argument("evaluate_abx: no tasks");

  std::unordered_map<std::uint64_t, double> memo;
  auto distance = [&](std::size_t i, std::size_t j) {
    std::uint64_t key =
        (static_cast<std::uint64_t>(std::min(i, j)) << 32) | std::max(i, j);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    double d = dist(set.items[i], set.items[j]);
    memo.emplace(key, d);
    return d;
  };
  auto tables = [&](const std::vector<std::size_t>& rows,
                    const std::vector<std::size_t>& cols, bool same_set) {
    std::vector<std::vector<double>> t(rows.size(),
                                       std::vector<double>(cols.size(), 0.0));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols.size(); ++j) {
        if (same_set && i == j) continue;
        t[i][j] = distance(rows[i], cols[j]);
      }
    return t;
  };

  std::vector<AbxCellResult> cells;
  cells.reserve(set.tasks.size());
  for (const auto& task : set.tasks) {
    AbxCellResult cell;
    cell.category_x = task.category_x;
    cell.category_y = task.category_y;
    cell.speaker_context = task.speaker_context;
    cell.eps_xy = detail::abx_eps_from_tables(
        tables(task.x_items, task.x_probe, task.probe_same_set),
        tables(task.y_items, task.x_probe, false), task.probe_same_set);
    cell.eps_yx = detail::abx_eps_from_tables(
        tables(task.y_items, task.y_probe, task.probe_same_set),
        tables(task.x_items, task.y_probe, false), task.probe_same_set);
    cell.eps_sym = 0.5 * (cell.eps_xy + cell.eps_yx);
    cells.push_back(std::move(cell));
  }

  AbxResult r = abx_aggregate(cells, flat_average);
  r.condition = to_string(set.condition);
  r.skipped_cells = set.skipped_cells;
  return r;
}

}  // namespace zrs

#endif  // ZRS_ABX_HPP_
