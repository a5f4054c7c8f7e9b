// zrs/label_filter.hpp

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

// Cluster-label filtering: count per-cluster occupancy, sort descending,
// keep the smallest prefix of clusters covering at least fraction P of all
// frames, and mark every frame of the remaining clusters as removed.
//
// The removed-cluster set never includes clusters with zero occupancy (they
// label no frames, so removing them is vacuous and P = 1 must leave both the
// removed-cluster set and the removed-position set empty on every input).

#ifndef ZRS_LABEL_FILTER_HPP_
#define ZRS_LABEL_FILTER_HPP_

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "zrs/dpgmm.hpp"

namespace zrs {

struct FilterResult {
  std::vector<std::uint64_t> counts;         // counts[k-1] = frames of cluster k
  std::vector<std::uint64_t> sorted_counts;  // descending
  std::vector<std::uint32_t> mapping;        // sorted rank -> original cluster id
  std::uint32_t k_cut = 0;
  std::set<std::uint32_t> removed_clusters;
  std::vector<std::size_t> removed_positions;
  double p = 1.0;
};

inline std::vector<std::uint64_t> count_labels(const LabelSequence& labels,
                                               std::uint32_t num_clusters) {
  std::vector<std::uint64_t> counts(num_clusters, 0);
  for (std::int32_t label : labels) {
    if (label < 1 || static_cast<std::uint32_t>(label) > num_clusters)
      throw std::invalid_argument("count_labels: label " +
                                  std::to_string(label) + " out of 1.." +
                                  std::to_string(num_clusters));
    ++counts[label - 1];
  }
  return counts;
}

/// Descending sort with a rank-to-cluster mapping; ties keep the smaller
/// original cluster id first.
inline std::pair<std::vector<std::uint64_t>, std::vector<std::uint32_t>>
sort_clusters(const std::vector<std::uint64_t>& counts) {
  if (counts.empty()) throw std::invalid_argument("sort_clusters: no clusters");
  std::vector<std::uint32_t> mapping(counts.size());
  std::iota(mapping.begin(), mapping.end(), 1u);
  std::stable_sort(mapping.begin(), mapping.end(),
                   [&counts](std::uint32_t a, std::uint32_t b) {
                     return counts[a - 1] > counts[b - 1];
                   });
  std::vector<std::uint64_t> sorted(counts.size());
  for (std::size_t i = 0; i < mapping.size(); ++i)
    sorted[i] = counts[mapping[i] - 1];
  return {std::move(sorted), std::move(mapping)};
}

/// Minimal K' such that the K' largest clusters cover at least fraction P.
inline std::uint32_t compute_kcut(const std::vector<std::uint64_t>& sorted_counts,
                                  std::uint64_t total, double p) {
  if (!(p > 0.0) || p > 1.0)
    throw std::invalid_argument("compute_kcut: P must be in (0, 1]");
  if (total == 0) throw std::invalid_argument("compute_kcut: N == 0");
  std::uint64_t cum = 0;
  for (std::size_t i = 0; i < sorted_counts.size(); ++i) {
    cum += sorted_counts[i];
    if (static_cast<double>(cum) / static_cast<double>(total) >= p)
      return static_cast<std::uint32_t>(i) + 1;
  }
  return static_cast<std::uint32_t>(sorted_counts.size());
}

inline FilterResult filter_labels(const LabelSequence& labels,
                                  std::uint32_t num_clusters, double p) {
  FilterResult r;
  r.p = p;
  r.counts = count_labels(labels, num_clusters);
  auto [sorted, mapping] = sort_clusters(r.counts);
  r.sorted_counts = std::move(sorted);
  r.mapping = std::move(mapping);
  std::uint64_t total = labels.size();
  r.k_cut = compute_kcut(r.sorted_counts, total, p);
  for (std::size_t rank = r.k_cut; rank < r.sorted_counts.size(); ++rank)
    if (r.sorted_counts[rank] > 0) r.removed_clusters.insert(r.mapping[rank]);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (r.removed_clusters.count(static_cast<std::uint32_t>(labels[i])))
      r.removed_positions.push_back(i);
  return r;
}

/// Marks every position whose label is in the removed set with kRemovedLabel.
inline LabelSequence apply_filter(const LabelSequence& labels,
                                  const std::set<std::uint32_t>& removed) {
  LabelSequence out = labels;
  for (auto& label : out)
    if (label >= 1 && removed.count(static_cast<std::uint32_t>(label)))
      label = kRemovedLabel;
  return out;
}

}  // namespace zrs

#endif  // ZRS_LABEL_FILTER_HPP_
