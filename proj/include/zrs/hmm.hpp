// zrs/hmm.hpp

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

// Pseudo-phone HMMs: one emitting state per unit with a diagonal-covariance
// GMM emission and a self-loop, chained left to right along an utterance's
// transcription. Training is hard (Viterbi) EM: force-align with the current
// parameters, then re-estimate emissions, mixture weights, and loop
// probabilities from the aligned frames.
//
// A path's log-likelihood is the sum of per-frame emission scores (max over
// mixture components of log weight + log density) plus the T-1 transition
// scores; there are no entry or exit terms. All re-estimation steps are
// constrained argmaxes of that objective (variance flooring and loop-
// probability clamping included), which is what makes the per-iteration
// log-likelihood non-decreasing.
//
// Utterances whose transcription is empty (all frames removed by filtering)
// carry no alignment constraint and are skipped with a warning.

#ifndef ZRS_HMM_HPP_
#define ZRS_HMM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "zrs/dpgmm.hpp"
#include "zrs/feature_store.hpp"
#include "zrs/frame_matrix.hpp"

namespace zrs {

/// Unit id sequence with no two adjacent units equal.
using PseudoTranscription = std::vector<std::int32_t>;

/// Drops removed-frame sentinels, then collapses runs of equal labels.
inline PseudoTranscription collapse(const LabelSequence& labels) {
  PseudoTranscription units;
  for (std::int32_t label : labels) {
    if (label == kRemovedLabel) continue;
    if (units.empty() || units.back() != label) units.push_back(label);
  }
  return units;
}

struct HmmState {
  std::vector<double> weights;                 // G, sums to 1
  std::vector<std::vector<double>> means;      // G rows of D
  std::vector<std::vector<double>> variances;  // G rows of D, all > 0
  double p_loop = 0.5;

  std::uint32_t num_components() const {
    return static_cast<std::uint32_t>(weights.size());
  }
};

struct HmmModel {
  std::uint32_t dim = 0;
  std::map<std::int32_t, HmmState> units;

  const HmmState& state(std::int32_t unit) const {
    auto it = units.find(unit);
    if (it == units.end())
      throw std::invalid_argument("hmm: unknown unit " + std::to_string(unit));
    return it->second;
  }
};

/// Frame-to-unit assignment plus the aligned path's log-likelihood.
struct AlignResult {
  LabelSequence frame_units;
  double log_likelihood = 0.0;
};

namespace detail {

inline double hmm_log_emission(const HmmState& s, const float* x,
                               std::uint32_t dim) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint32_t g = 0; g < s.num_components(); ++g) {
    double lp = std::log(s.weights[g]);
    for (std::uint32_t d = 0; d < dim; ++d)
      lp += log_normal(x[d], s.means[g][d], s.variances[g][d]);
    best = std::max(best, lp);
  }
  return best;
}

inline std::uint32_t hmm_best_component(const HmmState& s, const float* x,
                                        std::uint32_t dim) {
  double best = -std::numeric_limits<double>::infinity();
  std::uint32_t best_g = 0;
  for (std::uint32_t g = 0; g < s.num_components(); ++g) {
    double lp = std::log(s.weights[g]);
    for (std::uint32_t d = 0; d < dim; ++d)
      lp += log_normal(x[d], s.means[g][d], s.variances[g][d]);
    if (lp > best) {
      best = lp;
      best_g = g;
    }
  }
  return best_g;
}

}  // namespace detail

inline constexpr double kHmmVarianceFloor = 1e-4;

/// Maximum-likelihood monotone frame-to-unit assignment under the linear
/// left-to-right chain. Ties prefer the path whose advances happen later
/// (boundaries as late as possible, decided from the last boundary back).
inline AlignResult viterbi_align(const HmmModel& model, const FrameMatrix& m,
                                 const PseudoTranscription& transcription) {
  const std::uint32_t t_count = m.num_frames();
  const std::size_t length = transcription.size();
  if (m.dim() != model.dim && t_count > 0)
    throw std::invalid_argument("viterbi_align: dimension mismatch");
  if (t_count < length)
    throw std::invalid_argument("viterbi_align: fewer frames than units");
  if (length == 0) {
    if (t_count > 0)
      throw std::invalid_argument("viterbi_align: empty transcription");
    return {};
  }

  std::vector<const HmmState*> chain(length);
  std::vector<double> log_loop(length), log_adv(length);
  for (std::size_t i = 0; i < length; ++i) {
    chain[i] = &model.state(transcription[i]);
    log_loop[i] = std::log(chain[i]->p_loop);
    log_adv[i] = std::log1p(-chain[i]->p_loop);
  }

  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> prev(length, neg_inf), cur(length, neg_inf);
  std::vector<std::uint8_t> advanced(static_cast<std::size_t>(t_count) *
                                     length);

  prev[0] = detail::hmm_log_emission(*chain[0], m.row(0).data(), model.dim);
  for (std::uint32_t t = 1; t < t_count; ++t) {
    for (std::size_t i = 0; i < length; ++i) {
      double stay = prev[i] == neg_inf ? neg_inf : prev[i] + log_loop[i];
      double adv = (i > 0 && prev[i - 1] != neg_inf)
                       ? prev[i - 1] + log_adv[i - 1]
                       : neg_inf;
      bool take_adv = adv >= stay;  // tie: advance here, the latest option
      double best = take_adv ? adv : stay;
      if (best == neg_inf) {
        cur[i] = neg_inf;
        continue;
      }
      advanced[static_cast<std::size_t>(t) * length + i] = take_adv;
      cur[i] = best + detail::hmm_log_emission(*chain[i], m.row(t).data(),
                                               model.dim);
    }
    std::swap(prev, cur);
  }

  if (prev[length - 1] == neg_inf)
    throw std::invalid_argument("viterbi_align: infeasible alignment");

  AlignResult result;
  result.log_likelihood = prev[length - 1];
  result.frame_units.resize(t_count);
  std::size_t i = length - 1;
  for (std::uint32_t t = t_count; t-- > 0;) {
    result.frame_units[t] = transcription[i];
    if (t > 0 && advanced[static_cast<std::size_t>(t) * length + i]) --i;
  }
  return result;
}

/// Uniform segmentation init: each utterance is split into equal spans per
/// unit, remainder frames going to the trailing units; single-Gaussian
/// emissions and duration-based loop probabilities follow from those spans.
inline HmmModel hmm_init_uniform(
    const std::vector<FrameMatrix>& features,
    const std::vector<PseudoTranscription>& transcriptions) {
  if (features.size() != transcriptions.size())
    throw std::invalid_argument("hmm_init_uniform: size mismatch");
  std::uint32_t dim = 0;
  for (const auto& f : features)
    if (f.num_frames() > 0) dim = f.dim();
  if (dim == 0) throw std::invalid_argument("hmm_init_uniform: no frames");

  struct Acc {
    std::uint64_t frames = 0, occurrences = 0;
    std::vector<double> sum, sumsq;
  };
  std::map<std::int32_t, Acc> acc;

  for (std::size_t u = 0; u < features.size(); ++u) {
    const auto& m = features[u];
    const auto& tr = transcriptions[u];
    const std::uint32_t t_count = m.num_frames();
    const std::size_t length = tr.size();
    if (length == 0) continue;
    if (t_count < length)
      throw std::invalid_argument(
          "hmm_init_uniform: transcription longer than utterance");
    std::uint32_t span = t_count / static_cast<std::uint32_t>(length);
    std::uint32_t remainder = t_count % static_cast<std::uint32_t>(length);
    std::uint32_t t = 0;
    for (std::size_t i = 0; i < length; ++i) {
      std::uint32_t len = span + (i + remainder >= length ? 1 : 0);
      auto& a = acc[tr[i]];
      if (a.sum.empty()) {
        a.sum.assign(dim, 0.0);
        a.sumsq.assign(dim, 0.0);
      }
      ++a.occurrences;
      for (std::uint32_t k = 0; k < len; ++k, ++t) {
        ++a.frames;
        for (std::uint32_t d = 0; d < dim; ++d) {
          double v = m.at(t, d);
          a.sum[d] += v;
          a.sumsq[d] += v * v;
        }
      }
    }
  }
  if (acc.empty())
    throw std::invalid_argument("hmm_init_uniform: no non-empty transcription");

  HmmModel model;
  model.dim = dim;
  for (const auto& [unit, a] : acc) {
    HmmState s;
    s.weights = {1.0};
    s.means.emplace_back(dim);
    s.variances.emplace_back(dim);
    double n = static_cast<double>(a.frames);
    for (std::uint32_t d = 0; d < dim; ++d) {
      double mean = a.sum[d] / n;
      double var = a.sumsq[d] / n - mean * mean;
      s.means[0][d] = mean;
      s.variances[0][d] = std::max(var, kHmmVarianceFloor);
    }
    double mean_duration = n / static_cast<double>(a.occurrences);
    s.p_loop = std::clamp((mean_duration - 1.0) / mean_duration, 0.5, 0.99);
    model.units[unit] = s;
  }
  return model;
}

struct HmmTrainConfig {
  std::uint32_t iterations = 20;
  std::uint32_t num_components = 1;
  double variance_floor = kHmmVarianceFloor;

  void validate() const {
    if (iterations == 0)
      throw std::invalid_argument("hmm: iterations must be >= 1");
    if (num_components == 0)
      throw std::invalid_argument("hmm: num_components must be >= 1");
    if (!(variance_floor > 0.0))
      throw std::invalid_argument("hmm: variance_floor must be > 0");
  }
};

struct HmmTrainResult {
  HmmModel model;
  std::vector<double> iteration_log_likelihood;  // before each update
  std::vector<std::string> warnings;
};

namespace detail {

/// Splits each state's components in place until it has target_g of them,
/// perturbing means deterministically along each dimension's deviation.
inline void hmm_split_components(HmmModel& model, std::uint32_t target_g) {
  for (auto& [unit, s] : model.units) {
    while (s.num_components() < target_g) {
      std::size_t largest = 0;
      for (std::size_t g = 1; g < s.weights.size(); ++g)
        if (s.weights[g] > s.weights[largest]) largest = g;
      std::vector<double> mean_lo = s.means[largest];
      std::vector<double> mean_hi = s.means[largest];
      for (std::size_t d = 0; d < mean_lo.size(); ++d) {
        double offs = 0.1 * std::sqrt(s.variances[largest][d]);
        mean_lo[d] -= offs;
        mean_hi[d] += offs;
      }
      double half = s.weights[largest] / 2.0;
      s.weights[largest] = half;
      s.means[largest] = mean_lo;
      s.weights.push_back(half);
      s.means.push_back(mean_hi);
      s.variances.push_back(s.variances[largest]);
    }
  }
}

}  // namespace detail

inline HmmTrainResult hmm_em_train(
    const HmmModel& init, const std::vector<FrameMatrix>& features,
    const std::vector<PseudoTranscription>& transcriptions,
    const HmmTrainConfig& config) {
  config.validate();
  if (features.size() != transcriptions.size())
    throw std::invalid_argument("hmm_em_train: size mismatch");

  HmmTrainResult result;
  result.model = init;
  if (config.num_components > 1)
    detail::hmm_split_components(result.model, config.num_components);

  bool warned_empty = false;
  for (std::uint32_t iter = 0; iter < config.iterations; ++iter) {
    struct CompAcc {
      std::uint64_t n = 0;
      std::vector<double> sum, sumsq;
    };
    struct UnitAcc {
      std::uint64_t loops = 0, advances = 0;
      std::vector<CompAcc> comps;
    };
    std::map<std::int32_t, UnitAcc> acc;
    const std::uint32_t dim = result.model.dim;
    for (const auto& [unit, s] : result.model.units) {
      auto& a = acc[unit];
      a.comps.resize(s.num_components());
      for (auto& c : a.comps) {
        c.sum.assign(dim, 0.0);
        c.sumsq.assign(dim, 0.0);
      }
    }

    double total_ll = 0.0;
    for (std::size_t u = 0; u < features.size(); ++u) {
      if (transcriptions[u].empty()) {
        if (!warned_empty && features[u].num_frames() > 0) {
          result.warnings.push_back("skipping utterances with empty transcriptions");
          warned_empty = true;
        }
        continue;
      }
      AlignResult aligned =
          viterbi_align(result.model, features[u], transcriptions[u]);
      total_ll += aligned.log_likelihood;

      const auto& m = features[u];
      for (std::uint32_t t = 0; t < m.num_frames(); ++t) {
        std::int32_t unit = aligned.frame_units[t];
        auto& a = acc[unit];
        const HmmState& s = result.model.units[unit];
        std::uint32_t g = detail::hmm_best_component(s, m.row(t).data(), dim);
        auto& c = a.comps[g];
        ++c.n;
        for (std::uint32_t d = 0; d < dim; ++d) {
          double v = m.at(t, d);
          c.sum[d] += v;
          c.sumsq[d] += v * v;
        }
        if (t + 1 < m.num_frames()) {
          if (aligned.frame_units[t + 1] == unit)
            ++a.loops;
          else
            ++a.advances;
        }
      }
    }
    result.iteration_log_likelihood.push_back(total_ll);

    for (auto& [unit, s] : result.model.units) {
      const auto& a = acc[unit];
      std::uint64_t unit_frames = 0;
      for (const auto& c : a.comps) unit_frames += c.n;
      if (unit_frames == 0) {
        result.warnings.push_back("unit " + std::to_string(unit) +
                                  " received no frames in iteration " +
                                  std::to_string(iter) +
                                  "; keeping previous parameters");
        continue;
      }
      for (std::uint32_t g = 0; g < s.num_components(); ++g) {
        const auto& c = a.comps[g];
        if (c.n == 0) continue;  // keep this component's previous parameters
        s.weights[g] = static_cast<double>(c.n) /
                       static_cast<double>(unit_frames);
        double n = static_cast<double>(c.n);
        for (std::uint32_t d = 0; d < s.means[g].size(); ++d) {
          double mean = c.sum[d] / n;
          double var = c.sumsq[d] / n - mean * mean;
          s.means[g][d] = mean;
          s.variances[g][d] = std::max(var, config.variance_floor);
        }
      }
      double wsum = 0.0;
      for (double w : s.weights) wsum += w;
      for (double& w : s.weights) w /= wsum;
      if (a.loops + a.advances > 0)
        s.p_loop = std::clamp(static_cast<double>(a.loops) /
                                  static_cast<double>(a.loops + a.advances),
                              0.01, 0.99);
    }
  }
  return result;
}

inline constexpr char kHmmMagic[4] = {'Z', 'R', 'S', 'H'};
inline constexpr std::uint32_t kHmmVersion = 1;

inline void write_hmm_model(const std::filesystem::path& path,
                            const HmmModel& model) {
  auto os = detail::open_out(path);
  detail::put_magic(os, kHmmMagic);
  detail::put_u32(os, kHmmVersion);
  detail::put_u32(os, model.dim);
  detail::put_u32(os, static_cast<std::uint32_t>(model.units.size()));
  for (const auto& [unit, s] : model.units) {
    detail::put_u32(os, static_cast<std::uint32_t>(unit));
    detail::put_u32(os, s.num_components());
    detail::put_f64(os, s.p_loop);
    for (std::uint32_t g = 0; g < s.num_components(); ++g) {
      detail::put_f64(os, s.weights[g]);
      for (double v : s.means[g]) detail::put_f64(os, v);
      for (double v : s.variances[g]) detail::put_f64(os, v);
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline HmmModel read_hmm_model(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  detail::expect_magic(is, kHmmMagic, "ZRSH model");
  std::uint32_t version = detail::get_u32(is, "version");
  if (version != kHmmVersion)
    throw std::runtime_error("unsupported ZRSH version " +
                             std::to_string(version));
  HmmModel model;
  model.dim = detail::get_u32(is, "dim");
  std::uint32_t num_units = detail::get_u32(is, "unit count");
  for (std::uint32_t i = 0; i < num_units; ++i) {
    std::int32_t unit =
        static_cast<std::int32_t>(detail::get_u32(is, "unit id"));
    HmmState s;
    std::uint32_t g_count = detail::get_u32(is, "component count");
    s.p_loop = detail::get_f64(is, "p_loop");
    for (std::uint32_t g = 0; g < g_count; ++g) {
      s.weights.push_back(detail::get_f64(is, "weight"));
      s.means.emplace_back(model.dim);
      for (auto& v : s.means.back()) v = detail::get_f64(is, "mean");
      s.variances.emplace_back(model.dim);
      for (auto& v : s.variances.back()) v = detail::get_f64(is, "variance");
    }
    model.units[unit] = std::move(s);
  }
  return model;
}

}  // namespace zrs

#endif  // ZRS_HMM_HPP_
