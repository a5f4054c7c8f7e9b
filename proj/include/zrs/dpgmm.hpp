// zrs/dpgmm.hpp

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

// Dirichlet-process Gaussian mixture over pooled frames.
//
// Inference is collapsed Gibbs sampling with a conjugate per-dimension
// Normal-Inverse-Gamma prior on diagonal Gaussian components. During sweeps a
// frame may join any existing component (Student-t posterior predictive,
// weight n_k) or open a new one (prior predictive, weight alpha). Empty
// components are pruned immediately, so indices stay dense. Final frame
// assignment competes only the K fitted components, scored as
// (n_k / N) * Normal(x; map_mean_k, map_var_k), ties toward smaller k.
//
// Everything is a deterministic function of (frames, config): the sampler
// draws from one seeded generator in a fixed order.

#ifndef ZRS_DPGMM_HPP_
#define ZRS_DPGMM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "zrs/feature_store.hpp"
#include "zrs/frame_matrix.hpp"
#include "zrs/rng.hpp"

namespace zrs {

/// Frame labels for one utterance: cluster indices in 1..K, or kRemovedLabel.
using LabelSequence = std::vector<std::int32_t>;

/// Per-dimension Normal-Inverse-Gamma hyperparameters. Empty m0/b0 vectors
/// mean "use the pooled data mean / per-dimension variance at fit time".
struct NigPrior {
  std::vector<double> m0;
  double kappa0 = 1e-2;
  double a0 = 1.0;
  std::vector<double> b0;
};

struct DpgmmConfig {
  double alpha = 1.0;
  std::uint32_t sweeps = 200;
  std::uint64_t seed = 0;
  NigPrior prior;

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("dpgmm: alpha must be > 0");
    if (!(prior.kappa0 > 0.0) || !(prior.a0 > 0.0))
      throw std::invalid_argument("dpgmm: kappa0 and a0 must be > 0");
    for (double b : prior.b0)
      if (!(b > 0.0)) throw std::invalid_argument("dpgmm: b0 must be > 0");
  }
};

struct DpgmmCluster {
  std::uint64_t count = 0;
  std::vector<double> mean;      // MAP posterior mean
  std::vector<double> variance;  // MAP posterior variance, all > 0
};

struct DpgmmModel {
  std::uint32_t dim = 0;
  std::vector<DpgmmCluster> clusters;
  double alpha = 1.0;
  NigPrior prior;  // with m0/b0 resolved to concrete vectors
  std::uint64_t seed = 0;

  std::uint32_t num_clusters() const {
    return static_cast<std::uint32_t>(clusters.size());
  }
  std::uint64_t total_count() const {
    std::uint64_t n = 0;
    for (const auto& c : clusters) n += c.count;
    return n;
  }
};

namespace detail {

constexpr double kLogTwoPi = 1.8378770664093454836;

/// log density of a Student-t with nu degrees of freedom, location mu and
/// squared scale s2, evaluated at x.
inline double log_student_t(double x, double nu, double mu, double s2) {
  double z = (x - mu);
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * M_PI * s2) -
         0.5 * (nu + 1.0) * std::log1p(z * z / (nu * s2));
}

inline double log_normal(double x, double mean, double var) {
  double z = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + z * z / var);
}

/// Sufficient statistics of one cluster under the per-dimension NIG prior.
struct GibbsCluster {
  std::uint64_t n = 0;
  std::vector<double> sum;
  std::vector<double> sumsq;

  explicit GibbsCluster(std::uint32_t dim) : sum(dim, 0.0), sumsq(dim, 0.0) {}

  void add(const float* x, std::uint32_t dim) {
    ++n;
    for (std::uint32_t d = 0; d < dim; ++d) {
      sum[d] += x[d];
      sumsq[d] += static_cast<double>(x[d]) * x[d];
    }
  }
  void remove(const float* x, std::uint32_t dim) {
    --n;
    for (std::uint32_t d = 0; d < dim; ++d) {
      sum[d] -= x[d];
      sumsq[d] -= static_cast<double>(x[d]) * x[d];
    }
  }
};

struct NigPosterior {
  double kn, mn, an, bn;
};

inline NigPosterior nig_posterior(const NigPrior& prior, std::uint32_t d,
                                  std::uint64_t n, double s1, double s2) {
  NigPosterior p;
  double m0 = prior.m0[d];
  p.kn = prior.kappa0 + static_cast<double>(n);
  p.an = prior.a0 + 0.5 * static_cast<double>(n);
  if (n == 0) {
    p.mn = m0;
    p.bn = prior.b0[d];
  } else {
    double nd = static_cast<double>(n);
    double xbar = s1 / nd;
    p.mn = (prior.kappa0 * m0 + s1) / p.kn;
    double ss = s2 - s1 * s1 / nd;
    if (ss < 0.0) ss = 0.0;  // guard against cancellation
    p.bn = prior.b0[d] + 0.5 * ss +
           prior.kappa0 * nd * (xbar - m0) * (xbar - m0) / (2.0 * p.kn);
  }
  return p;
}

/// log posterior-predictive density of x under one NIG dimension.
inline double log_predictive(const NigPrior& prior, std::uint32_t d,
                             std::uint64_t n, double s1, double s2, double x) {
  NigPosterior p = nig_posterior(prior, d, n, s1, s2);
  double nu = 2.0 * p.an;
  double s2pred = p.bn * (p.kn + 1.0) / (p.an * p.kn);
  return log_student_t(x, nu, p.mn, s2pred);
}

}  // namespace detail

inline DpgmmModel dpgmm_fit(const FrameMatrix& frames,
                            const DpgmmConfig& config) {
  config.validate();
  const std::uint32_t n_frames = frames.num_frames();
  const std::uint32_t dim = frames.dim();
  if (n_frames == 0 || dim == 0)
    throw std::invalid_argument("dpgmm_fit: need N >= 1 and D >= 1");
  if (!frames.all_finite())
    throw std::invalid_argument("dpgmm_fit: non-finite input values");

  NigPrior prior = config.prior;
  if (prior.m0.empty() || prior.b0.empty()) {
    std::vector<double> pooled_mean(dim, 0.0), pooled_var(dim, 0.0);
    for (std::uint32_t t = 0; t < n_frames; ++t)
      for (std::uint32_t d = 0; d < dim; ++d) pooled_mean[d] += frames.at(t, d);
    for (auto& v : pooled_mean) v /= n_frames;
    for (std::uint32_t t = 0; t < n_frames; ++t)
      for (std::uint32_t d = 0; d < dim; ++d) {
        double z = frames.at(t, d) - pooled_mean[d];
        pooled_var[d] += z * z;
      }
    for (auto& v : pooled_var) {
      v /= n_frames;
      if (v < 1e-10) v = 1e-10;
    }
    if (prior.m0.empty()) prior.m0 = std::move(pooled_mean);
    if (prior.b0.empty()) prior.b0 = std::move(pooled_var);
  }
  if (prior.m0.size() != dim || prior.b0.size() != dim)
    throw std::invalid_argument("dpgmm_fit: prior dimension mismatch");
  for (double b : prior.b0)
    if (!(b > 0.0)) throw std::invalid_argument("dpgmm_fit: b0 must be > 0");

  Rng rng(config.seed);
  std::vector<std::uint32_t> assignment(n_frames, 0);
  std::vector<detail::GibbsCluster> clusters;

  const double log_alpha = std::log(config.alpha);
  std::vector<double> log_prob;

  // Samples a seat for frame t among the current clusters plus a fresh one.
  auto seat = [&](std::uint32_t t) {
    const float* x = frames.row(t).data();
    const std::size_t k_existing = clusters.size();
    log_prob.assign(k_existing + 1, 0.0);
    for (std::size_t k = 0; k < k_existing; ++k) {
      const auto& c = clusters[k];
      double lp = std::log(static_cast<double>(c.n));
      for (std::uint32_t d = 0; d < dim; ++d)
        lp += detail::log_predictive(prior, d, c.n, c.sum[d], c.sumsq[d],
                                     x[d]);
      log_prob[k] = lp;
    }
    {
      double lp = log_alpha;
      for (std::uint32_t d = 0; d < dim; ++d)
        lp += detail::log_predictive(prior, d, 0, 0.0, 0.0, x[d]);
      log_prob[k_existing] = lp;
    }

    double max_lp = log_prob[0];
    for (double lp : log_prob) max_lp = std::max(max_lp, lp);
    double total = 0.0;
    for (auto& lp : log_prob) {
      lp = std::exp(lp - max_lp);
      total += lp;
    }
    double r = rng.uniform() * total;
    std::size_t pick = 0;
    double cum = 0.0;
    for (; pick + 1 < log_prob.size(); ++pick) {
      cum += log_prob[pick];
      if (r < cum) break;
    }

    if (pick == k_existing) clusters.emplace_back(dim);
    clusters[pick].add(x, dim);
    assignment[t] = static_cast<std::uint32_t>(pick);
  };

  // Sequential seating: each frame joins conditioned on the frames seated so
  // far. Starting from one all-frames cluster instead would leave the chain
  // unable to nucleate: an empty cluster's predictive variance is inflated by
  // 1/kappa0, so its weight never competes with an N-sized cluster.
  for (std::uint32_t t = 0; t < n_frames; ++t) seat(t);

  for (std::uint32_t sweep = 0; sweep < config.sweeps; ++sweep) {
    for (std::uint32_t t = 0; t < n_frames; ++t) {
      std::uint32_t old = assignment[t];
      clusters[old].remove(frames.row(t).data(), dim);
      if (clusters[old].n == 0) {
        std::uint32_t last = static_cast<std::uint32_t>(clusters.size()) - 1;
        if (old != last) {
          clusters[old] = std::move(clusters[last]);
          for (auto& a : assignment)
            if (a == last) a = old;
        }
        clusters.pop_back();
      }
      seat(t);
    }
  }

  DpgmmModel model;
  model.dim = dim;
  model.alpha = config.alpha;
  model.prior = prior;
  model.seed = config.seed;
  model.clusters.reserve(clusters.size());
  for (const auto& c : clusters) {
    DpgmmCluster out;
    out.count = c.n;
    out.mean.resize(dim);
    out.variance.resize(dim);
    for (std::uint32_t d = 0; d < dim; ++d) {
      auto p = detail::nig_posterior(prior, d, c.n, c.sum[d], c.sumsq[d]);
      out.mean[d] = p.mn;
      out.variance[d] = p.bn / (p.an + 1.0);
    }
    model.clusters.push_back(std::move(out));
  }
  return model;
}

inline LabelSequence dpgmm_assign(const DpgmmModel& model,
                                  const FrameMatrix& m) {
  if (m.dim() != model.dim)
    throw std::invalid_argument("dpgmm_assign: dimension mismatch");
  if (model.clusters.empty())
    throw std::invalid_argument("dpgmm_assign: empty model");
  const double n_total = static_cast<double>(model.total_count());
  LabelSequence labels(m.num_frames());
  for (std::uint32_t t = 0; t < m.num_frames(); ++t) {
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t best_k = 0;
    for (std::uint32_t k = 0; k < model.num_clusters(); ++k) {
      const auto& c = model.clusters[k];
      double lp = std::log(static_cast<double>(c.count) / n_total);
      for (std::uint32_t d = 0; d < model.dim; ++d)
        lp += detail::log_normal(m.at(t, d), c.mean[d], c.variance[d]);
      if (lp > best) {
        best = lp;
        best_k = k;
      }
    }
    labels[t] = static_cast<std::int32_t>(best_k) + 1;
  }
  return labels;
}

/// Points (K_i, Q_i): fraction of frames covered by the K_i largest clusters.
inline std::vector<std::pair<std::uint32_t, double>> cluster_cdf(
    const std::vector<LabelSequence>& sequences) {
  std::map<std::int32_t, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& seq : sequences)
    for (std::int32_t label : seq) {
      if (label == kRemovedLabel) continue;
      if (label < 1) throw std::invalid_argument("cluster_cdf: bad label");
      ++counts[label];
      ++total;
    }
  if (total == 0) throw std::invalid_argument("cluster_cdf: no labels");
  std::vector<std::uint64_t> sizes;
  sizes.reserve(counts.size());
  for (const auto& [label, c] : counts) sizes.push_back(c);
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  std::vector<std::pair<std::uint32_t, double>> cdf;
  cdf.reserve(sizes.size());
  std::uint64_t cum = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    cum += sizes[i];
    cdf.emplace_back(static_cast<std::uint32_t>(i) + 1,
                     static_cast<double>(cum) / static_cast<double>(total));
  }
  return cdf;
}

inline constexpr char kDpgmmMagic[4] = {'Z', 'R', 'S', 'M'};
inline constexpr std::uint32_t kDpgmmVersion = 1;

inline void write_dpgmm_model(const std::filesystem::path& path,
                              const DpgmmModel& model) {
  auto os = detail::open_out(path);
  detail::put_magic(os, kDpgmmMagic);
  detail::put_u32(os, kDpgmmVersion);
  detail::put_u32(os, model.num_clusters());
  detail::put_u32(os, model.dim);
  detail::put_f64(os, model.alpha);
  detail::put_f64(os, model.prior.kappa0);
  detail::put_f64(os, model.prior.a0);
  detail::put_u64(os, model.seed);
  for (double v : model.prior.m0) detail::put_f64(os, v);
  for (double v : model.prior.b0) detail::put_f64(os, v);
  for (const auto& c : model.clusters) {
    detail::put_u64(os, c.count);
    for (double v : c.mean) detail::put_f64(os, v);
    for (double v : c.variance) detail::put_f64(os, v);
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline DpgmmModel read_dpgmm_model(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  detail::expect_magic(is, kDpgmmMagic, "ZRSM model");
  std::uint32_t version = detail::get_u32(is, "version");
  if (version != kDpgmmVersion)
    throw std::runtime_error("unsupported ZRSM version " +
                             std::to_string(version));
  DpgmmModel model;
  std::uint32_t k_count = detail::get_u32(is, "cluster count");
  model.dim = detail::get_u32(is, "dim");
  if (model.dim == 0) throw std::runtime_error("ZRSM with D == 0");
  model.alpha = detail::get_f64(is, "alpha");
  model.prior.kappa0 = detail::get_f64(is, "kappa0");
  model.prior.a0 = detail::get_f64(is, "a0");
  model.seed = detail::get_u64(is, "seed");
  model.prior.m0.resize(model.dim);
  for (auto& v : model.prior.m0) v = detail::get_f64(is, "m0");
  model.prior.b0.resize(model.dim);
  for (auto& v : model.prior.b0) v = detail::get_f64(is, "b0");
  model.clusters.resize(k_count);
  for (auto& c : model.clusters) {
    c.count = detail::get_u64(is, "cluster size");
    c.mean.resize(model.dim);
    for (auto& v : c.mean) v = detail::get_f64(is, "cluster mean");
    c.variance.resize(model.dim);
    for (auto& v : c.variance) v = detail::get_f64(is, "cluster variance");
  }
  return model;
}

}  // namespace zrs

#endif  // ZRS_DPGMM_HPP_
