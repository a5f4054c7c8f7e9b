// zrs/mtl.hpp

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

// Multi-task MLP with a linear bottleneck.
//
// The trunk is shared across tasks: sigmoid hidden layers, one linear
// bottleneck layer of dim B, then optional post-bottleneck sigmoid layers.
// Each task owns an affine + softmax head on top of the trunk output.
// Training is plain SGD on per-task cross-entropy: every minibatch comes
// from a single task and updates the trunk plus that task's head only.
// The learning rate halves when the size-weighted cross-validation loss
// stops improving and training ends once it falls below 1/128 of the
// initial rate.
//
// Parameters are double precision throughout so analytic gradients can be
// checked against central finite differences tightly.

#ifndef ZRS_MTL_HPP_
#define ZRS_MTL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "zrs/feature_store.hpp"
#include "zrs/frame_matrix.hpp"
#include "zrs/rng.hpp"

namespace zrs {

enum class Activation : std::uint32_t { kSigmoid = 0, kLinear = 1 };

struct AffineLayer {
  std::uint32_t in = 0, out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
};

struct MtlNetwork {
  std::uint32_t input_dim = 0;
  std::vector<AffineLayer> trunk;
  std::vector<Activation> trunk_activation;  // parallel to trunk
  std::size_t bottleneck_index = 0;          // trunk layer whose output is the BNF
  std::vector<AffineLayer> heads;
  std::uint64_t seed = 0;

  std::uint32_t bottleneck_dim() const {
    return trunk[bottleneck_index].out;
  }
  std::uint32_t trunk_output_dim() const { return trunk.back().out; }
  std::size_t num_tasks() const { return heads.size(); }

  void validate() const {
    if (input_dim == 0 || trunk.empty() || heads.empty())
      throw std::invalid_argument("mtl: empty network");
    if (trunk.size() != trunk_activation.size())
      throw std::invalid_argument("mtl: activation list mismatch");
    if (bottleneck_index >= trunk.size())
      throw std::invalid_argument("mtl: bad bottleneck index");
    std::uint32_t d = input_dim;
    for (const auto& layer : trunk) {
      if (layer.in != d || layer.out == 0 ||
          layer.w.size() != static_cast<std::size_t>(layer.in) * layer.out ||
          layer.b.size() != layer.out)
        throw std::invalid_argument("mtl: trunk dims do not chain");
      d = layer.out;
    }
    for (const auto& head : heads) {
      if (head.in != d || head.out < 2 ||
          head.w.size() != static_cast<std::size_t>(head.in) * head.out ||
          head.b.size() != head.out)
        throw std::invalid_argument("mtl: head dims invalid");
    }
  }
};

struct MtlArchitecture {
  std::uint32_t input_dim = 0;
  std::vector<std::uint32_t> shared_dims;   // sigmoid layers before the BN
  std::uint32_t bottleneck_dim = 40;
  std::vector<std::uint32_t> post_dims;     // sigmoid layers after the BN
  std::vector<std::uint32_t> head_classes;  // per-task class counts

  void validate() const {
    if (input_dim == 0) throw std::invalid_argument("mtl: input_dim == 0");
    if (bottleneck_dim == 0)
      throw std::invalid_argument("mtl: bottleneck_dim == 0");
    for (auto d : shared_dims)
      if (d == 0) throw std::invalid_argument("mtl: zero shared dim");
    for (auto d : post_dims)
      if (d == 0) throw std::invalid_argument("mtl: zero post dim");
    if (head_classes.empty()) throw std::invalid_argument("mtl: no tasks");
    for (auto c : head_classes)
      if (c < 2) throw std::invalid_argument("mtl: head needs >= 2 classes");
  }
};

/// Weights uniform in +-1/sqrt(fan_in), biases zero, drawn in layer order.
inline MtlNetwork build_mtl_network(const MtlArchitecture& arch,
                                    std::uint64_t seed) {
  arch.validate();
  MtlNetwork net;
  net.input_dim = arch.input_dim;
  net.seed = seed;
  Rng rng(seed);

  auto make_layer = [&rng](std::uint32_t in, std::uint32_t out) {
    AffineLayer layer;
    layer.in = in;
    layer.out = out;
    layer.w.resize(static_cast<std::size_t>(in) * out);
    layer.b.assign(out, 0.0);
    double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& w : layer.w) w = (2.0 * rng.uniform() - 1.0) * scale;
    return layer;
  };

  std::uint32_t d = arch.input_dim;
  for (auto h : arch.shared_dims) {
    net.trunk.push_back(make_layer(d, h));
    net.trunk_activation.push_back(Activation::kSigmoid);
    d = h;
  }
  net.trunk.push_back(make_layer(d, arch.bottleneck_dim));
  net.trunk_activation.push_back(Activation::kLinear);
  net.bottleneck_index = net.trunk.size() - 1;
  d = arch.bottleneck_dim;
  for (auto h : arch.post_dims) {
    net.trunk.push_back(make_layer(d, h));
    net.trunk_activation.push_back(Activation::kSigmoid);
    d = h;
  }
  for (auto c : arch.head_classes) net.heads.push_back(make_layer(d, c));
  net.validate();
  return net;
}

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline void affine_forward(const AffineLayer& layer,
                           const std::vector<double>& x,
                           std::vector<double>& out) {
  out.assign(layer.out, 0.0);
  for (std::uint32_t o = 0; o < layer.out; ++o) {
    double z = layer.b[o];
    const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
    for (std::uint32_t i = 0; i < layer.in; ++i) z += wrow[i] * x[i];
    out[o] = z;
  }
}

inline void softmax_inplace(std::vector<double>& z) {
  double m = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    total += v;
  }
  for (auto& v : z) v /= total;
}

/// Trunk activations for one sample: act[0] is the input, act[l+1] the
/// output of trunk layer l.
inline void trunk_forward(const MtlNetwork& net, const std::vector<double>& x,
                          std::vector<std::vector<double>>& act) {
  act.assign(net.trunk.size() + 1, {});
  act[0] = x;
  for (std::size_t l = 0; l < net.trunk.size(); ++l) {
    affine_forward(net.trunk[l], act[l], act[l + 1]);
    if (net.trunk_activation[l] == Activation::kSigmoid)
      for (auto& v : act[l + 1]) v = sigmoid(v);
  }
}

inline std::vector<double> row_as_double(const FrameMatrix& m,
                                         std::uint32_t t) {
  auto r = m.row(t);
  return std::vector<double>(r.begin(), r.end());
}

}  // namespace detail

struct MtlGradients {
  std::vector<AffineLayer> trunk;  // same shapes, values are d(loss)/d(param)
  std::vector<AffineLayer> heads;
};

inline MtlGradients zero_gradients(const MtlNetwork& net) {
  MtlGradients g;
  auto zero_like = [](const AffineLayer& layer) {
    AffineLayer z;
    z.in = layer.in;
    z.out = layer.out;
    z.w.assign(layer.w.size(), 0.0);
    z.b.assign(layer.b.size(), 0.0);
    return z;
  };
  for (const auto& layer : net.trunk) g.trunk.push_back(zero_like(layer));
  for (const auto& head : net.heads) g.heads.push_back(zero_like(head));
  return g;
}

/// Cross-entropy of one sample and, if grads is non-null, its gradient
/// accumulated into grads (summed, not averaged).
inline double mtl_loss_backward(const MtlNetwork& net,
                                const std::vector<double>& x,
                                std::uint32_t target, std::size_t task,
                                MtlGradients* grads) {
  if (task >= net.heads.size())
    throw std::invalid_argument("mtl: unknown task");
  const AffineLayer& head = net.heads[task];
  if (target >= head.out) throw std::invalid_argument("mtl: target out of range");
  if (x.size() != net.input_dim)
    throw std::invalid_argument("mtl: input dimension mismatch");

  std::vector<std::vector<double>> act;
  detail::trunk_forward(net, x, act);
  std::vector<double> p;
  detail::affine_forward(head, act.back(), p);
  detail::softmax_inplace(p);
  double loss = -std::log(std::max(p[target], 1e-300));
  if (!grads) return loss;

  std::vector<double> dz = p;
  dz[target] -= 1.0;
  auto& gh = grads->heads[task];
  std::vector<double> da(head.in, 0.0);
  for (std::uint32_t o = 0; o < head.out; ++o) {
    const double* wrow = head.w.data() + static_cast<std::size_t>(o) * head.in;
    double* grow = gh.w.data() + static_cast<std::size_t>(o) * head.in;
    for (std::uint32_t i = 0; i < head.in; ++i) {
      grow[i] += dz[o] * act.back()[i];
      da[i] += wrow[i] * dz[o];
    }
    gh.b[o] += dz[o];
  }

  for (std::size_t l = net.trunk.size(); l-- > 0;) {
    const AffineLayer& layer = net.trunk[l];
    std::vector<double> dzl(layer.out);
    for (std::uint32_t o = 0; o < layer.out; ++o) {
      double d = da[o];
      if (net.trunk_activation[l] == Activation::kSigmoid) {
        double a = act[l + 1][o];
        d *= a * (1.0 - a);
      }
      dzl[o] = d;
    }
    auto& gl = grads->trunk[l];
    std::vector<double> da_prev(layer.in, 0.0);
    for (std::uint32_t o = 0; o < layer.out; ++o) {
      const double* wrow =
          layer.w.data() + static_cast<std::size_t>(o) * layer.in;
      double* grow = gl.w.data() + static_cast<std::size_t>(o) * layer.in;
      for (std::uint32_t i = 0; i < layer.in; ++i) {
        grow[i] += dzl[o] * act[l][i];
        da_prev[i] += wrow[i] * dzl[o];
      }
      gl.b[o] += dzl[o];
    }
    da = std::move(da_prev);
  }
  return loss;
}

struct MtlForwardResult {
  std::vector<std::vector<double>> probabilities;  // rows sum to 1
  std::vector<std::vector<double>> bottleneck;     // rows of dim B
};

inline MtlForwardResult mtl_forward(const MtlNetwork& net,
                                    const FrameMatrix& batch,
                                    std::size_t task) {
  if (task >= net.heads.size())
    throw std::invalid_argument("mtl: unknown task");
  if (batch.dim() != net.input_dim)
    throw std::invalid_argument("mtl: input dimension mismatch");
  MtlForwardResult r;
  r.probabilities.reserve(batch.num_frames());
  r.bottleneck.reserve(batch.num_frames());
  std::vector<std::vector<double>> act;
  for (std::uint32_t t = 0; t < batch.num_frames(); ++t) {
    detail::trunk_forward(net, detail::row_as_double(batch, t), act);
    r.bottleneck.push_back(act[net.bottleneck_index + 1]);
    std::vector<double> p;
    detail::affine_forward(net.heads[task], act.back(), p);
    detail::softmax_inplace(p);
    r.probabilities.push_back(std::move(p));
  }
  return r;
}

inline FrameMatrix extract_bnf(const MtlNetwork& net, const FrameMatrix& m) {
  if (m.dim() != net.input_dim)
    throw std::invalid_argument("extract_bnf: dimension mismatch");
  FrameMatrix out(m.num_frames(), net.bottleneck_dim());
  std::vector<std::vector<double>> act;
  for (std::uint32_t t = 0; t < m.num_frames(); ++t) {
    detail::trunk_forward(net, detail::row_as_double(m, t), act);
    const auto& bn = act[net.bottleneck_index + 1];
    for (std::uint32_t d = 0; d < out.dim(); ++d)
      out.at(t, d) = static_cast<float>(bn[d]);
  }
  return out;
}

inline FrameMatrix concat_features(const std::vector<FrameMatrix>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_features: no parts");
  std::uint32_t t_count = parts[0].num_frames();
  std::uint32_t total_dim = 0;
  for (const auto& p : parts) {
    if (p.num_frames() != t_count)
      throw std::invalid_argument("concat_features: frame count mismatch");
    total_dim += p.dim();
  }
  FrameMatrix out(t_count, total_dim);
  for (std::uint32_t t = 0; t < t_count; ++t) {
    std::uint32_t offset = 0;
    for (const auto& p : parts) {
      for (std::uint32_t d = 0; d < p.dim(); ++d)
        out.at(t, offset + d) = p.at(t, d);
      offset += p.dim();
    }
  }
  return out;
}

struct TaskDataset {
  std::string task_id;
  FrameMatrix frames;
  std::vector<std::uint32_t> targets;
};

struct MtlTrainConfig {
  double learning_rate = 0.008;
  std::uint32_t halving_patience = 0;  // no-improvement epochs before halving
  std::uint32_t minibatch = 256;
  std::uint32_t max_epochs = 100;
  double cv_fraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("mtl: lr <= 0");
    if (minibatch == 0) throw std::invalid_argument("mtl: minibatch == 0");
    if (!(cv_fraction > 0.0) || !(cv_fraction < 0.5))
      throw std::invalid_argument("mtl: cv_fraction outside (0, 0.5)");
  }
};

struct MtlEpochLog {
  std::uint32_t epoch = 0;
  double learning_rate = 0.0;
  std::vector<double> train_loss_per_task;  // mean over the epoch's batches
  std::vector<double> cv_loss_per_task;     // mean after the epoch's updates
  double cv_combined = 0.0;
};

struct MtlTrainResult {
  MtlNetwork net;
  std::vector<MtlEpochLog> epochs;
};

inline MtlTrainResult mtl_train(const MtlNetwork& initial,
                                const std::vector<TaskDataset>& datasets,
                                const MtlTrainConfig& config) {
  config.validate();
  initial.validate();
  if (datasets.empty()) throw std::invalid_argument("mtl_train: no datasets");
  if (datasets.size() != initial.num_tasks())
    throw std::invalid_argument("mtl_train: dataset/head count mismatch");
  for (std::size_t task = 0; task < datasets.size(); ++task) {
    const auto& ds = datasets[task];
    if (ds.frames.num_frames() < 2)
      throw std::invalid_argument("mtl_train: task " + ds.task_id +
                                  " needs at least 2 frames");
    if (ds.frames.num_frames() != ds.targets.size())
      throw std::invalid_argument("mtl_train: frames/targets mismatch in " +
                                  ds.task_id);
    if (ds.frames.dim() != initial.input_dim)
      throw std::invalid_argument("mtl_train: input dim mismatch in " +
                                  ds.task_id);
    for (auto y : ds.targets)
      if (y >= initial.heads[task].out)
        throw std::invalid_argument("mtl_train: target out of range in " +
                                    ds.task_id);
  }

  MtlTrainResult result;
  result.net = initial;
  Rng rng(config.seed);

  // CV split: the last max(1, floor(n * cv_fraction)) frames of each task.
  std::vector<std::uint32_t> cv_size(datasets.size());
  std::vector<std::uint32_t> train_size(datasets.size());
  std::uint64_t cv_total = 0;
  for (std::size_t task = 0; task < datasets.size(); ++task) {
    std::uint32_t n = datasets[task].frames.num_frames();
    cv_size[task] = std::max<std::uint32_t>(
        1, static_cast<std::uint32_t>(n * config.cv_fraction));
    train_size[task] = n - cv_size[task];
    cv_total += cv_size[task];
  }

  auto cv_loss = [&](std::size_t task) {
    const auto& ds = datasets[task];
    std::uint32_t n = ds.frames.num_frames();
    double total = 0.0;
    for (std::uint32_t t = train_size[task]; t < n; ++t)
      total += mtl_loss_backward(result.net,
                                 detail::row_as_double(ds.frames, t),
                                 ds.targets[t], task, nullptr);
    return total / cv_size[task];
  };

  const double lr_floor = config.learning_rate / 128.0;
  double lr = config.learning_rate;
  double best_cv = std::numeric_limits<double>::infinity();
  std::uint32_t no_improvement = 0;

  for (std::uint32_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    // One epoch: every task's training frames, shuffled, cut into
    // minibatches, with the global batch order shuffled across tasks.
    struct BatchRef {
      std::size_t task;
      std::uint32_t begin, end;
    };
    std::vector<std::vector<std::uint32_t>> order(datasets.size());
    std::vector<BatchRef> schedule;
    for (std::size_t task = 0; task < datasets.size(); ++task) {
      order[task].resize(train_size[task]);
      std::iota(order[task].begin(), order[task].end(), 0u);
      rng.shuffle(order[task]);
      for (std::uint32_t b = 0; b < train_size[task]; b += config.minibatch)
        schedule.push_back(
            {task, b, std::min(b + config.minibatch, train_size[task])});
    }
    rng.shuffle(schedule);

    std::vector<double> epoch_loss(datasets.size(), 0.0);
    for (const auto& batch : schedule) {
      const auto& ds = datasets[batch.task];
      MtlGradients grads = zero_gradients(result.net);
      double loss = 0.0;
      for (std::uint32_t i = batch.begin; i < batch.end; ++i) {
        std::uint32_t t = order[batch.task][i];
        loss += mtl_loss_backward(result.net,
                                  detail::row_as_double(ds.frames, t),
                                  ds.targets[t], batch.task, &grads);
      }
      if (!std::isfinite(loss))
        throw std::runtime_error(
            "mtl_train: non-finite loss in task " + ds.task_id + " at epoch " +
            std::to_string(epoch) + " (lr " + std::to_string(lr) + ")");
      epoch_loss[batch.task] += loss;

      double step = lr / static_cast<double>(batch.end - batch.begin);
      for (std::size_t l = 0; l < result.net.trunk.size(); ++l) {
        auto& layer = result.net.trunk[l];
        const auto& g = grads.trunk[l];
        for (std::size_t i = 0; i < layer.w.size(); ++i)
          layer.w[i] -= step * g.w[i];
        for (std::size_t i = 0; i < layer.b.size(); ++i)
          layer.b[i] -= step * g.b[i];
      }
      auto& head = result.net.heads[batch.task];
      const auto& gh = grads.heads[batch.task];
      for (std::size_t i = 0; i < head.w.size(); ++i)
        head.w[i] -= step * gh.w[i];
      for (std::size_t i = 0; i < head.b.size(); ++i)
        head.b[i] -= step * gh.b[i];
    }

    MtlEpochLog log;
    log.epoch = epoch;
    log.learning_rate = lr;
    for (std::size_t task = 0; task < datasets.size(); ++task) {
      log.train_loss_per_task.push_back(epoch_loss[task] / train_size[task]);
      log.cv_loss_per_task.push_back(cv_loss(task));
      log.cv_combined += log.cv_loss_per_task.back() * cv_size[task];
    }
    log.cv_combined /= static_cast<double>(cv_total);
    result.epochs.push_back(log);

    if (log.cv_combined < best_cv) {
      best_cv = log.cv_combined;
      no_improvement = 0;
    } else {
      ++no_improvement;
      if (no_improvement > config.halving_patience) {
        lr /= 2.0;
        no_improvement = 0;
        if (lr < lr_floor) break;
      }
    }
  }
  return result;
}

/// Max relative error between analytic and central-difference gradients of
/// the one-sample cross-entropy, over every parameter in the network.
inline double gradient_check(const MtlNetwork& net,
                             const std::vector<double>& x,
                             std::uint32_t target, std::size_t task) {
  MtlGradients grads = zero_gradients(net);
  mtl_loss_backward(net, x, target, task, &grads);

  MtlNetwork probe = net;
  auto params = [](MtlNetwork& n) {
    std::vector<double*> p;
    for (auto& layer : n.trunk) {
      for (auto& v : layer.w) p.push_back(&v);
      for (auto& v : layer.b) p.push_back(&v);
    }
    for (auto& head : n.heads) {
      for (auto& v : head.w) p.push_back(&v);
      for (auto& v : head.b) p.push_back(&v);
    }
    return p;
  };
  auto grad_values = [](const MtlGradients& g) {
    std::vector<double> v;
    for (const auto& layer : g.trunk) {
      v.insert(v.end(), layer.w.begin(), layer.w.end());
      v.insert(v.end(), layer.b.begin(), layer.b.end());
    }
    for (const auto& head : g.heads) {
      v.insert(v.end(), head.w.begin(), head.w.end());
      v.insert(v.end(), head.b.begin(), head.b.end());
    }
    return v;
  };

  std::vector<double*> slots = params(probe);
  std::vector<double> analytic = grad_values(grads);
  double max_rel = 0.0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    double original = *slots[i];
    double h = 1e-3 * (1.0 + std::abs(original));
    *slots[i] = original + h;
    double up = mtl_loss_backward(probe, x, target, task, nullptr);
    *slots[i] = original - h;
    double down = mtl_loss_backward(probe, x, target, task, nullptr);
    *slots[i] = original;
    double numeric = (up - down) / (2.0 * h);
    double rel = std::abs(analytic[i] - numeric) /
                 std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

inline constexpr char kNetworkMagic[4] = {'Z', 'R', 'S', 'N'};
inline constexpr std::uint32_t kNetworkVersion = 1;

inline void write_mtl_network(const std::filesystem::path& path,
                              const MtlNetwork& net) {
  net.validate();
  auto os = detail::open_out(path);
  detail::put_magic(os, kNetworkMagic);
  detail::put_u32(os, kNetworkVersion);
  detail::put_u32(os, net.input_dim);
  detail::put_u32(os, static_cast<std::uint32_t>(net.trunk.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(net.bottleneck_index));
  detail::put_u32(os, static_cast<std::uint32_t>(net.heads.size()));
  detail::put_u64(os, net.seed);
  auto put_layer = [&os](const AffineLayer& layer) {
    detail::put_u32(os, layer.in);
    detail::put_u32(os, layer.out);
    for (double v : layer.w) detail::put_f64(os, v);
    for (double v : layer.b) detail::put_f64(os, v);
  };
  for (std::size_t l = 0; l < net.trunk.size(); ++l) {
    detail::put_u32(os, static_cast<std::uint32_t>(net.trunk_activation[l]));
    put_layer(net.trunk[l]);
  }
  for (const auto& head : net.heads) put_layer(head);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline MtlNetwork read_mtl_network(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  detail::expect_magic(is, kNetworkMagic, "ZRSN network");
  std::uint32_t version = detail::get_u32(is, "version");
  if (version != kNetworkVersion)
    throw std::runtime_error("unsupported ZRSN version " +
                             std::to_string(version));
  MtlNetwork net;
  net.input_dim = detail::get_u32(is, "input dim");
  std::uint32_t trunk_layers = detail::get_u32(is, "trunk layer count");
  net.bottleneck_index = detail::get_u32(is, "bottleneck index");
  std::uint32_t head_count = detail::get_u32(is, "head count");
  net.seed = detail::get_u64(is, "seed");
  auto get_layer = [&is]() {
    AffineLayer layer;
    layer.in = detail::get_u32(is, "layer in dim");
    layer.out = detail::get_u32(is, "layer out dim");
    layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
    for (auto& v : layer.w) v = detail::get_f64(is, "weight");
    layer.b.resize(layer.out);
    for (auto& v : layer.b) v = detail::get_f64(is, "bias");
    return layer;
  };
  for (std::uint32_t l = 0; l < trunk_layers; ++l) {
    auto a = detail::get_u32(is, "activation");
    if (a > 1) throw std::runtime_error("bad activation code");
    net.trunk_activation.push_back(static_cast<Activation>(a));
    net.trunk.push_back(get_layer());
  }
  for (std::uint32_t h = 0; h < head_count; ++h)
    net.heads.push_back(get_layer());
  net.validate();
  return net;
}

}  // namespace zrs

#endif  // ZRS_MTL_HPP_
