#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <random>
#include <utility>

#include "shimkit/net/loss.hpp"
#include "shimkit/net/resnet.hpp"

namespace shimkit::net {

struct TrainConfig {
  int batch_size = 16;
  int epochs = 200;
  double lr = 1e-3;
  double lr_decay = 0.5;
  int decay_every = 50; // epochs
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double ratio_train = 0.8;
  double ratio_val = 0.1;
  double ratio_test = 0.1;
  std::uint64_t fold_seed = 0;

  void validate() const {
    if (batch_size < 2) throw SpecError("train: batch size must be >= 2");
    if (epochs < 0) throw SpecError("train: epochs must be >= 0");
    if (lr <= 0 || lr_decay <= 0 || decay_every < 1) throw SpecError("train: bad schedule");
    if (std::abs(ratio_train + ratio_val + ratio_test - 1.0) > 1e-9) {
      throw SpecError("train: split ratios must sum to 1");
    }
  }

  double lr_at_epoch(int epoch) const { // 0-based
    return lr * std::pow(lr_decay, epoch / decay_every);
  }
};

struct SplitIndices {
  std::vector<int> train, val, test;
};

/// Seeded 8:1:1 shuffle split. Augmented variants stay in the same split
/// as their parent slice (grouped by phantom id + slice index).
inline SplitIndices split_samples(const std::vector<field::SliceSample>& samples,
                                  double ratio_train, double ratio_val, std::uint64_t seed) {
  std::map<std::pair<int, int>, std::vector<int>> groups;
  for (size_t i = 0; i < samples.size(); ++i) {
    const field::Provenance& p = samples[i].provenance;
    groups[{p.phantom_id, p.slice_index}].push_back(static_cast<int>(i));
  }
  std::vector<std::vector<int>> order;
  order.reserve(groups.size());
  for (auto& [key, idx] : groups) order.push_back(std::move(idx));
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const size_t n = order.size();
  const size_t n_train = static_cast<size_t>(std::llround(ratio_train * n));
  const size_t n_val = static_cast<size_t>(std::llround(ratio_val * n));
  SplitIndices split;
  for (size_t g = 0; g < n; ++g) {
    auto& dst = g < n_train ? split.train : (g < n_train + n_val ? split.val : split.test);
    for (int i : order[g]) dst.push_back(i);
  }
  return split;
}

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

template <typename T>
struct TrainedNet {
  NetParams<T> net;
  std::vector<EpochLog> log;
  int best_epoch = -1; // -1: initialization checkpoint (epochs == 0 or no val data)
};

template <typename T>
double evaluate_loss(NetParams<T>& net, const std::vector<field::SliceSample>& samples,
                     const std::vector<LossContext>& contexts, const std::vector<int>& indices,
                     int batch_size) {
  if (indices.empty()) return 0.0;
  double total = 0.0;
  for (size_t at = 0; at < indices.size(); at += batch_size) {
    const size_t end = std::min(at + batch_size, indices.size());
    std::vector<const field::SliceSample*> batch;
    std::vector<LossContext> ctx;
    for (size_t i = at; i < end; ++i) {
      batch.push_back(&samples[indices[i]]);
      ctx.push_back(contexts[indices[i]]);
    }
    const Tensor<T> x = make_input<T>(batch, net.cfg.input_h, net.cfg.input_w);
    const Tensor<T> out = forward(net, x, Mode::kEval);
    total += physics_loss(out, std::span<const LossContext>(ctx)) * static_cast<double>(ctx.size());
  }
  return total / static_cast<double>(indices.size());
}

/// Adam training with the stepped learning-rate schedule; returns the
/// checkpoint with the best validation loss (the final epoch when there
/// is no validation split). Deterministic for fixed seeds.
template <typename T>
TrainedNet<T> train(const std::vector<field::SliceSample>& samples, const SplitIndices& split,
                    const NetConfig& net_cfg, const TrainConfig& cfg) {
  cfg.validate();
  NetParams<T> net = NetParams<T>::init(net_cfg);

  std::vector<LossContext> contexts(samples.size());
  for (int i : split.train) contexts[i] = make_loss_context(samples[i]);
  for (int i : split.val) contexts[i] = make_loss_context(samples[i]);

  TrainedNet<T> result;
  result.net = net;
  if (cfg.epochs == 0 || split.train.empty()) return result;

  std::vector<T> m(net.layout.param_count, T(0));
  std::vector<T> v(net.layout.param_count, T(0));
  long step = 0;
  std::mt19937_64 shuffle_rng(cfg.fold_seed ^ 0x5DEECE66DULL);

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<int> order = split.train;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at_epoch(epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double train_loss = 0.0;
    size_t train_count = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const size_t end = std::min(at + static_cast<size_t>(cfg.batch_size), order.size());
      if (end - at < 2) break; // batch statistics need at least two samples
      std::vector<const field::SliceSample*> batch;
      std::vector<LossContext> ctx;
      for (size_t i = at; i < end; ++i) {
        batch.push_back(&samples[order[i]]);
        ctx.push_back(contexts[order[i]]);
      }
      const Tensor<T> x = make_input<T>(batch, net.cfg.input_h, net.cfg.input_w);
      Tape<T> tape;
      const Tensor<T> out = forward(net, x, Mode::kTrain, &tape);
      Tensor<T> dout;
      const double loss = physics_loss(out, std::span<const LossContext>(ctx), &dout);
      if (!std::isfinite(loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step));
      }
      train_loss += loss * static_cast<double>(ctx.size());
      train_count += ctx.size();

      const std::vector<T> grad = backward(net, tape, dout);
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (size_t i = 0; i < grad.size(); ++i) {
        m[i] = T(cfg.beta1) * m[i] + T(1.0 - cfg.beta1) * grad[i];
        v[i] = T(cfg.beta2) * v[i] + T(1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = static_cast<double>(m[i]) / bc1;
        const double v_hat = static_cast<double>(v[i]) / bc2;
        net.params[i] -= T(lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = train_count ? train_loss / static_cast<double>(train_count) : 0.0;
    log.val_loss = evaluate_loss(net, samples, contexts, split.val, cfg.batch_size);
    result.log.push_back(log);

    const double selector = split.val.empty() ? -static_cast<double>(epoch) : log.val_loss;
    if (selector < best_val) {
      best_val = selector;
      result.net = net;
      result.best_epoch = epoch;
    }
  }
  return result;
}

struct PredictResult {
  field::ShimWeights weights;
  double rmse = 0.0;
  double wall_time = 0.0; // forward pass + canonicalization only
};

template <typename T>
PredictResult predict(NetParams<T>& net, const field::SliceSample& sample) {
  const field::SliceSample* one[] = {&sample};
  const Tensor<T> x = make_input<T>(one, net.cfg.input_h, net.cfg.input_w);

  const auto t0 = std::chrono::steady_clock::now();
  const Tensor<T> out = forward(net, x, Mode::kEval);
  field::ShimWeights w{weights_from_output(out.sample(0), net.cfg.output_dim / 2)};
  w = field::canonicalize_phase(w);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  PredictResult r;
  r.weights = std::move(w);
  r.rmse = field::rmse(sample.b1, sample.mask, sample.target, r.weights);
  r.wall_time = elapsed;
  return r;
}

} // namespace shimkit::net
