#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "shimkit/net/tensor.hpp"

namespace shimkit::net {

/// Residual regressor configuration. Desk defaults are the paper-style
/// widths divided by four; paper-scale widths (64,128,256,512) fit behind
/// the same structure.
struct NetConfig {
  int input_channels = 16; // 2C: real/imag per coil
  int stem_width = 16;
  std::array<int, 4> stage_widths{16, 32, 64, 128};
  int blocks_per_stage = 2;
  int output_dim = 16; // 2C interleaved real/imag weights
  int input_h = 64;
  int input_w = 64;
  std::uint64_t seed = 0;

  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  void validate() const {
    if (input_channels < 1 || output_dim < 2 || output_dim % 2 != 0) {
      throw SpecError("net: input_channels >= 1 and even output_dim >= 2 required");
    }
    if (stem_width != stage_widths[0]) throw SpecError("net: stem width must equal stage 1 width");
    for (int s = 1; s < 4; ++s) {
      if (stage_widths[s] != 2 * stage_widths[s - 1]) {
        throw SpecError("net: stage widths must double per stage");
      }
    }
    if (blocks_per_stage != 2) throw SpecError("net: two blocks per stage");
    if (input_h < 8 || input_w < 8) throw SpecError("net: input smaller than 8x8");
  }
};

struct ConvSpec {
  int in_c = 0, out_c = 0, k = 0, stride = 1, pad = 0;
  size_t off = 0;
  size_t count() const { return static_cast<size_t>(out_c) * in_c * k * k; }
};

struct BnSpec {
  int c = 0;
  size_t off_gamma = 0, off_beta = 0; // in the parameter vector
  size_t off_mean = 0, off_var = 0;   // in the buffer vector
};

struct FcSpec {
  int in = 0, out = 0;
  size_t off_w = 0, off_b = 0;
};

struct BlockSpec {
  ConvSpec conv1, conv2;
  BnSpec bn1, bn2;
  bool projected = false;
  ConvSpec proj;
  BnSpec proj_bn;
};

/// Offsets of every layer inside the flat parameter / buffer vectors.
struct NetLayout {
  ConvSpec stem;
  BnSpec stem_bn;
  std::vector<BlockSpec> blocks;
  FcSpec fc;
  size_t param_count = 0;
  size_t buffer_count = 0;

  static NetLayout build(const NetConfig& cfg) {
    cfg.validate();
    NetLayout lay;
    size_t p = 0, b = 0;
    auto conv = [&](int in_c, int out_c, int k, int stride, int pad) {
      ConvSpec s{in_c, out_c, k, stride, pad, p};
      p += s.count();
      return s;
    };
    auto bn = [&](int c) {
      BnSpec s{c, p, p + c, b, b + c};
      p += 2 * static_cast<size_t>(c);
      b += 2 * static_cast<size_t>(c);
      return s;
    };

    lay.stem = conv(cfg.input_channels, cfg.stem_width, 3, 1, 1);
    lay.stem_bn = bn(cfg.stem_width);
    int in_c = cfg.stem_width;
    for (int stage = 0; stage < 4; ++stage) {
      const int width = cfg.stage_widths[stage];
      for (int blk = 0; blk < cfg.blocks_per_stage; ++blk) {
        const int stride = (stage > 0 && blk == 0) ? 2 : 1;
        BlockSpec block;
        block.conv1 = conv(in_c, width, 3, stride, 1);
        block.bn1 = bn(width);
        block.conv2 = conv(width, width, 3, 1, 1);
        block.bn2 = bn(width);
        block.projected = (stride != 1 || in_c != width);
        if (block.projected) {
          block.proj = conv(in_c, width, 1, stride, 0);
          block.proj_bn = bn(width);
        }
        lay.blocks.push_back(block);
        in_c = width;
      }
    }
    lay.fc = FcSpec{in_c, cfg.output_dim, p, p + static_cast<size_t>(in_c) * cfg.output_dim};
    p += static_cast<size_t>(in_c) * cfg.output_dim + cfg.output_dim;
    lay.param_count = p;
    lay.buffer_count = b;
    return lay;
  }
};

/// Trainable parameter count as a pure function of the configuration.
inline size_t parameter_count(const NetConfig& cfg) { return NetLayout::build(cfg).param_count; }

/// Flat parameter vector plus batch-norm running statistics.
template <typename T>
struct NetParams {
  NetConfig cfg;
  NetLayout layout;
  std::vector<T> params;
  std::vector<T> buffers; // running mean/var pairs

  static NetParams init(const NetConfig& cfg) {
    NetParams np;
    np.cfg = cfg;
    np.layout = NetLayout::build(cfg);
    np.params.assign(np.layout.param_count, T(0));
    np.buffers.assign(np.layout.buffer_count, T(0));

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill_conv = [&](const ConvSpec& s) {
      const double std_dev = std::sqrt(2.0 / (static_cast<double>(s.in_c) * s.k * s.k));
      for (size_t i = 0; i < s.count(); ++i) np.params[s.off + i] = T(normal(rng) * std_dev);
    };
    auto fill_bn = [&](const BnSpec& s) {
      for (int i = 0; i < s.c; ++i) {
        np.params[s.off_gamma + i] = T(1);
        np.params[s.off_beta + i] = T(0);
        np.buffers[s.off_mean + i] = T(0);
        np.buffers[s.off_var + i] = T(1);
      }
    };
    fill_conv(np.layout.stem);
    fill_bn(np.layout.stem_bn);
    for (const BlockSpec& blk : np.layout.blocks) {
      fill_conv(blk.conv1);
      fill_bn(blk.bn1);
      fill_conv(blk.conv2);
      fill_bn(blk.bn2);
      if (blk.projected) {
        fill_conv(blk.proj);
        fill_bn(blk.proj_bn);
      }
    }
    const double fc_std = std::sqrt(1.0 / np.layout.fc.in);
    for (size_t i = 0; i < static_cast<size_t>(np.layout.fc.in) * np.layout.fc.out; ++i) {
      np.params[np.layout.fc.off_w + i] = T(normal(rng) * fc_std);
    }
    // FC bias stays zero
    return np;
  }

  template <typename U>
  NetParams<U> cast() const {
    NetParams<U> out;
    out.cfg = cfg;
    out.layout = layout;
    out.params.assign(params.begin(), params.end());
    out.buffers.assign(buffers.begin(), buffers.end());
    return out;
  }
};

/// Recorded intermediates of one training-mode forward pass.
template <typename T>
struct BlockTape {
  Tensor<T> in;
  Tensor<T> conv1_out;
  BnCache<T> bn1;
  Tensor<T> relu1_out;
  Tensor<T> conv2_out;
  BnCache<T> bn2;
  Tensor<T> proj_out; // pre-BN shortcut, only when projected
  BnCache<T> proj_bn;
  Tensor<T> block_out; // post-add, post-ReLU
};

template <typename T>
struct Tape {
  Tensor<T> input;
  Tensor<T> stem_out;
  BnCache<T> stem_bn;
  Tensor<T> stem_relu;
  std::vector<BlockTape<T>> blocks;
  Tensor<T> pooled;
  bool recorded = false;
};

enum class Mode { kTrain, kEval };

/// Full forward pass. In train mode, records everything backward() needs
/// and updates the running BN statistics; eval mode uses running
/// statistics only and is deterministic across batch compositions.
template <typename T>
Tensor<T> forward(NetParams<T>& net, const Tensor<T>& x, Mode mode, Tape<T>* tape = nullptr) {
  const NetConfig& cfg = net.cfg;
  const NetLayout& lay = net.layout;
  if (x.c != cfg.input_channels || x.h != cfg.input_h || x.w != cfg.input_w) {
    throw DimensionError("net forward: input shape does not match configuration");
  }
  if (x.n < 1 || (mode == Mode::kTrain && x.n < 2)) {
    throw DimensionError("net forward: train mode needs batch >= 2");
  }
  const bool record = (mode == Mode::kTrain && tape);
  const T momentum = T(cfg.bn_momentum);
  const T eps = T(cfg.bn_eps);

  auto run_bn = [&](const Tensor<T>& in, const BnSpec& s, BnCache<T>& cache) {
    if (mode == Mode::kTrain) {
      return batchnorm_forward_train(in, net.params.data() + s.off_gamma,
                                     net.params.data() + s.off_beta,
                                     net.buffers.data() + s.off_mean,
                                     net.buffers.data() + s.off_var, momentum, eps, cache);
    }
    return batchnorm_forward_eval(in, net.params.data() + s.off_gamma,
                                  net.params.data() + s.off_beta, net.buffers.data() + s.off_mean,
                                  net.buffers.data() + s.off_var, eps);
  };

  std::vector<T> scratch;
  if (record) {
    tape->input = x;
    tape->blocks.assign(lay.blocks.size(), BlockTape<T>{});
  }

  Tensor<T> cur = conv2d_forward(x, net.params.data() + lay.stem.off, lay.stem.out_c, 3, 1, 1,
                                 &scratch);
  if (record) tape->stem_out = cur;
  BnCache<T> stem_cache;
  cur = run_bn(cur, lay.stem_bn, stem_cache);
  relu_inplace(cur);
  if (record) {
    tape->stem_bn = stem_cache;
    tape->stem_relu = cur;
  }

  for (size_t bi = 0; bi < lay.blocks.size(); ++bi) {
    const BlockSpec& blk = lay.blocks[bi];
    BlockTape<T>* bt = record ? &tape->blocks[bi] : nullptr;
    if (bt) bt->in = cur;

    Tensor<T> main = conv2d_forward(cur, net.params.data() + blk.conv1.off, blk.conv1.out_c, 3,
                                    blk.conv1.stride, 1, &scratch);
    if (bt) bt->conv1_out = main;
    BnCache<T> c1;
    main = run_bn(main, blk.bn1, c1);
    relu_inplace(main);
    if (bt) {
      bt->bn1 = c1;
      bt->relu1_out = main;
    }
    main = conv2d_forward(main, net.params.data() + blk.conv2.off, blk.conv2.out_c, 3, 1, 1,
                          &scratch);
    if (bt) bt->conv2_out = main;
    BnCache<T> c2;
    main = run_bn(main, blk.bn2, c2);
    if (bt) bt->bn2 = c2;

    Tensor<T> shortcut;
    if (blk.projected) {
      shortcut = conv2d_forward(cur, net.params.data() + blk.proj.off, blk.proj.out_c, 1,
                                blk.proj.stride, 0, &scratch);
      if (bt) bt->proj_out = shortcut;
      BnCache<T> cp;
      shortcut = run_bn(shortcut, blk.proj_bn, cp);
      if (bt) bt->proj_bn = cp;
    } else {
      shortcut = cur;
    }
    for (size_t i = 0; i < main.size(); ++i) main.v[i] += shortcut.v[i];
    relu_inplace(main);
    if (bt) bt->block_out = main;
    cur = std::move(main);
  }

  Tensor<T> pooled = global_avg_pool(cur);
  if (record) {
    tape->pooled = pooled;
    tape->recorded = true;
  }
  return fully_connected(pooled, net.params.data() + lay.fc.off_w, net.params.data() + lay.fc.off_b,
                         lay.fc.out);
}

/// Reverse-mode pass: given dL/doutput, accumulates exact parameter
/// gradients (including through the BN batch statistics). Requires a tape
/// recorded by a train-mode forward.
template <typename T>
std::vector<T> backward(const NetParams<T>& net, const Tape<T>& tape, const Tensor<T>& doutput) {
  if (!tape.recorded) throw DomainError("net backward: no recorded forward pass");
  const NetLayout& lay = net.layout;
  std::vector<T> grad(lay.param_count, T(0));

  auto bn_bwd = [&](const Tensor<T>& pre_bn, const Tensor<T>& dy, const BnSpec& s,
                    const BnCache<T>& cache) {
    return batchnorm_backward(pre_bn, dy, net.params.data() + s.off_gamma, cache,
                              grad.data() + s.off_gamma, grad.data() + s.off_beta);
  };

  // FC and pooling
  Tensor<T> d = fully_connected_backward(tape.pooled, net.params.data() + lay.fc.off_w, doutput,
                                         grad.data() + lay.fc.off_w, grad.data() + lay.fc.off_b);
  const Tensor<T>& last_block = tape.blocks.back().block_out;
  d = global_avg_pool_backward(last_block, d);

  for (int bi = static_cast<int>(lay.blocks.size()) - 1; bi >= 0; --bi) {
    const BlockSpec& blk = lay.blocks[bi];
    const BlockTape<T>& bt = tape.blocks[bi];

    Tensor<T> d_sum = relu_backward(bt.block_out, d);

    // shortcut branch
    Tensor<T> d_in_short;
    if (blk.projected) {
      Tensor<T> d_proj = bn_bwd(bt.proj_out, d_sum, blk.proj_bn, bt.proj_bn);
      conv2d_backward(bt.in, net.params.data() + blk.proj.off, d_proj, 1, blk.proj.stride, 0,
                      grad.data() + blk.proj.off, &d_in_short);
    } else {
      d_in_short = d_sum;
    }

    // main branch
    Tensor<T> d_main = bn_bwd(bt.conv2_out, d_sum, blk.bn2, bt.bn2);
    Tensor<T> d_relu1;
    conv2d_backward(bt.relu1_out, net.params.data() + blk.conv2.off, d_main, 3, 1, 1,
                    grad.data() + blk.conv2.off, &d_relu1);
    d_relu1 = relu_backward(bt.relu1_out, d_relu1);
    Tensor<T> d_bn1 = bn_bwd(bt.conv1_out, d_relu1, blk.bn1, bt.bn1);
    Tensor<T> d_in_main;
    conv2d_backward(bt.in, net.params.data() + blk.conv1.off, d_bn1, 3, blk.conv1.stride, 1,
                    grad.data() + blk.conv1.off, &d_in_main);

    for (size_t i = 0; i < d_in_main.size(); ++i) d_in_main.v[i] += d_in_short.v[i];
    d = std::move(d_in_main);
  }

  d = relu_backward(tape.stem_relu, d);
  d = bn_bwd(tape.stem_out, d, lay.stem_bn, tape.stem_bn);
  conv2d_backward(tape.input, net.params.data() + lay.stem.off, d, 3, 1, 1,
                  grad.data() + lay.stem.off, static_cast<Tensor<T>*>(nullptr));
  return grad;
}

} // namespace shimkit::net
