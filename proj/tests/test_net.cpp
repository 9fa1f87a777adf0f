#include <doctest.h>

#include <filesystem>
#include <random>

#include "shimkit/net/checkpoint.hpp"
#include "shimkit/net/loss.hpp"
#include "shimkit/net/resnet.hpp"

using namespace shimkit;
using namespace shimkit::net;
using field::cd;

namespace {

NetConfig tiny_config() {
  NetConfig cfg;
  cfg.input_channels = 4; // 2 coils
  cfg.output_dim = 4;
  cfg.input_h = 8;
  cfg.input_w = 8;
  cfg.stem_width = 2;
  cfg.stage_widths = {2, 4, 8, 16};
  cfg.seed = 3;
  return cfg;
}

Tensor<double> random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor<double> t(n, c, h, w);
  for (double& v : t.v) v = g(rng);
  return t;
}

field::SliceSample random_sample(int h, int w, int coils, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  field::SliceSample s;
  std::vector<cd> data(static_cast<size_t>(h) * w * coils);
  for (cd& z : data) z = cd(g(rng), g(rng));
  s.b1 = field::ComplexImage::create(h, w, coils, std::move(data));
  s.mask.height = h;
  s.mask.width = w;
  s.mask.bits.assign(static_cast<size_t>(h) * w, 0);
  for (int v = 0; v < h * w; v += 2) s.mask.bits[v] = 1;
  s.target = field::TargetProfile::uniform(s.mask, 1.0, 1e-3);
  s.ref_rmse = 0.2;
  return s;
}

} // namespace

TEST_CASE("parameter count matches an independent layer-by-layer tally") {
  NetConfig cfg;
  cfg.input_channels = 16;
  cfg.output_dim = 16;
  cfg.stem_width = 16;
  cfg.stage_widths = {16, 32, 64, 128};

  auto conv = [](long in, long out, long k) { return out * in * k * k; };
  auto bn = [](long c) { return 2 * c; };
  long tally = conv(16, 16, 3) + bn(16); // stem
  long in = 16;
  for (long width : {16L, 32L, 64L, 128L}) {
    // first block (projected whenever the shape changes)
    tally += conv(in, width, 3) + bn(width) + conv(width, width, 3) + bn(width);
    if (in != width) tally += conv(in, width, 1) + bn(width);
    // second block
    tally += 2 * (conv(width, width, 3) + bn(width));
    in = width;
  }
  tally += 128 * 16 + 16; // fc

  CHECK(parameter_count(cfg) == static_cast<size_t>(tally));
}

TEST_CASE("zero input maps to zero output at initialization") {
  // conv(0) = 0, BN eval with mean 0 / var 1 / beta 0 keeps 0, FC bias is 0
  const NetConfig cfg = tiny_config();
  auto net = NetParams<double>::init(cfg);
  Tensor<double> x(1, cfg.input_channels, cfg.input_h, cfg.input_w);
  const Tensor<double> y = forward(net, x, Mode::kEval);
  for (double v : y.v) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("eval mode is deterministic and independent of batch composition") {
  const NetConfig cfg = tiny_config();
  auto net = NetParams<double>::init(cfg);
  const Tensor<double> a = random_tensor(1, 4, 8, 8, 10);
  const Tensor<double> b = random_tensor(1, 4, 8, 8, 11);

  Tensor<double> both(2, 4, 8, 8);
  std::copy(a.v.begin(), a.v.end(), both.v.begin());
  std::copy(b.v.begin(), b.v.end(), both.v.begin() + a.size());

  const Tensor<double> ya = forward(net, a, Mode::kEval);
  const Tensor<double> yb = forward(net, b, Mode::kEval);
  const Tensor<double> yab = forward(net, both, Mode::kEval);
  for (int i = 0; i < 4; ++i) {
    CHECK(yab.v[i] == ya.v[i]);
    CHECK(yab.v[4 + i] == yb.v[i]);
  }
  // and repeatable
  const Tensor<double> again = forward(net, a, Mode::kEval);
  CHECK(again.v == ya.v);
}

TEST_CASE("train-mode forward updates running statistics, eval does not") {
  const NetConfig cfg = tiny_config();
  auto net = NetParams<double>::init(cfg);
  const auto before = net.buffers;
  const Tensor<double> x = random_tensor(2, 4, 8, 8, 20);
  forward(net, x, Mode::kEval);
  CHECK(net.buffers == before);
  Tape<double> tape;
  forward(net, x, Mode::kTrain, &tape);
  CHECK(net.buffers != before);
}

TEST_CASE("conv2d forward/backward satisfy the adjoint identity") {
  // <dy, conv(x)> == <x, conv_backward_input(dy)> for any dy
  std::mt19937_64 rng(30);
  std::normal_distribution<double> g(0.0, 1.0);
  const int in_c = 3, out_c = 5, k = 3, stride = 2, pad = 1;
  std::vector<double> weights(static_cast<size_t>(out_c) * in_c * k * k);
  for (double& w : weights) w = g(rng);

  const Tensor<double> x = random_tensor(2, in_c, 9, 7, 31);
  std::vector<double> scratch;
  const Tensor<double> y = conv2d_forward(x, weights.data(), out_c, k, stride, pad, &scratch);
  Tensor<double> dy(y.n, y.c, y.h, y.w);
  for (double& v : dy.v) v = g(rng);

  std::vector<double> dweights(weights.size(), 0.0);
  Tensor<double> dx;
  conv2d_backward(x, weights.data(), dy, k, stride, pad, dweights.data(), &dx);

  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < y.size(); ++i) lhs += dy.v[i] * y.v[i];
  for (size_t i = 0; i < x.size(); ++i) rhs += dx.v[i] * x.v[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("relu backward zeroes gradients at dead units") {
  Tensor<double> act(1, 1, 1, 4);
  act.v = {0.5, 0.0, -0.0, 2.0}; // post-ReLU activations
  Tensor<double> dy(1, 1, 1, 4);
  dy.v = {1.0, 1.0, 1.0, 1.0};
  const Tensor<double> dx = relu_backward(act, dy);
  CHECK(dx.v[0] == 1.0);
  CHECK(dx.v[1] == 0.0);
  CHECK(dx.v[2] == 0.0);
  CHECK(dx.v[3] == 1.0);
}

TEST_CASE("full network gradient matches central finite differences (64-bit)") {
  const NetConfig cfg = tiny_config();
  auto net = NetParams<double>::init(cfg);
  const Tensor<double> x = random_tensor(2, 4, 8, 8, 40);

  std::vector<LossContext> batch;
  batch.push_back(make_loss_context(random_sample(8, 8, 2, 41)));
  batch.push_back(make_loss_context(random_sample(8, 8, 2, 42)));

  auto loss_at = [&](NetParams<double>& n) {
    auto copy = n; // train-mode forward mutates running stats
    Tape<double> tape;
    const Tensor<double> out = forward(copy, x, Mode::kTrain, &tape);
    return physics_loss(out, std::span<const LossContext>(batch));
  };

  Tape<double> tape;
  auto work = net;
  const Tensor<double> out = forward(work, x, Mode::kTrain, &tape);
  Tensor<double> dout;
  physics_loss(out, std::span<const LossContext>(batch), &dout);
  const std::vector<double> grad = backward(work, tape, dout);

  // probe a spread of parameters: stem, a deep conv, BN gamma/beta, FC
  std::mt19937_64 rng(43);
  std::vector<size_t> probes{0, net.layout.stem_bn.off_gamma, net.layout.stem_bn.off_beta,
                             net.layout.blocks[3].conv1.off, net.layout.blocks[7].conv2.off,
                             net.layout.fc.off_w, net.layout.fc.off_b};
  for (int i = 0; i < 20; ++i) probes.push_back(rng() % net.params.size());

  const double h = 1e-6;
  double worst = 0.0;
  for (size_t idx : probes) {
    auto plus = net;
    auto minus = net;
    plus.params[idx] += h;
    minus.params[idx] -= h;
    const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
    const double denom = std::max({1e-4, std::abs(fd), std::abs(grad[idx])});
    worst = std::max(worst, std::abs(grad[idx] - fd) / denom);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("physics loss value and gradient match the spec arithmetic") {
  // single sample, 1 coil, 2 masked voxels -> loss = |rmse - ref|
  field::SliceSample s = random_sample(1, 2, 1, 50);
  s.mask.bits = {1, 1};
  s.b1 = field::ComplexImage::create(1, 2, 1, {cd(1.3, 0.0), cd(0.0, 0.6)});
  s.target = field::TargetProfile::uniform(s.mask, 1.0, 0.0);
  s.ref_rmse = std::sqrt(0.125) - 0.005;

  Tensor<double> out(1, 2, 1, 1); // output_dim = 2 (1 coil)
  out.v = {1.0, 0.0};
  std::vector<LossContext> batch{make_loss_context(s)};
  Tensor<double> dout;
  const double loss = physics_loss(out, std::span<const LossContext>(batch), &dout);
  CHECK(loss == doctest::Approx(0.005).epsilon(1e-12));

  // finite differences on the raw outputs
  for (int i = 0; i < 2; ++i) {
    auto p = out, m = out;
    p.v[i] += 1e-7;
    m.v[i] -= 1e-7;
    const double fd = (physics_loss(p, std::span<const LossContext>(batch)) -
                       physics_loss(m, std::span<const LossContext>(batch))) /
                      2e-7;
    CHECK(dout.v[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("make_input zeroes voxels outside the mask") {
  const field::SliceSample s = random_sample(4, 4, 2, 60);
  const field::SliceSample* one[] = {&s};
  const Tensor<float> x = make_input<float>(one, 4, 4);
  REQUIRE(x.c == 4);
  for (int v = 0; v < 16; ++v) {
    for (int c = 0; c < 2; ++c) {
      const float re = x.v[(0 * 4 + 2 * c) * 16 + v];
      const float im = x.v[(0 * 4 + 2 * c + 1) * 16 + v];
      if (s.mask.at(v)) {
        CHECK(re == static_cast<float>(s.b1.at(v, c).real()));
        CHECK(im == static_cast<float>(s.b1.at(v, c).imag()));
      } else {
        CHECK(re == 0.0f);
        CHECK(im == 0.0f);
      }
    }
  }
}

TEST_CASE("checkpoints round-trip exactly and reject mismatched configs") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "shimkit_test.ckpt";
  const NetConfig cfg = tiny_config();
  auto net = NetParams<float>::init(cfg);
  net.buffers[3] = 0.75f;
  save_checkpoint(net, path);

  const auto loaded = load_checkpoint(path);
  CHECK(loaded.params == net.params);
  CHECK(loaded.buffers == net.buffers);
  CHECK(loaded.cfg.stage_widths == cfg.stage_widths);

  NetConfig other = cfg;
  other.stem_width = 4;
  other.stage_widths = {4, 8, 16, 32};
  CHECK_THROWS_AS(load_checkpoint(path, other), shimkit::IoError);
  fs::remove(path);
}

TEST_CASE("configuration validation enforces the doubling-widths shape") {
  NetConfig cfg = tiny_config();
  cfg.stage_widths = {2, 4, 4, 8};
  CHECK_THROWS_AS(cfg.validate(), shimkit::SpecError);
  cfg = tiny_config();
  cfg.output_dim = 3;
  CHECK_THROWS_AS(cfg.validate(), shimkit::SpecError);
  cfg = tiny_config();
  cfg.input_h = 4;
  CHECK_THROWS_AS(cfg.validate(), shimkit::SpecError);
}
