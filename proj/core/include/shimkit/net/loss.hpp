#pragma once

#include <span>

#include "shimkit/field.hpp"
#include "shimkit/net/tensor.hpp"

namespace shimkit::net {

/// Per-sample precomputation for the physics loss: the packed masked
/// system and the reference RMSE anchor.
struct LossContext {
  field::MaskedSystem sys;
  double ref_rmse = 0.0;
};

inline LossContext make_loss_context(const field::SliceSample& sample) {
  if (!sample.ref_rmse) throw DomainError("physics loss: sample is missing ref_rmse");
  return {field::pack_masked(sample.b1, sample.mask, sample.target), *sample.ref_rmse};
}

/// Interleaved 2C reals -> complex coil weights.
template <typename T>
Eigen::VectorXcd weights_from_output(const T* out, int coils) {
  Eigen::VectorXcd w(coils);
  for (int c = 0; c < coils; ++c) {
    w[c] = {static_cast<double>(out[2 * c]), static_cast<double>(out[2 * c + 1])};
  }
  return w;
}

/// Mean absolute difference between predicted and reference RMSE over the
/// batch. When `doutputs` is non-null, also writes the exact gradient of
/// the loss with respect to the raw network outputs (computed in double,
/// with the |Ab| singularity floored at mag_floor).
template <typename T>
double physics_loss(const Tensor<T>& outputs, std::span<const LossContext> batch,
                    Tensor<T>* doutputs = nullptr, double mag_floor = 1e-12) {
  if (outputs.n != static_cast<int>(batch.size())) {
    throw DimensionError("physics loss: output batch does not match sample batch");
  }
  const int dim = outputs.c * outputs.h * outputs.w;
  const int coils = dim / 2;
  if (doutputs) *doutputs = Tensor<T>(outputs.n, outputs.c, outputs.h, outputs.w);

  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (int i = 0; i < outputs.n; ++i) {
    const LossContext& ctx = batch[i];
    if (ctx.sys.coils() != coils) {
      throw DimensionError("physics loss: coil count does not match network output");
    }
    const Eigen::VectorXcd w = weights_from_output(outputs.sample(i), coils);
    const Eigen::VectorXcd z = ctx.sys.a * w;
    const int n_masked = ctx.sys.masked_voxels();
    double s = 0.0;
    for (int v = 0; v < n_masked; ++v) {
      const double r = std::abs(z[v]) - ctx.sys.target[v];
      s += r * r;
    }
    const double pred_rmse = std::sqrt(s / n_masked);
    const double diff = pred_rmse - ctx.ref_rmse;
    loss += std::abs(diff) * inv_n;

    if (doutputs) {
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      if (sign != 0.0 && pred_rmse > mag_floor) {
        // d rmse / d w = (1 / (2 rmse N)) * d/dw sum (|z|-m)^2
        Eigen::VectorXcd u(n_masked);
        for (int v = 0; v < n_masked; ++v) {
          const double mag = std::abs(z[v]);
          u[v] = (mag - ctx.sys.target[v]) * z[v] / std::max(mag, mag_floor);
        }
        const Eigen::VectorXcd g = 2.0 * (ctx.sys.a.adjoint() * u);
        const double scale = sign * inv_n / (2.0 * pred_rmse * n_masked);
        T* dout = doutputs->sample(i);
        for (int c = 0; c < coils; ++c) {
          dout[2 * c] = T(scale * g[c].real());
          dout[2 * c + 1] = T(scale * g[c].imag());
        }
      }
    }
  }
  return loss;
}

/// Convenience overload matching the op contract directly.
template <typename T>
double physics_loss(const Tensor<T>& outputs, const std::vector<field::SliceSample>& samples) {
  std::vector<LossContext> ctx;
  ctx.reserve(samples.size());
  for (const field::SliceSample& s : samples) ctx.push_back(make_loss_context(s));
  return physics_loss(outputs, std::span<const LossContext>(ctx));
}

/// Stacks samples into the network input: 2C real channels (real/imag per
/// coil), values outside the mask zeroed.
template <typename T>
Tensor<T> make_input(std::span<const field::SliceSample* const> samples, int input_h, int input_w) {
  if (samples.empty()) throw DimensionError("make_input: empty batch");
  const int ch = samples.front()->b1.channels;
  Tensor<T> x(static_cast<int>(samples.size()), 2 * ch, input_h, input_w);
  for (size_t i = 0; i < samples.size(); ++i) {
    const field::SliceSample& s = *samples[i];
    if (s.b1.height != input_h || s.b1.width != input_w || s.b1.channels != ch) {
      throw DimensionError("make_input: sample grid does not match network input");
    }
    T* dst = x.sample(static_cast<int>(i));
    const size_t plane = static_cast<size_t>(input_h) * input_w;
    for (int v = 0; v < s.b1.voxels(); ++v) {
      if (!s.mask.at(v)) continue;
      for (int c = 0; c < ch; ++c) {
        const field::cd val = s.b1.at(v, c);
        dst[(2 * c) * plane + v] = T(val.real());
        dst[(2 * c + 1) * plane + v] = T(val.imag());
      }
    }
  }
  return x;
}

} // namespace shimkit::net
