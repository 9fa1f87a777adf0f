#include "shimkit/field.hpp"

#include <cmath>
#include <numbers>

namespace shimkit::field {

ComplexImage ComplexImage::create(int height, int width, int channels, std::vector<cd> data) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw DimensionError("ComplexImage: dimensions must be positive");
  }
  if (data.size() != static_cast<size_t>(height) * width * channels) {
    throw DimensionError("ComplexImage: data length != height*width*channels");
  }
  for (const cd& v : data) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw DomainError("ComplexImage: non-finite value");
    }
  }
  return ComplexImage{height, width, channels, std::move(data)};
}

int Mask::count() const {
  int n = 0;
  for (auto b : bits) n += (b != 0);
  return n;
}

TargetProfile TargetProfile::uniform(const Mask& mask, double value, double lambda) {
  if (value < 0.0 || lambda < 0.0) throw DomainError("TargetProfile: negative value or lambda");
  TargetProfile t;
  t.magnitude.assign(mask.count(), value);
  t.lambda = lambda;
  return t;
}

namespace {

void check_pair(const ComplexImage& b1, const Mask& mask) {
  if (b1.height != mask.height || b1.width != mask.width) {
    throw DimensionError("mask grid does not match image grid");
  }
}

void check_weights(const ComplexImage& b1, const ShimWeights& w) {
  if (w.coils() != b1.channels) {
    throw DimensionError("weight count does not match coil channels");
  }
}

} // namespace

std::vector<cd> forward_field(const ComplexImage& b1, const ShimWeights& w) {
  check_weights(b1, w);
  const int n = b1.voxels();
  const int c = b1.channels;
  std::vector<cd> out(n);
  for (int v = 0; v < n; ++v) {
    cd acc{0.0, 0.0};
    const cd* row = b1.data.data() + static_cast<size_t>(v) * c;
    for (int k = 0; k < c; ++k) acc += row[k] * w.values[k];
    out[v] = acc;
  }
  return out;
}

MaskedSystem pack_masked(const ComplexImage& b1, const Mask& mask, const TargetProfile& target) {
  check_pair(b1, mask);
  const int n_masked = mask.count();
  if (n_masked == 0) throw DomainError("empty mask");
  if (target.magnitude.size() != static_cast<size_t>(n_masked)) {
    throw DimensionError("target magnitude length does not match masked voxel count");
  }
  MaskedSystem sys;
  sys.a.resize(n_masked, b1.channels);
  sys.target.resize(n_masked);
  int row = 0;
  for (int v = 0; v < b1.voxels(); ++v) {
    if (!mask.at(v)) continue;
    for (int c = 0; c < b1.channels; ++c) sys.a(row, c) = b1.at(v, c);
    sys.target[row] = target.magnitude[row];
    ++row;
  }
  sys.lambda = target.lambda;
  return sys;
}

double objective_packed(const MaskedSystem& sys, const Eigen::VectorXcd& w) {
  if (w.size() != sys.a.cols()) throw DimensionError("weight count does not match system");
  const Eigen::VectorXcd z = sys.a * w;
  double acc = 0.0;
  for (int v = 0; v < z.size(); ++v) {
    const double r = std::abs(z[v]) - sys.target[v];
    acc += r * r;
  }
  return acc + sys.lambda * w.squaredNorm();
}

double rmse_packed(const MaskedSystem& sys, const Eigen::VectorXcd& w) {
  if (w.size() != sys.a.cols()) throw DimensionError("weight count does not match system");
  const Eigen::VectorXcd z = sys.a * w;
  double acc = 0.0;
  for (int v = 0; v < z.size(); ++v) {
    const double r = std::abs(z[v]) - sys.target[v];
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(z.size()));
}

double shim_objective(const ComplexImage& b1, const Mask& mask, const TargetProfile& target,
                      const ShimWeights& w) {
  check_weights(b1, w);
  return objective_packed(pack_masked(b1, mask, target), w.values);
}

double rmse(const ComplexImage& b1, const Mask& mask, const TargetProfile& target,
            const ShimWeights& w) {
  check_weights(b1, w);
  return rmse_packed(pack_masked(b1, mask, target), w.values);
}

ShimWeights canonicalize_phase(const ShimWeights& w) {
  int pivot = -1;
  for (int c = 0; c < w.coils(); ++c) {
    if (w.values[c] != cd{0.0, 0.0}) {
      pivot = c;
      break;
    }
  }
  if (pivot < 0) return w; // all-zero weights stay as they are
  const double phase = std::arg(w.values[pivot]);
  ShimWeights out;
  out.values = w.values * std::polar(1.0, -phase);
  // kill the residual imaginary rounding on the pivot
  out.values[pivot] = cd{std::abs(w.values[pivot]), 0.0};
  return out;
}

ShimWeights quadrature_weights(int coils) {
  if (coils < 1) throw DomainError("quadrature_weights: coil count must be >= 1");
  ShimWeights w;
  w.values.resize(coils);
  for (int c = 0; c < coils; ++c) {
    w.values[c] = std::polar(1.0, 2.0 * std::numbers::pi * c / coils);
  }
  return canonicalize_phase(w);
}

} // namespace shimkit::field
