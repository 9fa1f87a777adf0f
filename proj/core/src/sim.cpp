#include "shimkit/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace shimkit::sim {

namespace {
constexpr double kMu0Over4Pi = 1e-7;       // T*m/A
constexpr double kMinSourceDistance = 1e-6; // m
constexpr double kPi = std::numbers::pi;
} // namespace

void CoilArray::validate() const {
  if (coils < 1) throw SpecError("coil array: coil count must be >= 1");
  if (cylinder_diameter <= 0 || element_height <= 0 || element_width <= 0 || gap < 0) {
    throw SpecError("coil array: geometry lengths must be positive");
  }
  if (segments_per_loop < 4) throw SpecError("coil array: need at least 4 segments per loop");
  const double occupancy = coils * (element_width + gap);
  const double circumference = kPi * cylinder_diameter;
  // 1% slack: the nominal 8 x (10cm + 1cm) layout overshoots the 28cm
  // cylinder's circumference by 0.04%.
  if (occupancy > circumference * 1.01) {
    throw SpecError("coil array: elements plus gaps exceed the cylinder circumference");
  }
}

Eigen::Vector3d CoilArray::element_center(int coil) const {
  const double theta = 2.0 * kPi * coil / coils;
  return {radius() * std::cos(theta), radius() * std::sin(theta), 0.0};
}

void PhantomSpec::validate() const {
  if (grid_h < 4 || grid_w < 4 || grid_d < 1) throw SpecError("phantom: grid too small");
  if (voxel_size <= 0) throw SpecError("phantom: voxel size must be positive");
  if (scale <= 0) throw SpecError("phantom: scale must be positive");
  if ((semi_axes.array() <= 0).any()) throw SpecError("phantom: semi-axes must be positive");
  const double lo = std::min(density_inside, density_outside);
  const double hi = std::max(density_inside, density_outside);
  if (!(mask_threshold > lo && mask_threshold < hi)) {
    throw SpecError("phantom: mask_threshold must lie strictly between the two densities");
  }
  // scaled ellipsoid must fit with a 2-voxel margin
  const double half_x = (grid_w - 1) * 0.5 * voxel_size;
  const double half_y = (grid_h - 1) * 0.5 * voxel_size;
  const double half_z = (grid_d - 1) * 0.5 * voxel_size;
  const Eigen::Vector3d scaled = semi_axes * scale;
  if (scaled.x() > half_x - 2 * voxel_size || scaled.y() > half_y - 2 * voxel_size ||
      (grid_d > 1 && scaled.z() > half_z - 2 * voxel_size)) {
    throw SpecError("phantom: scaled ellipsoid overflows the grid (needs a 2-voxel margin)");
  }
}

void WaveModel::validate() const {
  if (lambda_eff <= 0 || attenuation_length <= 0) {
    throw SpecError("wave model: lengths must be strictly positive");
  }
}

Polyline circular_loop(double radius, int segments) {
  Polyline loop;
  loop.reserve(segments);
  for (int k = 0; k < segments; ++k) {
    const double t = 2.0 * kPi * k / segments;
    loop.emplace_back(radius * std::cos(t), radius * std::sin(t), 0.0);
  }
  return loop;
}

Polyline rectangular_element(const CoilArray& array, int coil) {
  const double theta = 2.0 * kPi * coil / array.coils;
  const Eigen::Vector3d center = array.element_center(coil);
  const Eigen::Vector3d tangent{-std::sin(theta), std::cos(theta), 0.0};
  const Eigen::Vector3d axial{0.0, 0.0, 1.0};
  const double hw = array.element_width / 2.0;
  const double hh = array.element_height / 2.0;
  const Eigen::Vector3d corners[4] = {
      center - hw * tangent - hh * axial,
      center + hw * tangent - hh * axial,
      center + hw * tangent + hh * axial,
      center - hw * tangent + hh * axial,
  };
  const int per_side = std::max(1, array.segments_per_loop / 4);
  Polyline loop;
  loop.reserve(4 * per_side);
  for (int side = 0; side < 4; ++side) {
    const Eigen::Vector3d& a = corners[side];
    const Eigen::Vector3d& b = corners[(side + 1) % 4];
    for (int s = 0; s < per_side; ++s) {
      loop.emplace_back(a + (b - a) * (static_cast<double>(s) / per_side));
    }
  }
  return loop;
}

Eigen::Vector3d biot_savart_polyline(const Polyline& loop, double current,
                                     const Eigen::Vector3d& point) {
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  const size_t n = loop.size();
  for (size_t k = 0; k < n; ++k) {
    const Eigen::Vector3d& a = loop[k];
    const Eigen::Vector3d& c = loop[(k + 1) % n];
    const Eigen::Vector3d dl = c - a;
    const Eigen::Vector3d mid = 0.5 * (a + c);
    Eigen::Vector3d r = point - mid;
    const double dist = std::max(r.norm(), kMinSourceDistance);
    b += kMu0Over4Pi * current * dl.cross(r) / (dist * dist * dist);
  }
  return b;
}

Eigen::Vector3d biot_savart_field(const CoilArray& array, const Eigen::Vector3d& point, int coil) {
  return biot_savart_polyline(rectangular_element(array, coil), array.current, point);
}

cd b1_plus(const Eigen::Vector3cd& b, const WaveModel& wave, double distance) {
  const cd transmit = (b.x() + cd{0.0, 1.0} * b.y()) / 2.0;
  const cd phase = std::polar(1.0, -2.0 * kPi * distance / wave.lambda_eff);
  const double attenuation = std::exp(-distance / wave.attenuation_length);
  return transmit * phase * attenuation;
}

Volume generate_volume(const CoilArray& array, const PhantomSpec& phantom, const WaveModel& wave) {
  array.validate();
  phantom.validate();
  wave.validate();

  Volume vol;
  vol.h = phantom.grid_h;
  vol.w = phantom.grid_w;
  vol.d = phantom.grid_d;
  vol.channels = array.coils;
  const size_t voxels = static_cast<size_t>(vol.h) * vol.w * vol.d;
  vol.b1.resize(voxels * array.coils);
  vol.density.resize(voxels);

  std::vector<Polyline> loops(array.coils);
  std::vector<Eigen::Vector3d> centers(array.coils);
  for (int c = 0; c < array.coils; ++c) {
    loops[c] = rectangular_element(array, c);
    centers[c] = array.element_center(c);
  }

  const Eigen::Vector3d inv_axes = (phantom.semi_axes * phantom.scale).cwiseInverse();
  const double cx = (vol.w - 1) * 0.5;
  const double cy = (vol.h - 1) * 0.5;
  const double cz = (vol.d - 1) * 0.5;

  for (int z = 0; z < vol.d; ++z) {
    for (int y = 0; y < vol.h; ++y) {
      for (int x = 0; x < vol.w; ++x) {
        const size_t v = (static_cast<size_t>(z) * vol.h + y) * vol.w + x;
        const Eigen::Vector3d pos{(x - cx) * phantom.voxel_size, (y - cy) * phantom.voxel_size,
                                  (z - cz) * phantom.voxel_size};
        const double rho2 = pos.cwiseProduct(inv_axes).squaredNorm();
        vol.density[v] = rho2 <= 1.0 ? phantom.density_inside : phantom.density_outside;
        for (int c = 0; c < array.coils; ++c) {
          const Eigen::Vector3d b = biot_savart_polyline(loops[c], array.current, pos);
          const double dist = (pos - centers[c]).norm();
          vol.b1[v * array.coils + c] = b1_plus(b.cast<cd>(), wave, dist);
        }
      }
    }
  }

  // normalize: mean quadrature-combined |B1+| over the mask becomes 1
  const field::ShimWeights quad = field::quadrature_weights(array.coils);
  double acc = 0.0;
  size_t n_masked = 0;
  for (size_t v = 0; v < voxels; ++v) {
    if (vol.density[v] <= phantom.mask_threshold) continue;
    cd sum{0.0, 0.0};
    for (int c = 0; c < array.coils; ++c) sum += vol.b1[v * array.coils + c] * quad.values[c];
    acc += std::abs(sum);
    ++n_masked;
  }
  if (n_masked == 0) throw SpecError("phantom: mask is empty, nothing to normalize against");
  const double mean = acc / static_cast<double>(n_masked);
  for (cd& value : vol.b1) value /= mean;
  return vol;
}

namespace {

double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

cd quantize(cd v) { return {quantize(v.real()), quantize(v.imag())}; }

} // namespace

std::vector<field::SliceSample> slice_and_mask(const Volume& volume, const PhantomSpec& phantom,
                                               int phantom_id, int keep, int min_mask_voxels,
                                               double target_value, double lambda) {
  if (volume.h != phantom.grid_h || volume.w != phantom.grid_w || volume.d != phantom.grid_d) {
    throw DimensionError("slice_and_mask: volume does not match phantom grid");
  }
  const size_t slice_voxels = static_cast<size_t>(volume.h) * volume.w;

  struct Candidate {
    int z;
    int area;
  };
  std::vector<Candidate> candidates;
  for (int z = 0; z < volume.d; ++z) {
    int area = 0;
    for (size_t v = 0; v < slice_voxels; ++v) {
      area += volume.density[static_cast<size_t>(z) * slice_voxels + v] > phantom.mask_threshold;
    }
    if (area >= min_mask_voxels) candidates.push_back({z, area});
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.area != b.area ? a.area > b.area : a.z < b.z;
  });
  const bool short_selection = static_cast<int>(candidates.size()) < keep;
  if (static_cast<int>(candidates.size()) > keep) candidates.resize(keep);
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.z < b.z; });

  std::vector<field::SliceSample> samples;
  samples.reserve(candidates.size());
  for (const Candidate& cand : candidates) {
    const size_t base = static_cast<size_t>(cand.z) * slice_voxels;
    std::vector<cd> data(slice_voxels * volume.channels);
    for (size_t v = 0; v < slice_voxels; ++v) {
      for (int c = 0; c < volume.channels; ++c) {
        data[v * volume.channels + c] = quantize(volume.b1[(base + v) * volume.channels + c]);
      }
    }
    field::Mask mask;
    mask.height = volume.h;
    mask.width = volume.w;
    mask.source_threshold = phantom.mask_threshold;
    mask.bits.resize(slice_voxels);
    for (size_t v = 0; v < slice_voxels; ++v) {
      mask.bits[v] = volume.density[base + v] > phantom.mask_threshold ? 1 : 0;
    }

    field::SliceSample sample;
    sample.b1 = field::ComplexImage::create(volume.h, volume.w, volume.channels, std::move(data));
    sample.target = field::TargetProfile::uniform(mask, target_value, lambda);
    sample.mask = std::move(mask);
    sample.provenance = {phantom_id, cand.z, 0.0, short_selection};
    samples.push_back(std::move(sample));
  }
  return samples;
}

namespace {

field::SliceSample rotate_sample(const field::SliceSample& in, double angle_deg) {
  if (angle_deg == 0.0) {
    field::SliceSample out = in;
    out.ref_weights.reset();
    out.ref_rmse.reset();
    out.provenance.augment_deg = 0.0;
    return out;
  }
  const int h = in.b1.height;
  const int w = in.b1.width;
  const int ch = in.b1.channels;
  const double cy = (h - 1) * 0.5;
  const double cx = (w - 1) * 0.5;
  const double theta = angle_deg * kPi / 180.0;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);

  std::vector<cd> data(static_cast<size_t>(h) * w * ch, cd{0.0, 0.0});
  field::Mask mask;
  mask.height = h;
  mask.width = w;
  mask.source_threshold = in.mask.source_threshold;
  mask.bits.assign(static_cast<size_t>(h) * w, 0);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // pull from the inverse-rotated source location
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = ct * dx + st * dy + cx;
      const double sy = -st * dx + ct * dy + cy;

      const size_t out_v = static_cast<size_t>(y) * w + x;
      const long nx = std::lround(sx);
      const long ny = std::lround(sy);
      if (nx >= 0 && nx < w && ny >= 0 && ny < h) {
        mask.bits[out_v] = in.mask.bits[static_cast<size_t>(ny) * w + nx];
      }

      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      if (x0 < -1 || x0 >= w || y0 < -1 || y0 >= h) continue;
      const double fx = sx - x0;
      const double fy = sy - y0;
      auto pixel = [&](int yy, int xx, int c) -> cd {
        if (xx < 0 || xx >= w || yy < 0 || yy >= h) return {0.0, 0.0};
        return in.b1.at(yy * w + xx, c);
      };
      for (int c = 0; c < ch; ++c) {
        const cd v = (1 - fy) * ((1 - fx) * pixel(y0, x0, c) + fx * pixel(y0, x0 + 1, c)) +
                     fy * ((1 - fx) * pixel(y0 + 1, x0, c) + fx * pixel(y0 + 1, x0 + 1, c));
        data[out_v * ch + c] = quantize(v);
      }
    }
  }

  field::SliceSample out;
  out.b1 = field::ComplexImage::create(h, w, ch, std::move(data));
  out.target = field::TargetProfile::uniform(
      mask, in.target.magnitude.empty() ? 1.0 : in.target.magnitude.front(), in.target.lambda);
  out.mask = std::move(mask);
  out.provenance = in.provenance;
  out.provenance.augment_deg = angle_deg;
  return out;
}

} // namespace

std::vector<field::SliceSample> augment_rotations(const std::vector<field::SliceSample>& samples,
                                                  const std::vector<double>& angles_deg) {
  for (double a : angles_deg) {
    if (!std::isfinite(a)) throw DomainError("augment_rotations: non-finite angle");
  }
  std::vector<field::SliceSample> out;
  out.reserve(samples.size() * angles_deg.size());
  for (const field::SliceSample& s : samples) {
    for (double a : angles_deg) {
      field::SliceSample rotated = rotate_sample(s, a);
      if (rotated.mask.count() == 0) continue; // rotated fully out of frame
      out.push_back(std::move(rotated));
    }
  }
  return out;
}

} // namespace shimkit::sim
