#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "shimkit/field.hpp"

namespace shimkit::sim {

using field::cd;

/// Cylindrical single-row transmit array of rectangular loop elements.
struct CoilArray {
  int coils = 8;
  double cylinder_diameter = 0.28; // m
  double element_height = 0.16;    // m, along the cylinder axis
  double element_width = 0.10;     // m, azimuthal
  double gap = 0.01;               // m, between neighboring elements
  int segments_per_loop = 64;
  double current = 1.0; // A

  void validate() const;
  double radius() const { return cylinder_diameter / 2.0; }
  Eigen::Vector3d element_center(int coil) const;
};

/// Two-density ellipsoidal head phantom on a regular grid.
struct PhantomSpec {
  int grid_h = 64;
  int grid_w = 64;
  int grid_d = 32;
  double voxel_size = 0.0045;                      // m, isotropic
  Eigen::Vector3d semi_axes{0.09, 0.11, 0.055};    // m
  double scale = 1.0;
  double density_inside = 1000.0;
  double density_outside = 1.0;
  double mask_threshold = 500.0;

  void validate() const;
};

/// Complex propagation surrogate for the wave effects the quasi-static
/// Biot-Savart law cannot produce.
struct WaveModel {
  double lambda_eff = 0.12;         // m, effective tissue wavelength at 298 MHz
  double attenuation_length = 0.25; // m

  void validate() const;
};

/// Closed loop as an ordered list of vertices; consecutive vertices form
/// straight segments, with an implicit closing segment back to the front.
using Polyline = std::vector<Eigen::Vector3d>;

/// Rectangular loop of coil `c`, tangent to the cylinder, split into
/// segments_per_loop straight segments.
Polyline rectangular_element(const CoilArray& array, int coil);

/// Planar circular loop in the xy-plane centered at the origin (validation
/// geometry for the analytic on-axis field).
Polyline circular_loop(double radius, int segments);

/// Quasi-static field of a polyline at `point`, summed per segment as
/// (mu0/4pi) * I * (dl x r_hat) / |r|^2 evaluated at the segment midpoint.
/// Points closer than 1e-6 m to a midpoint are clamped to that distance.
Eigen::Vector3d biot_savart_polyline(const Polyline& loop, double current,
                                     const Eigen::Vector3d& point);

Eigen::Vector3d biot_savart_field(const CoilArray& array, const Eigen::Vector3d& point, int coil);

/// Transmit component (Bx + i*By)/2 with the complex propagation factor
/// exp(-i*2pi*d/lambda_eff) * exp(-d/attenuation_length) applied.
cd b1_plus(const Eigen::Vector3cd& b, const WaveModel& wave, double distance);

/// Multi-channel complex volume plus its density map.
/// Voxel (x, y, z) lives at index ((z*grid_h + y)*grid_w + x); the coil
/// channel is minor in `b1`.
struct Volume {
  int h = 0, w = 0, d = 0, channels = 0;
  std::vector<cd> b1;
  std::vector<double> density;
};

/// Evaluates the full C-channel B1+ volume and the two-density map, then
/// normalizes the fields so the mean quadrature-combined |B1+| over the
/// mask equals 1.
Volume generate_volume(const CoilArray& array, const PhantomSpec& phantom, const WaveModel& wave);

/// Axial slice extraction: keeps the `keep` slices with the largest mask
/// area among those with at least `min_mask_voxels` masked voxels. B1+
/// values are quantized to 32-bit float precision here, the dataset
/// boundary. Returns fewer slices (flagged in provenance) when not enough
/// qualify.
std::vector<field::SliceSample> slice_and_mask(const Volume& volume, const PhantomSpec& phantom,
                                               int phantom_id, int keep = 32,
                                               int min_mask_voxels = 64, double target_value = 1.0,
                                               double lambda = 1e-3);

/// In-plane rotation augmentation: bilinear for the complex field planes,
/// nearest-neighbor for the mask. Reference weights/RMSE are cleared.
std::vector<field::SliceSample> augment_rotations(const std::vector<field::SliceSample>& samples,
                                                  const std::vector<double>& angles_deg);

} // namespace shimkit::sim
