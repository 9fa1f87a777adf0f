#pragma once

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "shimkit/common.hpp"

namespace shimkit::field {

using cd = std::complex<double>;

/// Per-slice, per-coil complex B1+ field on a regular grid.
/// Layout is row-major over voxels with the coil channel minor:
/// data[(y*width + x)*channels + c].
struct ComplexImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<cd> data;

  int voxels() const { return height * width; }
  cd& at(int voxel, int c) { return data[static_cast<size_t>(voxel) * channels + c]; }
  const cd& at(int voxel, int c) const { return data[static_cast<size_t>(voxel) * channels + c]; }

  /// Validates the length and finiteness invariants.
  static ComplexImage create(int height, int width, int channels, std::vector<cd> data);
};

/// Binary region of interest derived from a density map.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;
  double source_threshold = 0.0;

  int count() const;
  bool at(int voxel) const { return bits[voxel] != 0; }
};

/// One complex drive weight per transmit coil.
struct ShimWeights {
  Eigen::VectorXcd values;

  int coils() const { return static_cast<int>(values.size()); }
};

/// Desired |B1+| magnitude per masked voxel plus the power-regularization weight.
struct TargetProfile {
  std::vector<double> magnitude; // one entry per masked voxel, mask row-major order
  double lambda = 1e-3;

  static TargetProfile uniform(const Mask& mask, double value = 1.0, double lambda = 1e-3);
};

struct Provenance {
  int phantom_id = -1;
  int slice_index = -1;
  double augment_deg = 0.0;
  bool short_selection = false; // fewer good slices existed than requested
};

/// One training example.
struct SliceSample {
  ComplexImage b1;
  Mask mask;
  TargetProfile target;
  std::optional<ShimWeights> ref_weights;
  std::optional<double> ref_rmse;
  Provenance provenance;
};

/// Combined complex field A*b over every voxel of the grid.
std::vector<cd> forward_field(const ComplexImage& b1, const ShimWeights& w);

/// Masked magnitude-least-squares objective: sum over masked voxels of
/// (| (Ab)_v | - m_v)^2 plus lambda*||w||^2.
double shim_objective(const ComplexImage& b1, const Mask& mask, const TargetProfile& target,
                      const ShimWeights& w);

/// Root mean square magnitude error over the masked voxels, as a fraction of
/// the target flip angle. Reported externally as percent (x100).
double rmse(const ComplexImage& b1, const Mask& mask, const TargetProfile& target,
            const ShimWeights& w);

/// Rotates the global phase so the first (or first nonzero) coil weight is
/// real and nonnegative. |Ab| is unchanged.
ShimWeights canonicalize_phase(const ShimWeights& w);

/// Unit-magnitude weights with phase 2*pi*c/C; for C=8 the 45-degree
/// quadrature drive.
ShimWeights quadrature_weights(int coils);

/// Masked rows of A packed as a dense matrix, paired with the target
/// magnitudes. The solvers and the physics loss work on this packed form.
struct MaskedSystem {
  Eigen::MatrixXcd a;      // n_masked x coils
  Eigen::VectorXd target;  // n_masked
  double lambda = 0.0;

  int masked_voxels() const { return static_cast<int>(a.rows()); }
  int coils() const { return static_cast<int>(a.cols()); }
};

MaskedSystem pack_masked(const ComplexImage& b1, const Mask& mask, const TargetProfile& target);

double objective_packed(const MaskedSystem& sys, const Eigen::VectorXcd& w);
double rmse_packed(const MaskedSystem& sys, const Eigen::VectorXcd& w);

} // namespace shimkit::field
