#pragma once

#include <string>

#include "shimkit/field.hpp"

namespace shimkit::opt {

struct AdamConfig {
  double step_size = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_iters = 500;
  double rel_tol = 1e-8;
  double mag_floor = 1e-12; // magnitude-derivative singularity floor

  void validate() const;
};

struct RestartPolicy {
  int n_random = 300;
  bool include_quadrature = true;
  double init_mag_lo = 0.5;
  double init_mag_hi = 1.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MlsConfig {
  int max_outer_iters = 200;
  double rel_tol = 1e-10;

  void validate() const;
};

struct SolveResult {
  field::ShimWeights weights; // canonical form
  double objective = 0.0;
  double rmse = 0.0;
  int iterations = 0;
  double wall_time = 0.0; // seconds
  std::string init_label;
};

/// Gradient of the shim objective with the weights viewed as 2C reals
/// (real/imag interleaved). Near-zero |Ab| voxels use the mag_floor
/// denominator.
Eigen::VectorXd objective_gradient(const field::ComplexImage& b1, const field::Mask& mask,
                                   const field::TargetProfile& target, const field::ShimWeights& w,
                                   double mag_floor = 1e-12);

Eigen::VectorXd objective_gradient_packed(const field::MaskedSystem& sys, const Eigen::VectorXcd& w,
                                          double mag_floor, double* objective_out = nullptr);

SolveResult adam_minimize(const field::ComplexImage& b1, const field::Mask& mask,
                          const field::TargetProfile& target, const field::ShimWeights& w0,
                          const AdamConfig& cfg, std::string init_label = "custom");

SolveResult adam_minimize_packed(const field::MaskedSystem& sys, const Eigen::VectorXcd& w0,
                                 const AdamConfig& cfg, std::string init_label);

/// Best-of-restarts reference generator: Adam from the quadrature drive
/// (when enabled) plus n_random seeded random initializations; lowest
/// objective wins, ties broken by initialization order. Writes
/// ref_weights/ref_rmse into the sample.
SolveResult reference_weights(field::SliceSample& sample, const AdamConfig& cfg,
                              const RestartPolicy& policy);

/// Regularized weighted least squares (AᴴWA + λI) w = AᴴW rhs over the
/// masked voxels; rhs holds one complex value per masked voxel.
field::ShimWeights weighted_regularized_ls(const field::ComplexImage& b1, const field::Mask& mask,
                                           const Eigen::VectorXcd& rhs, double lambda);

/// Classical MLS baseline: quadrature start, then alternate the phase
/// update with the regularized least-squares solve until the objective
/// stalls. The objective is asserted non-increasing every iteration.
SolveResult mls_variable_exchange(const field::SliceSample& sample, const MlsConfig& cfg);

} // namespace shimkit::opt
