#include "shimkit/opt.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

namespace shimkit::opt {

using field::cd;

void AdamConfig::validate() const {
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw SpecError("adam: betas must lie in [0, 1)");
  }
  if (step_size <= 0 || eps <= 0) throw SpecError("adam: step size and eps must be positive");
  if (max_iters < 1) throw SpecError("adam: max_iters must be >= 1");
  if (rel_tol < 0 || mag_floor <= 0) throw SpecError("adam: bad tolerance");
}

void RestartPolicy::validate() const {
  if (n_random < 0) throw SpecError("restarts: n_random must be >= 0");
  if (n_random == 0 && !include_quadrature) {
    throw SpecError("restarts: need at least one initialization");
  }
  if (!(init_mag_lo >= 0 && init_mag_hi >= init_mag_lo)) {
    throw SpecError("restarts: bad init magnitude range");
  }
}

void MlsConfig::validate() const {
  if (max_outer_iters < 1) throw SpecError("mls: max_outer_iters must be >= 1");
  if (rel_tol < 0) throw SpecError("mls: rel_tol must be >= 0");
}

Eigen::VectorXd objective_gradient_packed(const field::MaskedSystem& sys, const Eigen::VectorXcd& w,
                                          double mag_floor, double* objective_out) {
  const Eigen::VectorXcd z = sys.a * w;
  Eigen::VectorXcd u(z.size());
  double f = 0.0;
  for (int v = 0; v < z.size(); ++v) {
    const double mag = std::abs(z[v]);
    const double r = mag - sys.target[v];
    f += r * r;
    u[v] = r * z[v] / std::max(mag, mag_floor);
  }
  // complex gradient G_c = 2 (Aᴴ u)_c + 2 λ w_c; reals are (Re G, Im G)
  const Eigen::VectorXcd g = 2.0 * (sys.a.adjoint() * u) + 2.0 * sys.lambda * w;
  if (objective_out) *objective_out = f + sys.lambda * w.squaredNorm();
  Eigen::VectorXd out(2 * w.size());
  for (int c = 0; c < w.size(); ++c) {
    out[2 * c] = g[c].real();
    out[2 * c + 1] = g[c].imag();
  }
  return out;
}

Eigen::VectorXd objective_gradient(const field::ComplexImage& b1, const field::Mask& mask,
                                   const field::TargetProfile& target, const field::ShimWeights& w,
                                   double mag_floor) {
  if (w.coils() != b1.channels) throw DimensionError("weight count does not match coil channels");
  return objective_gradient_packed(field::pack_masked(b1, mask, target), w.values, mag_floor);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

SolveResult adam_minimize_packed(const field::MaskedSystem& sys, const Eigen::VectorXcd& w0,
                                 const AdamConfig& cfg, std::string init_label) {
  cfg.validate();
  if (w0.size() != sys.a.cols()) throw DimensionError("adam: w0 length does not match coil count");
  const auto t0 = std::chrono::steady_clock::now();
  const int dim = 2 * static_cast<int>(w0.size());

  Eigen::VectorXcd w = w0;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);

  double f = 0.0;
  Eigen::VectorXd g = objective_gradient_packed(sys, w, cfg.mag_floor, &f);
  Eigen::VectorXcd best_w = w;
  double best_f = f;
  int iters = 0;

  for (int k = 1; k <= cfg.max_iters; ++k) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(cfg.beta1, k);
    const double bc2 = 1.0 - std::pow(cfg.beta2, k);
    for (int i = 0; i < dim; ++i) {
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      const double step = cfg.step_size * m_hat / (std::sqrt(v_hat) + cfg.eps);
      if (i % 2 == 0) {
        w[i / 2] -= cd{step, 0.0};
      } else {
        w[i / 2] -= cd{0.0, step};
      }
    }
    const double f_prev = f;
    g = objective_gradient_packed(sys, w, cfg.mag_floor, &f);
    iters = k;
    if (!std::isfinite(f)) {
      throw NumericError("adam: non-finite objective at iteration " + std::to_string(k) +
                         " (init " + init_label + ")");
    }
    if (f < best_f) {
      best_f = f;
      best_w = w;
    }
    if (std::abs(f - f_prev) < cfg.rel_tol * std::max(std::abs(f_prev), 1.0)) break;
  }

  SolveResult result;
  result.weights = field::canonicalize_phase(field::ShimWeights{best_w});
  result.objective = field::objective_packed(sys, result.weights.values);
  result.rmse = field::rmse_packed(sys, result.weights.values);
  result.iterations = iters;
  result.wall_time = seconds_since(t0);
  result.init_label = std::move(init_label);
  return result;
}

SolveResult adam_minimize(const field::ComplexImage& b1, const field::Mask& mask,
                          const field::TargetProfile& target, const field::ShimWeights& w0,
                          const AdamConfig& cfg, std::string init_label) {
  if (w0.coils() != b1.channels) throw DimensionError("adam: w0 length does not match coil count");
  return adam_minimize_packed(field::pack_masked(b1, mask, target), w0.values, cfg,
                              std::move(init_label));
}

SolveResult reference_weights(field::SliceSample& sample, const AdamConfig& cfg,
                              const RestartPolicy& policy) {
  policy.validate();
  const field::MaskedSystem sys = field::pack_masked(sample.b1, sample.mask, sample.target);
  const int coils = sys.coils();

  // all initializations are drawn up-front in a fixed order
  std::vector<std::pair<std::string, Eigen::VectorXcd>> inits;
  if (policy.include_quadrature) {
    inits.emplace_back("quadrature", field::quadrature_weights(coils).values);
  }
  std::mt19937_64 rng(policy.seed);
  std::uniform_real_distribution<double> mag(policy.init_mag_lo, policy.init_mag_hi);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (int k = 0; k < policy.n_random; ++k) {
    Eigen::VectorXcd w0(coils);
    for (int c = 0; c < coils; ++c) w0[c] = std::polar(mag(rng), phase(rng));
    inits.emplace_back("random_" + std::to_string(k), std::move(w0));
  }

  bool have_best = false;
  SolveResult best;
  std::string failures;
  for (auto& [label, w0] : inits) {
    try {
      SolveResult r = adam_minimize_packed(sys, w0, cfg, label);
      if (!have_best || r.objective < best.objective) {
        best = std::move(r);
        have_best = true;
      }
    } catch (const NumericError& e) {
      failures += failures.empty() ? e.what() : std::string("; ") + e.what();
    }
  }
  if (!have_best) {
    throw NumericError("reference_weights: every start aborted: " + failures);
  }
  sample.ref_weights = best.weights;
  sample.ref_rmse = best.rmse;
  return best;
}

field::ShimWeights weighted_regularized_ls(const field::ComplexImage& b1, const field::Mask& mask,
                                           const Eigen::VectorXcd& rhs, double lambda) {
  if (lambda < 0) throw DomainError("weighted_regularized_ls: lambda must be >= 0");
  const field::TargetProfile dummy = field::TargetProfile::uniform(mask, 1.0, lambda);
  const field::MaskedSystem sys = field::pack_masked(b1, mask, dummy);
  if (rhs.size() != sys.masked_voxels()) {
    throw DimensionError("weighted_regularized_ls: rhs length != masked voxel count");
  }
  const int c = sys.coils();
  Eigen::MatrixXcd normal = sys.a.adjoint() * sys.a;
  normal += lambda * Eigen::MatrixXcd::Identity(c, c);
  const Eigen::VectorXcd b = sys.a.adjoint() * rhs;

  Eigen::FullPivLU<Eigen::MatrixXcd> lu(normal);
  if (!lu.isInvertible()) {
    throw NumericError("weighted_regularized_ls: singular normal equations; use lambda > 0");
  }
  const Eigen::VectorXcd w = lu.solve(b);
  const double rel_residual = (normal * w - b).norm() / std::max(b.norm(), 1e-300);
  if (rel_residual > 1e-10) {
    throw NumericError("weighted_regularized_ls: normal-equation residual " +
                       std::to_string(rel_residual) + " exceeds 1e-10");
  }
  return field::ShimWeights{w};
}

SolveResult mls_variable_exchange(const field::SliceSample& sample, const MlsConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const double lambda = sample.target.lambda;

  field::ShimWeights w = field::quadrature_weights(sample.b1.channels);
  double f = field::shim_objective(sample.b1, sample.mask, sample.target, w);
  int iters = 0;

  for (int k = 1; k <= cfg.max_outer_iters; ++k) {
    const std::vector<cd> combined = field::forward_field(sample.b1, w);
    Eigen::VectorXcd rhs(sample.mask.count());
    int row = 0;
    for (int v = 0; v < sample.b1.voxels(); ++v) {
      if (!sample.mask.at(v)) continue;
      const double mag = std::abs(combined[v]);
      const cd phase = mag > 0.0 ? combined[v] / mag : cd{1.0, 0.0};
      rhs[row] = sample.target.magnitude[row] * phase;
      ++row;
    }
    w = weighted_regularized_ls(sample.b1, sample.mask, rhs, lambda);
    const double f_new = field::shim_objective(sample.b1, sample.mask, sample.target, w);
    iters = k;
    if (f_new > f + 1e-12 * std::max(std::abs(f), 1.0)) {
      throw NumericError("mls_variable_exchange: objective increased from " + std::to_string(f) +
                         " to " + std::to_string(f_new) + " at iteration " + std::to_string(k));
    }
    const double decrease = f - f_new;
    f = std::min(f, f_new);
    if (decrease < cfg.rel_tol * std::max(std::abs(f), 1.0)) break;
  }

  SolveResult result;
  result.weights = field::canonicalize_phase(w);
  result.objective = field::shim_objective(sample.b1, sample.mask, sample.target, result.weights);
  result.rmse = field::rmse(sample.b1, sample.mask, sample.target, result.weights);
  result.iterations = iters;
  result.wall_time = seconds_since(t0);
  result.init_label = "quadrature";
  return result;
}

} // namespace shimkit::opt
