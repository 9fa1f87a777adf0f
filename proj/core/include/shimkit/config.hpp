#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "shimkit/bench.hpp"
#include "shimkit/dataset.hpp"

namespace shimkit::config {

using KeyValues = std::map<std::string, std::string>;

/// Flat `section.key=value` config file; '#' starts a comment.
KeyValues parse_config_file(const std::filesystem::path& path);

/// Merged view of every module configuration. Precedence when resolving:
/// built-in defaults < config file < SHIMKIT_SEED < flags.
struct RunConfig {
  sim::CoilArray coil;
  sim::PhantomSpec phantom; // base spec; per-phantom scales applied on top
  int phantom_count = 10;
  double scale_min = 0.90;
  double scale_max = 1.10;
  sim::WaveModel wave;

  int slices_per_phantom = 32;
  int min_mask_voxels = 64;
  std::vector<double> augment{0, 10, -10, 20, -20, 30, -30, 45, 90, 135, 180, 225, 270};

  double target_value = 1.0;
  double lambda = 1e-3;

  opt::AdamConfig adam;
  opt::RestartPolicy restarts;
  opt::MlsConfig mls;
  net::TrainConfig train;
  bool paper_scale = false;

  int folds = 5;
  int timing_reps = 3;
  std::uint64_t seed = 0;
  int jobs = 0; // 0: hardware concurrency

  /// Applies key=value overrides; unknown keys and malformed values fail
  /// with the offending key named.
  void apply(const KeyValues& kv);

  void validate() const;

  /// Ten (by default) phantom specs with scales evenly spaced over
  /// [scale_min, scale_max].
  std::vector<sim::PhantomSpec> phantom_list() const;

  /// Network configuration derived from the dataset geometry.
  net::NetConfig net_config(int coils, int input_h, int input_w) const;

  /// Resolved configuration echoed into every artifact.
  nlohmann::json echo() const;

  /// FNV-1a hash of the resolved configuration (paths and jobs excluded).
  std::string hash() const;
};

/// Default augmentation list shorthand: "0,10,-10" etc.
std::vector<double> parse_angle_list(const std::string& text);

} // namespace shimkit::config
