#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "shimkit/sim.hpp"

namespace shimkit::dataset {

inline constexpr int kFormatMajor = 1;
inline constexpr int kFormatMinor = 0;

/// Index of a stored dataset: generation parameters plus one entry per
/// slice payload. Reference weights/RMSE live here, next to the payload
/// they belong to.
struct DatasetManifest {
  int major = kFormatMajor;
  int minor = kFormatMinor;
  sim::CoilArray coil;
  sim::WaveModel wave;
  std::vector<sim::PhantomSpec> phantoms;
  std::uint64_t seed = 0;
  double target_value = 1.0;
  double lambda = 1e-3;
  nlohmann::json run_config; // resolved CLI configuration echo
  std::string config_hash;
};

std::string payload_name(const field::Provenance& p);

/// Writes manifest.json plus one .f32 payload per sample. Payloads are
/// little-endian 32-bit floats: the B1+ planes (row-major, channel-minor,
/// real/imag interleaved) followed by the mask plane (0.0/1.0).
void save_dataset(const std::vector<field::SliceSample>& samples, const DatasetManifest& manifest,
                  const std::filesystem::path& dir);

/// Rewrites manifest.json only (after reference generation updated the
/// ref fields); payloads are untouched.
void save_manifest(const std::vector<field::SliceSample>& samples, const DatasetManifest& manifest,
                   const std::filesystem::path& dir);

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<field::SliceSample> samples;
};

/// Loads and validates a dataset directory. Fails with IoError naming the
/// offending entry on version mismatch, missing/truncated payloads, or
/// shape disagreement.
LoadedDataset load_dataset(const std::filesystem::path& dir);

} // namespace shimkit::dataset
