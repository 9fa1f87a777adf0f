#include "shimkit/dataset.hpp"

#include <cstdio>
#include <fstream>

namespace shimkit::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

std::string payload_name(const field::Provenance& p) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "slice_%d_%d_%g.f32", p.phantom_id, p.slice_index,
                p.augment_deg);
  return buf;
}

namespace {

json coil_to_json(const sim::CoilArray& a) {
  return {{"coils", a.coils},
          {"cylinder_diameter", a.cylinder_diameter},
          {"element_height", a.element_height},
          {"element_width", a.element_width},
          {"gap", a.gap},
          {"segments_per_loop", a.segments_per_loop},
          {"current", a.current}};
}

sim::CoilArray coil_from_json(const json& j) {
  sim::CoilArray a;
  a.coils = j.at("coils");
  a.cylinder_diameter = j.at("cylinder_diameter");
  a.element_height = j.at("element_height");
  a.element_width = j.at("element_width");
  a.gap = j.at("gap");
  a.segments_per_loop = j.at("segments_per_loop");
  a.current = j.at("current");
  return a;
}

json phantom_to_json(const sim::PhantomSpec& p) {
  return {{"grid", {p.grid_h, p.grid_w, p.grid_d}},
          {"voxel_size", p.voxel_size},
          {"semi_axes", {p.semi_axes.x(), p.semi_axes.y(), p.semi_axes.z()}},
          {"scale", p.scale},
          {"density_inside", p.density_inside},
          {"density_outside", p.density_outside},
          {"mask_threshold", p.mask_threshold}};
}

sim::PhantomSpec phantom_from_json(const json& j) {
  sim::PhantomSpec p;
  p.grid_h = j.at("grid").at(0);
  p.grid_w = j.at("grid").at(1);
  p.grid_d = j.at("grid").at(2);
  p.voxel_size = j.at("voxel_size");
  p.semi_axes = Eigen::Vector3d(j.at("semi_axes").at(0).get<double>(),
                                j.at("semi_axes").at(1).get<double>(),
                                j.at("semi_axes").at(2).get<double>());
  p.scale = j.at("scale");
  p.density_inside = j.at("density_inside");
  p.density_outside = j.at("density_outside");
  p.mask_threshold = j.at("mask_threshold");
  return p;
}

json manifest_to_json(const std::vector<field::SliceSample>& samples,
                      const DatasetManifest& manifest) {
  json slices = json::array();
  for (const field::SliceSample& s : samples) {
    json entry = {{"phantom", s.provenance.phantom_id},
                  {"slice", s.provenance.slice_index},
                  {"aug_deg", s.provenance.augment_deg},
                  {"short_selection", s.provenance.short_selection},
                  {"file", payload_name(s.provenance)},
                  {"height", s.b1.height},
                  {"width", s.b1.width},
                  {"channels", s.b1.channels},
                  {"mask_threshold", s.mask.source_threshold}};
    if (s.ref_weights) {
      json w = json::array();
      for (int c = 0; c < s.ref_weights->coils(); ++c) {
        w.push_back(s.ref_weights->values[c].real());
        w.push_back(s.ref_weights->values[c].imag());
      }
      entry["ref"] = {{"weights", std::move(w)}, {"rmse", s.ref_rmse.value()}};
    }
    slices.push_back(std::move(entry));
  }

  json phantoms = json::array();
  for (const sim::PhantomSpec& p : manifest.phantoms) phantoms.push_back(phantom_to_json(p));

  return {{"format", "shimkit-dataset"},
          {"version", {{"major", manifest.major}, {"minor", manifest.minor}}},
          {"coil", coil_to_json(manifest.coil)},
          {"wave",
           {{"lambda_eff", manifest.wave.lambda_eff},
            {"attenuation_length", manifest.wave.attenuation_length}}},
          {"phantoms", std::move(phantoms)},
          {"seed", manifest.seed},
          {"target_value", manifest.target_value},
          {"lambda", manifest.lambda},
          {"run_config", manifest.run_config},
          {"config_hash", manifest.config_hash},
          {"slices", std::move(slices)}};
}

void write_file(const fs::path& path, const void* data, size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("write failed: " + path.string());
}

} // namespace

void save_manifest(const std::vector<field::SliceSample>& samples, const DatasetManifest& manifest,
                   const fs::path& dir) {
  const std::string text = manifest_to_json(samples, manifest).dump(2) + "\n";
  write_file(dir / "manifest.json", text.data(), text.size());
}

void save_dataset(const std::vector<field::SliceSample>& samples, const DatasetManifest& manifest,
                  const fs::path& dir) {
  fs::create_directories(dir);
  for (const field::SliceSample& s : samples) {
    const size_t voxels = static_cast<size_t>(s.b1.height) * s.b1.width;
    std::vector<float> payload;
    payload.reserve(voxels * s.b1.channels * 2 + voxels);
    for (const field::cd& v : s.b1.data) {
      payload.push_back(static_cast<float>(v.real()));
      payload.push_back(static_cast<float>(v.imag()));
    }
    for (size_t v = 0; v < voxels; ++v) payload.push_back(s.mask.bits[v] ? 1.0f : 0.0f);
    write_file(dir / payload_name(s.provenance), payload.data(), payload.size() * sizeof(float));
  }
  save_manifest(samples, manifest, dir);
}

LoadedDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  LoadedDataset out;
  try {
    if (j.at("format") != "shimkit-dataset") {
      throw IoError("not a shimkit dataset: " + manifest_path.string());
    }
    out.manifest.major = j.at("version").at("major");
    out.manifest.minor = j.at("version").at("minor");
    if (out.manifest.major != kFormatMajor) {
      throw IoError("unsupported dataset format major version " +
                    std::to_string(out.manifest.major) + " (supported: " +
                    std::to_string(kFormatMajor) + ") in " + manifest_path.string());
    }
    out.manifest.coil = coil_from_json(j.at("coil"));
    out.manifest.wave.lambda_eff = j.at("wave").at("lambda_eff");
    out.manifest.wave.attenuation_length = j.at("wave").at("attenuation_length");
    for (const json& p : j.at("phantoms")) out.manifest.phantoms.push_back(phantom_from_json(p));
    out.manifest.seed = j.at("seed");
    out.manifest.target_value = j.at("target_value");
    out.manifest.lambda = j.at("lambda");
    out.manifest.run_config = j.value("run_config", json::object());
    out.manifest.config_hash = j.value("config_hash", "");

    for (const json& entry : j.at("slices")) {
      const std::string file = entry.at("file");
      const int h = entry.at("height");
      const int w = entry.at("width");
      const int ch = entry.at("channels");
      const size_t voxels = static_cast<size_t>(h) * w;
      const size_t expected_floats = voxels * ch * 2 + voxels;

      const fs::path payload_path = dir / file;
      std::error_code ec;
      const auto size = fs::file_size(payload_path, ec);
      if (ec) throw IoError("missing payload: " + payload_path.string());
      if (size != expected_floats * sizeof(float)) {
        throw IoError("payload size mismatch for " + payload_path.string() + ": expected " +
                      std::to_string(expected_floats * sizeof(float)) + " bytes, found " +
                      std::to_string(size));
      }
      std::vector<float> payload(expected_floats);
      std::ifstream pin(payload_path, std::ios::binary);
      if (!pin.read(reinterpret_cast<char*>(payload.data()),
                    static_cast<std::streamsize>(expected_floats * sizeof(float)))) {
        throw IoError("truncated payload: " + payload_path.string());
      }

      field::SliceSample s;
      std::vector<field::cd> data(voxels * ch);
      for (size_t i = 0; i < data.size(); ++i) {
        data[i] = {static_cast<double>(payload[2 * i]), static_cast<double>(payload[2 * i + 1])};
      }
      s.b1 = field::ComplexImage::create(h, w, ch, std::move(data));
      s.mask.height = h;
      s.mask.width = w;
      s.mask.source_threshold = entry.at("mask_threshold");
      s.mask.bits.resize(voxels);
      const float* mask_plane = payload.data() + voxels * ch * 2;
      for (size_t v = 0; v < voxels; ++v) s.mask.bits[v] = mask_plane[v] > 0.5f ? 1 : 0;
      s.target =
          field::TargetProfile::uniform(s.mask, out.manifest.target_value, out.manifest.lambda);
      s.provenance.phantom_id = entry.at("phantom");
      s.provenance.slice_index = entry.at("slice");
      s.provenance.augment_deg = entry.at("aug_deg");
      s.provenance.short_selection = entry.value("short_selection", false);
      if (entry.contains("ref")) {
        const json& ref = entry.at("ref");
        const json& wj = ref.at("weights");
        field::ShimWeights rw;
        rw.values.resize(ch);
        if (wj.size() != static_cast<size_t>(2 * ch)) {
          throw IoError("ref weight length mismatch in entry " + file);
        }
        for (int c = 0; c < ch; ++c) rw.values[c] = {wj.at(2 * c), wj.at(2 * c + 1)};
        s.ref_weights = std::move(rw);
        s.ref_rmse = ref.at("rmse");
      }
      out.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  return out;
}

} // namespace shimkit::dataset
