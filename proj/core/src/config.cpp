#include "shimkit/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace shimkit::config {

using nlohmann::json;

KeyValues parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SpecError("config file " + path.string() + ":" + std::to_string(lineno) +
                      ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw SpecError("config file " + path.string() + ":" + std::to_string(lineno) +
                      ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

std::vector<double> parse_angle_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw SpecError("invalid angle in augment list: '" + item + "'");
    }
  }
  if (out.empty()) throw SpecError("augment list is empty");
  return out;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw SpecError("invalid value for " + key + ": '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw SpecError("invalid value for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw SpecError("invalid value for " + key + ": '" + v + "' (expected true/false)");
}

void parse_grid(const std::string& key, const std::string& v, int& h, int& w, int& d) {
  int vals[3];
  std::stringstream ss(v);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, 'x')) {
    if (i >= 3) break;
    vals[i++] = static_cast<int>(to_int(key, item));
  }
  if (i != 3) throw SpecError("invalid value for " + key + ": '" + v + "' (expected HxWxD)");
  h = vals[0];
  w = vals[1];
  d = vals[2];
}

} // namespace

void RunConfig::apply(const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "coil.count") coil.coils = static_cast<int>(to_int(key, value));
    else if (key == "coil.cylinder_diameter") coil.cylinder_diameter = to_double(key, value);
    else if (key == "coil.element_height") coil.element_height = to_double(key, value);
    else if (key == "coil.element_width") coil.element_width = to_double(key, value);
    else if (key == "coil.gap") coil.gap = to_double(key, value);
    else if (key == "coil.segments_per_loop") coil.segments_per_loop = static_cast<int>(to_int(key, value));
    else if (key == "coil.current") coil.current = to_double(key, value);
    else if (key == "phantom.grid") parse_grid(key, value, phantom.grid_h, phantom.grid_w, phantom.grid_d);
    else if (key == "phantom.voxel_size") phantom.voxel_size = to_double(key, value);
    else if (key == "phantom.semi_axis_x") phantom.semi_axes.x() = to_double(key, value);
    else if (key == "phantom.semi_axis_y") phantom.semi_axes.y() = to_double(key, value);
    else if (key == "phantom.semi_axis_z") phantom.semi_axes.z() = to_double(key, value);
    else if (key == "phantom.density_inside") phantom.density_inside = to_double(key, value);
    else if (key == "phantom.density_outside") phantom.density_outside = to_double(key, value);
    else if (key == "phantom.mask_threshold") phantom.mask_threshold = to_double(key, value);
    else if (key == "phantom.count") phantom_count = static_cast<int>(to_int(key, value));
    else if (key == "phantom.scale_min") scale_min = to_double(key, value);
    else if (key == "phantom.scale_max") scale_max = to_double(key, value);
    else if (key == "wave.lambda_eff") wave.lambda_eff = to_double(key, value);
    else if (key == "wave.attenuation_length") wave.attenuation_length = to_double(key, value);
    else if (key == "slice.keep") slices_per_phantom = static_cast<int>(to_int(key, value));
    else if (key == "slice.min_mask_voxels") min_mask_voxels = static_cast<int>(to_int(key, value));
    else if (key == "slice.augment") augment = parse_angle_list(value);
    else if (key == "target.value") target_value = to_double(key, value);
    else if (key == "target.lambda") lambda = to_double(key, value);
    else if (key == "adam.step_size") adam.step_size = to_double(key, value);
    else if (key == "adam.beta1") adam.beta1 = to_double(key, value);
    else if (key == "adam.beta2") adam.beta2 = to_double(key, value);
    else if (key == "adam.eps") adam.eps = to_double(key, value);
    else if (key == "adam.max_iters") adam.max_iters = static_cast<int>(to_int(key, value));
    else if (key == "adam.rel_tol") adam.rel_tol = to_double(key, value);
    else if (key == "adam.mag_floor") adam.mag_floor = to_double(key, value);
    else if (key == "restarts.n_random") restarts.n_random = static_cast<int>(to_int(key, value));
    else if (key == "restarts.include_quadrature") restarts.include_quadrature = to_bool(key, value);
    else if (key == "restarts.mag_lo") restarts.init_mag_lo = to_double(key, value);
    else if (key == "restarts.mag_hi") restarts.init_mag_hi = to_double(key, value);
    else if (key == "mls.max_outer_iters") mls.max_outer_iters = static_cast<int>(to_int(key, value));
    else if (key == "mls.rel_tol") mls.rel_tol = to_double(key, value);
    else if (key == "train.batch_size") train.batch_size = static_cast<int>(to_int(key, value));
    else if (key == "train.epochs") train.epochs = static_cast<int>(to_int(key, value));
    else if (key == "train.lr") train.lr = to_double(key, value);
    else if (key == "train.lr_decay") train.lr_decay = to_double(key, value);
    else if (key == "train.decay_every") train.decay_every = static_cast<int>(to_int(key, value));
    else if (key == "train.fold_seed") train.fold_seed = static_cast<std::uint64_t>(to_int(key, value));
    else if (key == "net.paper_scale") paper_scale = to_bool(key, value);
    else if (key == "bench.folds") folds = static_cast<int>(to_int(key, value));
    else if (key == "bench.timing_reps") timing_reps = static_cast<int>(to_int(key, value));
    else if (key == "seed") seed = static_cast<std::uint64_t>(to_int(key, value));
    else if (key == "jobs") jobs = static_cast<int>(to_int(key, value));
    else throw SpecError("unknown configuration key: " + key);
  }
}

void RunConfig::validate() const {
  coil.validate();
  wave.validate();
  adam.validate();
  restarts.validate();
  mls.validate();
  train.validate();
  if (phantom_count < 1) throw SpecError("phantom.count must be >= 1");
  if (scale_min <= 0 || scale_max < scale_min) throw SpecError("bad phantom scale range");
  if (slices_per_phantom < 1) throw SpecError("slice.keep must be >= 1");
  if (min_mask_voxels < 1) throw SpecError("slice.min_mask_voxels must be >= 1");
  if (target_value < 0 || lambda < 0) throw SpecError("target value and lambda must be >= 0");
  if (folds < 1) throw SpecError("bench.folds must be >= 1");
  if (timing_reps < 1) throw SpecError("bench.timing_reps must be >= 1");
  if (jobs < 0) throw SpecError("jobs must be >= 0");
  // every scaled phantom must fit
  for (const sim::PhantomSpec& p : phantom_list()) p.validate();
}

std::vector<sim::PhantomSpec> RunConfig::phantom_list() const {
  std::vector<sim::PhantomSpec> list;
  list.reserve(phantom_count);
  for (int i = 0; i < phantom_count; ++i) {
    sim::PhantomSpec p = phantom;
    p.scale = phantom_count == 1
                  ? (scale_min + scale_max) / 2.0
                  : scale_min + (scale_max - scale_min) * i / (phantom_count - 1.0);
    list.push_back(p);
  }
  return list;
}

net::NetConfig RunConfig::net_config(int coils, int input_h, int input_w) const {
  net::NetConfig cfg;
  cfg.input_channels = 2 * coils;
  cfg.output_dim = 2 * coils;
  cfg.input_h = input_h;
  cfg.input_w = input_w;
  if (paper_scale) {
    cfg.stage_widths = {64, 128, 256, 512};
  } else {
    cfg.stage_widths = {16, 32, 64, 128};
  }
  cfg.stem_width = cfg.stage_widths[0];
  cfg.seed = seed;
  return cfg;
}

json RunConfig::echo() const {
  json augment_j = json::array();
  for (double a : augment) augment_j.push_back(a);
  return {
      {"version", kVersion},
      {"coil",
       {{"count", coil.coils},
        {"cylinder_diameter", coil.cylinder_diameter},
        {"element_height", coil.element_height},
        {"element_width", coil.element_width},
        {"gap", coil.gap},
        {"segments_per_loop", coil.segments_per_loop},
        {"current", coil.current}}},
      {"phantom",
       {{"grid", {phantom.grid_h, phantom.grid_w, phantom.grid_d}},
        {"voxel_size", phantom.voxel_size},
        {"semi_axes", {phantom.semi_axes.x(), phantom.semi_axes.y(), phantom.semi_axes.z()}},
        {"density_inside", phantom.density_inside},
        {"density_outside", phantom.density_outside},
        {"mask_threshold", phantom.mask_threshold},
        {"count", phantom_count},
        {"scale_min", scale_min},
        {"scale_max", scale_max}}},
      {"wave", {{"lambda_eff", wave.lambda_eff}, {"attenuation_length", wave.attenuation_length}}},
      {"slice",
       {{"keep", slices_per_phantom}, {"min_mask_voxels", min_mask_voxels}, {"augment", augment_j}}},
      {"target", {{"value", target_value}, {"lambda", lambda}}},
      {"adam",
       {{"step_size", adam.step_size},
        {"beta1", adam.beta1},
        {"beta2", adam.beta2},
        {"eps", adam.eps},
        {"max_iters", adam.max_iters},
        {"rel_tol", adam.rel_tol},
        {"mag_floor", adam.mag_floor}}},
      {"restarts",
       {{"n_random", restarts.n_random},
        {"include_quadrature", restarts.include_quadrature},
        {"mag_lo", restarts.init_mag_lo},
        {"mag_hi", restarts.init_mag_hi}}},
      {"mls", {{"max_outer_iters", mls.max_outer_iters}, {"rel_tol", mls.rel_tol}}},
      {"train",
       {{"batch_size", train.batch_size},
        {"epochs", train.epochs},
        {"lr", train.lr},
        {"lr_decay", train.lr_decay},
        {"decay_every", train.decay_every},
        {"fold_seed", train.fold_seed}}},
      {"net", {{"paper_scale", paper_scale}}},
      {"bench", {{"folds", folds}, {"timing_reps", timing_reps}}},
      {"seed", seed},
  };
}

std::string RunConfig::hash() const {
  const std::string text = echo().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace shimkit::config
