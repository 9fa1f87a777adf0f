// shimkit: synthetic B1+ RF-shimming pipeline
// subcommands: simulate | reference | mls | train | eval | bench

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "shimkit/bench.hpp"
#include "shimkit/config.hpp"
#include "shimkit/net/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace shimkit;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t per_slice_seed(std::uint64_t base, size_t index) {
  return splitmix64(base ^ (0xA5A5A5A5ULL + index));
}

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> workers;
  std::atomic<bool> failed{false};
  std::string error;
  std::mutex error_mutex;
  for (int t = 0; t < jobs; ++t) {
    workers.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        if (failed.load()) return;
        try {
          fn(i);
        } catch (const std::exception& e) {
          std::scoped_lock lock(error_mutex);
          failed = true;
          error = e.what();
        }
      }
    });
  }
  for (std::thread& w : workers) w.join();
  if (failed) throw NumericError(error);
}

struct CommonArgs {
  std::string config_file;
  config::KeyValues flag_kv;

  config::RunConfig resolve() const {
    config::RunConfig cfg;
    config::KeyValues merged;
    if (!config_file.empty()) merged = config::parse_config_file(config_file);
    if (const char* env = std::getenv("SHIMKIT_SEED")) {
      merged["seed"] = env; // overridden by --seed below
    }
    for (const auto& [k, v] : flag_kv) merged[k] = v;
    cfg.apply(merged);
    cfg.validate();
    return cfg;
  }

  bool has_key(const std::string& key) const { return flag_kv.count(key) > 0; }
};

void add_kv_option(CLI::App* cmd, CommonArgs& args, const std::string& flag,
                   const std::string& key, const std::string& desc, const std::string& def) {
  cmd->add_option_function<std::string>(
         flag, [&args, key](const std::string& v) { args.flag_kv[key] = v; }, desc)
      ->default_str(def);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json config_echo(const config::RunConfig& cfg) {
  json j = cfg.echo();
  j["config_hash"] = cfg.hash();
  return j;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const config::RunConfig& cfg, const std::string& out_dir) {
  const std::vector<sim::PhantomSpec> phantoms = cfg.phantom_list();
  std::vector<field::SliceSample> all;
  for (size_t i = 0; i < phantoms.size(); ++i) {
    const sim::Volume vol = sim::generate_volume(cfg.coil, phantoms[i], cfg.wave);
    std::vector<field::SliceSample> slices =
        sim::slice_and_mask(vol, phantoms[i], static_cast<int>(i), cfg.slices_per_phantom,
                            cfg.min_mask_voxels, cfg.target_value, cfg.lambda);
    std::vector<field::SliceSample> augmented = sim::augment_rotations(slices, cfg.augment);
    std::cerr << "phantom " << i << " (scale " << phantoms[i].scale << "): " << slices.size()
              << " slices, " << augmented.size() << " augmented samples\n";
    for (auto& s : augmented) all.push_back(std::move(s));
  }

  dataset::DatasetManifest manifest;
  manifest.coil = cfg.coil;
  manifest.wave = cfg.wave;
  manifest.phantoms = phantoms;
  manifest.seed = cfg.seed;
  manifest.target_value = cfg.target_value;
  manifest.lambda = cfg.lambda;
  manifest.run_config = config_echo(cfg);
  manifest.config_hash = cfg.hash();
  dataset::save_dataset(all, manifest, out_dir);
  std::cout << "wrote " << all.size() << " samples to " << out_dir << "\n";
  return 0;
}

// --------------------------------------------------------------- reference

int cmd_reference(const config::RunConfig& cfg, const std::string& data_dir, bool force) {
  dataset::LoadedDataset ds = dataset::load_dataset(data_dir);
  std::vector<size_t> todo;
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    if (force || !ds.samples[i].ref_weights) todo.push_back(i);
  }
  if (todo.empty()) {
    std::cout << "all " << ds.samples.size() << " samples already have references\n";
    return 0;
  }
  std::cerr << "generating references for " << todo.size() << " of " << ds.samples.size()
            << " samples (" << (cfg.restarts.include_quadrature ? 1 : 0) + cfg.restarts.n_random
            << " starts each)\n";
  std::atomic<size_t> done{0};
  parallel_for(todo.size(), cfg.jobs, [&](size_t k) {
    const size_t i = todo[k];
    opt::RestartPolicy policy = cfg.restarts;
    policy.seed = per_slice_seed(cfg.seed, i);
    opt::reference_weights(ds.samples[i], cfg.adam, policy);
    const size_t d = ++done;
    if (d % 50 == 0) std::cerr << "  " << d << "/" << todo.size() << "\n";
  });
  dataset::save_manifest(ds.samples, ds.manifest, data_dir);
  std::cout << "updated references for " << todo.size() << " samples in " << data_dir << "\n";
  return 0;
}

// --------------------------------------------------------------------- mls

int cmd_mls(const config::RunConfig& cfg, const std::string& data_dir, const std::string& out_file,
            bool lambda_override) {
  dataset::LoadedDataset ds = dataset::load_dataset(data_dir);
  json results = json::array();
  double mean = 0.0;
  for (field::SliceSample& s : ds.samples) {
    if (lambda_override) s.target.lambda = cfg.lambda;
    const opt::SolveResult r = opt::mls_variable_exchange(s, cfg.mls);
    results.push_back({{"slice_id", dataset::payload_name(s.provenance)},
                       {"rmse_pct", r.rmse * 100.0},
                       {"objective", r.objective},
                       {"iterations", r.iterations},
                       {"wall_time_s", r.wall_time},
                       {"init_label", r.init_label}});
    mean += r.rmse * 100.0;
  }
  mean /= static_cast<double>(ds.samples.size());
  const fs::path out = out_file.empty() ? fs::path(data_dir) / "mls_results.json" : fs::path(out_file);
  write_json(out, json{{"config", config_echo(cfg)}, {"results", std::move(results)}});
  std::cout << "MLS mean RMSE " << mean << " % of target FA over " << ds.samples.size()
            << " slices -> " << out.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const config::RunConfig& cfg, const std::string& data_dir,
              const std::string& ckpt_path, bool lambda_override) {
  dataset::LoadedDataset ds = dataset::load_dataset(data_dir);
  if (ds.samples.empty()) throw SpecError("train: dataset is empty");
  if (lambda_override) {
    for (field::SliceSample& s : ds.samples) s.target.lambda = cfg.lambda;
  }
  const net::SplitIndices split = net::split_samples(ds.samples, cfg.train.ratio_train,
                                                     cfg.train.ratio_val, cfg.train.fold_seed);
  for (const std::vector<int>* part : {&split.train, &split.val}) {
    for (int i : *part) {
      if (!ds.samples[i].ref_rmse) {
        throw SpecError("train: sample " + dataset::payload_name(ds.samples[i].provenance) +
                        " has no reference; run `shimkit reference` first");
      }
    }
  }
  const field::SliceSample& first = ds.samples.front();
  const net::NetConfig net_cfg = cfg.net_config(first.b1.channels, first.b1.height, first.b1.width);
  net::TrainedNet<float> trained = net::train<float>(ds.samples, split, net_cfg, cfg.train);
  net::save_checkpoint(trained.net, ckpt_path);

  json log = json::array();
  for (const net::EpochLog& e : trained.log) {
    log.push_back(
        {{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  write_json(ckpt_path + ".log.json", json{{"config", config_echo(cfg)},
                                           {"best_epoch", trained.best_epoch},
                                           {"split",
                                            {{"train", split.train.size()},
                                             {"val", split.val.size()},
                                             {"test", split.test.size()}}},
                                           {"epochs", std::move(log)}});
  std::cout << "checkpoint " << ckpt_path << " (best epoch " << trained.best_epoch << ")\n";
  return 0;
}

// -------------------------------------------------------------------- eval

int cmd_eval(const config::RunConfig& cfg, const std::string& data_dir, const std::string& ckpt,
             const std::string& out_file) {
  dataset::LoadedDataset ds = dataset::load_dataset(data_dir);
  if (ds.samples.empty()) throw SpecError("eval: dataset is empty");
  net::NetParams<float> net = net::load_checkpoint(ckpt);
  const field::SliceSample& first = ds.samples.front();
  if (net.cfg.input_channels != 2 * first.b1.channels || net.cfg.input_h != first.b1.height ||
      net.cfg.input_w != first.b1.width) {
    throw DimensionError("eval: checkpoint geometry does not match the dataset");
  }

  json records = json::array();
  double mean = 0.0, best = 0.0, worst = 0.0, mean_ms = 0.0;
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const net::PredictResult r = net::predict(net, ds.samples[i]);
    const double pct = r.rmse * 100.0;
    records.push_back({{"slice_id", dataset::payload_name(ds.samples[i].provenance)},
                       {"rmse_pct", pct},
                       {"time_ms", r.wall_time * 1000.0}});
    mean += pct;
    mean_ms += r.wall_time * 1000.0;
    best = i == 0 ? pct : std::min(best, pct);
    worst = i == 0 ? pct : std::max(worst, pct);
  }
  mean /= static_cast<double>(ds.samples.size());
  mean_ms /= static_cast<double>(ds.samples.size());
  const json out = {{"config", config_echo(cfg)},
                    {"mean_rmse", mean},
                    {"best_rmse", best},
                    {"worst_rmse", worst},
                    {"mean_time_ms", mean_ms},
                    {"records", std::move(records)}};
  if (!out_file.empty()) write_json(out_file, out);
  std::cout << "eval: mean RMSE " << mean << "%, best " << best << "%, worst " << worst
            << "%, mean " << mean_ms << " ms/slice over " << ds.samples.size() << " slices\n";
  return 0;
}

// ------------------------------------------------------------------- bench

int cmd_bench(const config::RunConfig& cfg, const std::string& data_dir,
              const std::string& out_dir) {
  dataset::LoadedDataset ds = dataset::load_dataset(data_dir);
  if (ds.samples.empty()) throw SpecError("bench: dataset is empty");
  const field::SliceSample& first = ds.samples.front();

  bench::BenchReport report;
  report.config_echo = config_echo(cfg);
  for (int f = 1; f <= cfg.folds; ++f) {
    bench::FoldSpec fold;
    fold.index = f;
    fold.split_seed = splitmix64(cfg.seed ^ (0xF01DULL * f));
    fold.ratio_train = cfg.train.ratio_train;
    fold.ratio_val = cfg.train.ratio_val;
    fold.ratio_test = cfg.train.ratio_test;

    bench::BenchOptions options;
    options.mls = cfg.mls;
    options.net = cfg.net_config(first.b1.channels, first.b1.height, first.b1.width);
    options.train = cfg.train;
    options.train.fold_seed = fold.split_seed;
    options.timing_reps = cfg.timing_reps;

    std::cerr << "fold " << f << "/" << cfg.folds << "...\n";
    bench::FoldReport fr = bench::run_fold(ds.samples, fold, options);
    std::cerr << "  MLS mean " << fr.mls.mean_rmse << "%, proposed mean " << fr.proposed.mean_rmse
              << "%, p = " << fr.significance.p_value << "\n";
    report.folds.push_back(std::move(fr));
  }
  bench::emit_report(report, out_dir);
  std::cout << "bench report written to " << out_dir << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"shimkit: synthetic multi-channel B1+ RF-shimming toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  app.add_option("--config", args.config_file, "flat key=value configuration file");

  auto add_seed_jobs = [&](CLI::App* cmd) {
    add_kv_option(cmd, args, "--seed", "seed", "master RNG seed (overrides SHIMKIT_SEED)", "0");
    add_kv_option(cmd, args, "--jobs", "jobs", "parallel width (0 = hardware)", "0");
  };

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic B1+ dataset");
  std::string sim_out;
  simulate->add_option("--out", sim_out, "output dataset directory")->required();
  add_kv_option(simulate, args, "--phantoms", "phantom.count", "number of scaled phantoms", "10");
  add_kv_option(simulate, args, "--grid", "phantom.grid", "grid as HxWxD", "64x64x32");
  add_kv_option(simulate, args, "--voxel-size", "phantom.voxel_size", "voxel size in meters",
                "0.0045");
  add_kv_option(simulate, args, "--coils", "coil.count", "transmit coil count", "8");
  add_kv_option(simulate, args, "--slices-per-phantom", "slice.keep", "good slices kept", "32");
  add_kv_option(simulate, args, "--augment", "slice.augment", "rotation angles, comma separated",
                "0,10,-10,20,-20,30,-30,45,90,135,180,225,270");
  add_kv_option(simulate, args, "--lambda", "target.lambda", "regularization weight", "1e-3");
  add_kv_option(simulate, args, "--wave-lambda", "wave.lambda_eff", "effective wavelength (m)",
                "0.12");
  add_seed_jobs(simulate);

  // reference
  auto* reference = app.add_subcommand("reference", "best-of-restarts reference weights");
  std::string ref_data;
  bool ref_force = false;
  reference->add_option("--data", ref_data, "dataset directory")->required();
  reference->add_flag("--force", ref_force, "regenerate existing references");
  add_kv_option(reference, args, "--restarts", "restarts.n_random", "random initializations",
                "300");
  add_kv_option(reference, args, "--include-quadrature", "restarts.include_quadrature",
                "also start from the quadrature drive", "true");
  add_kv_option(reference, args, "--adam-iters", "adam.max_iters", "Adam iteration budget", "500");
  add_kv_option(reference, args, "--adam-step", "adam.step_size", "Adam step size", "1e-2");
  add_seed_jobs(reference);

  // mls
  auto* mls = app.add_subcommand("mls", "classical MLS variable-exchange baseline");
  std::string mls_data, mls_out;
  mls->add_option("--data", mls_data, "dataset directory")->required();
  mls->add_option("--out", mls_out, "results JSON (default <data>/mls_results.json)");
  add_kv_option(mls, args, "--lambda", "target.lambda", "regularization weight", "1e-3");
  add_kv_option(mls, args, "--max-iters", "mls.max_outer_iters", "outer iteration budget", "200");
  add_kv_option(mls, args, "--tol", "mls.rel_tol", "relative objective tolerance", "1e-10");

  // train
  auto* train = app.add_subcommand("train", "train the residual regressor");
  std::string train_data, train_ckpt = "shimkit.ckpt";
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_ckpt, "checkpoint path")->capture_default_str();
  add_kv_option(train, args, "--fold-seed", "train.fold_seed", "split shuffle seed", "0");
  add_kv_option(train, args, "--epochs", "train.epochs", "training epochs", "200");
  add_kv_option(train, args, "--batch", "train.batch_size", "batch size", "16");
  add_kv_option(train, args, "--lr", "train.lr", "initial step size", "1e-3");
  add_kv_option(train, args, "--paper-scale", "net.paper_scale",
                "paper-scale widths (64,128,256,512)", "false");
  add_kv_option(train, args, "--lambda", "target.lambda", "regularization weight", "1e-3");
  add_seed_jobs(train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_data, eval_ckpt, eval_out;
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--out", eval_out, "metrics JSON path");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "five-fold MLS vs surrogate comparison");
  std::string bench_data, bench_out;
  bench_cmd->add_option("--data", bench_data, "dataset directory")->required();
  bench_cmd->add_option("--out", bench_out, "report output directory")->required();
  add_kv_option(bench_cmd, args, "--folds", "bench.folds", "number of folds", "5");
  add_kv_option(bench_cmd, args, "--epochs", "train.epochs", "training epochs per fold", "200");
  add_kv_option(bench_cmd, args, "--timing-reps", "bench.timing_reps",
                "timing repetitions per slice", "3");
  add_kv_option(bench_cmd, args, "--max-iters", "mls.max_outer_iters", "MLS iteration budget",
                "200");
  add_seed_jobs(bench_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    const config::RunConfig cfg = args.resolve();
    const bool lambda_override = args.has_key("target.lambda");
    if (simulate->parsed()) return cmd_simulate(cfg, sim_out);
    if (reference->parsed()) return cmd_reference(cfg, ref_data, ref_force);
    if (mls->parsed()) return cmd_mls(cfg, mls_data, mls_out, lambda_override);
    if (train->parsed()) return cmd_train(cfg, train_data, train_ckpt, lambda_override);
    if (eval->parsed()) return cmd_eval(cfg, eval_data, eval_ckpt, eval_out);
    if (bench_cmd->parsed()) return cmd_bench(cfg, bench_data, bench_out);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
