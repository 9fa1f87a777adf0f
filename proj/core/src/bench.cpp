#include "shimkit/bench.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

namespace shimkit::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slice_id(const field::Provenance& p) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "p%d_s%d_a%g", p.phantom_id, p.slice_index, p.augment_deg);
  return buf;
}

MethodSummary summarize(const std::vector<SliceRecord>& records, const std::string& method) {
  MethodSummary s;
  double rmse_sum = 0.0, time_sum = 0.0;
  int n = 0;
  for (const SliceRecord& r : records) {
    if (r.method != method) continue;
    if (n == 0) {
      s.best_rmse = s.worst_rmse = r.rmse_pct;
    } else {
      s.best_rmse = std::min(s.best_rmse, r.rmse_pct);
      s.worst_rmse = std::max(s.worst_rmse, r.rmse_pct);
    }
    rmse_sum += r.rmse_pct;
    time_sum += r.time_ms;
    ++n;
  }
  if (n > 0) {
    s.mean_rmse = rmse_sum / n;
    s.mean_time_ms = time_sum / n;
  }
  return s;
}

} // namespace

FoldReport run_fold(const std::vector<field::SliceSample>& samples, const FoldSpec& fold,
                    const BenchOptions& options) {
  const net::SplitIndices split =
      net::split_samples(samples, fold.ratio_train, fold.ratio_val, fold.split_seed);
  if (split.test.empty()) {
    throw SpecError("run_fold: test split is empty; dataset too small for the requested ratios");
  }
  for (int i : split.train) {
    if (!samples[i].ref_rmse) {
      throw SpecError("run_fold: training sample " + slice_id(samples[i].provenance) +
                      " has no reference weights; run reference generation first");
    }
  }

  FoldReport report;
  report.fold = fold;
  report.n_test = static_cast<int>(split.test.size());

  const auto t0 = std::chrono::steady_clock::now();
  net::TrainedNet<float> trained = net::train<float>(samples, split, options.net, options.train);
  report.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.best_epoch = trained.best_epoch;

  std::vector<double> mls_rmse, proposed_rmse;
  const int reps = std::max(3, options.timing_reps);
  for (int idx : split.test) {
    const field::SliceSample& sample = samples[idx];
    const std::string id = slice_id(sample.provenance);

    opt::SolveResult mls = opt::mls_variable_exchange(sample, options.mls); // warm-up
    double mls_time = 0.0;
    for (int r = 0; r < reps; ++r) {
      mls = opt::mls_variable_exchange(sample, options.mls);
      mls_time += mls.wall_time;
    }
    mls_time /= reps;

    net::PredictResult pred = net::predict(trained.net, sample); // warm-up
    double pred_time = 0.0;
    for (int r = 0; r < reps; ++r) {
      pred = net::predict(trained.net, sample);
      pred_time += pred.wall_time;
    }
    pred_time /= reps;

    report.records.push_back({id, "MLS", mls.rmse * 100.0, mls_time * 1000.0});
    report.records.push_back({id, "Proposed", pred.rmse * 100.0, pred_time * 1000.0});
    mls_rmse.push_back(mls.rmse * 100.0);
    proposed_rmse.push_back(pred.rmse * 100.0);
  }

  report.mls = summarize(report.records, "MLS");
  report.proposed = summarize(report.records, "Proposed");
  if (report.n_test >= 6) {
    report.significance = paired_significance(mls_rmse, proposed_rmse);
  } else {
    report.significance.no_effect = true;
    report.significance.p_value = 1.0;
  }
  return report;
}

std::string format_rmse(double rmse_pct) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", rmse_pct);
  return buf;
}

std::string format_runtime(double time_ms) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4fms", time_ms);
  return buf;
}

json report_to_json(const BenchReport& report) {
  json folds = json::array();
  for (const FoldReport& f : report.folds) {
    json records = json::array();
    for (const SliceRecord& r : f.records) {
      records.push_back(
          {{"slice_id", r.slice_id}, {"method", r.method}, {"rmse_pct", r.rmse_pct},
           {"time_ms", r.time_ms}});
    }
    auto summary = [](const MethodSummary& s) {
      return json{{"mean_rmse", s.mean_rmse},
                  {"best_rmse", s.best_rmse},
                  {"worst_rmse", s.worst_rmse},
                  {"mean_time_ms", s.mean_time_ms}};
    };
    folds.push_back({{"fold", f.fold.index},
                     {"split_seed", f.fold.split_seed},
                     {"n_test", f.n_test},
                     {"mls", summary(f.mls)},
                     {"proposed", summary(f.proposed)},
                     {"wilcoxon",
                      {{"statistic", f.significance.statistic},
                       {"p_value", f.significance.p_value},
                       {"no_effect", f.significance.no_effect},
                       {"n", f.significance.n},
                       {"exact", f.significance.exact}}},
                     {"train_seconds", f.train_seconds},
                     {"best_epoch", f.best_epoch},
                     {"records", std::move(records)}});
  }
  return {{"folds", std::move(folds)}, {"config", report.config_echo}};
}

void emit_report(const BenchReport& report, const fs::path& dir) {
  for (const FoldReport& f : report.folds) {
    if (f.records.empty()) {
      throw SpecError("emit_report: fold " + std::to_string(f.fold.index) +
                      " has no per-slice records");
    }
  }
  if (report.folds.empty()) throw SpecError("emit_report: empty report");
  fs::create_directories(dir);

  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    return out;
  };

  {
    std::ofstream csv = open("summary.csv");
    csv << "fold,method,mean_rmse,best_rmse,worst_rmse,runtime_per_slice\n";
    for (const FoldReport& f : report.folds) {
      csv << f.fold.index << ",MLS," << format_rmse(f.mls.mean_rmse) << ","
          << format_rmse(f.mls.best_rmse) << "," << format_rmse(f.mls.worst_rmse) << ","
          << format_runtime(f.mls.mean_time_ms) << "\n";
      csv << f.fold.index << ",Proposed," << format_rmse(f.proposed.mean_rmse) << ","
          << format_rmse(f.proposed.best_rmse) << "," << format_rmse(f.proposed.worst_rmse) << ","
          << format_runtime(f.proposed.mean_time_ms) << "\n";
    }
  }
  {
    std::ofstream csv = open("per_slice.csv");
    csv << "fold,method,slice_id,rmse_pct,time_ms\n";
    char buf[64];
    for (const FoldReport& f : report.folds) {
      for (const SliceRecord& r : f.records) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.rmse_pct);
        csv << f.fold.index << "," << r.method << "," << r.slice_id << "," << buf;
        std::snprintf(buf, sizeof(buf), "%.17g", r.time_ms);
        csv << "," << buf << "\n";
      }
    }
  }
  {
    std::ofstream txt = open("summary.txt");
    char line[256];
    txt << "RMSE [% of Target FA] and per-slice runtime, per fold and method\n";
    std::snprintf(line, sizeof(line), "%-5s %-9s %12s %12s %12s %16s %10s\n", "fold", "method",
                  "mean_rmse", "best_rmse", "worst_rmse", "runtime/slice", "p");
    txt << line;
    for (const FoldReport& f : report.folds) {
      std::snprintf(line, sizeof(line), "%-5d %-9s %12.4f %12.4f %12.4f %16s %10.3g\n",
                    f.fold.index, "MLS", f.mls.mean_rmse, f.mls.best_rmse, f.mls.worst_rmse,
                    format_runtime(f.mls.mean_time_ms).c_str(), f.significance.p_value);
      txt << line;
      std::snprintf(line, sizeof(line), "%-5d %-9s %12.4f %12.4f %12.4f %16s %10s\n",
                    f.fold.index, "Proposed", f.proposed.mean_rmse, f.proposed.best_rmse,
                    f.proposed.worst_rmse, format_runtime(f.proposed.mean_time_ms).c_str(), "");
      txt << line;
    }
  }
  {
    std::ofstream js = open("report.json");
    js << report_to_json(report).dump(2) << "\n";
  }
}

} // namespace shimkit::bench
