#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "shimkit/net/train.hpp"
#include "shimkit/opt.hpp"
#include "shimkit/wilcoxon.hpp"

namespace shimkit::bench {

struct FoldSpec {
  int index = 1; // 1-based
  std::uint64_t split_seed = 0;
  double ratio_train = 0.8;
  double ratio_val = 0.1;
  double ratio_test = 0.1;
};

struct SliceRecord {
  std::string slice_id;
  std::string method; // "MLS" | "Proposed"
  double rmse_pct = 0.0;
  double time_ms = 0.0;
};

struct MethodSummary {
  double mean_rmse = 0.0;  // % of target FA
  double best_rmse = 0.0;
  double worst_rmse = 0.0;
  double mean_time_ms = 0.0;
};

struct FoldReport {
  FoldSpec fold;
  int n_test = 0;
  MethodSummary mls;
  MethodSummary proposed;
  WilcoxonResult significance; // paired per-slice MLS vs proposed RMSE
  std::vector<SliceRecord> records;
  double train_seconds = 0.0;
  int best_epoch = -1;
};

struct BenchReport {
  std::vector<FoldReport> folds;
  nlohmann::json config_echo;
};

struct BenchOptions {
  opt::MlsConfig mls;
  net::NetConfig net;
  net::TrainConfig train;
  int timing_reps = 3; // per slice, after one warm-up call
};

/// One evaluation fold: trains the surrogate on the fold's training split
/// and times/evaluates both methods on the identical test split.
FoldReport run_fold(const std::vector<field::SliceSample>& samples, const FoldSpec& fold,
                    const BenchOptions& options);

/// Writes summary.txt, summary.csv, per_slice.csv and report.json.
void emit_report(const BenchReport& report, const std::filesystem::path& dir);

/// Formatting used by both summary.csv and the round-trip aggregation in
/// the tests.
std::string format_rmse(double rmse_pct);
std::string format_runtime(double time_ms);

nlohmann::json report_to_json(const BenchReport& report);

} // namespace shimkit::bench
