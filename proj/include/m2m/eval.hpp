#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "m2m/config.hpp"
#include "m2m/dataset.hpp"
#include "m2m/implicit.hpp"

namespace m2m {

enum class DatasetSource { Random10, Separable, Csv };
enum class EvalTask { Mean, Moment2, Cdf, Cov, Queries, Logreg };

std::string to_string(EvalTask task);
EvalTask eval_task_from_string(const std::string& name);

struct SketchSetting {
  std::string label;  // column value in results.csv
  MapConfig map;
};

/// One experiment grid: every sketch setting x every epsilon x repetitions,
/// each repetition evaluated on every task.
struct ExperimentPlan {
  DatasetSource source = DatasetSource::Random10;
  std::string dataset_label = "random10";
  std::size_t n = 27000;
  std::size_t d = 10;
  double margin = kDefaultSeparableMargin;  // separable generator only
  std::string csv_path;                     // DatasetSource::Csv; min-max normalized before use
  double test_fraction = 0.1;               // held-out share for logreg

  std::vector<SketchSetting> sketches;
  /// Logarithmically spaced 1e-2 .. 1e2 by default; +inf allowed.
  std::vector<double> epsilons;
  std::size_t repetitions = 50;
  std::vector<EvalTask> tasks;
  std::size_t n_queries = 100;
  std::size_t cdf_thresholds = 10;

  std::size_t n_synth = 100000;
  double extra_reg = 1.0;
  double split = kDefaultSplitNum;
  std::uint64_t seed = 0;
  GdConfig gd;

  /// Full-size defaults: RFF m=200 sigma=1, RACE R=W=80, HIST 100 bins.
  static ExperimentPlan defaults();
  /// Smaller synthetic design and fewer repetitions, for CI.
  void make_quick();
  void validate() const;
};

std::vector<double> logspace(double lo_exp, double hi_exp, std::size_t count);

/// Keys: dataset (random10 | separable | csv), n, d, margin, csv, test_fraction,
/// sketches (comma list of rff, race, hist), rff.m, rff.sigma, race.repetitions,
/// race.buckets, race.width, hist.n_bins, epsilons, repetitions, tasks,
/// n_queries, cdf_thresholds, n_synth, extra_reg, split, seed, gd.step,
/// gd.iterations, gd.restarts, quick.
ExperimentPlan plan_from(const KeyValues& kv);

struct ResultRow {
  std::string dataset;
  std::string sketch;
  double epsilon = 0.0;
  std::string task;
  std::size_t repetition = 0;
  std::string metric;
  double value = 0.0;
};

/// All rows of one (sketch, repetition) job across the epsilon grid, in a fixed order.
std::vector<ResultRow> run_job(const ExperimentPlan& plan, std::size_t sketch_index, std::size_t repetition);

struct RunSummary {
  std::size_t jobs_total = 0;
  std::size_t jobs_run = 0;
  std::size_t jobs_resumed = 0;
  std::string results_path;
  std::string aggregate_path;
};

/// Runs every job not already complete in out_dir/results.csv, appending rows
/// job by job in job order, then rewrites out_dir/aggregate.csv from the file.
RunSummary run_plan(const ExperimentPlan& plan, const std::string& out_dir,
                    const std::function<void(const std::string&)>& progress = {});

struct AggregateRow {
  std::string dataset;
  std::string sketch;
  double epsilon = 0.0;
  std::string task;
  std::string metric;
  double mean = 0.0;
  std::size_t count = 0;
};

/// Per-cell means over repetitions, cells in order of first appearance.
std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows);

std::vector<ResultRow> read_results(const std::string& path);
std::string format_double(double v);

}  // namespace m2m
