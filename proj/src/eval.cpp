#include "m2m/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include "m2m/error.hpp"
#include "m2m/metrics.hpp"
#include "m2m/parallel.hpp"
#include "m2m/rng.hpp"
#include "m2m/serialize.hpp"
#include "m2m/tasks.hpp"

namespace m2m {
namespace {

constexpr const char* kResultsHeader = "dataset,sketch,epsilon,task,repetition,metric,value";
constexpr const char* kAggregateHeader = "dataset,sketch,epsilon,task,metric,mean,count";

const std::vector<std::string>& task_metrics(EvalTask task) {
  static const std::vector<std::string> moment = {"mre", "mae"};
  static const std::vector<std::string> cdf = {"emd"};
  static const std::vector<std::string> cov = {"frobenius", "relative_frobenius"};
  static const std::vector<std::string> queries = {"mae"};
  static const std::vector<std::string> logreg = {"auc"};
  switch (task) {
    case EvalTask::Mean:
    case EvalTask::Moment2:
      return moment;
    case EvalTask::Cdf:
      return cdf;
    case EvalTask::Cov:
      return cov;
    case EvalTask::Queries:
      return queries;
    case EvalTask::Logreg:
      return logreg;
  }
  return moment;
}

std::size_t rows_per_job(const ExperimentPlan& plan) {
  std::size_t per_eps = 0;
  for (auto t : plan.tasks) per_eps += task_metrics(t).size();
  return per_eps * plan.epsilons.size();
}

std::uint64_t job_seed(const ExperimentPlan& plan, std::size_t sketch_index, std::size_t repetition) {
  return derive_seed(derive_seed(plan.seed, 2000 + sketch_index), repetition);
}

struct JobData {
  Dataset train;
  Dataset test;
  Domain domain;
};

JobData load_data(const ExperimentPlan& plan, std::size_t repetition) {
  const std::uint64_t seed = derive_seed(plan.seed, 1000 + repetition);
  JobData out;
  switch (plan.source) {
    case DatasetSource::Random10:
      out.train = gen_random10(plan.n, plan.d, seed);
      out.domain = Domain::unit_box(plan.d);
      break;
    case DatasetSource::Separable:
      out.train = gen_separable_classification(plan.n, plan.d, plan.margin, seed);
      out.domain = Domain::unit_box_with_label(plan.d);
      break;
    case DatasetSource::Csv: {
      const Dataset raw = read_csv(plan.csv_path);
      out.train = apply_normalization(raw, fit_normalization(raw));
      out.domain = Domain::unit_box(raw.cols());
      break;
    }
  }
  const bool needs_test = std::find(plan.tasks.begin(), plan.tasks.end(), EvalTask::Logreg) != plan.tasks.end();
  if (needs_test) {
    auto [train, test] = split_train_test(out.train, plan.test_fraction, derive_seed(seed, 7));
    out.train = std::move(train);
    out.test = std::move(test);
  }
  return out;
}

std::pair<double, double> moment_errors(const SketchEstimator& est, const Dataset& data, unsigned order) {
  const std::size_t d = data.cols();
  std::vector<TargetFn> fns;
  for (std::size_t j = 0; j < d; ++j) fns.push_back(to_function(target::Moment{j, order}, est.sketch().map().domain()));
  const auto estimates = est.estimate(fns);
  double mre_sum = 0.0;
  std::size_t mre_count = 0;
  std::vector<double> truths(d);
  for (std::size_t j = 0; j < d; ++j) {
    truths[j] = empirical_mean(data, fns[j]);
    if (truths[j] != 0.0) {
      mre_sum += mre(estimates[j], truths[j]);
      ++mre_count;
    }
  }
  const double avg_mre = mre_count ? mre_sum / static_cast<double>(mre_count) : std::nan("");
  return {avg_mre, mae(estimates, truths)};
}

double cdf_error(const SketchEstimator& est, const Dataset& data, std::size_t count) {
  const Domain& domain = est.sketch().map().domain();
  double sum = 0.0;
  std::size_t attrs = 0;
  for (std::size_t j = 0; j < domain.dim(); ++j) {
    if (domain.is_binary(j)) continue;
    const auto thresholds = cdf_thresholds(domain, j, count);
    const auto est_cdf = estimate_cdf(est, j, thresholds);
    std::vector<double> values(est_cdf.size());
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = est_cdf[k].value;
    sum += emd_1d(values, empirical_cdf(data, j, thresholds));
    ++attrs;
  }
  return attrs ? sum / static_cast<double>(attrs) : std::nan("");
}

}  // namespace

std::string to_string(EvalTask task) {
  switch (task) {
    case EvalTask::Mean:
      return "mean";
    case EvalTask::Moment2:
      return "moment2";
    case EvalTask::Cdf:
      return "cdf";
    case EvalTask::Cov:
      return "cov";
    case EvalTask::Queries:
      return "queries";
    case EvalTask::Logreg:
      return "logreg";
  }
  return "?";
}

EvalTask eval_task_from_string(const std::string& name) {
  for (auto t : {EvalTask::Mean, EvalTask::Moment2, EvalTask::Cdf, EvalTask::Cov, EvalTask::Queries,
                 EvalTask::Logreg}) {
    if (to_string(t) == name) return t;
  }
  throw ValidationError("unknown task '" + name + "' (expected mean, moment2, cdf, cov, queries or logreg)");
}

std::vector<double> logspace(double lo_exp, double hi_exp, std::size_t count) {
  if (count == 0) return {};
  if (count == 1) return {std::pow(10.0, lo_exp)};
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    out[k] = std::pow(10.0, lo_exp + (hi_exp - lo_exp) * static_cast<double>(k) / static_cast<double>(count - 1));
  }
  return out;
}

ExperimentPlan ExperimentPlan::defaults() {
  ExperimentPlan p;
  MapConfig rff;
  rff.kind = MapKind::Rff;
  MapConfig race;
  race.kind = MapKind::Race;
  MapConfig hist;
  hist.kind = MapKind::Hist;
  p.sketches = {{"rff", rff}, {"race", race}, {"hist", hist}};
  p.epsilons = logspace(-2.0, 2.0, 9);
  p.tasks = {EvalTask::Mean, EvalTask::Moment2, EvalTask::Cdf, EvalTask::Cov, EvalTask::Queries};
  return p;
}

void ExperimentPlan::make_quick() {
  n_synth = 20000;
  repetitions = 10;
}

void ExperimentPlan::validate() const {
  if (repetitions < 1) throw ValidationError("repetitions must be at least 1");
  if (sketches.empty()) throw ValidationError("sketch grid is empty");
  for (const auto& s : sketches) m2m::validate(s.map);
  if (!(extra_reg > 0.0)) throw ValidationError("extra_reg must be positive");
  if (epsilons.empty()) throw ValidationError("epsilon grid is empty");
  if (tasks.empty()) throw ValidationError("task list is empty");
  if (n_synth == 0) throw ValidationError("n_synth must be positive");
  for (double e : epsilons) {
    if (!(e > 0.0)) throw ValidationError("epsilons must be positive");
  }
  if (source != DatasetSource::Csv && (n == 0 || d == 0)) throw ValidationError("n and d must be positive");
  if (source == DatasetSource::Separable && d < 2) throw ValidationError("separable dataset needs d >= 2");
  if (source == DatasetSource::Csv && csv_path.empty()) throw ValidationError("csv dataset needs a path");
  const bool logreg = std::find(tasks.begin(), tasks.end(), EvalTask::Logreg) != tasks.end();
  if (logreg && source != DatasetSource::Separable) {
    throw ValidationError("the logreg task needs the separable dataset (binary label in the last column)");
  }
  if (logreg && !(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test_fraction must lie strictly between 0 and 1");
  }
  std::vector<std::string> labels;
  for (const auto& s : sketches) {
    if (s.label.empty() || s.label.find_first_of(",\n\"") != std::string::npos) {
      throw ValidationError("sketch label '" + s.label + "' is empty or contains CSV separators");
    }
    if (std::find(labels.begin(), labels.end(), s.label) != labels.end()) {
      throw ValidationError("duplicate sketch label '" + s.label + "'");
    }
    labels.push_back(s.label);
  }
}

ExperimentPlan plan_from(const KeyValues& kv) {
  static const std::vector<std::string_view> allowed = {
      "dataset",       "n",          "d",           "margin",       "csv",        "test_fraction",
      "sketches",      "rff.m",      "rff.sigma",   "race.repetitions", "race.buckets", "race.width",
      "hist.n_bins",   "epsilons",   "repetitions", "tasks",        "n_queries",  "cdf_thresholds",
      "n_synth",       "extra_reg",  "split",       "seed",         "gd.step",    "gd.iterations",
      "gd.restarts",   "quick",      "label"};
  check_keys(kv, allowed, "plan");
  ExperimentPlan p = ExperimentPlan::defaults();
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("quick"); v && parse_bool(*v, "quick")) p.make_quick();
  if (auto* v = get("dataset")) {
    if (*v == "random10") {
      p.source = DatasetSource::Random10;
    } else if (*v == "separable") {
      p.source = DatasetSource::Separable;
      p.n = 20000;
      p.d = 6;
      p.tasks = {EvalTask::Logreg};
    } else if (*v == "csv") {
      p.source = DatasetSource::Csv;
    } else {
      throw ValidationError("unknown dataset '" + *v + "' (expected random10, separable or csv)");
    }
    p.dataset_label = *v;
  }
  if (auto* v = get("label")) p.dataset_label = *v;
  if (auto* v = get("n")) p.n = parse_u64(*v, "n");
  if (auto* v = get("d")) p.d = parse_u64(*v, "d");
  if (auto* v = get("margin")) p.margin = parse_double(*v, "margin");
  if (auto* v = get("csv")) p.csv_path = *v;
  if (auto* v = get("test_fraction")) p.test_fraction = parse_double(*v, "test_fraction");

  MapConfig rff, race, hist;
  rff.kind = MapKind::Rff;
  race.kind = MapKind::Race;
  hist.kind = MapKind::Hist;
  if (auto* v = get("rff.m")) rff.m = parse_u64(*v, "rff.m");
  if (auto* v = get("rff.sigma")) rff.sigma = parse_double(*v, "rff.sigma");
  if (auto* v = get("race.repetitions")) race.repetitions = parse_u64(*v, "race.repetitions");
  if (auto* v = get("race.buckets")) race.buckets = parse_u64(*v, "race.buckets");
  if (auto* v = get("race.width")) race.width = parse_double(*v, "race.width");
  if (auto* v = get("hist.n_bins")) hist.n_bins = parse_u64(*v, "hist.n_bins");
  std::vector<std::string> names = {"rff", "race", "hist"};
  if (auto* v = get("sketches")) names = split_list(*v);
  p.sketches.clear();
  for (const auto& name : names) {
    switch (map_kind_from_string(name)) {
      case MapKind::Rff:
        p.sketches.push_back({"rff", rff});
        break;
      case MapKind::Race:
        p.sketches.push_back({"race", race});
        break;
      case MapKind::Hist:
        p.sketches.push_back({"hist", hist});
        break;
    }
  }
  if (auto* v = get("epsilons")) p.epsilons = parse_double_list(*v, "epsilons");
  if (auto* v = get("repetitions")) p.repetitions = parse_u64(*v, "repetitions");
  if (auto* v = get("tasks")) {
    p.tasks.clear();
    for (const auto& t : split_list(*v)) p.tasks.push_back(eval_task_from_string(t));
  }
  if (auto* v = get("n_queries")) p.n_queries = parse_u64(*v, "n_queries");
  if (auto* v = get("cdf_thresholds")) p.cdf_thresholds = parse_u64(*v, "cdf_thresholds");
  if (auto* v = get("n_synth")) p.n_synth = parse_u64(*v, "n_synth");
  if (auto* v = get("extra_reg")) p.extra_reg = parse_double(*v, "extra_reg");
  if (auto* v = get("split")) p.split = parse_double(*v, "split");
  if (auto* v = get("seed")) p.seed = parse_u64(*v, "seed");
  if (auto* v = get("gd.step")) p.gd.step = parse_double(*v, "gd.step");
  if (auto* v = get("gd.iterations")) p.gd.iterations = parse_u64(*v, "gd.iterations");
  if (auto* v = get("gd.restarts")) p.gd.restarts = parse_u64(*v, "gd.restarts");
  p.validate();
  return p;
}

std::vector<ResultRow> run_job(const ExperimentPlan& plan, std::size_t sketch_index, std::size_t repetition) {
  const SketchSetting& setting = plan.sketches.at(sketch_index);
  const std::uint64_t seed = job_seed(plan, sketch_index, repetition);
  const JobData data = load_data(plan, repetition);
  data.train.check_in(data.domain);

  auto map = std::make_shared<const FeatureMap>(build_map(setting.map, data.domain, derive_seed(seed, 1)));
  const ExactSketch exact = sketch_exact(*map, data.train);
  auto design = std::make_shared<const Design>(map, sample_prior(data.domain, plan.n_synth, derive_seed(seed, 3)));
  const auto queries = random_queries(data.domain, plan.n_queries, derive_seed(seed, 4));

  // Ground truth that does not depend on epsilon.
  std::vector<double> query_truth(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    query_truth[q] = empirical_mean(data.train, to_function(queries[q], data.domain));
  }
  Eigen::MatrixXd cov_truth;
  if (std::find(plan.tasks.begin(), plan.tasks.end(), EvalTask::Cov) != plan.tasks.end()) {
    cov_truth = empirical_covariance(data.train);
  }

  std::vector<ResultRow> rows;
  rows.reserve(rows_per_job(plan));
  for (std::size_t e = 0; e < plan.epsilons.size(); ++e) {
    const double eps = plan.epsilons[e];
    const PrivateSketch sketch = privatize(exact, map, eps, plan.split, derive_seed(seed, 100 + e));
    const double lambda =
        regularization_lambda(*map, sketch.epsilon_num(), sketch.noisy_count(), plan.extra_reg);
    const SketchEstimator est(sketch, design, lambda);
    auto emit = [&](EvalTask task, const std::string& metric, double value) {
      rows.push_back({plan.dataset_label, setting.label, eps, to_string(task), repetition, metric, value});
    };
    for (const EvalTask task : plan.tasks) {
      switch (task) {
        case EvalTask::Mean:
        case EvalTask::Moment2: {
          const auto [r, a] = moment_errors(est, data.train, task == EvalTask::Mean ? 1u : 2u);
          emit(task, "mre", r);
          emit(task, "mae", a);
          break;
        }
        case EvalTask::Cdf:
          emit(task, "emd", cdf_error(est, data.train, plan.cdf_thresholds));
          break;
        case EvalTask::Cov: {
          const auto c = estimate_covariance(est);
          const double f = frobenius(c.covariance, cov_truth);
          emit(task, "frobenius", f);
          emit(task, "relative_frobenius", f / cov_truth.norm());
          break;
        }
        case EvalTask::Queries: {
          const auto answers = answer_queries(est, queries);
          std::vector<double> values(answers.size());
          for (std::size_t q = 0; q < answers.size(); ++q) values[q] = answers[q].value;
          emit(task, "mae", mae(values, query_truth));
          break;
        }
        case EvalTask::Logreg: {
          GdConfig gd = plan.gd;
          gd.seed = derive_seed(seed, 200 + e);
          const SampleWeights weights = compute_weights(design, sketch, lambda);
          const LogisticModel model = fit_logistic(weights, sketch, gd);
          emit(task, "auc", logistic_auc(model, data.test));
          break;
        }
      }
    }
  }
  return rows;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

namespace {

std::string format_row(const ResultRow& r) {
  return r.dataset + "," + r.sketch + "," + format_double(r.epsilon) + "," + r.task + "," +
         std::to_string(r.repetition) + "," + r.metric + "," + format_double(r.value);
}

double parse_value(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return parse_double(s, "value");
}

// Lenient mode drops lines that do not parse (a run interrupted mid-write).
std::vector<ResultRow> read_rows(const std::string& path, bool lenient) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<ResultRow> rows;
  if (!std::getline(in, line) || line != kResultsHeader) {
    if (lenient) return rows;
    throw ValidationError("'" + path + "' does not start with the results header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    try {
      if (f.size() != 7) throw ValidationError("expected 7 fields");
      rows.push_back({f[0], f[1], parse_double(f[2], "epsilon"), f[3],
                      static_cast<std::size_t>(parse_u64(f[4], "repetition")), f[5], parse_value(f[6])});
    } catch (const ValidationError& e) {
      if (!lenient) throw ValidationError("'" + path + "' line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

std::string render_results(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows) out += format_row(r) + "\n";
  return out;
}

}  // namespace

std::vector<ResultRow> read_results(const std::string& path) { return read_rows(path, false); }

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, std::string, double, std::string, std::string>;
  std::map<Key, std::size_t> index;
  std::vector<AggregateRow> out;
  std::vector<double> sums;
  for (const auto& r : rows) {
    const Key key{r.dataset, r.sketch, r.epsilon, r.task, r.metric};
    auto [it, inserted] = index.emplace(key, out.size());
    if (inserted) {
      out.push_back({r.dataset, r.sketch, r.epsilon, r.task, r.metric, 0.0, 0});
      sums.push_back(0.0);
    }
    sums[it->second] += r.value;
    ++out[it->second].count;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].mean = sums[i] / static_cast<double>(out[i].count);
  return out;
}

RunSummary run_plan(const ExperimentPlan& plan, const std::string& out_dir,
                    const std::function<void(const std::string&)>& progress) {
  plan.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "'");

  RunSummary summary;
  summary.results_path = (std::filesystem::path(out_dir) / "results.csv").string();
  summary.aggregate_path = (std::filesystem::path(out_dir) / "aggregate.csv").string();
  const std::size_t n_jobs = plan.sketches.size() * plan.repetitions;
  summary.jobs_total = n_jobs;
  const std::size_t expected = rows_per_job(plan);
  auto job_of = [&](std::size_t s, std::size_t rep) { return s * plan.repetitions + rep; };

  // Collect complete jobs from a previous run of the same plan.
  std::vector<std::vector<ResultRow>> done(n_jobs);
  if (std::filesystem::exists(summary.results_path)) {
    std::map<std::pair<std::string, std::size_t>, std::vector<ResultRow>> by_job;
    for (auto& r : read_rows(summary.results_path, true)) {
      if (r.dataset != plan.dataset_label) continue;
      by_job[{r.sketch, r.repetition}].push_back(std::move(r));
    }
    for (std::size_t s = 0; s < plan.sketches.size(); ++s) {
      for (std::size_t rep = 0; rep < plan.repetitions; ++rep) {
        auto it = by_job.find({plan.sketches[s].label, rep});
        if (it != by_job.end() && it->second.size() == expected) done[job_of(s, rep)] = std::move(it->second);
      }
    }
  }
  std::vector<ResultRow> kept;
  std::vector<std::size_t> todo;
  for (std::size_t j = 0; j < n_jobs; ++j) {
    if (done[j].empty()) {
      todo.push_back(j);
    } else {
      kept.insert(kept.end(), done[j].begin(), done[j].end());
      ++summary.jobs_resumed;
    }
  }
  write_file_atomic(summary.results_path, render_results(kept));

  // Ordered appender: jobs finish in any order, rows land in job order.
  std::ofstream out(summary.results_path, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to '" + summary.results_path + "'");
  std::mutex mutex;
  std::map<std::size_t, std::vector<ResultRow>> pending;
  std::size_t next_write = 0;
  parallel_for(todo.size(), [&](std::size_t k) {
    const std::size_t job = todo[k];
    auto rows = run_job(plan, job / plan.repetitions, job % plan.repetitions);
    std::lock_guard lock(mutex);
    pending.emplace(k, std::move(rows));
    while (!pending.empty() && pending.begin()->first == next_write) {
      for (const auto& r : pending.begin()->second) out << format_row(r) << '\n';
      out.flush();
      if (!out) throw IoError("failed writing '" + summary.results_path + "'");
      pending.erase(pending.begin());
      ++next_write;
      ++summary.jobs_run;
      if (progress) {
        const std::size_t j = todo[next_write - 1];
        progress("job " + std::to_string(summary.jobs_run + summary.jobs_resumed) + "/" + std::to_string(n_jobs) +
                 " done: " + plan.sketches[j / plan.repetitions].label + " repetition " +
                 std::to_string(j % plan.repetitions));
      }
    }
  });
  out.close();

  // Canonical job order, so resumed and fresh runs produce the same file.
  std::vector<ResultRow> rows = read_results(summary.results_path);
  std::map<std::string, std::size_t> sketch_order;
  for (std::size_t s = 0; s < plan.sketches.size(); ++s) sketch_order[plan.sketches[s].label] = s;
  std::stable_sort(rows.begin(), rows.end(), [&](const ResultRow& a, const ResultRow& b) {
    return job_of(sketch_order[a.sketch], a.repetition) < job_of(sketch_order[b.sketch], b.repetition);
  });
  write_file_atomic(summary.results_path, render_results(rows));

  std::string agg = std::string(kAggregateHeader) + "\n";
  for (const auto& a : aggregate(rows)) {
    agg += a.dataset + "," + a.sketch + "," + format_double(a.epsilon) + "," + a.task + "," + a.metric + "," +
           format_double(a.mean) + "," + std::to_string(a.count) + "\n";
  }
  write_file_atomic(summary.aggregate_path, agg);
  return summary;
}

}  // namespace m2m
