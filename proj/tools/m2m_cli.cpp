#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "m2m/m2m.h"

namespace {

// Exit codes: 0 ok, 1 I/O, 2 validation or parse, 3 numeric failure, 4 internal.
struct Failure {
  int code;
  std::string message;
};

void check(m2m_status s) {
  if (s != M2M_OK) throw Failure{static_cast<int>(s), m2m_last_error()};
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{1, "cannot open '" + path + "' for reading"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Dataset = Handle<m2m_dataset, m2m_dataset_free>;
using Sketch = Handle<m2m_sketch, m2m_sketch_free>;
using Estimator = Handle<m2m_estimator, m2m_estimator_free>;
using Result = Handle<m2m_result, m2m_result_free>;
using Logreg = Handle<m2m_logreg, m2m_logreg_free>;

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { m2m_string_free(p); }
};

// Settings resolved with precedence flag > config file > M2M_SEED.
struct Settings {
  std::string config_file;
  std::map<std::string, std::string> flags;

  std::string text() const {
    std::string out;
    if (const char* env = std::getenv("M2M_SEED"); env && *env) out += std::string("seed = ") + env + "\n";
    if (!config_file.empty()) out += slurp(config_file) + "\n";
    for (const auto& [k, v] : flags) out += k + " = " + v + "\n";
    return out;
  }
};

template <class T>
void flag(CLI::App* app, Settings& s, const std::string& name, const std::string& key, const std::string& help) {
  app->add_option_function<T>(
      name, [&s, key](const T& v) { s.flags[key] = [&] {
        std::ostringstream ss;
        ss.precision(17);
        ss << v;
        return ss.str();
      }(); },
      help);
}

void add_train_flags(CLI::App* app, Settings& s) {
  app->add_option("--config", s.config_file, "key = value settings file (flags win)");
  flag<std::uint64_t>(app, s, "--seed", "seed", "Base seed (default $M2M_SEED or 0)");
  flag<std::size_t>(app, s, "--n-synth", "n_synth", "Synthetic training samples");
  flag<double>(app, s, "--extra-reg", "extra_reg", "Multiplier on the ridge penalty");
}

std::optional<std::string> created_at(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  if (!epoch || !*epoch) return std::nullopt;
  const std::time_t t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

bool is_count_query(const std::string& query) {
  const auto start = query.find_first_not_of(" \t");
  return start != std::string::npos && query.compare(start, 5, "count") == 0;
}

/// Multiplier turning a count-query fraction into a record count: the clamped
/// noisy count for the sketch, the row count for the raw data.
double sketch_count_scale(const m2m_sketch* sketch) {
  m2m_sketch_info info;
  check(m2m_sketch_info_get(sketch, &info));
  return std::max(info.noisy_count, 1.0);
}

void print_result(const m2m_result* est, const m2m_result* truth, double est_scale = 1.0, double truth_scale = 1.0) {
  const size_t rows = m2m_result_rows(est);
  const size_t cols = m2m_result_cols(est);
  if (m2m_result_kind_get(est) == M2M_RESULT_MATRIX) {
    std::cout << "attribute";
    for (size_t j = 0; j < cols; ++j) std::cout << ",x" << j + 1;
    std::cout << "\n";
    double frob = 0.0;
    for (size_t i = 0; i < rows; ++i) {
      std::cout << m2m_result_label(est, i);
      for (size_t j = 0; j < cols; ++j) {
        std::cout << "," << num(m2m_result_value(est, i, j));
        if (truth) frob += std::pow(m2m_result_value(est, i, j) - m2m_result_value(truth, i, j), 2);
      }
      std::cout << "\n";
    }
    if (truth) std::cerr << "frobenius distance to truth: " << num(std::sqrt(frob)) << "\n";
    return;
  }
  std::cout << (truth ? "target,estimate,truth,mre,mae\n" : "target,estimate\n");
  std::vector<double> e(rows), t(rows);
  for (size_t i = 0; i < rows; ++i) {
    e[i] = est_scale * m2m_result_value(est, i, 0);
    std::cout << csv_field(m2m_result_label(est, i)) << "," << num(e[i]);
    if (truth) {
      t[i] = truth_scale * m2m_result_value(truth, i, 0);
      double rel = std::nan("");
      if (t[i] != 0.0) check(m2m_metric_mre(e[i], t[i], &rel));
      std::cout << "," << num(t[i]) << "," << num(rel) << "," << num(std::abs(e[i] - t[i]));
    }
    std::cout << "\n";
  }
  if (truth && rows > 1) {
    double total = 0.0;
    check(m2m_metric_mae(e.data(), t.data(), rows, &total));
    std::cerr << "mae over " << rows << " points: " << num(total) << "\n";
  }
}

int run_estimate(const std::string& sketch_path, const std::string& query, const Settings& s,
                 const std::string& truth_path, bool raw_count = false) {
  Sketch sk;
  check(m2m_sketch_load(sketch_path.c_str(), sk.out()));
  Estimator est;
  check(m2m_estimator_create(sk.get(), s.text().c_str(), est.out()));
  std::cerr << "lambda = " << num(m2m_estimator_lambda(est.get())) << "\n";
  Result r;
  check(m2m_estimate(est.get(), query.c_str(), r.out()));
  Result truth;
  Dataset data;
  if (!truth_path.empty()) {
    check(m2m_dataset_read_csv(truth_path.c_str(), data.out()));
    check(m2m_truth(est.get(), data.get(), query.c_str(), truth.out()));
  }
  double est_scale = 1.0, truth_scale = 1.0;
  if (raw_count) {
    if (!is_count_query(query)) throw Failure{2, "--raw-count applies to count queries only"};
    est_scale = sketch_count_scale(sk.get());
    if (data.get()) truth_scale = static_cast<double>(m2m_dataset_rows(data.get()));
  }
  print_result(r.get(), truth.get(), est_scale, truth_scale);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Private dataset sketches and statistics learned from them"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  // sketch
  Settings sketch_settings;
  std::string sketch_in, sketch_out, schema_path, created_flag;
  bool normalize = false, binary_last = false;
  auto* sketch = app.add_subcommand("sketch", "Build a private sketch of a CSV dataset");
  sketch->add_option("input", sketch_in, "CSV file with a header row")->required();
  sketch->add_option("-o,--output", sketch_out, "Sketch JSON to write")->required();
  sketch->add_option("--config", sketch_settings.config_file, "key = value settings file (flags win)");
  flag<std::string>(sketch, sketch_settings, "--map", "map", "hist, rff or race");
  flag<std::size_t>(sketch, sketch_settings, "--m", "m", "RFF output dimension");
  flag<double>(sketch, sketch_settings, "--sigma", "sigma", "RFF kernel bandwidth");
  flag<std::size_t>(sketch, sketch_settings, "--n-bins", "n_bins", "HIST bins per attribute");
  flag<std::size_t>(sketch, sketch_settings, "--repetitions", "repetitions", "RACE hash repetitions R");
  flag<std::size_t>(sketch, sketch_settings, "--buckets", "buckets", "RACE buckets per hash W");
  flag<double>(sketch, sketch_settings, "--width", "width", "RACE bin width");
  flag<std::string>(sketch, sketch_settings, "--epsilon", "epsilon", "Privacy budget (inf = no noise)");
  flag<double>(sketch, sketch_settings, "--split", "split", "Share of epsilon spent on the feature sum");
  flag<std::uint64_t>(sketch, sketch_settings, "--seed", "seed", "Base seed (default $M2M_SEED or 0)");
  sketch->add_option("--schema", schema_path, "Domain sidecar: lower, upper, kinds");
  sketch->add_flag("--normalize", normalize,
                   "Min-max normalize to [0,1] first; the constants are stored in the sketch and are not private");
  sketch->add_flag("--binary-last", binary_last, "Last column is a binary label");
  sketch->add_option("--created-at", created_flag, "Timestamp recorded in the file (default $SOURCE_DATE_EPOCH)");

  // estimate / cdf / cov
  Settings est_settings;
  std::string est_sketch, est_query, est_truth;
  auto* estimate = app.add_subcommand("estimate", "Estimate one target from a sketch");
  estimate->add_option("sketch", est_sketch)->required();
  estimate->add_option("target", est_query, "moment j k | count \"x1<=0.5 and ...\" | cdf j | cov")->required();
  estimate->add_option("--truth", est_truth, "Raw CSV to compare against");
  bool raw_count = false;
  estimate->add_flag("--raw-count", raw_count, "Report count queries as record counts instead of fractions");
  add_train_flags(estimate, est_settings);

  std::size_t cdf_attr = 0;
  auto* cdf = app.add_subcommand("cdf", "CDF of one attribute at 10 thresholds");
  cdf->add_option("sketch", est_sketch)->required();
  cdf->add_option("attribute", cdf_attr, "1-based attribute index")->required();
  cdf->add_option("--truth", est_truth, "Raw CSV to compare against");
  add_train_flags(cdf, est_settings);

  auto* cov = app.add_subcommand("cov", "Covariance matrix");
  cov->add_option("sketch", est_sketch)->required();
  cov->add_option("--truth", est_truth, "Raw CSV to compare against");
  add_train_flags(cov, est_settings);

  std::string batch_file;
  auto* batch = app.add_subcommand("query-batch", "Answer one target per line of a file");
  batch->add_option("sketch", est_sketch)->required();
  batch->add_option("queries", batch_file, "Text file, one target per line ('#' comments)")->required();
  batch->add_option("--truth", est_truth, "Raw CSV to compare against");
  batch->add_flag("--raw-count", raw_count, "Report count queries as record counts instead of fractions");
  add_train_flags(batch, est_settings);

  // fit-logreg
  Settings lr_settings;
  std::string lr_sketch, lr_test, lr_out;
  auto* logreg = app.add_subcommand("fit-logreg", "Logistic regression trained from a sketch");
  logreg->add_option("sketch", lr_sketch)->required();
  logreg->add_option("test", lr_test, "Held-out CSV with the label in the last column")->required();
  logreg->add_option("-o,--output", lr_out, "Model JSON to write");
  add_train_flags(logreg, lr_settings);
  flag<double>(logreg, lr_settings, "--step", "gd.step", "Gradient step");
  flag<std::size_t>(logreg, lr_settings, "--iterations", "gd.iterations", "Gradient steps per restart");
  flag<std::size_t>(logreg, lr_settings, "--restarts", "gd.restarts", "Seeded restarts");

  // inspect / merge / schema
  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Print sketch metadata");
  inspect->add_option("sketch", inspect_path)->required();

  std::string merge_a, merge_b, merge_out;
  auto* merge = app.add_subcommand("merge", "Combine sketches of two disjoint datasets");
  merge->add_option("a", merge_a)->required();
  merge->add_option("b", merge_b)->required();
  merge->add_option("-o,--output", merge_out)->required();
  merge->add_option("--created-at", created_flag, "Timestamp recorded in the file");

  app.add_subcommand("schema", "Print the JSON schema of sketch files");

  // eval
  std::string plan_path, eval_out;
  bool quick = false;
  auto* eval = app.add_subcommand("eval", "Run an experiment plan");
  eval->add_option("--plan", plan_path, "key = value plan file (defaults when omitted)");
  eval->add_option("--out", eval_out, "Output directory")->required();
  eval->add_flag("--quick", quick, "Smaller synthetic design and 10 repetitions");

  // generate
  std::string gen_kind, gen_out;
  std::size_t gen_n = 27000, gen_d = 10;
  double gen_margin = 40.0;
  std::uint64_t gen_seed = 0;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  generate->add_option("kind", gen_kind, "random10 or separable")->required()->check(
      CLI::IsMember({"random10", "separable"}));
  generate->add_option("-o,--output", gen_out)->required();
  generate->add_option("--n", gen_n, "Rows");
  generate->add_option("--d", gen_d, "Columns (label included for separable)");
  generate->add_option("--margin", gen_margin, "Label sharpness (inf = deterministic)");
  generate->add_option("--seed", gen_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  m2m_set_threads(threads);
  try {
    if (*sketch) {
      Dataset data;
      check(m2m_dataset_read_csv(sketch_in.c_str(), data.out()));
      const std::string config = sketch_settings.text();
      std::string schema;
      if (!schema_path.empty()) schema = slurp(schema_path);
      m2m_sketch_options opt{config.c_str(), schema_path.empty() ? nullptr : schema.c_str(), normalize ? 1 : 0,
                             binary_last ? 1 : 0};
      Sketch sk;
      check(m2m_sketch_create(data.get(), &opt, sk.out()));
      const auto stamp = created_at(created_flag);
      check(m2m_sketch_save(sk.get(), sketch_out.c_str(), stamp ? stamp->c_str() : nullptr));
      m2m_sketch_info info;
      check(m2m_sketch_info_get(sk.get(), &info));
      std::cout << "spec_id,variant,m,sensitivity_l1,sum_noise_scale,count_noise_scale,noisy_count\n"
                << info.spec_id << "," << info.variant << "," << info.m << "," << num(info.sensitivity_l1) << ","
                << num(info.sum_noise_scale) << "," << num(info.count_noise_scale) << ","
                << num(info.noisy_count) << "\n";
      if (normalize) {
        std::cerr << "warning: normalization constants come from the data and are stored without noise\n";
      }
      return 0;
    }
    if (*estimate) return run_estimate(est_sketch, est_query, est_settings, est_truth, raw_count);
    if (*cdf) return run_estimate(est_sketch, "cdf " + std::to_string(cdf_attr), est_settings, est_truth);
    if (*cov) return run_estimate(est_sketch, "cov", est_settings, est_truth);
    if (*batch) {
      Sketch sk;
      check(m2m_sketch_load(est_sketch.c_str(), sk.out()));
      Estimator est;
      check(m2m_estimator_create(sk.get(), est_settings.text().c_str(), est.out()));
      Dataset data;
      if (!est_truth.empty()) check(m2m_dataset_read_csv(est_truth.c_str(), data.out()));
      std::istringstream lines(slurp(batch_file));
      std::string line;
      std::cout << (data.get() ? "target,estimate,truth,mre,mae\n" : "target,estimate\n");
      std::vector<double> e, t;
      while (std::getline(lines, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Result r;
        check(m2m_estimate(est.get(), line.c_str(), r.out()));
        if (m2m_result_kind_get(r.get()) != M2M_RESULT_SINGLE) {
          throw Failure{2, "query-batch takes single-valued targets (moment or count): '" + line + "'"};
        }
        const bool as_count = raw_count && is_count_query(line);
        e.push_back((as_count ? sketch_count_scale(sk.get()) : 1.0) * m2m_result_value(r.get(), 0, 0));
        std::cout << csv_field(m2m_result_label(r.get(), 0)) << "," << num(e.back());
        if (data.get()) {
          Result tr;
          check(m2m_truth(est.get(), data.get(), line.c_str(), tr.out()));
          const double rows = static_cast<double>(m2m_dataset_rows(data.get()));
          t.push_back((as_count ? rows : 1.0) * m2m_result_value(tr.get(), 0, 0));
          double rel = std::nan("");
          if (t.back() != 0.0) check(m2m_metric_mre(e.back(), t.back(), &rel));
          std::cout << "," << num(t.back()) << "," << num(rel) << "," << num(std::abs(e.back() - t.back()));
        }
        std::cout << "\n";
      }
      if (!t.empty()) {
        double total = 0.0;
        check(m2m_metric_mae(e.data(), t.data(), t.size(), &total));
        std::cerr << "mae over " << t.size() << " queries: " << num(total) << "\n";
      }
      return 0;
    }
    if (*logreg) {
      Sketch sk;
      check(m2m_sketch_load(lr_sketch.c_str(), sk.out()));
      Dataset raw, test;
      check(m2m_dataset_read_csv(lr_test.c_str(), raw.out()));
      check(m2m_sketch_normalize_dataset(sk.get(), raw.get(), test.out()));
      Logreg model;
      check(m2m_logreg_fit(sk.get(), lr_settings.text().c_str(), model.out()));
      for (size_t i = 0; i < m2m_logreg_warning_count(model.get()); ++i) {
        std::cerr << "warning: " << m2m_logreg_warning(model.get(), i) << "\n";
      }
      double auc = 0.0;
      check(m2m_logreg_auc(model.get(), test.get(), &auc));
      if (!lr_out.empty()) {
        OwnedString json;
        check(m2m_logreg_to_json(model.get(), &json.p));
        std::ofstream out(lr_out + ".tmp", std::ios::binary);
        out << json.p;
        out.close();
        if (!out || std::rename((lr_out + ".tmp").c_str(), lr_out.c_str()) != 0) {
          throw Failure{1, "cannot write '" + lr_out + "'"};
        }
      }
      std::cout << "auc\n" << num(auc) << "\n";
      return 0;
    }
    if (*inspect) {
      Sketch sk;
      check(m2m_sketch_load(inspect_path.c_str(), sk.out()));
      m2m_sketch_info info;
      check(m2m_sketch_info_get(sk.get(), &info));
      std::cout << "key,value\n"
                << "spec_id," << info.spec_id << "\n"
                << "variant," << info.variant << "\n"
                << "d," << info.d << "\n"
                << "m," << info.m << "\n"
                << "sensitivity_l1," << num(info.sensitivity_l1) << "\n"
                << "epsilon_num," << num(info.epsilon_num) << "\n"
                << "epsilon_den," << num(info.epsilon_den) << "\n"
                << "sum_noise_scale," << num(info.sum_noise_scale) << "\n"
                << "count_noise_scale," << num(info.count_noise_scale) << "\n"
                << "noisy_count," << num(info.noisy_count) << "\n"
                << "parents," << info.parents << "\n"
                << "normalized," << (info.normalized ? "true" : "false") << "\n";
      return 0;
    }
    if (*merge) {
      Sketch a, b, out;
      check(m2m_sketch_load(merge_a.c_str(), a.out()));
      check(m2m_sketch_load(merge_b.c_str(), b.out()));
      check(m2m_sketch_merge(a.get(), b.get(), out.out()));
      const auto stamp = created_at(created_flag);
      check(m2m_sketch_save(out.get(), merge_out.c_str(), stamp ? stamp->c_str() : nullptr));
      return 0;
    }
    if (app.got_subcommand("schema")) {
      std::cout << m2m_sketch_schema();
      return 0;
    }
    if (*eval) {
      const std::string plan = plan_path.empty() ? std::string() : slurp(plan_path);
      m2m_eval_summary summary{};
      auto progress = [](const char* msg, void*) { std::cerr << msg << "\n"; };
      check(m2m_eval_run(plan.c_str(), eval_out.c_str(), quick ? 1 : 0, progress, nullptr, &summary));
      std::cerr << summary.jobs_run << " jobs run, " << summary.jobs_resumed << " resumed\n";
      return 0;
    }
    if (*generate) {
      Dataset data;
      if (gen_kind == "random10") {
        check(m2m_dataset_gen_random10(gen_n, gen_d, gen_seed, data.out()));
      } else {
        check(m2m_dataset_gen_separable(gen_n, gen_d, gen_margin, gen_seed, data.out()));
      }
      check(m2m_dataset_write_csv(data.get(), gen_out.c_str()));
      return 0;
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
