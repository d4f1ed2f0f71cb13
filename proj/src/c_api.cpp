#include "m2m/m2m.h"

#include <algorithm>
#include <cstring>
#include <memory>
#include <optional>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "m2m/config.hpp"
#include "m2m/dataset.hpp"
#include "m2m/dp_sketch.hpp"
#include "m2m/error.hpp"
#include "m2m/estimator.hpp"
#include "m2m/eval.hpp"
#include "m2m/implicit.hpp"
#include "m2m/metrics.hpp"
#include "m2m/parallel.hpp"
#include "m2m/rng.hpp"
#include "m2m/serialize.hpp"
#include "m2m/target.hpp"
#include "m2m/tasks.hpp"

struct m2m_dataset {
  m2m::Dataset data;
};

struct m2m_sketch {
  m2m::PrivateSketch sketch;
};

struct m2m_estimator {
  m2m::SketchEstimator est;
};

struct m2m_result {
  m2m_result_kind kind = M2M_RESULT_SINGLE;
  std::vector<std::string> labels;
  std::size_t cols = 1;
  std::vector<double> values;  // rows x cols
};

struct m2m_logreg {
  m2m::LogisticModel model;
};

namespace {

thread_local std::string t_last_error;

template <class F>
m2m_status guard(F&& f) {
  try {
    f();
    t_last_error.clear();
    return M2M_OK;
  } catch (const m2m::Error& e) {
    t_last_error = e.what();
    switch (e.kind()) {
      case m2m::ErrorKind::Io:
        return M2M_ERR_IO;
      case m2m::ErrorKind::Validation:
        return M2M_ERR_VALIDATION;
      case m2m::ErrorKind::Numeric:
        return M2M_ERR_NUMERIC;
    }
    return M2M_ERR_INTERNAL;
  } catch (const std::bad_alloc&) {
    t_last_error = "out of memory";
    return M2M_ERR_INTERNAL;
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return M2M_ERR_INTERNAL;
  } catch (...) {
    t_last_error = "unknown error";
    return M2M_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw m2m::ValidationError(std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

m2m::KeyValues keys(const char* text) { return text ? m2m::parse_keyfile(text) : m2m::KeyValues{}; }

m2m::Domain domain_from_schema(const m2m::KeyValues& kv, std::size_t d) {
  m2m::check_keys(kv, {"lower", "upper", "kinds"}, "schema");
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw m2m::ValidationError(std::string("schema is missing '") + key + "'");
    return it->second;
  };
  const auto lower = m2m::parse_double_list(need("lower"), "lower");
  const auto upper = m2m::parse_double_list(need("upper"), "upper");
  std::vector<m2m::AttributeKind> kinds(lower.size(), m2m::AttributeKind::Continuous);
  if (auto it = kv.find("kinds"); it != kv.end()) {
    kinds.clear();
    for (const auto& k : m2m::split_list(it->second)) kinds.push_back(m2m::attribute_kind_from_string(k));
  }
  m2m::Domain domain(lower, upper, kinds);
  if (domain.dim() != d) {
    throw m2m::ValidationError("schema declares " + std::to_string(domain.dim()) + " columns, data has " +
                               std::to_string(d));
  }
  return domain;
}

m2m::TrainConfig train_config(const char* config, const std::vector<std::string_view>& extra = {}) {
  auto kv = keys(config);
  m2m::KeyValues run;
  for (auto& [k, v] : kv) {
    if (std::find(extra.begin(), extra.end(), k) == extra.end()) run[k] = v;
  }
  return m2m::run_config_from(run).train;
}

std::string label_for(const m2m::Query& q) {
  std::string t = q.text;
  while (!t.empty() && (t.back() == ' ' || t.back() == '\t')) t.pop_back();
  return t;
}

bool is_probability(const m2m::TargetSpec& t) {
  return std::holds_alternative<m2m::target::BoxIndicator>(t) || std::holds_alternative<m2m::target::CdfThreshold>(t);
}

std::string threshold_label(std::size_t attr, double t) {
  return "x" + std::to_string(attr + 1) + "<=" + m2m::format_double(t);
}

const char* kSketchSchema = R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "private sketch",
  "type": "object",
  "required": ["version", "spec", "spec_id", "noisy_sum", "noisy_count", "epsilon_num", "epsilon_den", "created_at"],
  "properties": {
    "version": {"type": "integer", "minimum": 1, "maximum": 1},
    "spec": {
      "type": "object",
      "required": ["version", "variant", "d", "m", "seed", "domain", "params", "matrices"],
      "properties": {
        "version": {"type": "integer", "minimum": 1, "maximum": 1},
        "variant": {"type": "string", "enum": ["hist", "rff", "race"]},
        "d": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "domain": {
          "type": "object",
          "required": ["lower", "upper", "kinds"],
          "properties": {
            "lower": {"type": "array", "items": {"type": "number"}},
            "upper": {"type": "array", "items": {"type": "number"}},
            "kinds": {"type": "array", "items": {"type": "string", "enum": ["continuous", "binary"]}}
          }
        },
        "params": {"type": "object"},
        "matrices": {"type": "object"}
      }
    },
    "spec_id": {"type": "string", "pattern": "^[0-9a-f]{16}$"},
    "noisy_sum": {"type": "array", "items": {"type": "number"}},
    "noisy_count": {"type": "number"},
    "epsilon_num": {"oneOf": [{"type": "number", "minimum": 0}, {"const": "inf"}]},
    "epsilon_den": {"oneOf": [{"type": "number", "minimum": 0}, {"const": "inf"}]},
    "parents": {"type": "integer", "minimum": 1},
    "rng_seed_of_noise": {"type": "integer", "minimum": 0},
    "normalization": {
      "type": "object",
      "required": ["min", "max"],
      "properties": {
        "min": {"type": "array", "items": {"type": "number"}},
        "max": {"type": "array", "items": {"type": "number"}}
      }
    },
    "created_at": {"type": ["string", "null"]}
  }
}
)";

}  // namespace

extern "C" {

const char* m2m_last_error(void) { return t_last_error.c_str(); }
const char* m2m_version(void) { return "1.0.0"; }
void m2m_set_threads(unsigned n) { m2m::set_thread_count(n); }
void m2m_string_free(char* s) { delete[] s; }

m2m_status m2m_dataset_read_csv(const char* path, m2m_dataset** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new m2m_dataset{m2m::read_csv(path)};
  });
}

m2m_status m2m_dataset_write_csv(const m2m_dataset* data, const char* path) {
  return guard([&] {
    require(data, "dataset");
    require(path, "path");
    m2m::write_csv(data->data, path);
  });
}

m2m_status m2m_dataset_gen_random10(size_t n, size_t d, uint64_t seed, m2m_dataset** out) {
  return guard([&] {
    require(out, "out");
    *out = new m2m_dataset{m2m::gen_random10(n, d, seed)};
  });
}

m2m_status m2m_dataset_gen_separable(size_t n, size_t d, double margin, uint64_t seed, m2m_dataset** out) {
  return guard([&] {
    require(out, "out");
    *out = new m2m_dataset{m2m::gen_separable_classification(n, d, margin, seed)};
  });
}

size_t m2m_dataset_rows(const m2m_dataset* data) { return data ? data->data.rows() : 0; }
size_t m2m_dataset_cols(const m2m_dataset* data) { return data ? data->data.cols() : 0; }
double m2m_dataset_get(const m2m_dataset* data, size_t row, size_t col) { return data->data(row, col); }
void m2m_dataset_free(m2m_dataset* data) { delete data; }

m2m_status m2m_sketch_create(const m2m_dataset* data, const m2m_sketch_options* options, m2m_sketch** out) {
  return guard([&] {
    require(data, "dataset");
    require(out, "out");
    const m2m_sketch_options defaults{};
    const m2m_sketch_options& opt = options ? *options : defaults;
    const m2m::RunConfig config = m2m::run_config_from(keys(opt.config));
    const std::size_t d = data->data.cols();
    if (d == 0 || data->data.rows() == 0) throw m2m::ValidationError("dataset is empty");

    m2m::Dataset records = data->data;
    std::optional<m2m::Normalization> norm;
    if (opt.normalize) {
      norm = m2m::fit_normalization(records);
      records = m2m::apply_normalization(records, *norm);
    }
    m2m::Domain domain = opt.schema ? domain_from_schema(keys(opt.schema), d)
                         : opt.binary_last ? m2m::Domain::unit_box_with_label(d)
                                           : m2m::Domain::unit_box(d);
    records.check_in(domain);

    auto map = std::make_shared<const m2m::FeatureMap>(m2m::build_map(config.map, domain, config.map_seed()));
    const auto exact = m2m::sketch_exact(*map, records);
    auto sketch = m2m::privatize(exact, map, config.epsilon, config.split, config.noise_seed());
    sketch.normalization = std::move(norm);
    *out = new m2m_sketch{std::move(sketch)};
  });
}

m2m_status m2m_sketch_load(const char* path, m2m_sketch** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new m2m_sketch{m2m::load_sketch(path)};
  });
}

m2m_status m2m_sketch_save(const m2m_sketch* sketch, const char* path, const char* created_at) {
  return guard([&] {
    require(sketch, "sketch");
    require(path, "path");
    m2m::save_sketch(sketch->sketch, path,
                     created_at ? std::optional<std::string>(created_at) : std::nullopt);
  });
}

m2m_status m2m_sketch_to_json(const m2m_sketch* sketch, const char* created_at, char** out) {
  return guard([&] {
    require(sketch, "sketch");
    require(out, "out");
    *out = dup_string(
        m2m::to_json(sketch->sketch, created_at ? std::optional<std::string>(created_at) : std::nullopt));
  });
}

m2m_status m2m_sketch_merge(const m2m_sketch* a, const m2m_sketch* b, m2m_sketch** out) {
  return guard([&] {
    require(a, "sketch a");
    require(b, "sketch b");
    require(out, "out");
    *out = new m2m_sketch{m2m::merge(a->sketch, b->sketch)};
  });
}

m2m_status m2m_sketch_normalize_dataset(const m2m_sketch* sketch, const m2m_dataset* data, m2m_dataset** out) {
  return guard([&] {
    require(sketch, "sketch");
    require(data, "dataset");
    require(out, "out");
    if (data->data.cols() != sketch->sketch.map().input_dim()) {
      throw m2m::ValidationError("dataset has " + std::to_string(data->data.cols()) + " columns, sketch expects " +
                                 std::to_string(sketch->sketch.map().input_dim()));
    }
    const auto& norm = sketch->sketch.normalization;
    *out = new m2m_dataset{norm ? m2m::apply_normalization(data->data, *norm) : data->data};
  });
}

void m2m_sketch_free(m2m_sketch* sketch) { delete sketch; }

m2m_status m2m_sketch_info_get(const m2m_sketch* sketch, m2m_sketch_info* out) {
  return guard([&] {
    require(sketch, "sketch");
    require(out, "out");
    const auto& s = sketch->sketch;
    static const char* names[] = {"hist", "rff", "race"};
    out->variant = names[static_cast<int>(s.map().kind())];
    out->d = s.map().input_dim();
    out->m = s.map().dim();
    out->sensitivity_l1 = s.map().sensitivity_l1();
    out->epsilon_num = s.epsilon_num();
    out->epsilon_den = s.epsilon_den();
    out->sum_noise_scale = s.sum_noise_scale();
    out->count_noise_scale = s.count_noise_scale();
    out->noisy_count = s.noisy_count();
    out->parents = s.parents;
    out->normalized = s.normalization.has_value() ? 1 : 0;
    std::memset(out->spec_id, 0, sizeof out->spec_id);
    std::strncpy(out->spec_id, s.spec_id().c_str(), sizeof out->spec_id - 1);
  });
}

const char* m2m_sketch_schema(void) { return kSketchSchema; }

m2m_status m2m_estimator_create(const m2m_sketch* sketch, const char* config, m2m_estimator** out) {
  return guard([&] {
    require(sketch, "sketch");
    require(out, "out");
    *out = new m2m_estimator{m2m::SketchEstimator(sketch->sketch, train_config(config))};
  });
}

double m2m_estimator_lambda(const m2m_estimator* est) { return est ? est->est.lambda() : 0.0; }
void m2m_estimator_free(m2m_estimator* est) { delete est; }

m2m_status m2m_estimate(const m2m_estimator* est, const char* query, m2m_result** out) {
  return guard([&] {
    require(est, "estimator");
    require(query, "query");
    require(out, "out");
    const auto& domain = est->est.sketch().map().domain();
    const m2m::Query q = m2m::parse_query(query, domain.dim());
    auto r = std::make_unique<m2m_result>();
    switch (q.kind) {
      case m2m::Query::Kind::Single: {
        m2m::validate(q.target, domain);
        double v = est->est.estimate(m2m::to_function(q.target, domain));
        if (is_probability(q.target)) v = std::clamp(v, 0.0, 1.0);
        r->kind = M2M_RESULT_SINGLE;
        r->labels = {label_for(q)};
        r->values = {v};
        break;
      }
      case m2m::Query::Kind::Cdf: {
        const auto thresholds = m2m::cdf_thresholds(domain, q.attr);
        const auto cdf = m2m::estimate_cdf(est->est, q.attr, thresholds);
        r->kind = M2M_RESULT_CDF;
        for (std::size_t k = 0; k < thresholds.size(); ++k) {
          r->labels.push_back(threshold_label(q.attr, thresholds[k]));
          r->values.push_back(cdf[k].value);
        }
        break;
      }
      case m2m::Query::Kind::Covariance: {
        const auto c = m2m::estimate_covariance(est->est);
        const std::size_t d = domain.dim();
        r->kind = M2M_RESULT_MATRIX;
        r->cols = d;
        for (std::size_t i = 0; i < d; ++i) {
          r->labels.push_back("x" + std::to_string(i + 1));
          for (std::size_t j = 0; j < d; ++j) {
            r->values.push_back(c.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
          }
        }
        break;
      }
    }
    *out = r.release();
  });
}

m2m_status m2m_truth(const m2m_estimator* est, const m2m_dataset* data, const char* query, m2m_result** out) {
  return guard([&] {
    require(est, "estimator");
    require(data, "dataset");
    require(query, "query");
    require(out, "out");
    const auto& sketch = est->est.sketch();
    const auto& domain = sketch.map().domain();
    if (data->data.cols() != domain.dim()) {
      throw m2m::ValidationError("truth data has " + std::to_string(data->data.cols()) + " columns, sketch expects " +
                                 std::to_string(domain.dim()));
    }
    const m2m::Dataset records =
        sketch.normalization ? m2m::apply_normalization(data->data, *sketch.normalization) : data->data;
    records.check_in(domain);
    const m2m::Query q = m2m::parse_query(query, domain.dim());
    auto r = std::make_unique<m2m_result>();
    switch (q.kind) {
      case m2m::Query::Kind::Single:
        m2m::validate(q.target, domain);
        r->kind = M2M_RESULT_SINGLE;
        r->labels = {label_for(q)};
        r->values = {m2m::empirical_mean(records, m2m::to_function(q.target, domain))};
        break;
      case m2m::Query::Kind::Cdf: {
        const auto thresholds = m2m::cdf_thresholds(domain, q.attr);
        r->kind = M2M_RESULT_CDF;
        r->values = m2m::empirical_cdf(records, q.attr, thresholds);
        for (double t : thresholds) r->labels.push_back(threshold_label(q.attr, t));
        break;
      }
      case m2m::Query::Kind::Covariance: {
        const auto c = m2m::empirical_covariance(records);
        const std::size_t d = domain.dim();
        r->kind = M2M_RESULT_MATRIX;
        r->cols = d;
        for (std::size_t i = 0; i < d; ++i) {
          r->labels.push_back("x" + std::to_string(i + 1));
          for (std::size_t j = 0; j < d; ++j) {
            r->values.push_back(c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
          }
        }
        break;
      }
    }
    *out = r.release();
  });
}

m2m_result_kind m2m_result_kind_get(const m2m_result* r) { return r->kind; }
size_t m2m_result_rows(const m2m_result* r) { return r ? r->labels.size() : 0; }
size_t m2m_result_cols(const m2m_result* r) { return r ? r->cols : 0; }
const char* m2m_result_label(const m2m_result* r, size_t row) { return r->labels.at(row).c_str(); }
double m2m_result_value(const m2m_result* r, size_t row, size_t col) { return r->values.at(row * r->cols + col); }
void m2m_result_free(m2m_result* r) { delete r; }

m2m_status m2m_logreg_fit(const m2m_sketch* sketch, const char* config, m2m_logreg** out) {
  return guard([&] {
    require(sketch, "sketch");
    require(out, "out");
    static const std::vector<std::string_view> gd_keys = {"gd.step", "gd.iterations", "gd.restarts"};
    const auto kv = keys(config);
    const m2m::TrainConfig train = train_config(config, gd_keys);
    m2m::GdConfig gd;
    if (auto it = kv.find("gd.step"); it != kv.end()) gd.step = m2m::parse_double(it->second, "gd.step");
    if (auto it = kv.find("gd.iterations"); it != kv.end()) gd.iterations = m2m::parse_u64(it->second, "gd.iterations");
    if (auto it = kv.find("gd.restarts"); it != kv.end()) gd.restarts = m2m::parse_u64(it->second, "gd.restarts");
    gd.seed = m2m::derive_seed(train.seed, 5);
    *out = new m2m_logreg{m2m::fit_logistic_from_sketch(sketch->sketch, train, gd)};
  });
}

size_t m2m_logreg_warning_count(const m2m_logreg* model) { return model ? model->model.warnings.size() : 0; }
const char* m2m_logreg_warning(const m2m_logreg* model, size_t i) { return model->model.warnings.at(i).c_str(); }

m2m_status m2m_logreg_auc(const m2m_logreg* model, const m2m_dataset* test, double* out) {
  return guard([&] {
    require(model, "model");
    require(test, "dataset");
    require(out, "out");
    *out = m2m::logistic_auc(model->model, test->data);
  });
}

m2m_status m2m_logreg_to_json(const m2m_logreg* model, char** out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    *out = dup_string(m2m::to_json(model->model));
  });
}

void m2m_logreg_free(m2m_logreg* model) { delete model; }

m2m_status m2m_metric_mre(double estimate, double truth, double* out) {
  return guard([&] {
    require(out, "out");
    *out = m2m::mre(estimate, truth);
  });
}

m2m_status m2m_metric_mae(const double* estimates, const double* truths, size_t n, double* out) {
  return guard([&] {
    require(out, "out");
    if (n > 0) {
      require(estimates, "estimates");
      require(truths, "truths");
    }
    *out = m2m::mae({estimates, n}, {truths, n});
  });
}

m2m_status m2m_eval_run(const char* plan, const char* out_dir, int quick, m2m_progress_fn progress, void* user,
                        m2m_eval_summary* out) {
  return guard([&] {
    require(out_dir, "out_dir");
    auto kv = keys(plan);
    if (quick && kv.find("quick") == kv.end()) kv["quick"] = "true";
    const m2m::ExperimentPlan p = m2m::plan_from(kv);
    std::function<void(const std::string&)> cb;
    if (progress) cb = [&](const std::string& msg) { progress(msg.c_str(), user); };
    const auto summary = m2m::run_plan(p, out_dir, cb);
    if (out) {
      out->jobs_total = summary.jobs_total;
      out->jobs_run = summary.jobs_run;
      out->jobs_resumed = summary.jobs_resumed;
    }
  });
}

}  // extern "C"
