#include "m2m/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "m2m/dp_sketch.hpp"
#include "m2m/error.hpp"
#include "m2m/estimator.hpp"
#include "m2m/feature_map.hpp"
#include "m2m/implicit.hpp"

namespace m2m {
namespace {

using nlohmann::json;

json domain_json(const Domain& domain) {
  json kinds = json::array();
  for (auto k : domain.kinds()) kinds.push_back(to_string(k));
  return {{"lower", domain.lower()}, {"upper", domain.upper()}, {"kinds", kinds}};
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json spec_json(const FeatureMap& map) {
  json params;
  json matrices = json::object();
  switch (map.kind()) {
    case MapKind::Hist:
      params = {{"n_bins", map.n_bins()}};
      break;
    case MapKind::Rff:
      params = {{"sigma", map.sigma()}};
      matrices["frequencies"] = matrix_json(map.frequencies());
      break;
    case MapKind::Race: {
      params = {{"repetitions", map.repetitions()}, {"buckets", map.buckets()}, {"width", map.bin_width()}};
      matrices["projections"] = matrix_json(map.projections());
      std::vector<double> offsets(map.offsets().data(), map.offsets().data() + map.offsets().size());
      matrices["offsets"] = offsets;
      break;
    }
  }
  return {{"version", kFormatVersion}, {"variant", to_string(map.kind())}, {"d", map.input_dim()},
          {"m", map.dim()},            {"seed", map.seed()},                {"domain", domain_json(map.domain())},
          {"params", params},          {"matrices", matrices}};
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

json parse(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed ") + what + " JSON: " + e.what());
  }
}

void check_version(const json& j, const char* what) {
  if (!j.contains("version")) {
    throw ValidationError(std::string(what) + " has no version field");
  }
  const int v = j.at("version").get<int>();
  if (v > kFormatVersion) {
    throw ValidationError(std::string(what) + " format version " + std::to_string(v) +
                          " is newer than the supported version " + std::to_string(kFormatVersion));
  }
  if (v < 1) {
    throw ValidationError(std::string(what) + " has invalid version " + std::to_string(v));
  }
}

Eigen::MatrixXd matrix_from_json(const json& j, std::size_t rows, std::size_t cols, const char* name) {
  if (!j.is_array() || j.size() != rows) {
    throw ValidationError(std::string("matrix '") + name + "' must have " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    const json& row = j[i];
    if (!row.is_array() || row.size() != cols) {
      throw ValidationError(std::string("matrix '") + name + "' row " + std::to_string(i) + " must have " +
                            std::to_string(cols) + " entries");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c].get<double>();
    }
  }
  return m;
}

json epsilon_json(double eps) {
  if (std::isinf(eps)) return "inf";
  return eps;
}

double epsilon_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw ValidationError("epsilon must be a number or \"inf\"");
  }
  return j.get<double>();
}

FeatureMap map_from(const json& j) {
  check_version(j, "feature map");
  const MapKind kind = map_kind_from_string(j.at("variant").get<std::string>());
  const json& dj = j.at("domain");
  std::vector<AttributeKind> kinds;
  for (const auto& k : dj.at("kinds")) kinds.push_back(attribute_kind_from_string(k.get<std::string>()));
  Domain domain(dj.at("lower").get<std::vector<double>>(), dj.at("upper").get<std::vector<double>>(),
                std::move(kinds));
  const auto d = j.at("d").get<std::size_t>();
  if (d != domain.dim()) {
    throw ValidationError("feature map d does not match its domain");
  }
  const auto seed = j.at("seed").get<std::uint64_t>();
  const json& params = j.at("params");
  const json& matrices = j.at("matrices");
  const auto m = j.at("m").get<std::size_t>();
  FeatureMap map = [&] {
    switch (kind) {
      case MapKind::Hist:
        return FeatureMap::hist(domain, params.at("n_bins").get<std::size_t>());
      case MapKind::Rff: {
        if (m % 2 != 0) throw ValidationError("RFF m must be even");
        auto freq = matrix_from_json(matrices.at("frequencies"), d, m / 2, "frequencies");
        return FeatureMap::rff_from_frequencies(domain, std::move(freq), params.at("sigma").get<double>(), seed);
      }
      case MapKind::Race: {
        const auto r = params.at("repetitions").get<std::size_t>();
        auto proj = matrix_from_json(matrices.at("projections"), r, d, "projections");
        const auto off = matrices.at("offsets").get<std::vector<double>>();
        if (off.size() != r) throw ValidationError("RACE offsets must have one entry per repetition");
        Eigen::VectorXd offsets = Eigen::Map<const Eigen::VectorXd>(off.data(), static_cast<Eigen::Index>(r));
        return FeatureMap::race_from_hashes(domain, params.at("buckets").get<std::size_t>(),
                                            params.at("width").get<double>(), std::move(proj), std::move(offsets),
                                            seed);
      }
    }
    throw ValidationError("unknown feature map variant");
  }();
  if (map.dim() != m) {
    throw ValidationError("feature map m = " + std::to_string(m) + " does not match its parameters (" +
                          std::to_string(map.dim()) + ")");
  }
  return map;
}

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid ") + what + ": " + e.what());
  }
}

json gd_json(const GdConfig& c) {
  return {{"step", c.step},
          {"iterations", c.iterations},
          {"tolerance", c.tolerance},
          {"divergence_window", c.divergence_window},
          {"restarts", c.restarts},
          {"seed", c.seed}};
}

}  // namespace

std::string fingerprint(const FeatureMap& map) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(spec_json(map).dump())));
  return buf;
}

std::string to_json(const FeatureMap& map) { return spec_json(map).dump(2) + "\n"; }

FeatureMap feature_map_from_json(const std::string& text) {
  const json j = parse(text, "feature map");
  return guarded("feature map", [&] { return map_from(j); });
}

std::string to_json(const PrivateSketch& sketch, const std::optional<std::string>& created_at) {
  json j = {{"version", kFormatVersion},
            {"spec", spec_json(sketch.map())},
            {"spec_id", sketch.spec_id()},
            {"noisy_sum", sketch.noisy_sum()},
            {"noisy_count", sketch.noisy_count()},
            {"epsilon_num", epsilon_json(sketch.epsilon_num())},
            {"epsilon_den", epsilon_json(sketch.epsilon_den())},
            {"parents", sketch.parents}};
  if (sketch.noise_seed) j["rng_seed_of_noise"] = *sketch.noise_seed;
  if (sketch.normalization) {
    j["normalization"] = {{"min", sketch.normalization->min}, {"max", sketch.normalization->max}};
  }
  j["created_at"] = created_at ? json(*created_at) : json(nullptr);
  return j.dump(2) + "\n";
}

PrivateSketch sketch_from_json(const std::string& text) {
  const json j = parse(text, "sketch");
  return guarded("sketch", [&] {
    check_version(j, "sketch");
    auto map = std::make_shared<const FeatureMap>(map_from(j.at("spec")));
    if (j.contains("spec_id") && j.at("spec_id").get<std::string>() != map->id()) {
      throw ValidationError("sketch spec_id " + j.at("spec_id").get<std::string>() +
                            " does not match its embedded feature map (" + map->id() + ")");
    }
    for (const auto& v : j.at("noisy_sum")) {
      if (!v.is_number()) throw ValidationError("noisy_sum entries must be numbers");
    }
    if (!j.at("noisy_count").is_number()) throw ValidationError("noisy_count must be a number");
    PrivateSketch s(map, j.at("noisy_sum").get<std::vector<double>>(), j.at("noisy_count").get<double>(),
                    epsilon_from_json(j.at("epsilon_num")), epsilon_from_json(j.at("epsilon_den")));
    if (j.contains("parents")) s.parents = j.at("parents").get<unsigned>();
    if (j.contains("rng_seed_of_noise") && !j.at("rng_seed_of_noise").is_null()) {
      s.noise_seed = j.at("rng_seed_of_noise").get<std::uint64_t>();
    }
    if (j.contains("normalization") && !j.at("normalization").is_null()) {
      Normalization norm{j.at("normalization").at("min").get<std::vector<double>>(),
                         j.at("normalization").at("max").get<std::vector<double>>()};
      if (norm.min.size() != map->input_dim() || norm.max.size() != map->input_dim()) {
        throw ValidationError("normalization must have one entry per attribute");
      }
      s.normalization = std::move(norm);
    }
    return s;
  });
}

std::string to_json(const Model& model) {
  const json j = {
      {"version", kFormatVersion},
      {"spec_id", model.spec_id},
      {"lambda", model.lambda},
      {"a", std::vector<double>(model.a.data(), model.a.data() + model.a.size())},
      {"diagnostics",
       {{"train_loss", model.diagnostics.train_loss},
        {"objective", model.diagnostics.objective},
        {"residual_norm", model.diagnostics.residual_norm},
        {"condition_estimate", model.diagnostics.condition_estimate},
        {"solver", model.diagnostics.solver},
        {"warnings", model.diagnostics.warnings}}}};
  return j.dump(2) + "\n";
}

std::string to_json(const LogisticModel& model) {
  const json j = {{"version", kFormatVersion},
                  {"spec_id", model.spec_id},
                  {"theta", std::vector<double>(model.theta.data(), model.theta.data() + model.theta.size())},
                  {"intercept", model.intercept},
                  {"objective", model.objective},
                  {"lambda", model.lambda},
                  {"iterations", model.iterations},
                  {"converged", model.converged},
                  {"restarts", model.restarts},
                  {"warnings", model.warnings},
                  {"config", gd_json(model.config)}};
  return j.dump(2) + "\n";
}

LogisticModel logistic_model_from_json(const std::string& text) {
  const json j = parse(text, "model");
  return guarded("model", [&] {
    check_version(j, "model");
    LogisticModel m;
    const auto theta = j.at("theta").get<std::vector<double>>();
    m.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    m.intercept = j.at("intercept").get<double>();
    m.objective = j.value("objective", 0.0);
    m.lambda = j.value("lambda", 0.0);
    m.iterations = j.value("iterations", std::size_t{0});
    m.converged = j.value("converged", false);
    m.restarts = j.value("restarts", std::size_t{0});
    m.spec_id = j.value("spec_id", std::string{});
    m.warnings = j.value("warnings", std::vector<std::string>{});
    if (j.contains("config")) {
      const json& c = j.at("config");
      m.config.step = c.value("step", m.config.step);
      m.config.iterations = c.value("iterations", m.config.iterations);
      m.config.tolerance = c.value("tolerance", m.config.tolerance);
      m.config.divergence_window = c.value("divergence_window", m.config.divergence_window);
      m.config.restarts = c.value("restarts", m.config.restarts);
      m.config.seed = c.value("seed", m.config.seed);
    }
    return m;
  });
}

void save_sketch(const PrivateSketch& sketch, const std::string& path, const std::optional<std::string>& created_at) {
  write_file_atomic(path, to_json(sketch, created_at));
}

PrivateSketch load_sketch(const std::string& path) { return sketch_from_json(read_file(path)); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "' for reading");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) {
    throw IoError("failed reading '" + path + "'");
  }
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open '" + tmp + "' for writing");
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      throw IoError("failed writing '" + tmp + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move '" + tmp + "' to '" + path + "'");
  }
}

}  // namespace m2m
