#include "m2m/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>

#include "m2m/error.hpp"
#include "m2m/rng.hpp"
#include "m2m/serialize.hpp"

namespace m2m {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::size_t parse_size(const KeyValues& kv, const char* key, std::size_t fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : static_cast<std::size_t>(parse_u64(it->second, key));
}

double parse_real(const KeyValues& kv, const char* key, double fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : parse_double(it->second, key);
}

}  // namespace

KeyValues parse_keyfile(const std::string& text) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line(text.data() + pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    }
    out[std::string(key)] = std::string(value);
  }
  return out;
}

KeyValues load_keyfile(const std::string& path) { return parse_keyfile(read_file(path)); }

void check_keys(const KeyValues& kv, const std::vector<std::string_view>& allowed, std::string_view context) {
  for (const auto& [key, value] : kv) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown " + std::string(context) + " key '" + key + "'");
    }
  }
}

double parse_double(std::string_view text, std::string_view key) {
  text = trim(text);
  const std::string l = lower(text);
  if (l == "inf" || l == "+inf" || l == "infinity") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty() || !std::isfinite(v)) {
    throw ValidationError("'" + std::string(key) + "' expects a number, got '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view text, std::string_view key) {
  text = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ValidationError("'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(text) +
                          "'");
  }
  return v;
}

bool parse_bool(std::string_view text, std::string_view key) {
  const std::string l = lower(trim(text));
  if (l == "1" || l == "true" || l == "yes" || l == "on") return true;
  if (l == "0" || l == "false" || l == "no" || l == "off") return false;
  throw ValidationError("'" + std::string(key) + "' expects true or false, got '" + std::string(text) + "'");
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    const auto item = trim(text.substr(pos, end - pos));
    if (!item.empty()) out.emplace_back(item);
    pos = end + 1;
  }
  return out;
}

std::vector<double> parse_double_list(std::string_view text, std::string_view key) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_double(item, key));
  if (out.empty()) {
    throw ValidationError("'" + std::string(key) + "' must list at least one value");
  }
  return out;
}

FeatureMap build_map(const MapConfig& config, const Domain& domain, std::uint64_t seed) {
  switch (config.kind) {
    case MapKind::Hist:
      return FeatureMap::hist(domain, config.n_bins);
    case MapKind::Rff:
      return FeatureMap::rff(domain, config.m, config.sigma, seed);
    case MapKind::Race:
      return FeatureMap::race(domain, config.repetitions, config.buckets, config.width, seed);
  }
  throw ValidationError("unknown feature map");
}

std::uint64_t RunConfig::map_seed() const { return derive_seed(seed, 1); }
std::uint64_t RunConfig::noise_seed() const { return derive_seed(seed, 2); }

const std::vector<std::string_view>& run_config_keys() {
  static const std::vector<std::string_view> keys = {"map",     "m",     "sigma",   "n_bins",    "repetitions",
                                                     "buckets", "width", "epsilon", "split",     "n_synth",
                                                     "extra_reg", "seed"};
  return keys;
}

void validate(const MapConfig& c) {
  if (c.kind == MapKind::Rff && (c.m < 2 || c.m % 2 != 0)) throw ValidationError("m must be a positive even number");
  if (c.kind == MapKind::Rff && !(c.sigma > 0.0 && std::isfinite(c.sigma))) throw ValidationError("sigma must be positive");
  if (c.kind == MapKind::Hist && c.n_bins == 0) throw ValidationError("n_bins must be positive");
  if (c.kind == MapKind::Race && (c.repetitions == 0 || c.buckets == 0)) {
    throw ValidationError("repetitions and buckets must be positive");
  }
  if (c.kind == MapKind::Race && !(c.width > 0.0 && std::isfinite(c.width))) throw ValidationError("width must be positive");
}

RunConfig run_config_from(const KeyValues& kv) {
  check_keys(kv, run_config_keys(), "config");
  RunConfig c;
  if (auto it = kv.find("map"); it != kv.end()) c.map.kind = map_kind_from_string(lower(it->second));
  c.map.m = parse_size(kv, "m", c.map.m);
  c.map.sigma = parse_real(kv, "sigma", c.map.sigma);
  c.map.n_bins = parse_size(kv, "n_bins", c.map.n_bins);
  c.map.repetitions = parse_size(kv, "repetitions", c.map.repetitions);
  c.map.buckets = parse_size(kv, "buckets", c.map.buckets);
  c.map.width = parse_real(kv, "width", c.map.width);
  c.epsilon = parse_real(kv, "epsilon", c.epsilon);
  c.split = parse_real(kv, "split", c.split);
  c.train.n_synth = parse_size(kv, "n_synth", c.train.n_synth);
  c.train.extra_reg = parse_real(kv, "extra_reg", c.train.extra_reg);
  if (auto it = kv.find("seed"); it != kv.end()) c.seed = parse_u64(it->second, "seed");
  c.train.seed = derive_seed(c.seed, 3);
  if (!(c.epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  if (!(c.split > 0.0 && c.split < 1.0)) throw ValidationError("split must lie strictly between 0 and 1");
  if (c.train.n_synth == 0) throw ValidationError("n_synth must be positive");
  if (!(c.train.extra_reg > 0.0)) throw ValidationError("extra_reg must be positive");
  validate(c.map);
  return c;
}

}  // namespace m2m
