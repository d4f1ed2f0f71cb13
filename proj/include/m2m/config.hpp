#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "m2m/domain.hpp"
#include "m2m/estimator.hpp"
#include "m2m/feature_map.hpp"

namespace m2m {

/// key = value pairs, one per line; '#' starts a comment. Later keys win.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_keyfile(const std::string& text);
KeyValues load_keyfile(const std::string& path);

/// Throws ValidationError listing the first key not in `allowed`.
void check_keys(const KeyValues& kv, const std::vector<std::string_view>& allowed, std::string_view context);

double parse_double(std::string_view text, std::string_view key);
std::uint64_t parse_u64(std::string_view text, std::string_view key);
bool parse_bool(std::string_view text, std::string_view key);
/// Comma separated; "inf" is accepted wherever a number is.
std::vector<double> parse_double_list(std::string_view text, std::string_view key);
std::vector<std::string> split_list(std::string_view text);

/// Feature map family and its parameters, without a domain.
struct MapConfig {
  MapKind kind = MapKind::Rff;
  std::size_t m = 200;             // RFF output dimension
  double sigma = 1.0;              // RFF bandwidth
  std::size_t n_bins = 100;        // HIST
  std::size_t repetitions = 80;    // RACE R
  std::size_t buckets = 80;        // RACE W
  double width = 0.1;              // RACE bin width
};

FeatureMap build_map(const MapConfig& config, const Domain& domain, std::uint64_t seed);

/// Parameter ranges of the selected family. Throws ValidationError.
void validate(const MapConfig& config);

/// Settings shared by the sketching and estimation commands. Derived seeds
/// keep the map, the noise and the synthetic samples independent.
struct RunConfig {
  MapConfig map;
  double epsilon = 1.0;
  double split = kDefaultSplitNum;
  TrainConfig train;
  std::uint64_t seed = 0;

  std::uint64_t map_seed() const;
  std::uint64_t noise_seed() const;
};

/// Keys: map, m, sigma, n_bins, repetitions, buckets, width, epsilon, split,
/// n_synth, extra_reg, seed. Unknown keys are rejected.
RunConfig run_config_from(const KeyValues& kv);
const std::vector<std::string_view>& run_config_keys();

}  // namespace m2m
