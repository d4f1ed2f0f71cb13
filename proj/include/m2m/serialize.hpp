#pragma once

#include <optional>
#include <string>

namespace m2m {

class FeatureMap;
class PrivateSketch;
struct Model;
struct LogisticModel;

/// Format version written by this build; newer files are rejected.
inline constexpr int kFormatVersion = 1;

/// 16 hex digits of FNV-1a-64 over the compact canonical JSON of the map.
std::string fingerprint(const FeatureMap& map);

std::string to_json(const FeatureMap& map);
FeatureMap feature_map_from_json(const std::string& text);

/// created_at is written as null when absent so equal inputs give equal bytes.
std::string to_json(const PrivateSketch& sketch, const std::optional<std::string>& created_at = std::nullopt);
PrivateSketch sketch_from_json(const std::string& text);

std::string to_json(const Model& model);
std::string to_json(const LogisticModel& model);
LogisticModel logistic_model_from_json(const std::string& text);

void save_sketch(const PrivateSketch& sketch, const std::string& path,
                 const std::optional<std::string>& created_at = std::nullopt);
PrivateSketch load_sketch(const std::string& path);

std::string read_file(const std::string& path);
/// Writes to path.tmp and renames, so readers never see a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace m2m
