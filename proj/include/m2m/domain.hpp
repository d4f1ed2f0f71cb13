#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace m2m {

enum class AttributeKind { Continuous, Binary };

std::string to_string(AttributeKind kind);
AttributeKind attribute_kind_from_string(const std::string& name);

/// Axis-aligned box bounding every record, chosen before looking at the data.
/// Binary attributes are pinned to {0, 1}.
class Domain {
 public:
  Domain() = default;
  Domain(std::vector<double> lower, std::vector<double> upper, std::vector<AttributeKind> kinds);

  /// [0,1]^d with every attribute continuous.
  static Domain unit_box(std::size_t d);
  /// [0,1]^(d-1) x {0,1}: continuous features followed by a binary label.
  static Domain unit_box_with_label(std::size_t d);

  std::size_t dim() const noexcept { return lower_.size(); }
  const std::vector<double>& lower() const noexcept { return lower_; }
  const std::vector<double>& upper() const noexcept { return upper_; }
  const std::vector<AttributeKind>& kinds() const noexcept { return kinds_; }
  bool is_binary(std::size_t j) const { return kinds_.at(j) == AttributeKind::Binary; }

  bool contains(std::span<const double> x) const;

  /// Throws ValidationError naming the offending attribute (and row, if given).
  void check_point(std::span<const double> x, long row = -1) const;

  bool operator==(const Domain&) const = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<AttributeKind> kinds_;
};

}  // namespace m2m
