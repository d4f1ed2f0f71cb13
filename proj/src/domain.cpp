#include "m2m/domain.hpp"

#include <cmath>
#include <sstream>

#include "m2m/error.hpp"

namespace m2m {

std::string to_string(AttributeKind kind) {
  return kind == AttributeKind::Binary ? "binary" : "continuous";
}

AttributeKind attribute_kind_from_string(const std::string& name) {
  if (name == "continuous") return AttributeKind::Continuous;
  if (name == "binary") return AttributeKind::Binary;
  throw ValidationError("unknown attribute kind '" + name + "'");
}

Domain::Domain(std::vector<double> lower, std::vector<double> upper,
               std::vector<AttributeKind> kinds)
    : lower_(std::move(lower)), upper_(std::move(upper)), kinds_(std::move(kinds)) {
  if (lower_.size() != upper_.size() || lower_.size() != kinds_.size()) {
    throw ValidationError("domain bounds and kinds must have the same length");
  }
  if (lower_.empty()) {
    throw ValidationError("domain must have at least one attribute");
  }
  for (std::size_t j = 0; j < lower_.size(); ++j) {
    if (!std::isfinite(lower_[j]) || !std::isfinite(upper_[j])) {
      throw ValidationError("domain bounds must be finite (attribute " + std::to_string(j + 1) + ")");
    }
    if (kinds_[j] == AttributeKind::Binary) {
      if (lower_[j] != 0.0 || upper_[j] != 1.0) {
        throw ValidationError("binary attribute " + std::to_string(j + 1) + " must have bounds [0, 1]");
      }
    } else if (!(lower_[j] < upper_[j])) {
      throw ValidationError("attribute " + std::to_string(j + 1) + " has lower >= upper");
    }
  }
}

Domain Domain::unit_box(std::size_t d) {
  return Domain(std::vector<double>(d, 0.0), std::vector<double>(d, 1.0),
                std::vector<AttributeKind>(d, AttributeKind::Continuous));
}

Domain Domain::unit_box_with_label(std::size_t d) {
  if (d < 2) {
    throw ValidationError("a labelled domain needs at least one feature and the label");
  }
  std::vector<AttributeKind> kinds(d, AttributeKind::Continuous);
  kinds.back() = AttributeKind::Binary;
  return Domain(std::vector<double>(d, 0.0), std::vector<double>(d, 1.0), std::move(kinds));
}

bool Domain::contains(std::span<const double> x) const {
  if (x.size() != dim()) return false;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!(x[j] >= lower_[j] && x[j] <= upper_[j])) return false;
    if (kinds_[j] == AttributeKind::Binary && x[j] != 0.0 && x[j] != 1.0) return false;
  }
  return true;
}

void Domain::check_point(std::span<const double> x, long row) const {
  if (x.size() != dim()) {
    throw ValidationError("point has " + std::to_string(x.size()) + " attributes, domain has " +
                          std::to_string(dim()));
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    const bool binary = kinds_[j] == AttributeKind::Binary;
    const bool inside = x[j] >= lower_[j] && x[j] <= upper_[j] && (!binary || x[j] == 0.0 || x[j] == 1.0);
    if (!inside) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "value " << x[j] << " of attribute " << (j + 1);
      if (row >= 0) msg << " in row " << (row + 1);
      msg << " is outside the domain [" << lower_[j] << ", " << upper_[j] << "]";
      if (binary) msg << " (binary)";
      throw ValidationError(msg.str());
    }
  }
}

}  // namespace m2m
