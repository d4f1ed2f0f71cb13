#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "m2m/dataset.hpp"
#include "m2m/domain.hpp"
#include "m2m/estimator.hpp"

namespace m2m {

/// One side of a box: x_attr <= value (Upper) or x_attr >= value (Lower).
struct Predicate {
  enum class Bound { Upper, Lower };
  std::size_t attr = 0;
  Bound bound = Bound::Upper;
  double value = 0.0;
};

namespace target {

/// x_attr ^ order
struct Moment {
  std::size_t attr = 0;
  unsigned order = 1;
};

/// 1 iff every predicate holds (a conjunction).
struct BoxIndicator {
  std::vector<Predicate> predicates;
};

/// 1 iff x_attr <= threshold
struct CdfThreshold {
  std::size_t attr = 0;
  double threshold = 0.0;
};

/// (x_i - mu_i)(x_j - mu_j)
struct CenteredProduct {
  std::size_t i = 0;
  std::size_t j = 0;
  double mu_i = 0.0;
  double mu_j = 0.0;
};

struct Custom {
  std::string name;
  TargetFn fn;
};

}  // namespace target

/// Attribute indices are 0-based here; the text grammar is 1-based.
using TargetSpec = std::variant<target::Moment, target::BoxIndicator, target::CdfThreshold,
                                target::CenteredProduct, target::Custom>;

double eval_target(const TargetSpec& t, std::span<const double> x);

/// Index ranges, box bounds inside the domain, no duplicate bound kinds per
/// attribute, no empty boxes. Throws ValidationError.
void validate(const TargetSpec& t, const Domain& domain);

/// Validated callable for the estimator.
TargetFn to_function(const TargetSpec& t, const Domain& domain);

/// Text form in the CLI grammar (1-based indices).
std::string describe(const TargetSpec& t);

/// (1/n) sum f(x_i) over a dataset.
double empirical_mean(const Dataset& data, const TargetFn& f);

/// Fraction of the domain's volume covered by a box (continuous attributes only).
double box_volume(const target::BoxIndicator& box, const Domain& domain);

/// Parsed CLI target:
///   moment j k
///   count "x1<=0.5 and x3>=0.2 and x7<=0.9"
///   cdf j
///   cov
struct Query {
  enum class Kind { Single, Cdf, Covariance };
  Kind kind = Kind::Single;
  TargetSpec target;
  std::size_t attr = 0;  // for Cdf
  std::string text;
};

/// Throws ValidationError("parse error at column N: ...") on malformed input.
Query parse_query(std::string_view text, std::size_t d);

/// Parses the conjunction inside a count query (quotes optional).
target::BoxIndicator parse_predicates(std::string_view text, std::size_t d);

}  // namespace m2m
