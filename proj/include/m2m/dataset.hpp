#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "m2m/domain.hpp"

namespace m2m {

/// Row-major table of finite doubles with optional column names.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t rows, std::size_t cols);
  Dataset(std::size_t cols, std::vector<double> values, std::vector<std::string> names = {});

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }

  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  void set_names(std::vector<std::string> names);

  /// Rows [begin, end) as a new dataset sharing the column names.
  Dataset slice(std::size_t begin, std::size_t end) const;
  Dataset select(std::span<const std::size_t> rows) const;
  Dataset concat(const Dataset& other) const;

  /// Throws ValidationError at the first record outside the domain.
  void check_in(const Domain& domain) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
  std::vector<std::string> names_;
};

/// Per-column min/max recorded when data are rescaled to [0,1]^d.
struct Normalization {
  std::vector<double> min;
  std::vector<double> max;

  bool operator==(const Normalization&) const = default;
};

/// CSV with a header row; every cell must parse as a finite decimal.
Dataset read_csv(const std::string& path);
void write_csv(const Dataset& data, const std::string& path);

/// Min-max statistics of each column. Constant columns get max = min + 1.
Normalization fit_normalization(const Dataset& data);
/// (x - min) / (max - min), clamped to [0, 1].
Dataset apply_normalization(const Dataset& data, const Normalization& norm);

/// n i.i.d. uniform points in [0,1]^d.
Dataset gen_random10(std::size_t n, std::size_t d, std::uint64_t seed);

/// Continuous features uniform on [0,1]^(d-1) and a binary label drawn with
/// P(y = 1) = sigmoid(margin * (w . x - t)), w a fixed unit direction and t the
/// value splitting the cube in half. margin = +inf gives deterministic labels,
/// margin = 0 gives coin flips.
Dataset gen_separable_classification(std::size_t n, std::size_t d, double margin, std::uint64_t seed);

/// Default margin for gen_separable_classification.
inline constexpr double kDefaultSeparableMargin = 40.0;

/// Shuffles rows with the seed and returns (train, test) with the given test fraction.
std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction, std::uint64_t seed);

}  // namespace m2m
