#include "m2m/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "m2m/error.hpp"
#include "m2m/rng.hpp"

namespace m2m {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_cell(const std::string& cell, std::size_t line_no, std::size_t col) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw ValidationError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                          ": '" + cell + "' is not a finite number");
  }
  return value;
}

}  // namespace

Dataset::Dataset(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

Dataset::Dataset(std::size_t cols, std::vector<double> values, std::vector<std::string> names)
    : cols_(cols), values_(std::move(values)) {
  if (cols_ == 0) {
    throw ValidationError("dataset must have at least one column");
  }
  if (values_.size() % cols_ != 0) {
    throw ValidationError("value count is not a multiple of the column count");
  }
  rows_ = values_.size() / cols_;
  set_names(std::move(names));
}

void Dataset::set_names(std::vector<std::string> names) {
  if (!names.empty() && names.size() != cols_) {
    throw ValidationError("column name count does not match column count");
  }
  names_ = std::move(names);
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, rows_);
  begin = std::min(begin, end);
  std::vector<double> v(values_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                        values_.begin() + static_cast<std::ptrdiff_t>(end * cols_));
  Dataset out;
  out.rows_ = end - begin;
  out.cols_ = cols_;
  out.values_ = std::move(v);
  out.names_ = names_;
  return out;
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  Dataset out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  out.names_ = names_;
  return out;
}

Dataset Dataset::concat(const Dataset& other) const {
  if (rows_ == 0) return other;
  if (other.rows_ == 0) return *this;
  if (other.cols_ != cols_) {
    throw ValidationError("cannot concatenate datasets with different column counts");
  }
  Dataset out = *this;
  out.values_.insert(out.values_.end(), other.values_.begin(), other.values_.end());
  out.rows_ += other.rows_;
  return out;
}

void Dataset::check_in(const Domain& domain) const {
  if (cols_ != domain.dim()) {
    throw ValidationError("dataset has " + std::to_string(cols_) + " columns but the domain has " +
                          std::to_string(domain.dim()) + " attributes");
  }
  for (std::size_t i = 0; i < rows_; ++i) {
    domain.check_point(row(i), static_cast<long>(i));
  }
}

Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError("'" + path + "' is empty (a header row is required)");
  }
  auto names = split_fields(line);
  const std::size_t cols = names.size();
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != cols) {
      throw ValidationError("line " + std::to_string(line_no) + " of '" + path + "' has " +
                            std::to_string(fields.size()) + " fields, expected " + std::to_string(cols));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      values.push_back(parse_cell(fields[j], line_no, j));
    }
  }
  if (in.bad()) {
    throw IoError("read error on '" + path + "'");
  }
  return Dataset(cols, std::move(values), std::move(names));
}

void write_csv(const Dataset& data, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw IoError("cannot write '" + path + "'");
    }
    for (std::size_t j = 0; j < data.cols(); ++j) {
      if (j) out << ',';
      out << (data.names().empty() ? "x" + std::to_string(j + 1) : data.names()[j]);
    }
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < data.rows(); ++i) {
      for (std::size_t j = 0; j < data.cols(); ++j) {
        if (j) out << ',';
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, data(i, j));
        out.write(buf, end - buf);
      }
      out << '\n';
    }
    if (!out) {
      throw IoError("write error on '" + path + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
  }
}

Normalization fit_normalization(const Dataset& data) {
  if (data.empty()) {
    throw ValidationError("cannot normalize an empty dataset");
  }
  Normalization norm{std::vector<double>(data.cols()), std::vector<double>(data.cols())};
  for (std::size_t j = 0; j < data.cols(); ++j) {
    double lo = data(0, j);
    double hi = data(0, j);
    for (std::size_t i = 1; i < data.rows(); ++i) {
      lo = std::min(lo, data(i, j));
      hi = std::max(hi, data(i, j));
    }
    norm.min[j] = lo;
    norm.max[j] = hi > lo ? hi : lo + 1.0;
  }
  return norm;
}

Dataset apply_normalization(const Dataset& data, const Normalization& norm) {
  if (norm.min.size() != data.cols() || norm.max.size() != data.cols()) {
    throw ValidationError("normalization does not match the dataset's column count");
  }
  Dataset out = data;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      const double v = (out(i, j) - norm.min[j]) / (norm.max[j] - norm.min[j]);
      out(i, j) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

Dataset gen_random10(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0 || d == 0) {
    throw ValidationError("gen_random10 needs n >= 1 and d >= 1");
  }
  Rng rng(derive_seed(seed, 0x5241'4e44));
  std::vector<double> values(n * d);
  for (double& v : values) {
    v = uniform01(rng);
  }
  std::vector<std::string> names(d);
  for (std::size_t j = 0; j < d; ++j) names[j] = "x" + std::to_string(j + 1);
  return Dataset(d, std::move(values), std::move(names));
}

Dataset gen_separable_classification(std::size_t n, std::size_t d, double margin, std::uint64_t seed) {
  if (d < 2) {
    throw ValidationError("gen_separable_classification needs d >= 2");
  }
  if (n == 0) {
    throw ValidationError("gen_separable_classification needs n >= 1");
  }
  if (!(margin >= 0.0)) {
    throw ValidationError("margin must be nonnegative");
  }
  const std::size_t p = d - 1;
  // Alternating-sign direction; w . (1/2, ..., 1/2) is the threshold.
  std::vector<double> w(p);
  double norm = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    w[j] = (j % 2 == 0 ? 1.0 : -1.0) * (1.0 + 0.25 * static_cast<double>(j));
    norm += w[j] * w[j];
  }
  norm = std::sqrt(norm);
  double threshold = 0.0;
  for (double& wj : w) {
    wj /= norm;
    threshold += 0.5 * wj;
  }

  Rng rng(derive_seed(seed, 0x5345'5041));
  Dataset out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = out.row(i);
    double score = -threshold;
    for (std::size_t j = 0; j < p; ++j) {
      x[j] = uniform01(rng);
      score += w[j] * x[j];
    }
    const double u = uniform01(rng);
    double label = 0.0;
    if (std::isinf(margin)) {
      label = score > 0.0 ? 1.0 : 0.0;
    } else {
      label = u < 1.0 / (1.0 + std::exp(-margin * score)) ? 1.0 : 0.0;
    }
    x[p] = label;
  }
  std::vector<std::string> names(d);
  for (std::size_t j = 0; j < p; ++j) names[j] = "x" + std::to_string(j + 1);
  names[p] = "y";
  out.set_names(std::move(names));
  return out;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5350'4c54));
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(k, i - 1)]);
  }
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.rows())));
  std::span<const std::size_t> all(order);
  return {data.select(all.subspan(n_test)), data.select(all.first(n_test))};
}

}  // namespace m2m
