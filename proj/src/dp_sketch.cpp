#include "m2m/dp_sketch.hpp"

#include <cmath>
#include <limits>

#include "m2m/error.hpp"
#include "m2m/parallel.hpp"

namespace m2m {
namespace {

constexpr std::size_t kChunkRows = 1024;
// Fixed number of partial accumulators: chunk c always lands in slot c % kSlots,
// so the reduction tree is independent of how many threads run.
constexpr std::size_t kSlots = 8;

// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + carry; }
};

double checked_epsilon(double eps, const char* what) {
  if (std::isnan(eps) || eps <= 0.0) {
    throw ValidationError(std::string(what) + " must be positive (or inf), got " + std::to_string(eps));
  }
  return eps;
}

}  // namespace

ExactSketch sketch_exact(const FeatureMap& map, const Dataset& records) {
  const std::size_t m = map.dim();
  ExactSketch out{std::vector<double>(m, 0.0), records.rows()};
  if (records.empty()) {
    return out;
  }
  if (records.cols() != map.input_dim()) {
    throw ValidationError("records have " + std::to_string(records.cols()) + " columns, the feature map expects " +
                          std::to_string(map.input_dim()));
  }
  const std::size_t chunks = (records.rows() + kChunkRows - 1) / kChunkRows;
  const std::size_t slots = std::min(kSlots, chunks);

  if (map.is_one_hot()) {
    // Integer counts are exact, so any accumulation order gives the same result.
    std::vector<std::vector<std::uint64_t>> partial(slots, std::vector<std::uint64_t>(m, 0));
    parallel_for(slots, [&](std::size_t s) {
      std::vector<std::uint32_t> idx(map.active_count());
      for (std::size_t c = s; c < chunks; c += slots) {
        const std::size_t end = std::min(records.rows(), (c + 1) * kChunkRows);
        for (std::size_t i = c * kChunkRows; i < end; ++i) {
          if (map.kind() == MapKind::Hist) {
            map.domain().check_point(records.row(i), static_cast<long>(i));
          }
          map.active_indices(records.row(i), idx);
          for (const auto k : idx) ++partial[s][k];
        }
      }
    });
    for (std::size_t k = 0; k < m; ++k) {
      std::uint64_t total = 0;
      for (const auto& p : partial) total += p[k];
      out.sum_features[k] = static_cast<double>(total);
    }
    return out;
  }

  std::vector<std::vector<CompensatedSum>> partial(slots, std::vector<CompensatedSum>(m));
  parallel_for(slots, [&](std::size_t s) {
    std::vector<double> phi(m);
    for (std::size_t c = s; c < chunks; c += slots) {
      const std::size_t end = std::min(records.rows(), (c + 1) * kChunkRows);
      for (std::size_t i = c * kChunkRows; i < end; ++i) {
        map.embed(records.row(i), phi);
        for (std::size_t k = 0; k < m; ++k) partial[s][k].add(phi[k]);
      }
    }
  });
  for (std::size_t k = 0; k < m; ++k) {
    CompensatedSum total;
    for (const auto& p : partial) {
      total.add(p[k].sum);
      total.add(p[k].carry);
    }
    out.sum_features[k] = total.value();
  }
  return out;
}

PrivateSketch::PrivateSketch(std::shared_ptr<const FeatureMap> map, std::vector<double> noisy_sum,
                             double noisy_count, double epsilon_num, double epsilon_den)
    : map_(std::move(map)),
      noisy_sum_(std::move(noisy_sum)),
      noisy_count_(noisy_count),
      epsilon_num_(checked_epsilon(epsilon_num, "epsilon_num")),
      epsilon_den_(checked_epsilon(epsilon_den, "epsilon_den")) {
  if (!map_) {
    throw ValidationError("a sketch needs its feature map");
  }
  if (noisy_sum_.size() != map_->dim()) {
    throw ValidationError("sketch length " + std::to_string(noisy_sum_.size()) + " does not match feature map m = " +
                          std::to_string(map_->dim()));
  }
  for (const double v : noisy_sum_) {
    if (!std::isfinite(v)) throw ValidationError("sketch entries must be finite");
  }
  if (!std::isfinite(noisy_count_)) {
    throw ValidationError("noisy count must be finite");
  }
}

double PrivateSketch::clamped_count() const noexcept { return std::max(noisy_count_, 1.0); }

double PrivateSketch::sum_noise_scale() const {
  return std::isinf(epsilon_num_) ? 0.0 : map_->sensitivity_l1() / epsilon_num_;
}

double PrivateSketch::count_noise_scale() const { return std::isinf(epsilon_den_) ? 0.0 : 1.0 / epsilon_den_; }

std::vector<double> PrivateSketch::normalized() const {
  const double n = clamped_count();
  std::vector<double> out(noisy_sum_.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = noisy_sum_[k] / n;
  return out;
}

PrivateSketch privatize(const ExactSketch& exact, std::shared_ptr<const FeatureMap> map, double epsilon,
                        double split_num, std::uint64_t noise_seed) {
  if (!(split_num > 0.0 && split_num < 1.0)) {
    throw ValidationError("budget split must lie strictly between 0 and 1");
  }
  checked_epsilon(epsilon, "epsilon");
  if (std::isinf(epsilon)) {
    return privatize_split(exact, std::move(map), epsilon, epsilon, noise_seed);
  }
  return privatize_split(exact, std::move(map), split_num * epsilon, (1.0 - split_num) * epsilon, noise_seed);
}

PrivateSketch privatize_split(const ExactSketch& exact, std::shared_ptr<const FeatureMap> map, double epsilon_num,
                              double epsilon_den, std::uint64_t noise_seed) {
  if (!map) {
    throw ValidationError("privatize needs the feature map");
  }
  if (exact.sum_features.size() != map->dim()) {
    throw ValidationError("exact sketch does not match the feature map dimension");
  }
  checked_epsilon(epsilon_num, "epsilon_num");
  checked_epsilon(epsilon_den, "epsilon_den");
  const double sum_scale = std::isinf(epsilon_num) ? 0.0 : map->sensitivity_l1() / epsilon_num;
  const double count_scale = std::isinf(epsilon_den) ? 0.0 : 1.0 / epsilon_den;

  Rng rng(derive_seed(noise_seed, 0x4e4f'4953'45));
  std::vector<double> noisy = exact.sum_features;
  for (double& v : noisy) v += sample_laplace(sum_scale, rng);
  const double noisy_count = static_cast<double>(exact.count) + sample_laplace(count_scale, rng);

  PrivateSketch out(std::move(map), std::move(noisy), noisy_count, epsilon_num, epsilon_den);
  out.noise_seed = noise_seed;
  return out;
}

PrivateSketch merge(const PrivateSketch& a, const PrivateSketch& b) {
  if (a.spec_id() != b.spec_id()) {
    throw ValidationError("cannot merge sketches built with different feature maps (" + a.spec_id() + " vs " +
                          b.spec_id() + ")");
  }
  if (a.epsilon_num() != b.epsilon_num() || a.epsilon_den() != b.epsilon_den()) {
    throw ValidationError("cannot merge sketches with different noise scales");
  }
  if (a.normalization != b.normalization) {
    throw ValidationError("cannot merge sketches with different normalizations");
  }
  std::vector<double> sum(a.noisy_sum().size());
  for (std::size_t k = 0; k < sum.size(); ++k) sum[k] = a.noisy_sum()[k] + b.noisy_sum()[k];
  PrivateSketch out(a.map_ptr(), std::move(sum), a.noisy_count() + b.noisy_count(), a.epsilon_num(),
                    a.epsilon_den());
  out.parents = a.parents + b.parents;
  out.normalization = a.normalization;
  return out;
}

}  // namespace m2m
