#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace realgait {

// Seeded generator with hand-rolled distributions. The std:: distribution
// classes are implementation-defined, which would break bit-exact
// checkpoint/resume across standard libraries; the raw mt19937_64 stream
// itself is fully specified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [lo, hi], inclusive. Rejection sampling keeps the
  // draw unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());  // full range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % span);
  }

  // Uniform real in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller, one value per call (the spare is cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates partial shuffle: permutes the first k slots of [0, n).
  template <typename Int>
  void partial_shuffle(std::vector<Int>& v, std::size_t k) {
    for (std::size_t i = 0; i < k && i + 1 < v.size(); ++i) {
      const auto j = static_cast<std::size_t>(
          uniform_int(static_cast<std::int64_t>(i),
                      static_cast<std::int64_t>(v.size()) - 1));
      std::swap(v[i], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' '
       << std::bit_cast<std::uint64_t>(spare_);
    return os.str();
  }

  void deserialize(const std::string& state) {
    std::istringstream is(state);
    int spare_flag = 0;
    std::uint64_t spare_bits = 0;
    is >> engine_ >> spare_flag >> spare_bits;
    if (!is) throw std::runtime_error("Rng: bad serialized state");
    has_spare_ = spare_flag != 0;
    spare_ = std::bit_cast<double>(spare_bits);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace realgait
