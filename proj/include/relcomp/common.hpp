#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>

#include <Eigen/Dense>

namespace relcomp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// All randomness in the library comes from this engine.
using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Independent generator for substream `stream` of a master seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{detail::splitmix64(seed), detail::splitmix64(seed ^ 0x5851f42d4c957f2dULL),
                    detail::splitmix64(stream + 0x14057b7ef767814fULL)};
  return Rng(seq);
}

/// Incremental FNV-1a, used for operator digests.
class Fnv1a {
 public:
  void update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(double value) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, sizeof bits);
    update(&bits, sizeof bits);
  }
  void update(std::span<const double> values) {
    for (double v : values) update(v);
  }
  void update(std::uint64_t value) { update(&value, sizeof value); }

  std::uint64_t value() const noexcept { return hash_; }

  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t h = hash_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = kDigits[h & 0xf];
      h >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

struct WordPair {
  std::string head;
  std::string tail;

  friend bool operator==(const WordPair&, const WordPair&) = default;
  friend auto operator<=>(const WordPair&, const WordPair&) = default;
};

}  // namespace relcomp
