#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace roida {

// Error taxonomy used across the library. CLI maps UsageError -> exit 1,
// everything else -> exit 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& m) : std::runtime_error(m) {}
};
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& m) : std::runtime_error(m) {}
};
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& m) : std::runtime_error(m) {}
};
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericDomainError : std::runtime_error {
    explicit NumericDomainError(const std::string& m) : std::runtime_error(m) {}
};

// splitmix64; used to derive independent seeds from (seed, counter) pairs so
// every episode / trajectory / run gets its own stream.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d49bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG with a platform-independent uniform mapping (std
// distributions are not bit-stable across standard libraries).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    std::uint64_t next_u64() { return gen_(); }

    // uniform integer in [0, n)
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(unit() * static_cast<double>(n)) % n;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace roida
