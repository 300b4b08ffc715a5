#ifndef TRANSRL_COMMON_HPP
#define TRANSRL_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace transrl {

/// Raised for invalid inputs: malformed scenarios, dimension mismatches,
/// simplex violations and the like.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an internal consistency check fails (a bug signal, not a user error).
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

using Rng = std::mt19937_64;

/// Compensated running sum. Cumulative vehicle counters grow to ~1e5 and the
/// conservation check is absolute at 1e-9.
class KahanSum {
public:
    void add(double x) {
        double y = x - comp_;
        double t = sum_ + y;
        comp_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }
    void reset() { sum_ = 0.0; comp_ = 0.0; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// SplitMix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

}  // namespace transrl

#endif
