#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace xlir {

// Malformed input file. `line` is 1-based, 0 when not line-addressable.
struct ParseError : std::runtime_error {
    ParseError(const std::string& file, std::size_t line, const std::string& msg)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg),
          file(file),
          line(line) {}
    std::string file;
    std::size_t line;
};

// Caller violated a documented precondition.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// A similarity computation received no usable tokens on one side.
struct EmptyInputError : std::runtime_error {
    explicit EmptyInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic RNG with hand-rolled distributions. std::uniform_*_distribution
// output is implementation-defined, so anything that must reproduce bit-exactly
// across toolchains goes through this wrapper instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(split_mix(seed)) {}

    std::uint64_t next_u64() {
        // xorshift* variant; period 2^64-1, ample for sampling work here.
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545F4914F6CDD1DULL;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw ContractError("Rng::uniform_int: n must be positive");
        std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= bound);
        return r % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        if (k > n) throw ContractError("Rng::sample_indices: k exceeds population");
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(uniform_int(n - i));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

private:
    static std::uint64_t split_mix(std::uint64_t x) {
        // Spreads low-entropy seeds; also guarantees a nonzero xorshift state.
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        x = x ^ (x >> 31);
        return x == 0 ? 0x9E3779B97F4A7C15ULL : x;
    }

    std::uint64_t state_;
};

}  // namespace xlir
