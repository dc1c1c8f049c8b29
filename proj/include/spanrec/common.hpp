#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spanrec {

// Thrown for malformed input files; line is 1-based, 0 when not line-specific.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string msg, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg),
          line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Mixes a base seed with a purpose tag so independent random streams never alias.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t salt = 0) {
    return splitmix64(base ^ fnv1a64(tag) ^ (salt * 0x9e3779b97f4a7c15ULL));
}

// xoshiro256** seeded via splitmix64. Self-contained so that streams are
// reproducible across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        for (auto& s : state_) {
            seed = splitmix64(seed);
            s = seed;
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Bounded draw via 128-bit multiply; bias is below 2^-64.
    std::uint64_t below(std::uint64_t bound) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

inline double leaky_relu_grad(double x, double slope) { return x >= 0.0 ? 1.0 : slope; }

inline double clamp_rating(double y) { return y < 1.0 ? 1.0 : (y > 5.0 ? 5.0 : y); }

}  // namespace spanrec
