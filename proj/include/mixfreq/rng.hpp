#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mixfreq {

// Counter-based deterministic generator. Every value is a pure function of
// the key words fed in, so the same (seed, id, index) always reproduces the
// same stream on any platform, with no generator state to carry around.

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

inline std::uint64_t hash_string(std::string_view s) {
    // FNV-1a
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Uniform double in [0, 1), 53 bits of mantissa.
inline double to_unit(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Uniform double in [-1, 1).
inline double to_symmetric(std::uint64_t x) {
    return 2.0 * to_unit(x) - 1.0;
}

// Keyed counter stream: draw(k) yields the k-th value of the stream
// identified by the key built up via with().
class Stream {
  public:
    explicit Stream(std::uint64_t seed) : key_(splitmix64(seed)) {}

    Stream with(std::uint64_t word) const {
        Stream s(*this);
        s.key_ = mix(s.key_, word);
        return s;
    }

    Stream with(std::string_view word) const { return with(hash_string(word)); }

    std::uint64_t draw_u64(std::uint64_t counter) const { return mix(key_, counter); }

    double unit(std::uint64_t counter) const { return to_unit(draw_u64(counter)); }

    double symmetric(std::uint64_t counter) const { return to_symmetric(draw_u64(counter)); }

    // Uniform in [lo, hi).
    double uniform(std::uint64_t counter, double lo, double hi) const {
        return lo + (hi - lo) * unit(counter);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
        return n == 0 ? 0 : draw_u64(counter) % n;
    }

  private:
    std::uint64_t key_;
};

} // namespace rng

} // namespace mixfreq
