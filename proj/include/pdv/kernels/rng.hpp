#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al. 2011).
//
// A stream is a (key, counter) pair. Drawing advances the counter of the
// stream value it is called on; splitting derives a fresh key from the parent
// key, the parent counter and an index, so that path i of a simulation can be
// reproduced without generating paths 0..i-1 first.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace pdv {

namespace detail {

inline constexpr std::uint32_t philox_m0 = 0xD2511F53u;
inline constexpr std::uint32_t philox_m1 = 0xCD9E8D57u;
inline constexpr std::uint32_t philox_w0 = 0x9E3779B9u;
inline constexpr std::uint32_t philox_w1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(philox_m0, ctr[0], hi0, lo0);
        mulhilo(philox_m1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += philox_w0;
        key[1] += philox_w1;
    }
    return ctr;
}

inline std::array<std::uint64_t, 2> philox_block(std::uint64_t key, std::uint64_t counter,
                                                 std::uint64_t domain) {
    const auto out = philox4x32(
        {static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
         static_cast<std::uint32_t>(domain), static_cast<std::uint32_t>(domain >> 32)},
        {static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)});
    return {(static_cast<std::uint64_t>(out[1]) << 32) | out[0],
            (static_cast<std::uint64_t>(out[3]) << 32) | out[2]};
}

// 53 random bits mapped to the open interval (0, 1).
// 52 bits centred in their cell: the extremes are 2^-53 and 1 - 2^-53.
inline double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

inline constexpr std::uint64_t domain_draw = 0;
inline constexpr std::uint64_t domain_split = 0x5eed5eed5eed5eedull;

}  // namespace detail

struct RngStream {
    std::uint64_t key = 0;
    std::uint64_t counter = 0;

    friend bool operator==(const RngStream&, const RngStream&) = default;
};

inline RngStream make_stream(std::uint64_t seed) { return RngStream{seed, 0}; }

// Child stream number `index` of `parent`. The parent is not advanced.
inline RngStream split(const RngStream& parent, std::uint64_t index) {
    const auto a = detail::philox_block(parent.key, index, detail::domain_split ^ parent.counter);
    return RngStream{a[0] ^ (a[1] * 0x9E3779B97F4A7C15ull), 0};
}

// Two 64-bit words per counter increment.
inline std::array<std::uint64_t, 2> next_bits(RngStream& s) {
    return detail::philox_block(s.key, s.counter++, detail::domain_draw);
}

inline double next_uniform(RngStream& s) { return detail::to_open_unit(next_bits(s)[0]); }

// Box-Muller on one block: two independent standard normals.
inline std::array<double, 2> next_gaussian_pair(RngStream& s) {
    const auto bits = next_bits(s);
    const double u1 = detail::to_open_unit(bits[0]);
    const double u2 = detail::to_open_unit(bits[1]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(a), r * std::sin(a)};
}

inline void sample_gaussians(RngStream& s, std::span<double> out) {
    std::size_t i = 0;
    for (; i + 1 < out.size(); i += 2) {
        const auto z = next_gaussian_pair(s);
        out[i] = z[0];
        out[i + 1] = z[1];
    }
    if (i < out.size()) out[i] = next_gaussian_pair(s)[0];
}

inline std::vector<double> sample_gaussians(RngStream& s, std::size_t n) {
    std::vector<double> out(n);
    sample_gaussians(s, out);
    return out;
}

// Sequential normal source for the path kernels; consumes pairs and buffers
// the second draw.
class GaussianSource {
public:
    explicit GaussianSource(RngStream s) : stream_(s) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const auto z = next_gaussian_pair(stream_);
        spare_ = z[1];
        has_spare_ = true;
        return z[0];
    }

private:
    RngStream stream_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Uniform integer in [0, n) by rejection, no modulo bias.
inline std::uint64_t next_below(RngStream& s, std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % n);
    for (;;) {
        const std::uint64_t x = next_bits(s)[0];
        if (x < limit) return x % n;
    }
}

template <class T>
void shuffle(RngStream& s, std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(next_below(s, i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace pdv
