#pragma once

// Counter-based normal variates. Every draw is a pure function of
// (seed, path, step, stream, index), so any schedule of path blocks
// reproduces the same ensemble.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace teamsmp::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

constexpr Counter philox_round(const Counter& c, const Key& k) {
    std::uint32_t hi0 = 0, lo0 = 0, hi1 = 0, lo1 = 0;
    mulhilo(kPhiloxM0, c[0], hi0, lo0);
    mulhilo(kPhiloxM1, c[2], hi1, lo1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace detail

/// Philox4x32 with 10 rounds (Salmon et al. 2011).
constexpr Counter philox4x32_10(Counter ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            key[0] += detail::kPhiloxW0;
            key[1] += detail::kPhiloxW1;
        }
        ctr = detail::philox_round(ctr, key);
    }
    return ctr;
}

// Maps 64 random bits to (0, 1), never hitting either endpoint.
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

/// Stream of standard normals addressed by (path, step, stream).
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    // Fills out[0..count) with the normals for one (path, step, stream) cell.
    template <typename Out>
    void fill(std::uint64_t path, std::uint32_t step, std::uint32_t stream, Out&& out,
              int count) const {
        for (int block = 0; 2 * block < count; ++block) {
            const Counter ctr{static_cast<std::uint32_t>(path),
                              static_cast<std::uint32_t>(path >> 32), step,
                              (stream << 16) | static_cast<std::uint32_t>(block)};
            const Counter r = philox4x32_10(ctr, key_);
            const double u1 = to_open_unit(r[0], r[1]);
            const double u2 = to_open_unit(r[2], r[3]);
            const double rad = std::sqrt(-2.0 * std::log(u1));
            const double theta = 2.0 * std::numbers::pi * u2;
            out[2 * block] = rad * std::cos(theta);
            if (2 * block + 1 < count) out[2 * block + 1] = rad * std::sin(theta);
        }
    }

    // Uniform lanes set bit 15 of the lane word; normal blocks never do.
    double uniform(std::uint64_t path, std::uint32_t step, std::uint32_t stream,
                   std::uint32_t lane = 0xFFFFu) const {
        const Counter ctr{static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
                          step, (stream << 16) | (0x8000u | (lane & 0x7FFFu))};
        const Counter r = philox4x32_10(ctr, key_);
        return to_open_unit(r[0], r[1]);
    }

private:
    Key key_;
};

// Stream identifiers. Each purpose gets its own counter lane.
enum Stream : std::uint32_t {
    kBrownian = 1,
    kInitialState = 2,
    kRelaxedSample = 3,
    kProbe = 4,
    kTreeSample = 5,
};

}  // namespace teamsmp::rng
