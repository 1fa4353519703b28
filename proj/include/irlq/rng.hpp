#pragma once

#include <cmath>
#include <cstdint>

// Counter-based random numbers: every (seed, stream, path) triple owns an
// independent sequence addressed purely by position, so path i's draws are
// identical no matter which thread simulates it or in what order.

namespace irlq {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

class PathRng {
  public:
    PathRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t path)
        : key_(detail::splitmix64(detail::splitmix64(seed ^ 0x6a09e667f3bcc908ULL) ^
                                  detail::splitmix64(stream * 0xbb67ae8584caa73bULL + path))) {}

    std::uint64_t next_u64() { return detail::splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // Uniform on (0, 1].
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; draws two uniforms per pair, caching the spare.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

  private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace irlq
