#pragma once

#include <cmath>
#include <cstdint>

#include "hgclr/error.hpp"

namespace hgclr {

// Counter-based stream: the value at a given (seed, stream, counter) is a pure
// function of the triple, so streams can be replayed, forked, and checkpointed
// by storing the counter alone.
class RngStream {
  public:
    // Well-known stream ids so the independent noise sources never collide.
    enum : std::uint64_t {
        kInit = 1,
        kGumbel = 2,
        kDropout = 3,
        kShuffle = 4,
        kData = 5,
    };

    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : base_(mix(mix(seed + 0x9e3779b97f4a7c15ULL) ^ mix(stream * 0xbf58476d1ce4e5b9ULL + 1))),
          counter_(0) {}

    std::uint64_t next_u64() { return mix(base_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform clamped away from {0, 1} so log(u) and log(1-u) stay finite.
    double uniform_open() {
        double u = uniform();
        if (u < 1e-10) u = 1e-10;
        if (u > 1.0 - 1e-10) u = 1.0 - 1e-10;
        return u;
    }

    // Standard Gumbel noise g = -log(-log(u)).
    double gumbel() { return -std::log(-std::log(uniform_open())); }

    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double normal() {
        double u1 = uniform_open();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw InvalidArgument("RngStream::below: n must be positive");
        return next_u64() % n;
    }

    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

    // Derived stream, independent of this one and of other fork ids.
    RngStream fork(std::uint64_t id) const {
        RngStream s;
        s.base_ = mix(base_ ^ mix(id * 0x94d049bb133111ebULL + 0x2545f4914f6cdd1dULL));
        s.counter_ = 0;
        return s;
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t base_;
    std::uint64_t counter_;
};

}  // namespace hgclr
