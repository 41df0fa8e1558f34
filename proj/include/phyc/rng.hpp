#pragma once

#include <cmath>
#include <cstdint>

namespace phyc {

// splitmix64 stream. Bit-exact on every platform, which is what the
// reproducibility contracts (identical seed -> identical bytes) rely on;
// std::normal_distribution makes no such promise.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), n > 0
    uint64_t uniform_u64(uint64_t n) {
        return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Box-Muller, no cached spare: every call consumes exactly two draws.
    double normal() {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    float normal_f() { return static_cast<float>(normal()); }

    // Stable derivation of substream seeds, e.g. mix(run_seed, step_index).
    static uint64_t mix(uint64_t a, uint64_t b) {
        Rng r(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
        return r.next_u64();
    }

private:
    uint64_t state_;
};

} // namespace phyc
