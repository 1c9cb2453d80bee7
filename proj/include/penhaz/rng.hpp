#pragma once
// Seeded random streams with independent substreams per replica.
//
// A substream for (seed, index) is an mt19937_64 seeded through
// std::seed_seq with the four 32-bit halves of seed and index. Both the
// engine and seed_seq are fully specified by the standard, and the
// conversions to uniform / normal / bounded integers below are done by hand,
// so draws are identical across platforms and standard libraries.

#include <cstdint>
#include <random>

namespace penhaz {

class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : RandomStream(seed, 0) {}
    RandomStream(std::uint64_t seed, std::uint64_t index);

    static RandomStream substream(std::uint64_t seed, std::uint64_t index) { return {seed, index}; }

    std::uint64_t next() { return engine_(); }
    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Uniform on (lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal (Box-Muller).
    double normal();
    /// Uniform integer in [0, bound); bound > 0.
    std::uint64_t below(std::uint64_t bound);

private:
    std::mt19937_64 engine_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace penhaz
