#ifndef SLFV_RANDOM_HPP
#define SLFV_RANDOM_HPP

#include "slfv/geometry.hpp"

#include <array>
#include <cstdint>
#include <limits>

namespace slfv {

std::uint64_t splitmix64(std::uint64_t& state);
/// Stateless 64-bit mix of two words (used for per-family type draws).
std::uint64_t hash_pair(std::uint64_t a, std::uint64_t b);

/// xoshiro256** with 2^128 jump-ahead for independent replicate streams.
class Rng {
public:
    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    explicit Rng(std::uint64_t seed = 0);

    result_type operator()();
    void jump();

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform on (0, 1).
    double uniform_open();
    double exponential(double rate = 1.0);
    double normal();

    const std::array<std::uint64_t, 4>& state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

    static constexpr const char* name() { return "xoshiro256**"; }

private:
    std::array<std::uint64_t, 4> s_{};
};

/// Stream for replicate `index`: the master stream advanced by `index` jumps.
Rng replicate_stream(std::uint64_t master_seed, std::uint64_t index);

/// Symmetric alpha-stable variate with characteristic function exp(-|xi|^alpha).
double symmetric_stable(Rng& rng, double alpha);
/// Positive beta-stable variate with Laplace transform exp(-lambda^beta), 0 < beta < 1.
double positive_stable(Rng& rng, double beta);
/// Isotropic vector in R^d with characteristic function exp(-scale^alpha |xi|^alpha).
Point isotropic_stable(Rng& rng, int d, double alpha, double scale);

}  // namespace slfv

#endif
