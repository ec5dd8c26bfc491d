#include "slfv/random.hpp"

#include <cmath>
#include <numbers>

namespace slfv {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t hash_pair(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t s = a;
    const std::uint64_t x = splitmix64(s);
    s = x ^ b;
    return splitmix64(s);
}

Rng::Rng(std::uint64_t seed)
{
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
}

Rng::result_type Rng::operator()()
{
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

void Rng::jump()
{
    static constexpr std::uint64_t table[] = {0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL, 0xa9582618e03fc9aaULL,
                                              0x39abdc4529b1661cULL};
    std::array<std::uint64_t, 4> acc{};
    for (std::uint64_t word : table) {
        for (int b = 0; b < 64; ++b) {
            if (word & (std::uint64_t{1} << b)) {
                for (int i = 0; i < 4; ++i) acc[i] ^= s_[i];
            }
            (*this)();
        }
    }
    s_ = acc;
}

double Rng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double Rng::uniform_open()
{
    return (static_cast<double>((*this)() >> 12) + 0.5) * 0x1.0p-52;
}

double Rng::exponential(double rate) { return -std::log(uniform_open()) / rate; }

double Rng::normal()
{
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    return r * std::cos(2.0 * std::numbers::pi * uniform());
}

Rng replicate_stream(std::uint64_t master_seed, std::uint64_t index)
{
    Rng rng(master_seed);
    for (std::uint64_t i = 0; i < index; ++i) rng.jump();
    return rng;
}

double symmetric_stable(Rng& rng, double alpha)
{
    const double v = std::numbers::pi * (rng.uniform_open() - 0.5);
    const double w = rng.exponential();
    if (alpha == 1.0) return std::tan(v);
    return std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
           std::pow(std::cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha);
}

double positive_stable(Rng& rng, double beta)
{
    const double u = std::numbers::pi * rng.uniform_open();
    const double e = rng.exponential();
    const double a = std::sin((1.0 - beta) * u) * std::pow(std::sin(beta * u), beta / (1.0 - beta)) /
                     std::pow(std::sin(u), 1.0 / (1.0 - beta));
    return std::pow(a / e, (1.0 - beta) / beta);
}

Point isotropic_stable(Rng& rng, int d, double alpha, double scale)
{
    Point out{0.0, 0.0, 0.0};
    if (d == 1) {
        out[0] = scale * symmetric_stable(rng, alpha);
        return out;
    }
    // sub-Gaussian construction: sqrt(2A) Z with A positive (alpha/2)-stable
    const double a = alpha == 2.0 ? 1.0 : positive_stable(rng, 0.5 * alpha);
    const double s = scale * std::sqrt(2.0 * a);
    for (int i = 0; i < d; ++i) out[i] = s * rng.normal();
    return out;
}

}  // namespace slfv
