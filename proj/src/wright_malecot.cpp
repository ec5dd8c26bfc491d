#include "slfv/wright_malecot.hpp"
#include "slfv/geometry.hpp"
#include "slfv/kernels.hpp"

#include <boost/math/special_functions/bessel.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace slfv {

namespace {

constexpr double pi = std::numbers::pi;

double sphere_area(int d) { return d == 1 ? 2.0 : d == 2 ? 2.0 * pi : 4.0 * pi; }

bool gaussian_kind(const SpatialProfile& g) { return g.kind() != SpatialProfile::Kind::Custom; }

double norm(const Point& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

// e^{-x} I_0(x) without overflow.
double scaled_i0(double x)
{
    if (x < 600.0) return boost::math::cyl_bessel_i(0, x) * std::exp(-x);
    return (1.0 + 1.0 / (8.0 * x) + 9.0 / (128.0 * x * x)) / std::sqrt(2.0 * pi * x);
}

// (1 - e^{-2k}) / (2k), the scaled sinh(k)/k.
double scaled_sinhc(double k)
{
    if (k < 1e-8) return 1.0 - k;
    return -std::expm1(-2.0 * k) / (2.0 * k);
}

Point center_offset(const SpatialProfile& g1, const SpatialProfile& g2)
{
    Point m{0.0, 0.0, 0.0};
    for (int a = 0; a < g1.dim(); ++a) m[a] = g2.center()[a] - g1.center()[a];
    return m;
}

double sup_norm(const SpatialProfile& g)
{
    if (!gaussian_kind(g)) throw std::invalid_argument("sup norm needs a Gaussian-kind profile");
    return std::abs(g.amplitude()) * (g.kind() == SpatialProfile::Kind::Gaussian ? 1.0 : std::exp(-0.5));
}

double l1_norm(const SpatialProfile& g)
{
    if (!gaussian_kind(g)) throw std::invalid_argument("L1 norm needs a Gaussian-kind profile");
    const double mass = std::abs(g.amplitude()) * std::pow(2.0 * pi * g.width() * g.width(), 0.5 * g.dim());
    return g.kind() == SpatialProfile::Kind::Gaussian ? mass : mass * std::sqrt(2.0 / pi);
}

void check_pair(const SpatialProfile& g1, const SpatialProfile& g2)
{
    if (g1.dim() != g2.dim()) throw std::invalid_argument("profiles live in different dimensions");
    if (g1.dim() > 1 && (!gaussian_kind(g1) || !gaussian_kind(g2))) {
        throw std::invalid_argument("custom profiles are supported in pair integrals only for d = 1");
    }
}

struct LongConstants {
    double c = 0.0, C = 0.0, gamma = 0.0;
};

LongConstants long_constants(int d, double alpha)
{
    static std::mutex lock;
    static std::map<std::pair<int, double>, LongConstants> cache;
    {
        std::lock_guard<std::mutex> guard(lock);
        auto it = cache.find({d, alpha});
        if (it != cache.end()) return it->second;
    }
    LongConstants k{stable_symbol_constant(d, alpha), k_alpha_constant(d, alpha), riesz_fourier_weight(d, alpha)};
    std::lock_guard<std::mutex> guard(lock);
    cache[{d, alpha}] = k;
    return k;
}

// int_0^inf r^{s-1} g(r) dr for smooth g
double power_half_line(double s, const RealFn& g)
{
    const double far = integrate_to_infinity([&](double r) { return std::pow(r, s - 1.0) * g(r); }, 1.0, 1e-13).value;
    return integrate_power(g, s, 1.0, 1e-13).value + far;
}

}  // namespace

ShortRangeModel ShortRangeModel::from_dispersal(int d, double u, double mu, double R)
{
    check_dimension(d);
    if (!(u > 0.0 && u <= 1.0) || !(mu > 0.0) || !(R > 0.0)) {
        throw std::invalid_argument("short range model needs 0 < u <= 1, mu > 0, R > 0");
    }
    const double vr = ball_volume(d, R);
    ShortRangeModel m;
    m.d = d;
    m.mu = mu;
    m.sigma2 = u * vr * 2.0 * R * R / (d + 2.0);
    m.prefactor = u * u * vr * vr / std::pow(2.0 * pi * m.sigma2, 0.5 * d);
    return m;
}

void ShortRangeModel::validate() const
{
    check_dimension(d);
    if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
    if (!(prefactor > 0.0)) throw std::invalid_argument("prefactor must be positive");
}

double ShortRangeModel::sigma() const { return std::sqrt(sigma2); }

double ShortRangeModel::noise_scale() const { return prefactor * std::pow(2.0 * pi * sigma2, 0.5 * d); }

double f_short(int d, double mu, double x)
{
    check_dimension(d);
    if (!(mu > 0.0)) throw std::invalid_argument("f_short needs mu > 0");
    if (!(x >= 0.0)) throw std::invalid_argument("f_short needs x >= 0");
    const double a = std::sqrt(2.0 * mu);
    const double nu = 1.0 - 0.5 * d;
    if (d == 1 && x == 0.0) return std::tgamma(nu) * std::pow(2.0, nu - 1.0) / std::pow(a, 2.0 * nu);
    if (d >= 2 && x < 1e-8) {
        throw std::domain_error("f_short diverges at the origin for d >= 2 (x = " + std::to_string(x) + ")");
    }
    return std::pow(x / a, nu) * bessel_k(nu, a * x);
}

double f_short(const ShortRangeModel& model, double x) { return f_short(model.d, model.mu, x); }

double f_short_time_integral(int d, double mu, double x)
{
    check_dimension(d);
    if (!(mu > 0.0) || !(x >= 0.0)) throw std::invalid_argument("f_short_time_integral needs mu > 0, x >= 0");
    if (d >= 2 && x < 1e-8) throw std::domain_error("time integral diverges at the origin for d >= 2");
    auto g = [&](double t) {
        if (t <= 0.0) return 0.0;
        return std::exp(-2.0 * mu * t - x * x / (4.0 * t) - 0.5 * d * std::log(4.0 * pi * t));
    };
    // the integrand peaks near the saddle of 2 mu t + x^2/(4t)
    const double split = x > 0.0 ? x / (2.0 * std::sqrt(2.0 * mu)) : 1.0 / (2.0 * mu);
    const double v = integrate_singular(g, 0.0, split, 1e-13).value + integrate_to_infinity(g, split, 1e-13).value;
    return std::pow(2.0 * pi, 0.5 * d) * v;
}

double riesz_fourier_weight(int d, double alpha)
{
    check_stable_index(d, alpha);
    // Parseval against the unit Gaussian: int |z|^{-alpha} e^{-|z|^2/2} dz
    // = (2 pi)^{-d} int gamma |xi|^{alpha-d} (2 pi)^{d/2} e^{-|xi|^2/2} dxi
    auto gauss = [](double r) { return std::exp(-0.5 * r * r); };
    const double space = power_half_line(d - alpha, gauss);
    const double freq = power_half_line(alpha, gauss);
    return std::pow(2.0 * pi, 0.5 * d) * space / freq;
}

LongRangeModel LongRangeModel::create(int d, double alpha, double u, double mu)
{
    check_stable_index(d, alpha);
    LongRangeModel m;
    m.d = d;
    m.alpha = alpha;
    m.u = u;
    m.mu = mu;
    const LongConstants k = long_constants(d, alpha);
    m.symbol_constant = k.c;
    m.riesz_constant = k.C;
    m.riesz_weight = k.gamma;
    m.validate();
    return m;
}

void LongRangeModel::validate() const
{
    check_stable_index(d, alpha);
    if (!(u > 0.0 && u <= 1.0)) throw std::invalid_argument("u must lie in (0, 1]");
    if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
    if (!(symbol_constant > 0.0) || !(riesz_constant > 0.0) || !(riesz_weight > 0.0)) {
        throw std::invalid_argument("long range constants must be positive");
    }
}

double LongRangeModel::length_scale() const { return std::pow(mu / u, 1.0 / alpha); }

QuadResult f_long_with_error(const LongRangeModel& model, double h)
{
    model.validate();
    if (!(h > 0.0)) throw std::domain_error("f_long is evaluated at h > 0 only");
    const double w = model.riesz_constant * model.riesz_weight;
    const double c = model.symbol_constant;
    const double a = model.alpha;
    const int d = model.d;
    auto q = [=](double xi) { return w / (2.0 + 2.0 * c * std::pow(xi, a)); };
    return radial_fourier_inverse_power(d, a, q, h, std::numeric_limits<double>::infinity(), 1e-10);
}

double f_long(const LongRangeModel& model, double h) { return f_long_with_error(model, h).value; }

McEstimate f_long_mc(const LongRangeModel& model, double h, std::size_t samples, Rng& rng)
{
    model.validate();
    if (!(h > 0.0)) throw std::domain_error("f_long_mc needs h > 0");
    if (samples < 2) throw std::invalid_argument("f_long_mc needs at least two samples");
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        // F = int e^{-2t} E[K(x - y + W1 - W2)] dt = E_{t ~ Exp(2)}[K(...)] / 2
        const double t = rng.exponential(2.0);
        const double scale = std::pow(t * model.symbol_constant, 1.0 / model.alpha);
        const Point z1 = isotropic_stable(rng, model.d, model.alpha, scale);
        const Point z2 = isotropic_stable(rng, model.d, model.alpha, scale);
        Point v{h + z1[0] - z2[0], z1[1] - z2[1], z1[2] - z2[2]};
        const double y = 0.5 * model.riesz_constant * std::pow(norm(v), -model.alpha);
        const double delta = y - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (y - mean);
    }
    const double n = static_cast<double>(samples);
    return {mean, std::sqrt(m2 / (n - 1.0) / n), samples};
}

double overlap(const SpatialProfile& g1, const SpatialProfile& g2, const Point& s)
{
    if (g1.dim() != g2.dim()) throw std::invalid_argument("profiles live in different dimensions");
    const int d = g1.dim();
    if (!gaussian_kind(g1) || !gaussian_kind(g2)) {
        if (d != 1) throw std::invalid_argument("custom profiles are supported in overlaps only for d = 1");
        const double lo = std::max(g1.center()[0] - g1.extent(), g2.center()[0] - s[0] - g2.extent());
        const double hi = std::min(g1.center()[0] + g1.extent(), g2.center()[0] - s[0] + g2.extent());
        if (lo >= hi) return 0.0;
        auto f = [&](double x) { return g1(Point{x, 0.0, 0.0}) * g2(Point{x + s[0], 0.0, 0.0}); };
        return integrate_smooth(f, lo, hi, 1e-10).value;
    }
    // product of two Gaussians in x: g2 shifted to centre c2 - s
    const double s1 = g1.width() * g1.width(), s2 = g2.width() * g2.width();
    const double big = s1 + s2;
    const double tau2 = s1 * s2 / big;
    double q = 0.0;
    for (int a = 0; a < d; ++a) {
        const double diff = g1.center()[a] - (g2.center()[a] - s[a]);
        q += diff * diff;
    }
    double value = g1.amplitude() * g2.amplitude() * std::exp(-q / (2.0 * big)) * std::pow(2.0 * pi * tau2, 0.5 * d);
    const double c1 = g1.center()[0], c2 = g2.center()[0] - s[0];
    const double mean = (s2 * c1 + s1 * c2) / big;
    const bool odd1 = g1.kind() == SpatialProfile::Kind::OddGaussian;
    const bool odd2 = g2.kind() == SpatialProfile::Kind::OddGaussian;
    const double m1 = (mean - c1) / g1.width(), m2 = (mean - c2) / g2.width();
    if (odd1 && odd2) value *= m1 * m2 + tau2 / (g1.width() * g2.width());
    else if (odd1) value *= m1;
    else if (odd2) value *= m2;
    return value;
}

double radial_overlap(const SpatialProfile& g1, const SpatialProfile& g2, double rho)
{
    check_pair(g1, g2);
    const int d = g1.dim();
    if (!(rho >= 0.0)) throw std::invalid_argument("radial_overlap needs rho >= 0");
    if (d == 1) return overlap(g1, g2, {rho, 0.0, 0.0}) + overlap(g1, g2, {-rho, 0.0, 0.0});
    const Point m = center_offset(g1, g2);
    const double mn = norm(m);
    const double S2 = g1.width() * g1.width() + g2.width() * g2.width();
    const double kappa = rho * mn / S2;
    if (g1.kind() == SpatialProfile::Kind::Gaussian && g2.kind() == SpatialProfile::Kind::Gaussian) {
        const double tau2 = g1.width() * g1.width() * g2.width() * g2.width() / S2;
        const double base = g1.amplitude() * g2.amplitude() * std::pow(2.0 * pi * tau2, 0.5 * d) *
                            std::exp(-(rho - mn) * (rho - mn) / (2.0 * S2));
        return d == 2 ? base * 2.0 * pi * scaled_i0(kappa) : base * 4.0 * pi * scaled_sinhc(kappa);
    }
    if (rho == 0.0) return sphere_area(d) * overlap(g1, g2, {0.0, 0.0, 0.0});
    if (d == 2) {
        const double theta0 = mn > 0.0 ? std::atan2(m[1], m[0]) : 0.0;
        auto f = [&](double th) { return overlap(g1, g2, {rho * std::cos(th), rho * std::sin(th), 0.0}); };
        return integrate_smooth(f, theta0 - pi, theta0, 1e-10).value + integrate_smooth(f, theta0, theta0 + pi, 1e-10).value;
    }
    // d = 3: pole along m; the azimuthal dependence is a trigonometric polynomial of degree <= 2
    Point e3 = mn > 0.0 ? Point{m[0] / mn, m[1] / mn, m[2] / mn} : Point{0.0, 0.0, 1.0};
    Point e1 = std::abs(e3[0]) < 0.9 ? Point{1.0, 0.0, 0.0} : Point{0.0, 1.0, 0.0};
    const double dot = e1[0] * e3[0] + e1[1] * e3[1] + e1[2] * e3[2];
    for (int a = 0; a < 3; ++a) e1[a] -= dot * e3[a];
    const double n1 = norm(e1);
    for (int a = 0; a < 3; ++a) e1[a] /= n1;
    const Point e2{e3[1] * e1[2] - e3[2] * e1[1], e3[2] * e1[0] - e3[0] * e1[2], e3[0] * e1[1] - e3[1] * e1[0]};
    constexpr int azimuths = 8;
    auto f = [&](double u) {
        const double w = std::sqrt(std::max(0.0, 1.0 - u * u));
        double sum = 0.0;
        for (int j = 0; j < azimuths; ++j) {
            const double ph = 2.0 * pi * j / azimuths;
            const double a = w * std::cos(ph), b = w * std::sin(ph);
            Point s{};
            for (int k = 0; k < 3; ++k) s[k] = rho * (a * e1[k] + b * e2[k] + u * e3[k]);
            sum += overlap(g1, g2, s);
        }
        return 2.0 * pi * sum / azimuths;
    };
    // the mass concentrates near u = 1 on a scale 1/kappa
    const double cut = std::max(-1.0, 1.0 - std::min(2.0, 30.0 / std::max(kappa, 1e-300)));
    double total = integrate_smooth(f, cut, 1.0, 1e-10).value;
    if (cut > -1.0) total += integrate_smooth(f, -1.0, cut, 1e-10).value;
    return total;
}

double pair_integral(const RealFn& kernel, const SpatialProfile& g1, const SpatialProfile& g2, double reach,
                     double rel_tol)
{
    check_pair(g1, g2);
    const int d = g1.dim();
    const double mn = norm(center_offset(g1, g2));
    double spread;
    if (gaussian_kind(g1) && gaussian_kind(g2)) {
        spread = 12.0 * std::sqrt(g1.width() * g1.width() + g2.width() * g2.width());
    } else {
        spread = g1.extent() + g2.extent();
    }
    const double lo = std::max(0.0, mn - spread);
    const double hi = std::min(mn + spread, reach);
    if (!(hi > lo)) return 0.0;
    const double floor = 1e-250 * hi;
    auto f = [&](double rho) {
        if (rho < floor) return 0.0;
        const double a = radial_overlap(g1, g2, rho);
        if (a == 0.0) return 0.0;
        return kernel(rho) * std::pow(rho, d - 1) * a;
    };
    std::vector<double> cuts{lo};
    if (mn > lo && mn < hi) cuts.push_back(mn);
    cuts.push_back(hi);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        if (cuts[i] == 0.0) total += integrate_singular(f, cuts[i], cuts[i + 1], rel_tol).value;
        else total += integrate_smooth(f, cuts[i], cuts[i + 1], rel_tol).value;
    }
    return total;
}

double wm_rhs_short(const ShortRangeModel& model, const SpatialProfile& phi, const SpatialProfile& psi)
{
    model.validate();
    if (phi.dim() != model.d) throw std::invalid_argument("profile dimension differs from the model");
    const double sigma = model.sigma();
    const double a = std::sqrt(2.0 * model.mu);
    const double nu = 1.0 - 0.5 * model.d;
    // the Bessel form directly: inside the integral the origin singularity is integrable
    auto k = [&](double r) {
        const double x = r / sigma;
        return model.prefactor * std::pow(x / a, nu) * std::cyl_bessel_k(std::abs(nu), a * x);
    };
    return pair_integral(k, phi, psi);
}

double wm_rhs_long(const LongRangeModel& model, const SpatialProfile& phi, const SpatialProfile& psi)
{
    model.validate();
    if (phi.dim() != model.d) throw std::invalid_argument("profile dimension differs from the model");
    const double lambda = model.length_scale();
    // below 1e-9 the logarithmic singularity contributes O(1e-8) and is held constant
    auto k = [&](double r) { return model.u * f_long(model, std::max(lambda * r, 1e-9)); };
    return pair_integral(k, phi, psi, std::numeric_limits<double>::infinity(), 1e-8);
}

double TypeCoupling::factor() const { return diagonal ? 1.0 : type_factor(first, second); }

namespace {

// int_0^T e^{-2 mu t} I(t) dt over geometric segments, with the neglected tail bounded by
// sup|I| e^{-2 mu T} / (2 mu).
CovarianceValue time_route(double mu, double sup_bound, const std::function<double(double)>& inner, double rel_tol)
{
    const double horizon = std::log(1e12) / (2.0 * mu);
    std::vector<double> cuts{0.0};
    for (double t = horizon / 1024.0; t < horizon; t *= 4.0) cuts.push_back(t);
    cuts.push_back(horizon);
    auto g = [&](double t) { return std::exp(-2.0 * mu * t) * inner(t); };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        total += integrate_smooth(g, cuts[i], cuts[i + 1], rel_tol).value;
    }
    return {total, sup_bound * std::exp(-2.0 * mu * horizon) / (2.0 * mu)};
}

}  // namespace

CovarianceValue stationary_covariance(const ShortRangeModel& model, const SpatialProfile& phi,
                                      const SpatialProfile& psi, const TypeCoupling& types)
{
    model.validate();
    check_pair(phi, psi);
    const double factor = types.factor();
    if (factor == 0.0) return {0.0, 0.0};
    const double noise = model.noise_scale();
    auto inner = [&](double t) {
        const GaussianKernelSpec spec{model.sigma2, 2.0 * t, model.d};
        const double reach = 40.0 * std::sqrt(2.0 * t * model.sigma2);
        return pair_integral([&](double r) { return gaussian_kernel(spec, r); }, phi, psi, reach);
    };
    const double sup = gaussian_kind(phi) && gaussian_kind(psi) ? sup_norm(phi) * l1_norm(psi) : 0.0;
    CovarianceValue v = time_route(model.mu, sup, inner, 1e-9);
    return {noise * factor * v.value, std::abs(noise * factor) * v.truncation_bound};
}

CovarianceValue stationary_covariance(const LongRangeModel& model, const SpatialProfile& phi,
                                      const SpatialProfile& psi, const TypeCoupling& types)
{
    model.validate();
    check_pair(phi, psi);
    const double factor = types.factor();
    if (factor == 0.0) return {0.0, 0.0};
    const double w = model.riesz_constant * model.riesz_weight;
    const int d = model.d;
    // (G_{2ut} * K_alpha)(r) by radial Fourier inversion of its damped multiplier
    auto inner = [&](double t) {
        const double damp = 2.0 * model.u * t * model.symbol_constant;
        auto q = [=](double xi) { return w * std::exp(-damp * std::pow(xi, model.alpha)); };
        const double cutoff = std::pow(30.0 / damp, 1.0 / model.alpha);
        auto k = [&](double r) { return radial_fourier_inverse_power(d, model.alpha, q, r, cutoff, 1e-9).value; };
        return pair_integral(k, phi, psi, std::numeric_limits<double>::infinity(), 1e-8);
    };
    // |I(t)| <= C (r^{-alpha} |phi|_1 |psi|_1 + |phi|_inf |psi|_1 S_d r^{d-alpha}/(d-alpha)) for any r > 0
    double sup = 0.0;
    if (gaussian_kind(phi) && gaussian_kind(psi)) {
        const double r = std::max(phi.width(), psi.width());
        sup = model.riesz_constant * (std::pow(r, -model.alpha) * l1_norm(phi) * l1_norm(psi) +
                                      sup_norm(phi) * l1_norm(psi) * sphere_area(d) *
                                          std::pow(r, d - model.alpha) / (d - model.alpha));
    }
    CovarianceValue v = time_route(model.mu, sup, inner, 1e-7);
    const double scale = model.u * model.u * factor;
    return {scale * v.value, std::abs(scale) * v.truncation_bound};
}

double noise_covariance_fixed(const SpatialProfile& phi, const SpatialProfile& psi, const TypeCoupling& types)
{
    const double factor = types.factor();
    if (factor == 0.0) return 0.0;
    return factor * overlap(phi, psi, {0.0, 0.0, 0.0});
}

double noise_covariance_stable(int d, double alpha, double riesz_constant, const SpatialProfile& phi,
                               const SpatialProfile& psi, const TypeCoupling& types)
{
    check_stable_index(d, alpha);
    if (phi.dim() != d) throw std::invalid_argument("profile dimension differs from the model");
    const double factor = types.factor();
    if (factor == 0.0) return 0.0;
    return factor * pair_integral([&](double r) { return riesz_constant * std::pow(r, -alpha); }, phi, psi);
}

void write_f_table(std::ostream& out, const std::vector<FValueRow>& rows)
{
    out << "h,F_value,method,est_error\n";
    out.precision(12);
    for (const auto& r : rows) {
        if (!r.error.empty()) {
            std::string msg = r.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            out << r.h << ",,error: " << msg << ",\n";
            continue;
        }
        out << r.h << ',' << r.value << ',' << r.method << ',' << r.est_error << '\n';
    }
}

}  // namespace slfv
