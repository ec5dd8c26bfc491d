#include "slfv/kernels.hpp"
#include "slfv/geometry.hpp"

#include <boost/math/special_functions/bessel.hpp>

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace slfv {

namespace {

constexpr double pi = std::numbers::pi;

double sphere_area(int d)
{
    switch (d) {
    case 1: return 2.0;
    case 2: return 2.0 * pi;
    default: return 4.0 * pi;
    }
}

// Positive zeros of J_0, cached.
double j0_zero(int k)
{
    static std::mutex lock;
    static std::vector<double> zeros;
    std::lock_guard<std::mutex> guard(lock);
    while (static_cast<int>(zeros.size()) < k) {
        zeros.push_back(boost::math::cyl_bessel_j_zero(0.0, static_cast<int>(zeros.size()) + 1));
    }
    return zeros[k - 1];
}

// Break points of the radial oscillating factor at unit frequency scale 1/h:
// zeros of cos (d=1), J_0 (d=2) and sin (d=3).
double radial_break(int d, int k, double h)
{
    switch (d) {
    case 1: return (k + 0.5) * pi / h;
    case 2: return j0_zero(k + 1) / h;
    default: return (k + 1) * pi / h;
    }
}

double radial_factor(int d, double s)
{
    switch (d) {
    case 1: return std::cos(s);
    case 2: return boost::math::cyl_bessel_j(0, s);
    default: return s == 0.0 ? 1.0 : std::sin(s) / s;
    }
}

// 1 - radial_factor(d, s), accurate for small s.
double one_minus_radial(int d, double s)
{
    if (s < 1e-3) {
        const double s2 = s * s;
        const double c = d == 1 ? 0.5 : d == 2 ? 0.25 : 1.0 / 6.0;
        const double c2 = d == 1 ? 1.0 / 24.0 : d == 2 ? 1.0 / 64.0 : 1.0 / 120.0;
        return c * s2 - c2 * s2 * s2;
    }
    if (d == 1) {
        const double h = std::sin(0.5 * s);
        return 2.0 * h * h;
    }
    return 1.0 - radial_factor(d, s);
}

}  // namespace

double bessel_k(double nu, double x)
{
    if (!(x > 0.0)) throw std::invalid_argument("bessel_k needs x > 0");
    if (x < 1e-300) throw std::overflow_error("bessel_k: argument too small, result overflows");
    return std::cyl_bessel_k(std::abs(nu), x);
}

double gaussian_kernel(const GaussianKernelSpec& spec, double x)
{
    check_dimension(spec.d);
    if (!(spec.sigma2 > 0.0) || !(spec.t > 0.0)) throw std::invalid_argument("gaussian kernel needs sigma2 > 0, t > 0");
    const double v = spec.sigma2 * spec.t;
    return std::pow(2.0 * pi * v, -0.5 * spec.d) * std::exp(-x * x / (2.0 * v));
}

double stable_symbol(int d, double alpha, double xi)
{
    check_stable_index(d, alpha);
    if (!(xi > 0.0)) throw std::invalid_argument("stable_symbol needs xi > 0");
    // Phi(rho) = Phi(1) rho^{-d-alpha}; in polar form the angular average of
    // 1 - cos(xi e.z) over the sphere of radius rho is S_d (1 - radial_factor(xi rho)).
    const double phi1 = phi_kernel(1.0, d, alpha);
    const double area = sphere_area(d);
    // rho^{-1-alpha} (1 - radial) = rho^{1-alpha} (1 - radial)/rho^2
    auto near = [&](double rho) {
        if (rho < 1e-100) return (d == 1 ? 0.5 : d == 2 ? 0.25 : 1.0 / 6.0) * xi * xi;
        return one_minus_radial(d, xi * rho) / (rho * rho);
    };
    const double b0 = radial_break(d, 0, xi);
    const double head = integrate_power(near, 2.0 - alpha, b0, 1e-13).value;
    // beyond b0: the constant part analytically, the oscillating part by extrapolation
    auto osc = [&](double rho) { return std::pow(rho, -1.0 - alpha) * radial_factor(d, xi * rho); };
    OscillatoryOptions opt;
    opt.start = b0;
    opt.breaks = [&](int k) { return radial_break(d, k + 1, xi); };
    opt.rel_tol = 1e-12;
    const double tail = std::pow(b0, -alpha) / alpha - integrate_oscillatory(osc, opt).value;
    return phi1 * area * (head + tail);
}

double stable_symbol_constant(int d, double alpha) { return stable_symbol(d, alpha, 1.0); }

QuadResult radial_fourier_inverse(int d, const RealFn& multiplier, double h, double cutoff, double rel_tol)
{
    check_dimension(d);
    if (!(h >= 0.0)) throw std::invalid_argument("radial_fourier_inverse needs h >= 0");
    const double norm = std::pow(2.0 * pi, -d) * sphere_area(d);
    if (h == 0.0) {
        auto g = [&](double xi) { return multiplier(xi) * std::pow(xi, d - 1); };
        QuadResult r = std::isfinite(cutoff) ? integrate_singular(g, 0.0, cutoff, 1e-12) : integrate_to_infinity(g, 0.0, 1e-12);
        return {norm * r.value, norm * r.error};
    }
    auto g = [&](double xi) { return multiplier(xi) * std::pow(xi, d - 1) * radial_factor(d, xi * h); };
    OscillatoryOptions opt;
    opt.breaks = [&](int k) { return radial_break(d, k, h); };
    opt.cutoff = cutoff;
    opt.rel_tol = rel_tol;
    opt.abs_tol = 1e-15;
    QuadResult r = integrate_oscillatory(g, opt);
    return {norm * r.value, norm * r.error};
}

QuadResult radial_fourier_inverse_power(int d, double p, const RealFn& regular, double h, double cutoff, double rel_tol)
{
    check_dimension(d);
    if (!(h >= 0.0)) throw std::invalid_argument("radial_fourier_inverse needs h >= 0");
    if (!(p > 0.0)) throw std::invalid_argument("radial_fourier_inverse_power needs p > 0");
    const double norm = std::pow(2.0 * pi, -d) * sphere_area(d);
    if (h == 0.0) {
        if (std::isfinite(cutoff)) {
            const QuadResult r = integrate_power(regular, p, cutoff, 1e-12);
            return {norm * r.value, norm * r.error};
        }
        const QuadResult a = integrate_power(regular, p, 1.0, 1e-12);
        const QuadResult b =
            integrate_to_infinity([&](double xi) { return std::pow(xi, p - 1.0) * regular(xi); }, 1.0, 1e-12);
        return {norm * (a.value + b.value), norm * (a.error + b.error)};
    }
    const double b0 = radial_break(d, 0, h);
    auto head_fn = [&](double xi) { return regular(xi) * radial_factor(d, xi * h); };
    if (cutoff <= b0) {
        const QuadResult r = integrate_power(head_fn, p, cutoff, 1e-12);
        return {norm * r.value, norm * r.error};
    }
    const QuadResult head = integrate_power(head_fn, p, b0, 1e-12);
    auto g = [&](double xi) { return regular(xi) * std::pow(xi, p - 1.0) * radial_factor(d, xi * h); };
    OscillatoryOptions opt;
    opt.start = b0;
    opt.breaks = [&](int k) { return radial_break(d, k + 1, h); };
    opt.cutoff = cutoff;
    opt.rel_tol = rel_tol;
    opt.abs_tol = 1e-15;
    const QuadResult tail = integrate_oscillatory(g, opt);
    return {norm * (head.value + tail.value), norm * (head.error + tail.error)};
}

double stable_frequency_cutoff(const StableKernelSpec& spec)
{
    return std::pow(12.0 * std::log(10.0) / (spec.t * spec.symbol_constant), 1.0 / spec.alpha);
}

QuadResult stable_kernel_with_error(const StableKernelSpec& spec, double h)
{
    check_dimension(spec.d);
    // alpha outside (0, min(d,2)) is not a valid model, but the inversion itself
    // is well defined for 0 < alpha <= 2 and serves as an oracle point.
    if (!(spec.alpha > 0.0 && spec.alpha <= 2.0)) throw std::invalid_argument("stable kernel needs 0 < alpha <= 2");
    if (!(spec.t > 0.0) || !(spec.symbol_constant > 0.0)) throw std::invalid_argument("stable kernel needs t > 0, c > 0");
    const double tc = spec.t * spec.symbol_constant;
    auto m = [&](double xi) { return std::exp(-tc * std::pow(xi, spec.alpha)); };
    return radial_fourier_inverse(spec.d, m, h, stable_frequency_cutoff(spec));
}

double stable_kernel(const StableKernelSpec& spec, double h)
{
    check_stable_index(spec.d, spec.alpha);
    return stable_kernel_with_error(spec, h).value;
}

}  // namespace slfv
