#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "slfv/geometry.hpp"
#include "slfv/kernels.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>

using namespace slfv;
using boost::math::quadrature::gauss_kronrod;
constexpr double pi = std::numbers::pi;

namespace {

// Trapezoid rule on the integral representation; the integrand decays doubly
// exponentially so the rule converges geometrically.
double k_by_integral(double nu, double x)
{
    const double step = 1e-3;
    double sum = 0.5 * std::exp(-x);
    for (int i = 1;; ++i) {
        const double s = i * step;
        const double term = std::exp(-x * std::cosh(s)) * std::cosh(nu * s);
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum * step;
}

}  // namespace

TEST_CASE("power-weighted quadrature against the incomplete gamma function")
{
    for (double p : {0.02, 0.3, 1.0, 1.98, 3.5}) {
        const double v = integrate_power([](double x) { return std::exp(-x); }, p, 2.0).value;
        CHECK(v == doctest::Approx(boost::math::tgamma_lower(p, 2.0)).epsilon(1e-11));
    }
}

TEST_CASE("bessel K against the integral representation")
{
    CHECK(bessel_k(0.5, 1.0) == doctest::Approx(std::sqrt(pi / 2) * std::exp(-1.0)).epsilon(1e-12));
    CHECK(k_by_integral(0.5, 1.0) == doctest::Approx(0.4610685).epsilon(1e-7));
    CHECK(bessel_k(0.0, 1.0) == doctest::Approx(k_by_integral(0.0, 1.0)).epsilon(1e-12));
    for (double nu : {-2.0, -1.3, -0.5, 0.0, 0.25, 1.0, 2.0}) {
        for (double x : {0.01, 0.3, 1.0, 4.0, 25.0}) {
            CHECK(bessel_k(nu, x) == doctest::Approx(k_by_integral(nu, x)).epsilon(1e-10));
            CHECK(bessel_k(nu, x) == doctest::Approx(bessel_k(-nu, x)).epsilon(1e-15));
        }
    }
    CHECK_THROWS(bessel_k(0.0, 0.0));
    CHECK_THROWS_AS(bessel_k(0.0, 1e-310), std::overflow_error);
}

TEST_CASE("bessel K positive and decreasing; half-order closed form")
{
    for (double nu : {0.0, 0.5, 1.5}) {
        double last = bessel_k(nu, 0.05);
        for (double x = 0.1; x < 30; x += 0.1) {
            const double v = bessel_k(nu, x);
            CHECK(v > 0);
            CHECK(v < last);
            last = v;
        }
    }
    for (double mu : {0.1, 0.5, 2.0}) {
        const double a = std::sqrt(2 * mu);
        for (double x : {0.1, 0.7, 2.0, 9.0}) {
            CHECK(std::sqrt(x / a) * bessel_k(0.5, a * x) ==
                  doctest::Approx(std::sqrt(pi / 2) * std::exp(-a * x) / a).epsilon(1e-12));
        }
    }
}

TEST_CASE("gaussian kernel")
{
    CHECK(gaussian_kernel({1.0, 1.0, 1}, 0.0) == doctest::Approx(0.3989423).epsilon(1e-7));
    for (int d = 1; d <= 3; ++d) {
        GaussianKernelSpec g{0.7, 1.9, d};
        const double area = d == 1 ? 2.0 : d == 2 ? 2 * pi : 4 * pi;
        auto radial = [&](double r) { return area * std::pow(r, d - 1) * gaussian_kernel(g, r); };
        CHECK(gauss_kronrod<double, 61>::integrate(radial, 0.0, 60.0, 15, 1e-13) == doctest::Approx(1.0).epsilon(1e-8));
    }
    // semigroup: numerical convolution in d=1 at sampled points
    const double s2 = 1.3, t = 0.4, s = 0.9;
    for (double x : {0.0, 0.5, 1.1, 2.0, 3.7}) {
        auto conv = [&](double y) { return gaussian_kernel({s2, t, 1}, x - y) * gaussian_kernel({s2, s, 1}, y); };
        const double v = gauss_kronrod<double, 61>::integrate(conv, -30.0, 30.0, 15, 1e-13);
        CHECK(v == doctest::Approx(gaussian_kernel({s2, t + s, 1}, x)).epsilon(1e-6));
    }
}

TEST_CASE("symbol constant: positivity, frequency scaling, closed form in d=1")
{
    struct Case {
        int d;
        double alpha;
    };
    for (Case c : {Case{1, 0.3}, Case{1, 0.5}, Case{2, 1.0}, Case{2, 1.5}, Case{3, 0.7}, Case{3, 1.8}}) {
        const double cda = stable_symbol_constant(c.d, c.alpha);
        CHECK(cda > 0);
        CHECK(stable_symbol(c.d, c.alpha, 2.0) == doctest::Approx(std::pow(2.0, c.alpha) * cda).epsilon(1e-6));
        CHECK(stable_symbol(c.d, c.alpha, 0.3) == doctest::Approx(std::pow(0.3, c.alpha) * cda).epsilon(1e-6));
    }
    for (double a : {0.02, 0.3, 0.5, 0.8, 0.98}) {
        // integral of rho^{-1-a}(1 - cos rho) over (0, inf) = -Gamma(-a) cos(pi a / 2)
        const double closed = 2 * phi_kernel(1.0, 1, a) * (-std::tgamma(-a) * std::cos(pi * a / 2));
        CHECK(stable_symbol_constant(1, a) == doctest::Approx(closed).epsilon(1e-9));
    }
}

TEST_CASE("stable kernel: Cauchy oracle points")
{
    StableKernelSpec cauchy{1, 1.0, 1.0, 1.0};
    CHECK(stable_kernel_with_error(cauchy, 0.0).value == doctest::Approx(1 / pi).epsilon(1e-10));
    for (double h : {0.5, 1.0, 3.0, 10.0}) {
        CHECK(stable_kernel_with_error(cauchy, h).value == doctest::Approx(1 / (pi * (1 + h * h))).epsilon(1e-8));
    }
    CHECK_THROWS(stable_kernel(cauchy, 1.0));  // alpha = d is not a model value

    // d=2, alpha=1 against a direct 2D Riemann sum of the inverse Fourier integral
    StableKernelSpec s2{2, 1.0, 0.8, 1.0};
    const double step = 0.02, top = 40.0;
    const int n = static_cast<int>(top / step);
    for (double h : {0.0, 0.7, 1.5}) {
        double sum = 0;
        for (int i = -n; i <= n; ++i) {
            const double a = i * step;
            for (int j = -n; j <= n; ++j) {
                const double b = j * step;
                sum += std::cos(a * h) * std::exp(-0.8 * std::sqrt(a * a + b * b));
            }
        }
        const double grid = sum * step * step / (4 * pi * pi);
        CHECK(stable_kernel(s2, h) == doctest::Approx(grid).epsilon(1e-5));
        // Poisson kernel closed form for the same point
        CHECK(stable_kernel(s2, h) == doctest::Approx(0.8 / (2 * pi * std::pow(0.64 + h * h, 1.5))).epsilon(1e-8));
    }
}

TEST_CASE("stable kernel: scaling, sign and monotonicity")
{
    struct Case {
        int d;
        double alpha;
    };
    for (Case c : {Case{1, 0.5}, Case{2, 1.2}, Case{3, 1.5}}) {
        const double cda = stable_symbol_constant(c.d, c.alpha);
        int points = 0;
        for (double t : {0.3, 1.0, 2.5, 4.0}) {
            for (double x : {0.0, 0.4, 1.0, 2.2, 5.0}) {
                for (double lam : {2.0}) {
                    const double lhs = stable_kernel({c.d, c.alpha, cda, t}, x);
                    const double rhs = std::pow(lam, -c.d / c.alpha) *
                                       stable_kernel({c.d, c.alpha, cda, t / lam}, std::pow(lam, -1 / c.alpha) * x);
                    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
                    ++points;
                }
            }
        }
        CHECK(points >= 20);
        double last = stable_kernel({c.d, c.alpha, cda, 1.0}, 0.0);
        for (double h = 0.25; h < 30; h *= 1.5) {
            const double v = stable_kernel({c.d, c.alpha, cda, 1.0}, h);
            CHECK(v > -1e-6);
            CHECK(v < last);
            last = v;
        }
    }
}

TEST_CASE("stable kernel integrates to one")
{
    struct Case {
        int d;
        double alpha;
        double far;
    };
    for (Case c : {Case{1, 0.5, 2e3}, Case{2, 1.5, 400.0}, Case{3, 1.5, 400.0}}) {
        const double cda = stable_symbol_constant(c.d, c.alpha);
        StableKernelSpec spec{c.d, c.alpha, cda, 1.0};
        const double area = c.d == 1 ? 2.0 : c.d == 2 ? 2 * pi : 4 * pi;
        const double lo = 1e-4;
        auto in_log = [&](double s) {
            const double h = std::exp(s);
            return area * stable_kernel(spec, h) * std::pow(h, c.d);
        };
        double mass = gauss_kronrod<double, 31>::integrate(in_log, std::log(lo), std::log(c.far), 12, 1e-9);
        mass += area * stable_kernel(spec, 0.0) * std::pow(lo, c.d) / c.d;
        if (c.d == 1) {
            // far-field series of the d=1 kernel: sum_n (-1)^{n+1} a_n h^{-1-n alpha},
            // a_n = (tc)^n Gamma(n alpha + 1) sin(pi n alpha / 2) / (pi n!)
            double fact = 1;
            for (int n = 1; n <= 3; ++n) {
                fact *= n;
                const double an = std::pow(cda, n) * std::tgamma(n * c.alpha + 1) * std::sin(pi * n * c.alpha / 2) / (pi * fact);
                const double sign = n % 2 == 1 ? 1.0 : -1.0;
                mass += sign * area * an * std::pow(c.far, -n * c.alpha) / (n * c.alpha);
            }
        } else {
            // leading far-field term: the jump intensity, G_t(h) ~ t Phi(h)
            mass += area * phi_kernel(1.0, c.d, c.alpha) * std::pow(c.far, -c.alpha) / c.alpha;
        }
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
    }
}
