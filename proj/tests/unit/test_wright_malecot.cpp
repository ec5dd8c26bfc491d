#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "slfv/kernels.hpp"
#include "slfv/wright_malecot.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace slfv;

namespace {

constexpr double pi = std::numbers::pi;

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// int int G_v(x - y) g1(x) g2(y) for unit-amplitude Gaussians: N(m; 0, T) times both masses.
double gaussian_pair_oracle(int d, double s1, double s2, double v, double m2)
{
    const double T = s1 * s1 + s2 * s2 + v;
    return std::pow(2.0 * pi * s1 * s1, 0.5 * d) * std::pow(2.0 * pi * s2 * s2, 0.5 * d) *
           std::pow(2.0 * pi * T, -0.5 * d) * std::exp(-m2 / (2.0 * T));
}

}  // namespace

TEST_CASE("f_short closed forms and Bessel form")
{
    for (double x : {0.05, 0.3, 1.0, 2.5, 7.0, 15.0}) {
        CHECK(rel(f_short(1, 0.5, x), std::sqrt(pi / 2.0) * std::exp(-x)) < 1e-10);
        CHECK(rel(f_short(3, 0.5, x), std::sqrt(pi / 2.0) * std::exp(-x) / x) < 1e-10);
        for (double mu : {0.1, 2.0}) {
            const double a = std::sqrt(2.0 * mu);
            CHECK(rel(f_short(2, mu, x), std::cyl_bessel_k(0.0, a * x)) < 1e-12);
            CHECK(rel(f_short(1, mu, x), std::sqrt(pi / 2.0) / a * std::exp(-a * x)) < 1e-10);
        }
    }
    CHECK(rel(f_short(1, 0.5, 0.0), std::sqrt(pi / 2.0)) < 1e-12);
    CHECK_THROWS_AS(f_short(2, 0.5, 1e-9), std::domain_error);
    CHECK_THROWS_AS(f_short(3, 0.5, 0.0), std::domain_error);
    CHECK_THROWS_AS(f_short(2, 0.5, -1.0), std::invalid_argument);
}

TEST_CASE("time-integral representation matches the Bessel form")
{
    for (int d = 1; d <= 3; ++d) {
        for (double mu : {0.1, 0.5, 2.0}) {
            for (double x : {0.1, 0.3, 1.0, 3.0, 10.0}) {
                CHECK_MESSAGE(rel(f_short_time_integral(d, mu, x), f_short(d, mu, x)) < 1e-6,
                              "d=" << d << " mu=" << mu << " x=" << x);
            }
        }
    }
}

TEST_CASE("short range model parameters")
{
    const ShortRangeModel m = ShortRangeModel::from_dispersal(1, 0.8, 0.5, 1.0);
    CHECK(rel(m.sigma2, 0.8 * 2.0 * 2.0 / 3.0) < 1e-14);
    CHECK(rel(m.prefactor, 0.64 * 4.0 / std::sqrt(2.0 * pi * m.sigma2)) < 1e-14);
    CHECK(rel(m.noise_scale(), 0.64 * 4.0) < 1e-14);
    const ShortRangeModel m2 = ShortRangeModel::from_dispersal(2, 0.5, 0.5, 2.0);
    CHECK(rel(m2.sigma2, 0.5 * pi * 4.0 * 2.0 * 4.0 / 4.0) < 1e-14);
    CHECK_THROWS(ShortRangeModel::from_dispersal(1, 1.5, 0.5, 1.0));
    ShortRangeModel bad = m;
    bad.sigma2 = 0.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("Riesz Fourier weight agrees with the Gamma-function form")
{
    struct Case {
        int d;
        double alpha;
    };
    for (Case c : {Case{1, 0.5}, Case{1, 0.2}, Case{2, 0.7}, Case{2, 1.5}, Case{3, 1.2}, Case{1, 0.02}, Case{1, 0.98},
                    Case{2, 1.98}, Case{3, 0.02}}) {
        const double expected = std::pow(pi, 0.5 * c.d) * std::pow(2.0, c.d - c.alpha) *
                                std::tgamma(0.5 * (c.d - c.alpha)) / std::tgamma(0.5 * c.alpha);
        CHECK(rel(riesz_fourier_weight(c.d, c.alpha), expected) < 1e-10);
    }
    CHECK(rel(riesz_fourier_weight(1, 0.5), std::sqrt(2.0 * pi)) < 1e-10);
}

TEST_CASE("f_long is positive and decreasing")
{
    for (auto [d, alpha] : {std::pair{1, 0.5}, std::pair{2, 1.0}, std::pair{3, 1.5}}) {
        const LongRangeModel m = LongRangeModel::create(d, alpha, 0.8, 0.5);
        double prev = std::numeric_limits<double>::infinity();
        for (double h : {0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
            const double v = f_long(m, h);
            CHECK(v > 0.0);
            CHECK(v < prev);
            prev = v;
        }
    }
    const LongRangeModel m = LongRangeModel::create(1, 0.5, 0.8, 0.5);
    CHECK_THROWS_AS(f_long(m, 0.0), std::domain_error);
    CHECK_THROWS(LongRangeModel::create(1, 1.0, 0.8, 0.5));
}

TEST_CASE("f_long Fourier route agrees with the Monte Carlo route")
{
    const LongRangeModel m = LongRangeModel::create(1, 0.5, 0.8, 0.5);
    Rng rng(20240611);
    for (double h : {0.5, 1.0, 2.0}) {
        const QuadResult f = f_long_with_error(m, h);
        const McEstimate mc = f_long_mc(m, h, 2'000'000, rng);
        MESSAGE("h=" << h << " fourier=" << f.value << " mc=" << mc.mean << " se=" << mc.std_error);
        CHECK(std::abs(f.value - mc.mean) <= 3.0 * mc.std_error);
        CHECK(f.error < 1e-6 * f.value);
    }
}

TEST_CASE("f_long Monte Carlo agreement in two dimensions")
{
    const LongRangeModel m = LongRangeModel::create(2, 1.0, 0.8, 0.5);
    Rng rng(77);
    for (double h : {0.5, 2.0}) {
        const McEstimate mc = f_long_mc(m, h, 1'000'000, rng);
        CHECK(std::abs(f_long(m, h) - mc.mean) <= 3.0 * mc.std_error);
    }
}

TEST_CASE("f_long far field: F h^alpha stabilizes")
{
    const LongRangeModel m = LongRangeModel::create(1, 0.5, 0.8, 0.5);
    std::vector<double> ratios;
    for (double h : {100.0, 200.0, 400.0, 1000.0}) ratios.push_back(f_long(m, h) * std::pow(h, m.alpha));
    MESSAGE("plateau estimate " << ratios.back() << "; half the Riesz constant is " << 0.5 * m.riesz_constant);
    for (std::size_t i = 1; i < ratios.size(); ++i) CHECK(ratios[i] > ratios[i - 1]);
    CHECK(rel(ratios[2], ratios[3]) < 0.1);
    CHECK(rel(ratios.back(), 0.5 * m.riesz_constant) < 0.1);
}

TEST_CASE("pair integral against Gaussian-kernel oracles")
{
    for (int d = 1; d <= 3; ++d) {
        const double s1 = 0.4, s2 = 0.7, v = 0.9;
        const Point c1{0.1, -0.2, 0.3}, c2{1.0, 0.5, -0.4};
        double m2 = 0.0;
        for (int a = 0; a < d; ++a) m2 += (c2[a] - c1[a]) * (c2[a] - c1[a]);
        const auto g1 = SpatialProfile::gaussian(d, c1, s1, 1.0);
        const auto g2 = SpatialProfile::gaussian(d, c2, s2, 1.0);
        const GaussianKernelSpec spec{v, 1.0, d};
        auto k = [&](double r) { return gaussian_kernel(spec, r); };
        const double expected = gaussian_pair_oracle(d, s1, s2, v, m2);
        CHECK_MESSAGE(rel(pair_integral(k, g1, g2), expected) < 1e-8, "gaussian d=" << d);

        // odd profiles: derivative of the oracle with respect to both centres
        const double T = s1 * s1 + s2 * s2 + v;
        const double m1 = c2[0] - c1[0];
        const auto o1 = SpatialProfile::odd_gaussian(d, c1, s1, 1.0);
        const auto o2 = SpatialProfile::odd_gaussian(d, c2, s2, 1.0);
        const double both = s1 * s2 * expected * (1.0 / T - m1 * m1 / (T * T));
        CHECK_MESSAGE(rel(pair_integral(k, o1, o2), both) < 1e-7, "odd-odd d=" << d);
        const double one = s1 * expected * (m1 / T);
        CHECK_MESSAGE(rel(pair_integral(k, o1, g2), one) < 1e-7, "odd-even d=" << d);
    }
}

TEST_CASE("custom profiles in one dimension reproduce the Gaussian path")
{
    const auto g = SpatialProfile::gaussian(1, {0.3, 0, 0}, 0.5, 2.0);
    const auto h = SpatialProfile::gaussian(1, {1.5, 0, 0}, 0.8, 1.0);
    const auto gc = SpatialProfile::custom(1, [&](const Point& x) { return g(x); }, g.center(), g.extent());
    auto k = [](double r) { return std::exp(-r) / std::sqrt(r); };
    CHECK(rel(pair_integral(k, gc, h), pair_integral(k, g, h)) < 1e-6);
    CHECK(rel(overlap(gc, h, {0.4, 0, 0}), overlap(g, h, {0.4, 0, 0})) < 1e-9);
    const auto g2 = SpatialProfile::custom(2, [](const Point&) { return 1.0; }, {0, 0, 0}, 1.0);
    CHECK_THROWS(pair_integral(k, g2, g2));
}

TEST_CASE("wm_rhs_short: point-like densities far apart")
{
    for (int d = 1; d <= 2; ++d) {
        const ShortRangeModel m = ShortRangeModel::from_dispersal(d, 0.8, 0.5, 1.0);
        const double h = 3.0;
        const auto phi = SpatialProfile::gaussian_density(d, {0, 0, 0}, 0.01);
        const auto psi = SpatialProfile::gaussian_density(d, {h, 0, 0}, 0.01);
        CHECK(rel(wm_rhs_short(m, phi, psi), m.prefactor * f_short(m, h / m.sigma())) < 1e-3);
    }
}

TEST_CASE("wm_rhs_short is bounded by |F|_1 |phi|_2 |psi|_2")
{
    for (int d = 1; d <= 3; ++d) {
        const ShortRangeModel m = ShortRangeModel::from_dispersal(d, 0.8, 0.5, 1.0);
        // int F(|x|/sigma) dx = sigma^d (2 pi)^{d/2} / (2 mu)
        const double kernel_l1 = m.prefactor * std::pow(m.sigma(), d) * std::pow(2.0 * pi, 0.5 * d) / (2.0 * m.mu);
        for (double sd : {1.0, 0.3, 0.1, 0.03}) {
            for (double sep : {0.0, 0.5, 2.0}) {
                const auto phi = SpatialProfile::gaussian_density(d, {0, 0, 0}, sd);
                const auto psi = SpatialProfile::gaussian_density(d, {sep, 0, 0}, 1.5 * sd);
                const double n1 = std::sqrt(noise_covariance_fixed(phi, phi, TypeCoupling::identity()));
                const double n2 = std::sqrt(noise_covariance_fixed(psi, psi, TypeCoupling::identity()));
                const double v = wm_rhs_short(m, phi, psi);
                CHECK(v > 0.0);
                CHECK_MESSAGE(v <= kernel_l1 * n1 * n2 * (1.0 + 1e-9), "d=" << d << " sd=" << sd);
            }
        }
    }
}

TEST_CASE("wm_rhs_long scaling and delta limit")
{
    const auto phi = SpatialProfile::gaussian_density(1, {0, 0, 0}, 0.3);
    const auto psi = SpatialProfile::gaussian_density(1, {1.0, 0, 0}, 0.3);
    const LongRangeModel a = LongRangeModel::create(1, 0.5, 0.4, 0.2);
    const LongRangeModel b = LongRangeModel::create(1, 0.5, 0.8, 0.4);
    CHECK(a.length_scale() == doctest::Approx(b.length_scale()).epsilon(1e-14));
    CHECK(rel(wm_rhs_long(b, phi, psi), 2.0 * wm_rhs_long(a, phi, psi)) < 1e-10);

    const double h = 4.0;
    const auto p1 = SpatialProfile::gaussian_density(1, {0, 0, 0}, 0.01);
    const auto p2 = SpatialProfile::gaussian_density(1, {h, 0, 0}, 0.01);
    CHECK(rel(wm_rhs_long(b, p1, p2), b.u * f_long(b, b.length_scale() * h)) < 1e-3);
}

TEST_CASE("stationary covariance, diagonal functional, short range")
{
    for (int d = 1; d <= 2; ++d) {
        const ShortRangeModel m = ShortRangeModel::from_dispersal(d, 0.8, 0.5, 1.0);
        const auto phi = SpatialProfile::gaussian_density(d, {0, 0, 0}, 0.5);
        const auto psi = SpatialProfile::odd_gaussian(d, {1.2, 0.4, 0}, 0.7, 1.0);
        for (const auto* g : {&phi, &psi}) {
            const CovarianceValue q = stationary_covariance(m, phi, *g, TypeCoupling::identity());
            const double w = wm_rhs_short(m, phi, *g);
            CHECK_MESSAGE(rel(q.value, w) < 1e-4, "d=" << d << " q=" << q.value << " w=" << w);
            CHECK(q.truncation_bound >= 0.0);
            CHECK(q.truncation_bound < 1e-6 * std::abs(w));
        }
    }
}

TEST_CASE("stationary covariance, diagonal functional, long range")
{
    const LongRangeModel m = LongRangeModel::create(1, 0.5, 0.8, 0.5);
    const auto phi = SpatialProfile::gaussian_density(1, {0, 0, 0}, 0.5);
    const auto psi = SpatialProfile::gaussian_density(1, {1.5, 0, 0}, 0.5);
    const CovarianceValue q = stationary_covariance(m, phi, psi, TypeCoupling::identity());
    const double w = wm_rhs_long(m, phi, psi);
    MESSAGE("time route " << q.value << " vs " << w << " (tail bound " << q.truncation_bound << ")");
    CHECK(rel(q.value, w) < 1e-4);
    CHECK(q.truncation_bound < 1e-6 * w);
}

TEST_CASE("type structure of the covariances")
{
    const ShortRangeModel m = ShortRangeModel::from_dispersal(1, 0.8, 0.5, 1.0);
    const auto phi = SpatialProfile::gaussian(1, {0, 0, 0}, 0.6, 1.3);
    const auto constant = TypeCoupling::product(TypeProfile::constant(2.0), TypeProfile::indicator(0.0, 0.5));
    CHECK(stationary_covariance(m, phi, phi, constant).value == 0.0);
    CHECK(noise_covariance_fixed(phi, phi, constant) == 0.0);

    const auto half = TypeCoupling::product(TypeProfile::indicator(0.0, 0.5), TypeProfile::indicator(0.0, 0.5));
    const double spatial = 1.3 * 1.3 * std::sqrt(pi * 0.36);
    CHECK(rel(noise_covariance_fixed(phi, phi, half), 0.25 * spatial) < 1e-12);

    const double base = noise_covariance_stable(1, 0.5, 1.0, phi, phi, half);
    CHECK(rel(noise_covariance_stable(1, 0.5, 3.7, phi, phi, half), 3.7 * base) < 1e-12);

    const double diag = stationary_covariance(m, phi, phi, TypeCoupling::identity()).value;
    CHECK(rel(stationary_covariance(m, phi, phi, half).value, 0.25 * diag) < 1e-12);
}

TEST_CASE("noise covariance is non-negative on a family of test functions")
{
    Rng rng(5);
    int checked = 0;
    for (int i = 0; i < 50; ++i) {
        const int d = 1 + i % 2;
        const double sd = 0.2 + rng.uniform();
        const Point c{4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0, 0.0};
        const double amp = 4.0 * rng.uniform() - 2.0;
        const auto phi = i % 3 == 0 ? SpatialProfile::odd_gaussian(d, c, sd, amp) : SpatialProfile::gaussian(d, c, sd, amp);
        const double a = rng.uniform(), b = a + (1.0 - a) * rng.uniform_open();
        const TypeProfile f = i % 4 == 0 ? TypeProfile::cosine(1 + i % 3) : TypeProfile::indicator(a, b);
        const auto types = TypeCoupling::product(f, f);
        CHECK(noise_covariance_fixed(phi, phi, types) >= 0.0);
        CHECK(noise_covariance_stable(d, 0.5, 1.0, phi, phi, types) >= 0.0);
        ++checked;
    }
    CHECK(checked == 50);
}

TEST_CASE("F table CSV")
{
    std::ostringstream out;
    write_f_table(out, {{1.0, 0.5, "bessel", 0.0}, {2.0, 0.25, "fourier", 1e-9}});
    CHECK(out.str().rfind("h,F_value,method,est_error\n", 0) == 0);
    CHECK(out.str().find("2,0.25,fourier,1e-09") != std::string::npos);
}
