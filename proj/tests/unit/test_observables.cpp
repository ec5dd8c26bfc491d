#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "slfv/observables.hpp"

#include <cmath>
#include <sstream>

using namespace slfv;

namespace {

SlfvParams grid_params(int d, double side, double mu = 0.5)
{
    SlfvParams p;
    p.u = 0.8;
    p.mu = mu;
    p.dispersal = Dispersal::fixed(1.0);
    p.rescale = {2, 1.0};
    p.domain = Domain(d, side);
    p.grid_spacing = 0.25;
    return p;
}

}  // namespace

TEST_CASE("identity probability basics")
{
    MeasureField f(Domain(1, 2.0), 0.25);
    f.set_site(0, 0.5, {{1, 0.5}});
    f.set_site(1, 0.5, {{2, 0.5}});
    f.set_site(2, 0.0, {{3, 1.0}});
    f.set_site(3, 0.0, {{3, 1.0}});
    f.set_site(4, 0.2, {{1, 0.3}, {3, 0.5}});
    CHECK(identity_probability(f, 0, 1) == 0.0);
    CHECK(identity_probability(f, 2, 3) == 1.0);
    CHECK(identity_probability(f, 0, 4) == doctest::Approx(0.15));
    CHECK(identity_probability(f, 4, 3) == doctest::Approx(0.5));

    MeasureField g(Domain(1, 10.0), 0.25);
    Rng rng(1);
    apply_event(g, {0.0, {5.0, 0, 0}, 1.0}, 0.8, 0.0, rng);
    const std::size_t c = g.nearest_site({5.0, 0, 0});
    CHECK(identity_probability(g, c, c) == doctest::Approx(0.64));
}

TEST_CASE("identity probability is symmetric and bounded on simulated fields")
{
    Simulation sim(grid_params(1, 8.0), 31);
    sim.run(3.0, {3.0}, [](const MeasureField& f, double, std::size_t) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            for (std::size_t j = 0; j < f.size(); ++j) {
                const double p = identity_probability(f, i, j);
                CHECK(p >= 0.0);
                CHECK(p <= 1.0 + 1e-12);
                CHECK(p == identity_probability(f, j, i));
            }
        }
    });
}

TEST_CASE("identity curve of the Lebesgue field is zero")
{
    MeasureField f(Domain(1, 8.0), 0.25);
    const auto phi = grid_density(f, SpatialProfile::gaussian_density(1, {3.0, 0, 0}, 0.7), 1.0);
    const auto psi = grid_density(f, SpatialProfile::gaussian_density(1, {5.0, 0, 0}, 0.7), 1.0);
    Rng rng(2);
    for (auto mode : {IdentityCurveOptions::Mode::Sampled, IdentityCurveOptions::Mode::Exhaustive}) {
        IdentityCurveOptions opt{mode, 5000, uniform_edges(0.5, 4.0), 1.0};
        const IdentityCurve c = identity_curve(f, phi, psi, opt, rng);
        for (const auto& b : c.bins) CHECK(b.p_hat == 0.0);
        CHECK(c.total == 0.0);
    }
}

TEST_CASE("exhaustive and sampled estimators agree on small grids")
{
    struct Case {
        int d;
        double side;
    };
    for (Case c : {Case{1, 8.0}, Case{1, 16.0}, Case{2, 2.0}}) {
        SlfvParams p = grid_params(c.d, c.side);
        REQUIRE(MeasureField(p.domain, p.grid_spacing).size() <= 64);
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            Simulation sim(p, seed);
            sim.run(2.0, {}, nullptr);
            const MeasureField& f = sim.field();
            const Point a{c.side * 0.3, c.side * 0.5, 0}, b{c.side * 0.6, c.side * 0.5, 0};
            const auto phi = grid_density(f, SpatialProfile::gaussian_density(c.d, a, 0.5), 1.0);
            const auto psi = grid_density(f, SpatialProfile::gaussian_density(c.d, b, 0.5), 1.0);
            Rng rng(seed + 100);
            const auto edges = uniform_edges(0.25, c.side);
            const IdentityCurve ex =
                identity_curve(f, phi, psi, {IdentityCurveOptions::Mode::Exhaustive, 0, edges, 1.0}, rng);
            const IdentityCurve mc =
                identity_curve(f, phi, psi, {IdentityCurveOptions::Mode::Sampled, 40000, edges, 1.0}, rng);
            CHECK(ex.total > 0);
            CHECK(std::abs(ex.total - mc.total) <= 3 * mc.total_error);
            CHECK(pair_identity_exhaustive(f, phi, psi) == doctest::Approx(ex.total).epsilon(1e-12));
        }
    }
}

TEST_CASE("lag table matches direct translation averages")
{
    Simulation sim(grid_params(1, 8.0), 5);
    sim.run(2.0, {}, nullptr);
    const MeasureField& f = sim.field();
    const LagIdentity lags = lag_identity(f, 16);
    const int n = f.sites_per_side();
    for (int lag : {-16, -3, 0, 1, 7, 16}) {
        double direct = 0;
        for (int x = 0; x < n; ++x) direct += identity_probability(f, x, ((x + lag) % n + n) % n);
        CHECK(lags.at(lag) == doctest::Approx(direct / n).epsilon(1e-13));
    }
    // uniform densities: the lag estimator and the exhaustive sum are the same average
    std::vector<double> uni(f.size(), 1.0 / f.size());
    Rng rng(0);
    const IdentityCurve ex = identity_curve(f, uni, uni, {IdentityCurveOptions::Mode::Exhaustive, 0, {0.0, 1.0}, 1.0}, rng);
    CHECK(pair_identity(f, lags, uni, uni) == doctest::Approx(ex.total).epsilon(1e-12));
    CHECK_THROWS(pair_identity(f, lag_identity(f, 2), uni, uni));

    Simulation sim2(grid_params(2, 2.0), 6);
    sim2.run(1.0, {}, nullptr);
    const LagIdentity l2 = lag_identity(sim2.field(), 2);
    double direct = 0;
    const MeasureField& g = sim2.field();
    for (std::size_t x = 0; x < g.size(); ++x) {
        const auto c = g.coords(x);
        direct += identity_probability(g, x, g.index((c[0] + 1) % 8, (c[1] + 6) % 8));
    }
    CHECK(l2.at(1, -2) == doctest::Approx(direct / g.size()).epsilon(1e-13));
}

TEST_CASE("identity decreases with distance at stationarity")
{
    SlfvParams p = grid_params(1, 16.0, 0.5);
    const auto edges = uniform_edges(0.5, 6.0);
    std::vector<IdentityCurve> reps;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Simulation sim(p, 1000 + seed);
        sim.run(6.0, {6.0}, [&](const MeasureField& f, double, std::size_t) {
            reps.push_back(lag_curve(f, lag_identity(f, 24), 1.0, edges));
        });
    }
    const IdentityCurve pooled = pool_curves(reps);
    for (std::size_t a = 0; a < pooled.bins.size(); ++a) {
        for (std::size_t b = a + 1; b < pooled.bins.size(); ++b) {
            const auto& near = pooled.bins[a];
            const auto& far = pooled.bins[b];
            const double joint = std::hypot(near.std_error, far.std_error);
            CHECK(far.p_hat - near.p_hat <= 4 * joint);
        }
    }
    CHECK(pooled.bins.front().p_hat > pooled.bins.back().p_hat);
}

TEST_CASE("fluctuation functional")
{
    MeasureField lebesgue(Domain(1, 8.0), 0.25);
    const TestFunction phi{SpatialProfile::gaussian(1, {4.0, 0, 0}, 1.0, 1.0), TypeProfile::indicator(0.0, 0.5)};
    CHECK(fluctuation_functional(lebesgue, phi, 100.0, 1.0) == 0.0);

    Simulation sim(grid_params(1, 8.0), 9);
    const TestFunction constant{SpatialProfile::gaussian(1, {4.0, 0, 0}, 1.0, 1.0), TypeProfile::constant(2.0)};
    const TestFunction space_only{SpatialProfile::gaussian(1, {4.0, 0, 0}, 1.0, 1.0), std::nullopt};
    bool moved = false;
    sim.run(3.0, {0.5, 1.0, 1.5, 2.0, 2.5, 3.0}, [&](const MeasureField& f, double, std::size_t) {
        CHECK(fluctuation_functional(f, constant, 10.0, 1.0) == 0.0);
        CHECK(fluctuation_functional(f, space_only, 10.0, 1.0) == 0.0);
        if (fluctuation_functional(f, phi, 10.0, 1.0) != 0.0) moved = true;
    });
    CHECK(moved);
}

TEST_CASE("quadratic variation check")
{
    Rng rng(4);
    std::vector<double> xs(4000);
    for (double& x : xs) x = 1.5 * rng.normal();
    const QvarReport r = qvar_check(xs, 2.25);
    CHECK(std::abs(r.z) < 3);
    CHECK(r.std_error > 0);
    CHECK(qvar_check(xs, 4.0).z < -10);
    CHECK_THROWS(qvar_check(std::vector<double>(49, 0.0), 0.0));
    const QvarReport zero = qvar_check(std::vector<double>(60, 0.0), 0.0);
    CHECK(zero.z == 0.0);
}

TEST_CASE("curve CSV rows")
{
    IdentityCurve c;
    c.t = 2.0;
    c.bins = {{0.5, 0.1, 0.01, 10}, {1.5, 0.05, 0.02, 20}};
    std::ostringstream out;
    write_curve_header(out);
    write_curve_rows(out, scale_curve(c, 10.0));
    CHECK(out.str() == "t,h,p_hat,stderr,n_pairs,scaled_flag\n2,0.5,1,0.10000000000000001,10,1\n2,1.5,0.5,0.20000000000000001,20,1\n");
}
