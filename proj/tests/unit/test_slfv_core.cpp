#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "slfv/checkpoint.hpp"
#include "slfv/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

using namespace slfv;

namespace {

SlfvParams small_params(double mu = 0.5, Dispersal disp = Dispersal::fixed(1.0), int d = 1, double side = 10.0)
{
    SlfvParams p;
    p.u = 0.8;
    p.mu = mu;
    p.dispersal = disp;
    p.rescale = {4, 0.5};
    p.domain = Domain(d, side);
    p.grid_spacing = 0.25;
    return p;
}

double same_site_identity(const MeasureField& f, std::size_t i)
{
    double s = 0;
    for (auto [id, w] : f.atoms(i)) s += w * w;
    return s;
}

bool fields_equal(const MeasureField& a, const MeasureField& b)
{
    if (a.size() != b.size() || a.next_family() != b.next_family()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Site& x = a.site(i);
        const Site& y = b.site(i);
        if (x.scale != y.scale || x.lebesgue != y.lebesgue || x.last_update != y.last_update ||
            x.atoms.size() != y.atoms.size())
            return false;
        for (std::size_t k = 0; k < x.atoms.size(); ++k) {
            if (x.atoms[k].family != y.atoms[k].family || x.atoms[k].raw != y.atoms[k].raw) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("event rate")
{
    SlfvParams p = small_params();
    p.domain = Domain(1, 100.0);
    CHECK(event_rate(p) == doctest::Approx(100.0));
    p.domain = Domain(2, 10.0);
    CHECK(event_rate(p) == doctest::Approx(100.0));
    p.dispersal = Dispersal::stable(0.5);
    p.domain = Domain(1, 10.0);
    CHECK(event_rate(p) == doctest::Approx(10.0 / 1.5));
    p.domain = Domain(1, 30.0);
    CHECK(event_rate(p) == doctest::Approx(3 * 10.0 / 1.5));
}

TEST_CASE("stable radius law")
{
    CHECK(radius_from_uniform(Dispersal::stable(0.5), 1, 0.5) == doctest::Approx(std::pow(2.0, 2.0 / 3.0)));
    CHECK(radius_from_uniform(Dispersal::stable(0.5), 1, 0.5) == doctest::Approx(1.5874).epsilon(1e-4));
    CHECK(sample_radius(Dispersal::fixed(1.7), 2, *std::make_unique<Rng>(1)) == 1.7);

    struct Case {
        int d;
        double alpha;
    };
    for (Case c : {Case{1, 0.5}, Case{2, 1.5}}) {
        Rng rng(99 + c.d);
        const int n = 1'000'000;
        std::vector<double> r(n);
        for (double& x : r) x = sample_radius(Dispersal::stable(c.alpha), c.d, rng);
        CHECK(*std::min_element(r.begin(), r.end()) >= 1.0);
        // Kolmogorov-Smirnov against P(R <= r) = 1 - r^{-(d+alpha)}
        std::vector<double> s = r;
        std::sort(s.begin(), s.end());
        double ks = 0;
        for (int i = 0; i < n; ++i) {
            const double cdf = 1 - std::pow(s[i], -(c.d + c.alpha));
            ks = std::max({ks, std::abs(cdf - double(i) / n), std::abs(cdf - double(i + 1) / n)});
        }
        CHECK(ks * std::sqrt(double(n)) < 1.95);
        // r^d moment
        double m = 0, m2 = 0;
        for (double x : r) {
            const double v = std::pow(x, c.d);
            m += v;
            m2 += v * v;
        }
        m /= n;
        const double se = std::sqrt((m2 / n - m * m) / n);
        CHECK(std::abs(m - (c.d + c.alpha) / c.alpha) < 3 * se);
    }
}

TEST_CASE("mutation decay")
{
    MeasureField f(Domain(1, 4.0), 1.0);
    f.set_site(0, 0.0, {{7, 1.0}});
    apply_mutation_decay(f, 0, std::log(2.0), 1.0);
    CHECK(f.atoms(0)[0].second == doctest::Approx(0.5));
    CHECK(f.lebesgue(0) == doctest::Approx(0.5));

    f.set_site(1, 0.3, {{1, 0.3}, {2, 0.4}});
    apply_mutation_decay(f, 1, 5.0, 0.0);
    CHECK(f.atoms(1)[0].second == 0.3);
    CHECK(f.atoms(1)[1].second == 0.4);

    f.set_site(2, 0.3, {{1, 0.3}, {2, 0.4}});
    apply_mutation_decay(f, 2, 1.0, 1.0);
    CHECK(f.atoms(2)[0].second == doctest::Approx(0.3 * std::exp(-1.0)).epsilon(1e-14));
    CHECK(f.atoms(2)[1].second == doctest::Approx(0.4 * std::exp(-1.0)).epsilon(1e-14));
    CHECK(std::abs(f.mass_defect(2)) < 1e-15);
    CHECK_THROWS(apply_mutation_decay(f, 2, 0.5, 1.0));
}

TEST_CASE("single event on the Lebesgue state")
{
    for (double u : {0.3, 1.0}) {
        MeasureField f(Domain(1, 10.0), 0.25);
        Rng rng(4);
        ReproductionEvent ev{1.0, {5.0, 0, 0}, 1.0};
        std::vector<std::size_t> ball;
        f.sites_in_ball(ev.center, ev.radius, ball);
        CHECK(ball.size() == 7);  // centers 4.25 .. 5.75 (strict membership)
        const auto parent = apply_event(f, ev, u, 0.0, rng);
        for (std::size_t i = 0; i < f.size(); ++i) {
            const bool in = std::find(ball.begin(), ball.end(), i) != ball.end();
            if (in) {
                REQUIRE(f.atoms(i).size() == 1);
                CHECK(f.atoms(i)[0].first == parent);
                CHECK(f.atoms(i)[0].second == doctest::Approx(u));
                CHECK(f.lebesgue(i) == doctest::Approx(1 - u));
                CHECK(same_site_identity(f, i) == doctest::Approx(u * u));
            } else {
                CHECK(f.atoms(i).empty());
                CHECK(f.lebesgue(i) == 1.0);
            }
        }
    }
}

TEST_CASE("ball membership on the torus")
{
    MeasureField f(Domain(2, 4.0), 0.5);
    std::vector<std::size_t> ball;
    f.sites_in_ball({0.1, 3.9, 0}, 1.0, ball);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const bool in = std::find(ball.begin(), ball.end(), i) != ball.end();
        CHECK(in == (f.domain().distance(f.center(i), {0.1, 3.9, 0}) < 1.0));
    }
    std::sort(ball.begin(), ball.end());
    CHECK(std::adjacent_find(ball.begin(), ball.end()) == ball.end());
    f.sites_in_ball({1.0, 1.0, 0}, 100.0, ball);
    CHECK(ball.size() == f.size());

    MeasureField coarse(Domain(1, 4.0), 1.0);
    Rng rng(1);
    CHECK_THROWS(apply_event(coarse, {0.0, {0.5, 0, 0}, 0.2}, 0.5, 0.0, rng));
}

TEST_CASE("parameter validation")
{
    SlfvParams p = small_params();
    CHECK_NOTHROW(p.validate());
    p.grid_spacing = 0.3;
    CHECK_THROWS(p.validate());
    p = small_params();
    p.grid_spacing = 0.5;
    CHECK_THROWS(p.validate());  // more than a quarter of R
    p = small_params();
    p.u = 1.2;
    CHECK_THROWS(p.validate());
    p = small_params(0.5, Dispersal::stable(1.0));
    CHECK_THROWS(p.validate());

    const SlfvParams r = SlfvParams::from_rescaled(0.8, 0.5, Dispersal::fixed(1.0), {100, 0.25}, 1, 30.0, 4);
    CHECK(r.domain.side() == doctest::Approx(120.0));
    CHECK(r.grid_spacing == doctest::Approx(0.25));
    CHECK(r.sim_impact() == doctest::Approx(0.008));
    CHECK(r.sim_mutation() == doctest::Approx(0.0625 * 0.5 / 100));
    CHECK(r.to_sim_time(8.0) == doctest::Approx(100 * 8 / 0.0625));
    CHECK(r.eta() == doctest::Approx(0.25));
    const SlfvParams s = SlfvParams::from_rescaled(0.8, 0.5, Dispersal::stable(0.5), {100, 0.25}, 1, 30.0, 4);
    CHECK(s.to_sim_time(8.0) == doctest::Approx(100 * 8 / 0.5));
    CHECK(s.eta() == 1.0);
}

TEST_CASE("run: empty horizon leaves the field untouched")
{
    Simulation sim(small_params(), 3);
    int calls = 0;
    sim.run(0.0, {0.0, 1.0}, [&](const MeasureField&, double, std::size_t) { ++calls; });
    CHECK(calls == 0);
    CHECK(sim.event_count() == 0);
    for (std::size_t i = 0; i < sim.field().size(); ++i) {
        CHECK(sim.field().atoms(i).empty());
        CHECK(sim.field().lebesgue(i) == 1.0);
    }
}

TEST_CASE("run: mass conservation, bounded weights, Poisson event count")
{
    for (Dispersal disp : {Dispersal::fixed(1.0), Dispersal::stable(0.5)}) {
        SlfvParams p = small_params(0.5, disp, 1, 20.0);
        Simulation sim(p, 17);
        double worst = 0;
        double wmax = 0;
        sim.run(4.0, {1.0, 2.0, 3.0, 4.0}, [&](const MeasureField& f, double, std::size_t) {
            worst = std::max(worst, f.max_mass_defect());
            for (std::size_t i = 0; i < f.size(); ++i) {
                for (auto [id, w] : f.atoms(i)) {
                    wmax = std::max(wmax, w);
                    CHECK(w > f.prune_threshold());
                }
                CHECK(f.lebesgue(i) >= -1e-12);
            }
        });
        CHECK(worst < 1e-9);
        CHECK(wmax <= 1.0);
        const double expected = event_rate(p) * sim.sim_time();
        CHECK(std::abs(double(sim.event_count()) - expected) < 3 * std::sqrt(expected));
    }
}

TEST_CASE("run: 2D and 3D fields stay consistent")
{
    for (int d = 2; d <= 3; ++d) {
        SlfvParams p = small_params(0.5, Dispersal::fixed(1.0), d, d == 2 ? 6.0 : 3.0);
        Simulation sim(p, 5);
        sim.run(0.5, {0.5}, [&](const MeasureField& f, double, std::size_t) { CHECK(f.max_mass_defect() < 1e-9); });
        CHECK(sim.event_count() > 0);
    }
}

TEST_CASE("run: strong mutation erases identity")
{
    SlfvParams p = small_params();
    p.mu = 1e6;  // mu_sim * mean gap between events far above 50
    Simulation sim(p, 8);
    const double gap = 1.0 / event_rate(p);
    CHECK(p.sim_mutation() * gap > 50);
    double total = 0;
    sim.run(2.0, {2.0}, [&](const MeasureField& f, double, std::size_t) {
        for (std::size_t i = 0; i < f.size(); ++i) total += same_site_identity(f, i);
    });
    CHECK(total < 1e-12);
}

TEST_CASE("determinism: identical seeds give identical event streams")
{
    SlfvParams p = small_params(0.5, Dispersal::stable(0.5));
    Simulation a(p, 2024), b(p, 2024), c(p, 2025);
    a.record_events(true);
    b.record_events(true);
    c.record_events(true);
    a.run(3.0, {}, nullptr);
    b.run(3.0, {}, nullptr);
    c.run(3.0, {}, nullptr);
    REQUIRE(a.recorded().size() == b.recorded().size());
    for (std::size_t k = 0; k < a.recorded().size(); ++k) {
        CHECK(a.recorded()[k].t == b.recorded()[k].t);
        CHECK(a.recorded()[k].center == b.recorded()[k].center);
        CHECK(a.recorded()[k].radius == b.recorded()[k].radius);
    }
    CHECK(fields_equal(a.field(), b.field()));
    CHECK(!fields_equal(a.field(), c.field()));
}

TEST_CASE("forced parent drives fixation")
{
    SlfvParams p = small_params(0.0);
    p.u = 1.0;
    p.rescale = {1, 1.0};
    Simulation sim(p, 12);
    sim.event_options().forced_parent = 0;
    double remaining = 1;
    sim.run(20.0, {20.0}, [&](const MeasureField& f, double, std::size_t) {
        remaining = 0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            double focal = 0;
            for (auto [id, w] : f.atoms(i))
                if (id == 0) focal = w;
            remaining += 1 - focal;
        }
        remaining /= f.size();
    });
    CHECK(remaining < 1e-6);
}

TEST_CASE("checkpoint round trip and resumption")
{
    SlfvParams p = small_params(0.5, Dispersal::stable(0.5));
    Simulation sim(p, 77);
    sim.advance_to(p.to_sim_time(1.5));
    const auto bytes = checkpoint_bytes(sim);
    Simulation back = restore_checkpoint(bytes);
    CHECK(checkpoint_bytes(back) == bytes);
    CHECK(fields_equal(sim.field(), back.field()));

    sim.advance_to(p.to_sim_time(3.0));
    back.advance_to(p.to_sim_time(3.0));
    CHECK(sim.event_count() == back.event_count());
    CHECK(fields_equal(sim.field(), back.field()));

    const std::string path = "checkpoint_test.cbor";
    save_checkpoint(sim, path);
    Simulation disk = load_checkpoint(path);
    CHECK(fields_equal(sim.field(), disk.field()));
    std::remove(path.c_str());
}
