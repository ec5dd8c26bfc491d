#include "slfv/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace slfv {

namespace {

constexpr double tiny_scale = 1e-200;

void renormalize(Site& s)
{
    for (Atom& a : s.atoms) a.raw *= s.scale;
    s.scale_at_sweep /= s.scale;
    s.scale = 1.0;
}

}  // namespace

// ---------------------------------------------------------------- params

void SlfvParams::validate() const
{
    if (!(u > 0.0 && u <= 1.0)) throw std::invalid_argument("u must lie in (0, 1]");
    if (!(mu >= 0.0)) throw std::invalid_argument("mu must be non-negative");
    if (dispersal.is_stable()) {
        check_stable_index(domain.dim(), dispersal.alpha);
    } else if (!(dispersal.radius > 0.0)) {
        throw std::invalid_argument("fixed radius must be positive");
    }
    if (rescale.N < 1) throw std::invalid_argument("N must be a positive integer");
    if (!(rescale.delta > 0.0 && rescale.delta <= 1.0)) throw std::invalid_argument("delta must lie in (0, 1]");
    if (!(grid_spacing > 0.0)) throw std::invalid_argument("grid spacing must be positive");
    const double ratio = domain.side() / grid_spacing;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
        throw std::invalid_argument("grid spacing must divide the domain side");
    }
    if (grid_spacing > dispersal.min_radius() / 4.0 * (1.0 + 1e-12)) {
        throw std::invalid_argument("grid spacing must be at most a quarter of the smallest event radius");
    }
    if (!(prune_threshold >= 0.0 && prune_threshold < 1e-3)) throw std::invalid_argument("prune threshold out of range");
}

double SlfvParams::eta() const
{
    return dispersal.is_stable() ? 1.0 : std::pow(rescale.delta, 2.0 - domain.dim());
}

double SlfvParams::sim_mutation() const { return std::pow(rescale.delta, gamma()) * mu / rescale.N; }

double SlfvParams::to_sim_time(double t) const { return rescale.N * t / std::pow(rescale.delta, gamma()); }

double SlfvParams::to_rescaled_time(double s) const { return s * std::pow(rescale.delta, gamma()) / rescale.N; }

int SlfvParams::sites_per_side() const { return static_cast<int>(std::lround(domain.side() / grid_spacing)); }

SlfvParams SlfvParams::from_rescaled(double u, double mu, Dispersal dispersal, Rescaling rescale, int d, double side,
                                     int sites_per_radius)
{
    if (sites_per_radius < 4) throw std::invalid_argument("need at least 4 sites per event radius");
    SlfvParams p;
    p.u = u;
    p.mu = mu;
    p.dispersal = dispersal;
    p.rescale = rescale;
    const double sim_side = side / rescale.delta;
    const double target = dispersal.min_radius() / sites_per_radius;
    const int n = static_cast<int>(std::ceil(sim_side / target - 1e-9));
    p.domain = Domain(d, sim_side);
    p.grid_spacing = sim_side / n;
    return p;
}

// ---------------------------------------------------------------- field

MeasureField::MeasureField(const Domain& domain, double spacing, double prune_threshold)
    : domain_(domain), spacing_(spacing), prune_eps_(prune_threshold)
{
    n_ = static_cast<int>(std::lround(domain.side() / spacing));
    if (n_ < 1) throw std::invalid_argument("grid has no sites");
    std::size_t total = 1;
    for (int i = 0; i < domain.dim(); ++i) total *= static_cast<std::size_t>(n_);
    sites_.assign(total, Site{});
}

std::size_t MeasureField::index(int i, int j, int k) const
{
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(n_) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(n_) * k);
}

std::array<int, 3> MeasureField::coords(std::size_t idx) const
{
    std::array<int, 3> c{0, 0, 0};
    for (int a = 0; a < dim(); ++a) {
        c[a] = static_cast<int>(idx % n_);
        idx /= n_;
    }
    return c;
}

Point MeasureField::center(std::size_t idx) const
{
    const auto c = coords(idx);
    return {c[0] * spacing_, c[1] * spacing_, c[2] * spacing_};
}

std::size_t MeasureField::nearest_site(const Point& p) const
{
    const Point w = domain_.wrap(p);
    std::array<int, 3> c{0, 0, 0};
    for (int a = 0; a < dim(); ++a) {
        long i = std::lround(w[a] / spacing_);
        i %= n_;
        if (i < 0) i += n_;
        c[a] = static_cast<int>(i);
    }
    return index(c[0], c[1], c[2]);
}

void MeasureField::sites_in_ball(const Point& c, double r, std::vector<std::size_t>& out) const
{
    out.clear();
    const int d = dim();
    const double L = domain_.side();
    if (r >= L * std::sqrt(static_cast<double>(d)) / 2.0 + spacing_) {
        out.resize(sites_.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
        return;
    }
    const double r2 = r * r;
    long lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
    bool full[3] = {false, false, false};
    for (int a = 0; a < d; ++a) {
        lo[a] = static_cast<long>(std::floor((c[a] - r) / spacing_));
        hi[a] = static_cast<long>(std::ceil((c[a] + r) / spacing_));
        if (hi[a] - lo[a] + 1 >= n_) {
            full[a] = true;
            lo[a] = 0;
            hi[a] = n_ - 1;
        }
    }
    auto disp = [&](int a, long i) {
        double x = i * spacing_ - c[a];
        if (full[a]) x -= L * std::round(x / L);
        return x;
    };
    auto wrap_index = [&](long i) {
        long m = i % n_;
        return static_cast<std::size_t>(m < 0 ? m + n_ : m);
    };
    if (d == 1) {
        for (long i = lo[0]; i <= hi[0]; ++i) {
            const double x = disp(0, i);
            if (x * x < r2) out.push_back(wrap_index(i));
        }
        return;
    }
    for (long k = (d == 3 ? lo[2] : 0); k <= (d == 3 ? hi[2] : 0); ++k) {
        const double z = d == 3 ? disp(2, k) : 0.0;
        const double z2 = z * z;
        if (z2 >= r2) continue;
        const std::size_t kk = d == 3 ? wrap_index(k) : 0;
        for (long j = lo[1]; j <= hi[1]; ++j) {
            const double y = disp(1, j);
            const double yz2 = y * y + z2;
            if (yz2 >= r2) continue;
            const std::size_t jj = wrap_index(j);
            for (long i = lo[0]; i <= hi[0]; ++i) {
                const double x = disp(0, i);
                if (x * x + yz2 < r2) out.push_back(wrap_index(i) + n_ * (jj + n_ * kk));
            }
        }
    }
}

std::vector<std::pair<std::uint64_t, double>> MeasureField::atoms(std::size_t i) const
{
    std::vector<std::pair<std::uint64_t, double>> out;
    const Site& s = sites_[i];
    out.reserve(s.atoms.size());
    for (const Atom& a : s.atoms) out.emplace_back(a.family, s.scale * a.raw);
    return out;
}

double MeasureField::mass_defect(std::size_t i) const
{
    const Site& s = sites_[i];
    double sum = 0.0;
    for (const Atom& a : s.atoms) sum += a.raw;
    return s.lebesgue + s.scale * sum - 1.0;
}

double MeasureField::max_mass_defect() const
{
    double worst = 0.0;
    for (std::size_t i = 0; i < sites_.size(); ++i) worst = std::max(worst, std::abs(mass_defect(i)));
    return worst;
}

void MeasureField::set_site(std::size_t i, double lebesgue, const std::vector<std::pair<std::uint64_t, double>>& atoms,
                            double last_update)
{
    Site s;
    s.lebesgue = lebesgue;
    s.last_update = last_update;
    for (const auto& [f, w] : atoms) s.atoms.push_back({f, w});
    std::sort(s.atoms.begin(), s.atoms.end(), [](const Atom& a, const Atom& b) { return a.family < b.family; });
    for (std::size_t k = 1; k < s.atoms.size(); ++k) {
        if (s.atoms[k].family == s.atoms[k - 1].family) throw std::invalid_argument("duplicate family at a site");
    }
    for (const Atom& a : s.atoms) next_family_ = std::max(next_family_, a.family + 1);
    sites_[i] = std::move(s);
}

void MeasureField::prune(std::size_t i)
{
    Site& s = sites_[i];
    const double cut = prune_eps_ / s.scale;
    double folded = 0.0;
    auto keep = std::remove_if(s.atoms.begin(), s.atoms.end(), [&](const Atom& a) {
        if (a.raw < cut) {
            folded += a.raw;
            return true;
        }
        return false;
    });
    s.atoms.erase(keep, s.atoms.end());
    if (s.atoms.empty()) {
        s.lebesgue = 1.0;
        s.scale = 1.0;
    } else {
        s.lebesgue += s.scale * folded;
    }
    s.scale_at_sweep = s.scale;
}

void MeasureField::prune_all()
{
    for (std::size_t i = 0; i < sites_.size(); ++i) prune(i);
}

double MeasureField::family_type(std::uint64_t family) const
{
    return static_cast<double>(hash_pair(type_seed_, family) >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------- dynamics

double event_rate(const SlfvParams& params)
{
    const double nu_total =
        params.dispersal.is_stable() ? 1.0 / (params.domain.dim() + params.dispersal.alpha) : 1.0;
    return params.domain.volume() * nu_total;
}

double radius_from_uniform(const Dispersal& dispersal, int d, double u)
{
    if (!dispersal.is_stable()) return dispersal.radius;
    return std::pow(u, -1.0 / (d + dispersal.alpha));
}

double sample_radius(const Dispersal& dispersal, int d, Rng& rng)
{
    if (!dispersal.is_stable()) return dispersal.radius;
    return radius_from_uniform(dispersal, d, rng.uniform_open());
}

void apply_mutation_decay(MeasureField& field, std::size_t i, double now, double mu)
{
    Site& s = field.site(i);
    const double dt = now - s.last_update;
    if (dt < -1e-9 * std::max(1.0, std::abs(now))) throw std::logic_error("mutation decay backwards in time");
    if (dt > 0.0 && mu > 0.0 && !s.atoms.empty()) {
        const double f = std::exp(-mu * dt);
        s.scale *= f;
        s.lebesgue = 1.0 - (1.0 - s.lebesgue) * f;
        if (s.scale < tiny_scale) renormalize(s);
        if (s.scale < 0.5 * s.scale_at_sweep) field.prune(i);
    }
    s.last_update = std::max(s.last_update, now);
}

namespace {

Point uniform_in_ball(const Point& c, double r, int d, Rng& rng)
{
    Point p = c;
    if (d == 1) {
        p[0] += r * (2.0 * rng.uniform() - 1.0);
        return p;
    }
    for (;;) {
        double q = 0.0;
        double v[3] = {0.0, 0.0, 0.0};
        for (int a = 0; a < d; ++a) {
            v[a] = 2.0 * rng.uniform() - 1.0;
            q += v[a] * v[a];
        }
        if (q < 1.0) {
            for (int a = 0; a < d; ++a) p[a] += r * v[a];
            return p;
        }
    }
}

}  // namespace

std::uint64_t apply_event(MeasureField& field, const ReproductionEvent& ev, double u, double mu, Rng& rng,
                          const EventOptions& options)
{
    thread_local std::vector<std::size_t> ball;
    field.sites_in_ball(ev.center, ev.radius, ball);
    if (ball.empty()) throw std::runtime_error("event ball contains no grid site: grid too coarse for the radius");

    // parent
    const Point y = uniform_in_ball(ev.center, ev.radius, field.dim(), rng);
    const std::size_t j = field.nearest_site(y);
    apply_mutation_decay(field, j, ev.t, mu);
    std::uint64_t parent = 0;
    if (options.forced_parent) {
        parent = *options.forced_parent;
        rng.uniform();
    } else {
        const Site& ps = field.site(j);
        const double draw = rng.uniform();
        if (draw < ps.lebesgue || ps.atoms.empty()) {
            parent = field.mint_family();
        } else {
            const double target = (draw - ps.lebesgue) / ps.scale;
            double acc = 0.0;
            parent = ps.atoms.back().family;
            for (const Atom& a : ps.atoms) {
                acc += a.raw;
                if (target < acc) {
                    parent = a.family;
                    break;
                }
            }
        }
    }

    const double keep = 1.0 - u;
    for (std::size_t i : ball) {
        apply_mutation_decay(field, i, ev.t, mu);
        Site& s = field.site(i);
        if (keep <= 0.0) {
            s.atoms.assign(1, Atom{parent, 1.0});
            s.scale = 1.0;
            s.scale_at_sweep = 1.0;
            s.lebesgue = 0.0;
            continue;
        }
        s.lebesgue *= keep;
        s.scale *= keep;
        if (s.scale < tiny_scale) renormalize(s);
        const double add = u / s.scale;
        if (s.atoms.empty() || s.atoms.back().family < parent) {
            s.atoms.push_back({parent, add});
        } else {
            auto it = std::lower_bound(s.atoms.begin(), s.atoms.end(), parent,
                                       [](const Atom& a, std::uint64_t f) { return a.family < f; });
            if (it != s.atoms.end() && it->family == parent) {
                it->raw += add;
            } else {
                s.atoms.insert(it, Atom{parent, add});
            }
        }
        if (s.scale < 0.5 * s.scale_at_sweep) field.prune(i);
    }
    return parent;
}

// ---------------------------------------------------------------- driver

Simulation::Simulation(const SlfvParams& params, std::uint64_t seed)
    : params_(params), seed_(seed), rng_(seed)
{
    params_.validate();
    field_ = MeasureField(params_.domain, params_.grid_spacing, params_.prune_threshold);
    field_.set_type_seed(hash_pair(seed, 0x5eedf00dULL));
}

ReproductionEvent Simulation::draw_event(double after)
{
    ReproductionEvent ev;
    ev.t = after + rng_.exponential(event_rate(params_));
    const int d = params_.domain.dim();
    for (int a = 0; a < d; ++a) ev.center[a] = params_.domain.side() * rng_.uniform();
    ev.radius = sample_radius(params_.dispersal, d, rng_);
    return ev;
}

void Simulation::advance_to(double s)
{
    if (s < now_) throw std::logic_error("cannot advance backwards");
    const double u = params_.sim_impact();
    const double mu = params_.sim_mutation();
    for (;;) {
        if (!pending_) pending_ = draw_event(now_);
        if (pending_->t > s) break;
        const ReproductionEvent ev = *pending_;
        apply_event(field_, ev, u, mu, rng_, options_);
        if (record_) recorded_.push_back(ev);
        ++events_;
        now_ = ev.t;
        pending_ = draw_event(ev.t);
    }
    now_ = s;
}

void Simulation::synchronize()
{
    const double mu = params_.sim_mutation();
    for (std::size_t i = 0; i < field_.size(); ++i) apply_mutation_decay(field_, i, now_, mu);
    field_.prune_all();
}

void Simulation::run(double t_end, const std::vector<double>& schedule, const Observer& observer)
{
    if (!(t_end >= 0.0)) throw std::invalid_argument("t_end must be non-negative");
    if (!std::is_sorted(schedule.begin(), schedule.end())) throw std::invalid_argument("observation times must be sorted");
    std::size_t idx = 0;
    for (double t : schedule) {
        if (!(t > 0.0) || t > t_end) continue;
        advance_to(params_.to_sim_time(t));
        synchronize();
        if (observer) observer(field_, t, idx);
        ++idx;
    }
    if (t_end > 0.0) {
        advance_to(params_.to_sim_time(t_end));
        synchronize();
    }
}

void Simulation::restore_state(double now, std::uint64_t events, const std::optional<ReproductionEvent>& pending)
{
    now_ = now;
    events_ = events;
    pending_ = pending;
}

}  // namespace slfv
