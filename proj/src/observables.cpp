#include "slfv/observables.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace slfv {

double identity_probability(const MeasureField& field, std::size_t x, std::size_t y)
{
    const Site& a = field.site(x);
    const Site& b = field.site(y);
    auto i = a.atoms.begin(), ie = a.atoms.end();
    auto j = b.atoms.begin(), je = b.atoms.end();
    double sum = 0.0;
    while (i != ie && j != je) {
        if (i->family < j->family) {
            ++i;
        } else if (j->family < i->family) {
            ++j;
        } else {
            sum += i->raw * j->raw;
            ++i;
            ++j;
        }
    }
    return sum * (a.scale * b.scale);
}

namespace {

// Minimum-image offset from the profile center to site i, in profile units.
Point offset_from(const MeasureField& field, const Point& center, std::size_t i, double unit)
{
    Point c = center;
    for (int a = 0; a < field.dim(); ++a) c[a] /= unit;
    Point v = field.domain().displacement(c, field.center(i));
    for (int a = 0; a < field.dim(); ++a) v[a] *= unit;
    return v;
}

double separation(const MeasureField& field, std::size_t i, std::size_t j, double unit)
{
    return field.domain().distance(field.center(i), field.center(j)) * unit;
}

int bin_of(const std::vector<double>& edges, double h)
{
    if (edges.size() < 2 || h < edges.front() || h >= edges.back()) return -1;
    return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), h) - edges.begin()) - 1;
}

std::vector<double> cumulative(const std::vector<double>& w)
{
    std::vector<double> c(w.size());
    std::partial_sum(w.begin(), w.end(), c.begin());
    return c;
}

std::size_t draw_index(const std::vector<double>& cdf, Rng& rng)
{
    const double u = rng.uniform() * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    return static_cast<std::size_t>(it - cdf.begin());
}

}  // namespace

std::vector<double> grid_values(const MeasureField& field, const SpatialProfile& profile, double unit)
{
    std::vector<double> v(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) v[i] = profile.at_offset(offset_from(field, profile.center(), i, unit));
    return v;
}

std::vector<double> grid_density(const MeasureField& field, const SpatialProfile& profile, double unit)
{
    std::vector<double> v = grid_values(field, profile, unit);
    double s = 0.0;
    for (double x : v) {
        if (x < 0.0) throw std::invalid_argument("sampling density must be non-negative");
        s += x;
    }
    if (!(s > 0.0)) throw std::invalid_argument("sampling density has no mass on the grid");
    for (double& x : v) x /= s;
    return v;
}

std::vector<double> uniform_edges(double width, double max)
{
    std::vector<double> e;
    for (int i = 0; i * width <= max + 1e-12 * width; ++i) e.push_back(i * width);
    if (e.size() < 2) e.push_back(width);
    return e;
}

IdentityCurve identity_curve(const MeasureField& field, const std::vector<double>& phi, const std::vector<double>& psi,
                             const IdentityCurveOptions& options, Rng& rng)
{
    if (phi.size() != field.size() || psi.size() != field.size()) throw std::invalid_argument("density size mismatch");
    const std::vector<double>& edges = options.edges;
    const std::size_t nb = edges.size() > 1 ? edges.size() - 1 : 0;
    IdentityCurve curve;
    curve.bins.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) curve.bins[b].h = 0.5 * (edges[b] + edges[b + 1]);

    if (options.mode == IdentityCurveOptions::Mode::Exhaustive) {
        std::vector<double> wsum(nb, 0.0), isum(nb, 0.0);
        double total = 0.0;
        for (std::size_t i = 0; i < field.size(); ++i) {
            if (phi[i] == 0.0) continue;
            for (std::size_t j = 0; j < field.size(); ++j) {
                if (psi[j] == 0.0) continue;
                const double w = phi[i] * psi[j];
                const double id = identity_probability(field, i, j);
                total += w * id;
                const int b = bin_of(edges, separation(field, i, j, options.unit));
                if (b < 0) continue;
                wsum[b] += w;
                isum[b] += w * id;
                ++curve.bins[b].n_pairs;
            }
        }
        for (std::size_t b = 0; b < nb; ++b) curve.bins[b].p_hat = wsum[b] > 0 ? isum[b] / wsum[b] : 0.0;
        curve.total = total;
        return curve;
    }

    if (options.pairs == 0) throw std::invalid_argument("sampled identity curve needs pairs > 0");
    const auto cphi = cumulative(phi);
    const auto cpsi = cumulative(psi);
    std::vector<double> s(nb, 0.0), s2(nb, 0.0);
    double t = 0.0, t2 = 0.0;
    for (std::size_t k = 0; k < options.pairs; ++k) {
        const std::size_t i = draw_index(cphi, rng);
        const std::size_t j = draw_index(cpsi, rng);
        const double id = identity_probability(field, i, j);
        t += id;
        t2 += id * id;
        const int b = bin_of(edges, separation(field, i, j, options.unit));
        if (b < 0) continue;
        s[b] += id;
        s2[b] += id * id;
        ++curve.bins[b].n_pairs;
    }
    for (std::size_t b = 0; b < nb; ++b) {
        IdentityBin& bin = curve.bins[b];
        if (bin.n_pairs == 0) continue;
        const double n = static_cast<double>(bin.n_pairs);
        bin.p_hat = s[b] / n;
        bin.std_error = n > 1 ? std::sqrt(std::max(0.0, (s2[b] / n - bin.p_hat * bin.p_hat) / (n - 1))) : 0.0;
        if (bin.n_pairs < 100) {
            curve.warnings.push_back("bin at h=" + std::to_string(bin.h) + " has only " + std::to_string(bin.n_pairs) +
                                     " pairs");
        }
    }
    const double n = static_cast<double>(options.pairs);
    curve.total = t / n;
    curve.total_error = n > 1 ? std::sqrt(std::max(0.0, (t2 / n - curve.total * curve.total) / (n - 1))) : 0.0;
    return curve;
}

// ---------------------------------------------------------------- lag table

namespace {

int lag_width(int max_lag) { return 2 * max_lag + 1; }

std::size_t lag_index(int d, int max_lag, int i, int j, int k)
{
    const int w = lag_width(max_lag);
    std::size_t idx = static_cast<std::size_t>(i + max_lag);
    if (d > 1) idx += static_cast<std::size_t>(w) * (j + max_lag);
    if (d > 2) idx += static_cast<std::size_t>(w) * w * (k + max_lag);
    return idx;
}

std::size_t shifted(const MeasureField& f, std::size_t x, int di, int dj, int dk)
{
    const int n = f.sites_per_side();
    auto c = f.coords(x);
    auto wrap = [n](int v) { return ((v % n) + n) % n; };
    return f.index(wrap(c[0] + di), f.dim() > 1 ? wrap(c[1] + dj) : 0, f.dim() > 2 ? wrap(c[2] + dk) : 0);
}

}  // namespace

double LagIdentity::at(int i, int j, int k) const
{
    if (std::abs(i) > max_lag || std::abs(j) > max_lag || std::abs(k) > max_lag) {
        throw std::out_of_range("lag outside the identity table");
    }
    return values[lag_index(d, max_lag, i, j, k)];
}

LagIdentity lag_identity(const MeasureField& field, int max_lag)
{
    const int d = field.dim();
    const int n = field.sites_per_side();
    if (max_lag < 0 || 2 * max_lag > n) throw std::invalid_argument("lag table wider than the torus");
    LagIdentity t;
    t.d = d;
    t.max_lag = max_lag;
    const int w = lag_width(max_lag);
    t.values.assign(static_cast<std::size_t>(std::pow(w, d)), 0.0);
    const double inv = 1.0 / static_cast<double>(field.size());
    const int jr = d > 1 ? max_lag : 0;
    const int kr = d > 2 ? max_lag : 0;
    for (int k = -kr; k <= kr; ++k) {
        for (int j = -jr; j <= jr; ++j) {
            for (int i = -max_lag; i <= max_lag; ++i) {
                // C(-lag) = C(lag) exactly under the translation average
                const std::size_t here = lag_index(d, max_lag, i, j, k);
                const std::size_t mirror = lag_index(d, max_lag, -i, -j, -k);
                if (mirror < here) {
                    t.values[here] = t.values[mirror];
                    continue;
                }
                double s = 0.0;
                for (std::size_t x = 0; x < field.size(); ++x) s += identity_probability(field, x, shifted(field, x, i, j, k));
                t.values[here] = s * inv;
            }
        }
    }
    return t;
}

double pair_identity(const MeasureField& field, const LagIdentity& lags, const std::vector<double>& phi,
                     const std::vector<double>& psi, double tolerance)
{
    if (phi.size() != field.size() || psi.size() != field.size()) throw std::invalid_argument("density size mismatch");
    const int d = field.dim();
    const int n = field.sites_per_side();
    const int M = lags.max_lag;
    const int hi = std::min(M, n - 1 - M);  // distinct offsets only
    const int jr_lo = d > 1 ? -M : 0, jr_hi = d > 1 ? hi : 0;
    const int kr_lo = d > 2 ? -M : 0, kr_hi = d > 2 ? hi : 0;
    double value = 0.0, covered = 0.0;
    const double mass = std::accumulate(phi.begin(), phi.end(), 0.0) * std::accumulate(psi.begin(), psi.end(), 0.0);
    for (std::size_t x = 0; x < field.size(); ++x) {
        if (phi[x] == 0.0) continue;
        for (int k = kr_lo; k <= kr_hi; ++k) {
            for (int j = jr_lo; j <= jr_hi; ++j) {
                for (int i = -M; i <= hi; ++i) {
                    const double w = phi[x] * psi[shifted(field, x, i, j, k)];
                    if (w == 0.0) continue;
                    covered += w;
                    value += w * lags.values[lag_index(d, M, i, j, k)];
                }
            }
        }
    }
    if (mass - covered > tolerance * mass) {
        throw std::invalid_argument("lag table too short for the sampling densities (uncovered mass " +
                                    std::to_string((mass - covered) / mass) + ")");
    }
    return value;
}

double pair_identity_exhaustive(const MeasureField& field, const std::vector<double>& phi, const std::vector<double>& psi)
{
    if (phi.size() != field.size() || psi.size() != field.size()) throw std::invalid_argument("density size mismatch");
    std::unordered_map<std::uint64_t, std::pair<double, double>> mass;
    for (std::size_t i = 0; i < field.size(); ++i) {
        const Site& s = field.site(i);
        if (phi[i] == 0.0 && psi[i] == 0.0) continue;
        for (const Atom& a : s.atoms) {
            auto& m = mass[a.family];
            const double w = s.scale * a.raw;
            m.first += phi[i] * w;
            m.second += psi[i] * w;
        }
    }
    std::vector<std::uint64_t> ids;
    ids.reserve(mass.size());
    for (const auto& [f, m] : mass) ids.push_back(f);
    std::sort(ids.begin(), ids.end());  // fixed summation order
    double total = 0.0;
    for (std::uint64_t f : ids) total += mass[f].first * mass[f].second;
    return total;
}

IdentityCurve lag_curve(const MeasureField& field, const LagIdentity& lags, double unit, const std::vector<double>& edges)
{
    const int d = lags.d;
    const int M = lags.max_lag;
    const std::size_t nb = edges.size() > 1 ? edges.size() - 1 : 0;
    IdentityCurve curve;
    curve.bins.resize(nb);
    std::vector<double> sum(nb, 0.0);
    std::vector<std::size_t> count(nb, 0);
    const int jr = d > 1 ? M : 0, kr = d > 2 ? M : 0;
    for (int k = -kr; k <= kr; ++k) {
        for (int j = -jr; j <= jr; ++j) {
            for (int i = -M; i <= M; ++i) {
                const double h = field.spacing() * unit * std::sqrt(double(i * i + j * j + k * k));
                const int b = bin_of(edges, h);
                if (b < 0) continue;
                sum[b] += lags.values[lag_index(d, M, i, j, k)];
                ++count[b];
            }
        }
    }
    for (std::size_t b = 0; b < nb; ++b) {
        curve.bins[b].h = 0.5 * (edges[b] + edges[b + 1]);
        curve.bins[b].n_pairs = count[b] * field.size();
        curve.bins[b].p_hat = count[b] ? sum[b] / count[b] : 0.0;
    }
    return curve;
}

IdentityCurve scale_curve(IdentityCurve curve, double factor)
{
    for (IdentityBin& b : curve.bins) {
        b.p_hat *= factor;
        b.std_error *= factor;
    }
    curve.total *= factor;
    curve.total_error *= factor;
    curve.scaled = true;
    curve.scale *= factor;
    return curve;
}

IdentityCurve pool_curves(const std::vector<IdentityCurve>& reps)
{
    if (reps.empty()) throw std::invalid_argument("no replicate curves to pool");
    IdentityCurve out = reps.front();
    const std::size_t nb = out.bins.size();
    const double r = static_cast<double>(reps.size());
    for (std::size_t b = 0; b < nb; ++b) {
        double s = 0.0, s2 = 0.0;
        std::size_t pairs = 0;
        for (const IdentityCurve& c : reps) {
            if (c.bins.size() != nb) throw std::invalid_argument("replicate curves have different bins");
            s += c.bins[b].p_hat;
            s2 += c.bins[b].p_hat * c.bins[b].p_hat;
            pairs += c.bins[b].n_pairs;
        }
        out.bins[b].p_hat = s / r;
        out.bins[b].std_error = reps.size() > 1 ? std::sqrt(std::max(0.0, (s2 / r - (s / r) * (s / r)) / (r - 1))) : 0.0;
        out.bins[b].n_pairs = pairs;
    }
    double s = 0.0, s2 = 0.0;
    for (const IdentityCurve& c : reps) {
        s += c.total;
        s2 += c.total * c.total;
    }
    out.total = s / r;
    out.total_error = reps.size() > 1 ? std::sqrt(std::max(0.0, (s2 / r - out.total * out.total) / (r - 1))) : 0.0;
    return out;
}

void write_curve_header(std::ostream& out) { out << "t,h,p_hat,stderr,n_pairs,scaled_flag\n"; }

void write_curve_rows(std::ostream& out, const IdentityCurve& curve)
{
    out << std::setprecision(17);
    for (const IdentityBin& b : curve.bins) {
        out << curve.t << ',' << b.h << ',' << b.p_hat << ',' << b.std_error << ',' << b.n_pairs << ','
            << (curve.scaled ? 1 : 0) << '\n';
    }
}

// ---------------------------------------------------------------- fluctuations

double fluctuation_functional(const MeasureField& field, const TestFunction& phi, double scale, double unit)
{
    if (!phi.type) return 0.0;  // space-only: <rho, phi> is fixed by the Lebesgue marginal
    const TypeProfile& f = *phi.type;
    const double fbar = f.mean();
    const double cell = std::pow(field.spacing() * unit, field.dim());
    double total = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i) {
        const Site& s = field.site(i);
        if (s.atoms.empty()) continue;
        const double g = phi.spatial.at_offset(offset_from(field, phi.spatial.center(), i, unit));
        if (g == 0.0) continue;
        double local = 0.0;
        for (const Atom& a : s.atoms) local += a.raw * (f(field.family_type(a.family)) - fbar);
        total += g * s.scale * local;
    }
    return std::sqrt(scale) * cell * total;
}

QvarReport qvar_check(const std::vector<double>& samples, double predicted, double drift_ratio)
{
    const std::size_t n = samples.size();
    if (n < 50) throw std::invalid_argument("quadratic-variation check needs at least 50 replicates");
    const double dn = static_cast<double>(n);
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / dn;
    double m2 = 0.0, m4 = 0.0;
    for (double x : samples) {
        const double c = (x - mean) * (x - mean);
        m2 += c;
        m4 += c * c;
    }
    const double var = m2 / (dn - 1.0);
    m2 /= dn;
    m4 /= dn;
    QvarReport r;
    r.empirical = var;
    r.predicted = predicted;
    r.replicates = n;
    r.drift_ratio = drift_ratio;
    r.std_error = std::sqrt(std::max(0.0, (m4 - m2 * m2) / dn));
    const double diff = var - predicted;
    if (r.std_error > 0.0) {
        r.z = diff / r.std_error;
    } else {
        r.z = std::abs(diff) <= 1e-300 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return r;
}

}  // namespace slfv
