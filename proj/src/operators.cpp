#include "slfv/operators.hpp"
#include "slfv/kernels.hpp"
#include "slfv/quadrature.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

namespace slfv {

namespace {

constexpr double pi = std::numbers::pi;

std::mutex& fftw_planner_lock()
{
    static std::mutex lock;
    return lock;
}

int signed_index(int j, int n) { return j <= n / 2 ? j : j - n; }

std::size_t flat_index(const std::array<int, 3>& idx, int d, int n)
{
    std::size_t i = 0;
    for (int a = 0; a < d; ++a) i = i * n + static_cast<std::size_t>(idx[a]);
    return i;
}

void check_same_grid(const GridFunction& a, const GridFunction& b)
{
    if (a.dim() != b.dim() || a.sites_per_side() != b.sites_per_side() || a.spacing() != b.spacing()) {
        throw std::invalid_argument("grid functions live on different grids");
    }
}

// Forward transform, a callback per complex coefficient (with its signed wave vector), inverse.
template <class Visit>
GridFunction transform_apply(const GridFunction& f, Visit&& visit)
{
    const int d = f.dim(), n = f.sites_per_side();
    std::vector<int> dims(d, n);
    const int last = n / 2 + 1;
    std::size_t ncomplex = 1;
    for (int a = 0; a + 1 < d; ++a) ncomplex *= n;
    ncomplex *= last;
    double* in = fftw_alloc_real(f.size());
    fftw_complex* spec = fftw_alloc_complex(ncomplex);
    fftw_plan fwd, bwd;
    {
        std::lock_guard<std::mutex> guard(fftw_planner_lock());
        fwd = fftw_plan_dft_r2c(d, dims.data(), in, spec, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_c2r(d, dims.data(), spec, in, FFTW_ESTIMATE);
    }
    std::copy(f.values().begin(), f.values().end(), in);
    fftw_execute(fwd);
    const double kunit = 2.0 * pi / f.domain().side();
    std::array<int, 3> j{0, 0, 0};
    for (std::size_t c = 0; c < ncomplex; ++c) {
        std::size_t rest = c;
        j[d - 1] = static_cast<int>(rest % last);
        rest /= last;
        for (int a = d - 2; a >= 0; --a) {
            j[a] = static_cast<int>(rest % n);
            rest /= n;
        }
        std::array<int, 3> sj{0, 0, 0};
        for (int a = 0; a < d; ++a) sj[a] = signed_index(j[a], n);
        std::complex<double> z(spec[c][0], spec[c][1]);
        z = visit(sj, kunit, z);
        spec[c][0] = z.real();
        spec[c][1] = z.imag();
    }
    fftw_execute(bwd);
    GridFunction out(f.domain(), f.spacing());
    const double scale = 1.0 / static_cast<double>(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = in[i] * scale;
    {
        std::lock_guard<std::mutex> guard(fftw_planner_lock());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(bwd);
    }
    fftw_free(in);
    fftw_free(spec);
    return out;
}

// Radial multiplier cached on the integer |j|^2.
GridFunction apply_radial(const GridFunction& f, const std::function<double(double)>& m)
{
    std::unordered_map<long, double> cache;
    return transform_apply(f, [&](const std::array<int, 3>& sj, double kunit, std::complex<double> z) {
        const long key = static_cast<long>(sj[0]) * sj[0] + static_cast<long>(sj[1]) * sj[1] +
                         static_cast<long>(sj[2]) * sj[2];
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, m(kunit * std::sqrt(static_cast<double>(key)))).first;
        return z * it->second;
    });
}

// sum over nonzero modes of |f_k| |k|^p, with f_k normalized so that f = sum f_k e^{ikx}.
double weighted_coefficient_sum(const GridFunction& f, double p)
{
    double total = 0.0;
    const int n = f.sites_per_side();
    const double scale = 1.0 / static_cast<double>(f.size());
    transform_apply(f, [&](const std::array<int, 3>& sj, double kunit, std::complex<double> z) {
        const double k2 = static_cast<double>(sj[0]) * sj[0] + static_cast<double>(sj[1]) * sj[1] +
                          static_cast<double>(sj[2]) * sj[2];
        if (k2 > 0.0) {
            // half-spectrum storage: interior modes of the last axis stand for two coefficients
            const int jl = sj[f.dim() - 1];
            const double mult = (jl == 0 || (n % 2 == 0 && std::abs(jl) == n / 2)) ? 1.0 : 2.0;
            total += mult * std::abs(z) * scale * std::pow(kunit * std::sqrt(k2), p);
        }
        return z;
    });
    return total;
}

// Envelope B^2 <= C s^{-p} for s >= 1.
void ball_envelope(int d, double& C, double& p)
{
    switch (d) {
    case 1: C = 1.0; p = 2.0; break;
    case 2: C = 4.0; p = 3.0; break;
    default: C = 36.0; p = 4.0; break;
    }
}

// J(a) = int_a^inf (B(s)^2 - 1) s^{-1-alpha} ds with the B^2 part truncated at S.
class StableRadialIntegral {
public:
    StableRadialIntegral(int d, double alpha, double S) : d_(d), alpha_(alpha), S_(S)
    {
        const int panels = static_cast<int>(std::ceil((S - 1.0) / width_)) + 1;
        nodes_.resize(panels + 1);
        for (int j = 0; j <= panels; ++j) nodes_[j] = 1.0 + j * width_;
        cum_.assign(panels + 1, 0.0);
        for (int j = panels - 1; j >= 0; --j) cum_[j] = cum_[j + 1] + piece(nodes_[j], nodes_[j + 1]);
        low_ = integrate_singular([&](double s) { return lower_integrand(s); }, 0.0, 1.0, 1e-13).value;
    }

    double operator()(double a) const
    {
        if (a <= 0.0) return -low_ + cum_[0] - 1.0 / alpha_;
        if (a < 1.0) {
            const double part = integrate_smooth([&](double s) { return lower_integrand(s); }, a, 1.0, 1e-12).value;
            return -part + cum_[0] - 1.0 / alpha_;
        }
        const double tail = -std::pow(a, -alpha_) / alpha_;
        if (a >= nodes_.back()) return tail;
        const std::size_t j = static_cast<std::size_t>((a - 1.0) / width_);
        const std::size_t next = std::min(j + 1, nodes_.size() - 1);
        return piece(a, nodes_[next]) + cum_[next] + tail;
    }

private:
    static constexpr double width_ = pi / 2.0;
    int d_;
    double alpha_;
    double S_;
    std::vector<double> nodes_, cum_;
    double low_ = 0.0;

    double lower_integrand(double s) const
    {
        if (s < 1e-100) return 0.0;
        return one_minus_ball_transform_sq(d_, s) * std::pow(s, -1.0 - alpha_);
    }
    double piece(double a, double b) const
    {
        if (b <= a) return 0.0;
        auto g = [&](double s) {
            const double B = ball_transform(d_, s);
            return B * B * std::pow(s, -1.0 - alpha_);
        };
        return integrate_smooth(g, a, b, 1e-12).value;
    }
};

}  // namespace

GridFunction::GridFunction(Domain domain, double spacing) : domain_(domain), h_(spacing)
{
    if (!(spacing > 0.0)) throw std::invalid_argument("grid spacing must be positive");
    const double ratio = domain.side() / spacing;
    n_ = static_cast<int>(std::lround(ratio));
    if (n_ < 4 || std::abs(ratio - n_) > 1e-9 * ratio) {
        throw std::invalid_argument("grid spacing must divide the torus side into at least 4 cells");
    }
    std::size_t total = 1;
    for (int a = 0; a < domain.dim(); ++a) total *= static_cast<std::size_t>(n_);
    values_.assign(total, 0.0);
}

Point GridFunction::position(std::size_t i) const
{
    Point p{0.0, 0.0, 0.0};
    for (int a = domain_.dim() - 1; a >= 0; --a) {
        p[a] = static_cast<double>(i % n_) * h_;
        i /= n_;
    }
    return p;
}

GridFunction GridFunction::sample(Domain domain, double spacing, const std::function<double(const Point&)>& f)
{
    GridFunction g(domain, spacing);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = f(g.position(i));
    return g;
}

GridFunction GridFunction::sample(Domain domain, double spacing, const SpatialProfile& f)
{
    if (f.dim() != domain.dim()) throw std::invalid_argument("profile dimension differs from the grid");
    GridFunction g(domain, spacing);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = f.at_offset(domain.displacement(f.center(), g.position(i)));
    return g;
}

double GridFunction::norm(double q) const
{
    if (std::isinf(q)) {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }
    if (!(q >= 1.0)) throw std::invalid_argument("norm order must be >= 1");
    double s = 0.0;
    for (double v : values_) s += std::pow(std::abs(v), q);
    return std::pow(s * std::pow(h_, dim()), 1.0 / q);
}

double GridFunction::total() const
{
    double s = 0.0;
    for (double v : values_) s += v;
    return s * std::pow(h_, dim());
}

GridFunction& GridFunction::operator+=(const GridFunction& o)
{
    check_same_grid(*this, o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& o)
{
    check_same_grid(*this, o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
}

GridFunction& GridFunction::operator*=(double a)
{
    for (double& v : values_) v *= a;
    return *this;
}

GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
GridFunction operator*(double a, GridFunction f) { return f *= a; }

double ball_transform(int d, double s)
{
    s = std::abs(s);
    if (s < 1e-2) {
        const double s2 = s * s;
        return 1.0 - s2 / (2.0 * (d + 2)) + s2 * s2 / (8.0 * (d + 2) * (d + 4));
    }
    switch (d) {
    case 1: return std::sin(s) / s;
    case 2: return 2.0 * boost::math::cyl_bessel_j(1, s) / s;
    default: return 3.0 * (std::sin(s) - s * std::cos(s)) / (s * s * s);
    }
}

double one_minus_ball_transform_sq(int d, double s)
{
    s = std::abs(s);
    if (s >= 1.0) {
        const double B = ball_transform(d, s);
        return 1.0 - B * B;
    }
    // 1 - B from its power series, then (1 - B)(1 + B)
    const double q = -0.25 * s * s;
    double term = 1.0, sum = 0.0;
    for (int m = 1; m < 30; ++m) {
        term *= q / (m * (m + 0.5 * d));
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    const double omb = -sum;
    return omb * (2.0 - omb);
}

GridFunction apply_multiplier(const GridFunction& f, const std::function<double(const Point&)>& m)
{
    return transform_apply(f, [&](const std::array<int, 3>& sj, double kunit, std::complex<double> z) {
        return z * m(Point{kunit * sj[0], kunit * sj[1], kunit * sj[2]});
    });
}

GridFunction ball_average(const GridFunction& f, double r, BallRule rule)
{
    if (!(r > 0.0)) throw std::invalid_argument("ball radius must be positive");
    const int d = f.dim();
    if (rule == BallRule::Spectral) return apply_radial(f, [&](double k) { return ball_transform(d, k * r); });
    const double h = f.spacing();
    const int n = f.sites_per_side();
    if (r < 2.0 * h) throw std::invalid_argument("ball radius below two grid spacings: too few sites");
    if (r >= 0.5 * f.domain().side()) throw std::invalid_argument("ball radius must be below half the torus side");
    const int reach = static_cast<int>(std::ceil(r / h));
    std::vector<std::array<int, 3>> offsets;
    for (int i = -reach; i <= reach; ++i) {
        for (int j = (d >= 2 ? -reach : 0); j <= (d >= 2 ? reach : 0); ++j) {
            for (int k = (d >= 3 ? -reach : 0); k <= (d >= 3 ? reach : 0); ++k) {
                const double dist = h * std::sqrt(static_cast<double>(i * i + j * j + k * k));
                if (dist < r) offsets.push_back({i, j, k});
            }
        }
    }
    GridFunction out(f.domain(), h);
    const double inv = 1.0 / static_cast<double>(offsets.size());
    for (std::size_t s = 0; s < f.size(); ++s) {
        std::array<int, 3> idx{0, 0, 0};
        std::size_t rest = s;
        for (int a = d - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(rest % n);
            rest /= n;
        }
        double sum = 0.0;
        for (const auto& o : offsets) {
            std::array<int, 3> t{0, 0, 0};
            for (int a = 0; a < d; ++a) t[a] = ((idx[a] + o[a]) % n + n) % n;
            sum += f[flat_index(t, d, n)];
        }
        out[s] = sum * inv;
    }
    return out;
}

GridFunction double_ball_average(const GridFunction& f, double r, BallRule rule)
{
    const int d = f.dim();
    if (rule == BallRule::Spectral) {
        return apply_radial(f, [&](double k) { return 1.0 - one_minus_ball_transform_sq(d, k * r); });
    }
    return ball_average(ball_average(f, r, rule), r, rule);
}

LnResult apply_l_n_with_bound(const GridFunction& f, const SlfvParams& params, const LnOptions& opt)
{
    const int d = f.dim();
    const double delta = params.rescale.delta;
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    if (!params.dispersal.is_stable()) {
        const double R = params.dispersal.radius;
        const double vr = ball_volume(d, R);
        const double r = delta * R;
        if (opt.rule == BallRule::Sites) {
            GridFunction out = double_ball_average(f, r, BallRule::Sites) - f;
            out *= vr / (delta * delta);
            return {std::move(out), 0.0};
        }
        return {apply_radial(f, [&](double k) { return -vr / (delta * delta) * one_minus_ball_transform_sq(d, k * r); }),
                0.0};
    }
    if (opt.rule == BallRule::Sites) throw std::invalid_argument("the site rule is available for fixed radius only");
    const double alpha = params.dispersal.alpha;
    check_stable_index(d, alpha);
    const double v1 = unit_ball_volume(d);
    const double a0 = delta * params.dispersal.min_radius();
    // per-mode truncation at s = S: |dropped| <= V_1 |k|^alpha C S^{-p-alpha}/(p+alpha)
    double C = 0.0, p = 0.0;
    ball_envelope(d, C, p);
    const double weight = weighted_coefficient_sum(f, alpha);
    double S = 64.0;
    auto bound_at = [&](double s) { return v1 * weight * C * std::pow(s, -p - alpha) / (p + alpha); };
    while (bound_at(S) > opt.tail_tolerance) {
        S *= 2.0;
        if (S > 1e7) throw NumericalError("apply_l_n: radius tail cannot be truncated within tolerance");
    }
    const StableRadialIntegral J(d, alpha, S);
    GridFunction out = apply_radial(f, [&](double k) {
        if (k == 0.0) return 0.0;
        return v1 * std::pow(k, alpha) * J(k * a0);
    });
    return {std::move(out), bound_at(S)};
}

GridFunction apply_l_n(const GridFunction& f, const SlfvParams& params, const LnOptions& opt)
{
    return apply_l_n_with_bound(f, params, opt).value;
}

GridFunction apply_fixed_limit(const GridFunction& f, double R)
{
    const int d = f.dim();
    const double c = ball_volume(d, R) * R * R / (d + 2.0);
    return apply_radial(f, [&](double k) { return -c * k * k; });
}

GridFunction apply_d_alpha_spectral(const GridFunction& f, double alpha)
{
    const double c = stable_symbol_constant(f.dim(), alpha);
    return apply_radial(f, [&](double k) { return -c * std::pow(k, alpha); });
}

GridFunction apply_d_alpha(const GridFunction& f, double alpha)
{
    if (f.dim() != 1) throw std::invalid_argument("quadrature D^alpha is implemented for d = 1; use the spectral form");
    check_stable_index(1, alpha);
    const int n = f.sites_per_side();
    const double h = f.spacing();
    const double phi1 = phi_kernel(1.0, 1, alpha);
    const double s = 1.0 + alpha;
    // w_r = h sum_{j = r mod n, |j| >= 3} Phi(|j| h), all periodic images
    std::vector<double> w(n, 0.0);
    const int M = 400;
    for (int r = 0; r < n; ++r) {
        double sum = 0.0;
        for (int m = -M; m <= M; ++m) {
            const long j = static_cast<long>(r) + static_cast<long>(m) * n;
            if (std::labs(j) >= 3) sum += std::pow(static_cast<double>(std::labs(j)), -s);
        }
        const double nn = static_cast<double>(n);
        sum += std::pow(r + (M + 0.5) * nn, 1.0 - s) / ((s - 1.0) * nn);
        sum += std::pow((M + 0.5) * nn - r, 1.0 - s) / ((s - 1.0) * nn);
        w[r] = h * phi1 * std::pow(h, -s) * sum;
    }
    double wsum = 0.0;
    for (double x : w) wsum += x;
    // inside |z| < a: second-order Taylor term, with the midpoint-rule end correction at a
    const double a = 2.5 * h;
    const double inner = phi1 * (std::pow(a, 2.0 - alpha) / (2.0 - alpha) - (1.0 - alpha) * h * h * std::pow(a, -alpha) / 24.0);
    GridFunction out(f.domain(), h);
    for (int i = 0; i < n; ++i) {
        double acc = -wsum * f[i];
        for (int r = 0; r < n; ++r) acc += w[r] * f[(i + r) % n];
        const double second = (f[(i + 1) % n] - 2.0 * f[i] + f[(i + n - 1) % n]) / (h * h);
        out[i] = acc + inner * second;
    }
    return out;
}

double second_derivative_norm(const GridFunction& f, double q)
{
    const int d = f.dim();
    double best = 0.0;
    for (int a = 0; a < d; ++a) {
        for (int b = a; b < d; ++b) {
            GridFunction g = apply_multiplier(f, [&](const Point& k) { return -k[a] * k[b]; });
            best = std::max(best, g.norm(q));
        }
    }
    return best;
}

double ConvergenceReport::min_slope() const
{
    double m = std::numeric_limits<double>::infinity();
    for (const auto& fit : family_fits) m = std::min(m, fit.slope);
    for (const auto& per : profile_fits) {
        for (const auto& fit : per) m = std::min(m, fit.slope);
    }
    return m;
}

std::vector<NamedProfile> standard_test_family(int d, double side)
{
    check_dimension(d);
    const double c = 0.5 * side;
    auto r2 = [=](const Point& x) {
        double s = 0.0;
        for (int a = 0; a < d; ++a) s += (x[a] - c) * (x[a] - c);
        return s;
    };
    std::vector<NamedProfile> out;
    for (double w : {1.0, 1.5, 2.0}) {
        out.push_back({"gaussian_w" + std::to_string(w).substr(0, 3),
                       [=](const Point& x) { return std::exp(-r2(x) / (2.0 * w * w)); }});
    }
    out.push_back({"oscillatory", [=](const Point& x) { return std::cos(2.0 * (x[0] - c)) * std::exp(-r2(x) / 8.0); }});
    return out;
}

SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("log-log fit needs two or more points");
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("log-log fit needs positive data");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    const double slope = sxy / sxx;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = ly[i] - my - slope * (lx[i] - mx);
        rss += e * e;
    }
    return {slope, std::sqrt(rss / n)};
}

ConvergenceReport convergence_study(const std::vector<NamedProfile>& family, const std::vector<double>& deltas,
                                    const ConvergenceCase& c, const ConvergenceOptions& opt)
{
    if (family.empty()) throw std::invalid_argument("convergence study needs at least one profile");
    if (deltas.size() < 2) throw std::invalid_argument("convergence study needs at least two deltas");
    if (c.stable) check_stable_index(opt.d, c.alpha);
    const double rmin = c.stable ? 1.0 : c.radius;
    const std::size_t nq = opt.qs.size();
    ConvergenceReport rep;
    rep.qs = opt.qs;
    std::vector<std::vector<std::vector<double>>> gaps(family.size(), std::vector<std::vector<double>>(nq));
    std::vector<std::vector<double>> totals(nq);
    for (double delta : deltas) {
        const double target = std::min(opt.base_spacing, delta * rmin / 4.0);
        const int n = static_cast<int>(std::ceil(opt.side / target));
        const double h = opt.side / n;
        const Domain dom(opt.d, opt.side);
        SlfvParams params;
        params.u = 1.0;
        params.dispersal = c.stable ? Dispersal::stable(c.alpha) : Dispersal::fixed(c.radius);
        params.rescale = {1, delta};
        params.domain = Domain(opt.d, opt.side / delta);
        std::vector<double> sum(nq, 0.0);
        for (std::size_t p = 0; p < family.size(); ++p) {
            const GridFunction f = GridFunction::sample(dom, h, family[p].f);
            const GridFunction limit = c.stable ? apply_d_alpha_spectral(f, c.alpha) : apply_fixed_limit(f, c.radius);
            const GridFunction gap = apply_l_n(f, params) - limit;
            const double r = delta * rmin;
            const GridFunction avg_gap = ball_average(f, r, BallRule::Spectral) - f;
            for (std::size_t iq = 0; iq < nq; ++iq) {
                const double q = opt.qs[iq];
                const double g = gap.norm(q);
                gaps[p][iq].push_back(g);
                sum[iq] += g;
                const double bound = 0.5 * opt.d * r * r * second_derivative_norm(f, q);
                if (avg_gap.norm(q) > bound * (1.0 + 1e-9)) rep.ball_bound_holds = false;
            }
        }
        for (std::size_t iq = 0; iq < nq; ++iq) totals[iq].push_back(sum[iq]);
    }
    for (std::size_t iq = 0; iq < nq; ++iq) rep.family_fits.push_back(fit_loglog(deltas, totals[iq]));
    for (std::size_t p = 0; p < family.size(); ++p) {
        rep.profile_names.push_back(family[p].name);
        std::vector<SlopeFit> fits;
        for (std::size_t iq = 0; iq < nq; ++iq) fits.push_back(fit_loglog(deltas, gaps[p][iq]));
        rep.profile_fits.push_back(std::move(fits));
    }
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        for (std::size_t iq = 0; iq < nq; ++iq) {
            rep.rows.push_back({deltas[i], opt.qs[iq], totals[iq][i], rep.family_fits[iq].slope});
        }
    }
    return rep;
}

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report)
{
    out << "delta,q,norm_gap,fitted_slope\n";
    out.precision(12);
    for (const auto& r : report.rows) out << r.delta << ',' << r.q << ',' << r.norm_gap << ',' << r.fitted_slope << '\n';
}

}  // namespace slfv
