#include "slfv/geometry.hpp"
#include "slfv/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace slfv {

Domain::Domain(int dim, double side) : dim_(dim), side_(side)
{
    check_dimension(dim);
    if (!(side > 0.0)) throw std::invalid_argument("domain side must be positive");
}

double Domain::volume() const { return std::pow(side_, dim_); }

Point Domain::wrap(Point p) const
{
    for (int i = 0; i < dim_; ++i) {
        p[i] = std::fmod(p[i], side_);
        if (p[i] < 0.0) p[i] += side_;
        if (p[i] >= side_) p[i] = 0.0;
    }
    return p;
}

Point Domain::displacement(const Point& a, const Point& b) const
{
    Point out{0.0, 0.0, 0.0};
    for (int i = 0; i < dim_; ++i) {
        double x = b[i] - a[i];
        x -= side_ * std::round(x / side_);
        out[i] = x;
    }
    return out;
}

double Domain::distance(const Point& a, const Point& b) const
{
    const Point v = displacement(a, b);
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

void check_dimension(int d)
{
    if (d < 1 || d > 3) throw std::invalid_argument("dimension must be 1, 2 or 3 (got " + std::to_string(d) + ")");
}

void check_stable_index(int d, double alpha)
{
    check_dimension(d);
    const double upper = std::min(static_cast<double>(d), 2.0);
    if (!(alpha > 0.0 && alpha < upper)) {
        throw std::invalid_argument("stable index alpha must lie in (0, min(d,2)) = (0, " + std::to_string(upper) +
                                    "), got " + std::to_string(alpha));
    }
}

double unit_ball_volume(int d)
{
    check_dimension(d);
    switch (d) {
    case 1: return 2.0;
    case 2: return std::numbers::pi;
    default: return 4.0 * std::numbers::pi / 3.0;
    }
}

double ball_volume(int d, double r)
{
    if (!(r > 0.0)) throw std::invalid_argument("ball radius must be positive");
    return unit_ball_volume(d) * std::pow(r, d);
}

double lens_volume(const LensQuery& q)
{
    check_dimension(q.d);
    if (!(q.r > 0.0) || !(q.h >= 0.0)) throw std::invalid_argument("lens query needs r > 0 and h >= 0");
    const double r = q.r, h = q.h;
    if (h >= 2.0 * r) return 0.0;
    if (h == 0.0) return ball_volume(q.d, r);
    switch (q.d) {
    case 1: return 2.0 * r - h;
    case 2: return 2.0 * r * r * std::acos(h / (2.0 * r)) - 0.5 * h * std::sqrt(4.0 * r * r - h * h);
    default: return std::numbers::pi * (4.0 * r + h) * (2.0 * r - h) * (2.0 * r - h) / 12.0;
    }
}

namespace {

// Integral over r in (a, inf) of g; [a, 2a] directly, the rest after r = 1/v.
double radius_integral(const RealFn& g, double a)
{
    const double mid = 2.0 * a;
    const double near = integrate_singular(g, a, mid, 1e-12).value;
    auto mapped = [&](double v) {
        const double r = 1.0 / v;
        if (!(r < 1e150)) return 0.0;  // integrable endpoint, beyond double range
        return g(r) / (v * v);
    };
    const double far = integrate_singular(mapped, 0.0, 1.0 / mid, 1e-12).value;
    return near + far;
}

}  // namespace

double phi_kernel(double h, int d, double alpha)
{
    check_stable_index(d, alpha);
    if (!(h > 0.0)) throw std::invalid_argument("phi_kernel needs h > 0");
    auto g = [&](double r) {
        return lens_volume({1.0, h / r, d}) / unit_ball_volume(d) * std::pow(r, -(d + alpha + 1.0));
    };
    return radius_integral(g, 0.5 * h);
}

double k_alpha_constant(int d, double alpha)
{
    check_stable_index(d, alpha);
    // lens(r, 1) = r^d lens(1, 1/r), kept in that form to avoid overflow at large r
    auto g = [&](double r) { return lens_volume({1.0, 1.0 / r, d}) * std::pow(r, -(alpha + 1.0)); };
    // beyond r = 1 substitute v = 1/r: the integrand is lens(1, v) v^{alpha-1}
    const double near = integrate_singular(g, 0.5, 1.0, 1e-12).value;
    const double far = integrate_power([&](double v) { return lens_volume({1.0, v, d}); }, alpha, 1.0, 1e-12).value;
    return near + far;
}

double k_alpha(double h, int d, double alpha)
{
    if (!(h > 0.0)) throw std::invalid_argument("k_alpha needs h > 0");
    return k_alpha_constant(d, alpha) * std::pow(h, -alpha);
}

}  // namespace slfv
