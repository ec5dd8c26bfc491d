#include "slfv/profiles.hpp"
#include "slfv/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace slfv {

SpatialProfile SpatialProfile::gaussian(int d, Point center, double sd, double amplitude)
{
    check_dimension(d);
    if (!(sd > 0.0)) throw std::invalid_argument("profile width must be positive");
    SpatialProfile p;
    p.kind_ = Kind::Gaussian;
    p.d_ = d;
    p.center_ = center;
    p.sd_ = sd;
    p.amp_ = amplitude;
    p.extent_ = 9.0 * sd;
    return p;
}

SpatialProfile SpatialProfile::gaussian_density(int d, Point center, double sd)
{
    return gaussian(d, center, sd, std::pow(2.0 * std::numbers::pi * sd * sd, -0.5 * d));
}

SpatialProfile SpatialProfile::odd_gaussian(int d, Point center, double sd, double amplitude)
{
    SpatialProfile p = gaussian(d, center, sd, amplitude);
    p.kind_ = Kind::OddGaussian;
    return p;
}

SpatialProfile SpatialProfile::custom(int d, std::function<double(const Point&)> f, Point center, double extent)
{
    check_dimension(d);
    SpatialProfile p;
    p.kind_ = Kind::Custom;
    p.d_ = d;
    p.center_ = center;
    p.extent_ = extent;
    p.custom_ = std::move(f);
    return p;
}

double SpatialProfile::at_offset(const Point& v) const
{
    if (kind_ == Kind::Custom) {
        Point x = center_;
        for (int a = 0; a < d_; ++a) x[a] += v[a];
        return custom_(x);
    }
    double q = 0.0;
    for (int a = 0; a < d_; ++a) q += v[a] * v[a];
    const double g = amp_ * std::exp(-q / (2.0 * sd_ * sd_));
    return kind_ == Kind::Gaussian ? g : g * v[0] / sd_;
}

double SpatialProfile::operator()(const Point& x) const
{
    Point v{0.0, 0.0, 0.0};
    for (int a = 0; a < d_; ++a) v[a] = x[a] - center_[a];
    return at_offset(v);
}

std::optional<double> SpatialProfile::integral() const
{
    switch (kind_) {
    case Kind::Gaussian: return amp_ * std::pow(2.0 * std::numbers::pi * sd_ * sd_, 0.5 * d_);
    case Kind::OddGaussian: return 0.0;
    default: return std::nullopt;
    }
}

TypeProfile TypeProfile::constant(double c)
{
    TypeProfile t;
    t.kind_ = Kind::Constant;
    t.c_ = c;
    return t;
}

TypeProfile TypeProfile::indicator(double a, double b)
{
    if (!(0.0 <= a && a < b && b <= 1.0)) throw std::invalid_argument("indicator needs 0 <= a < b <= 1");
    TypeProfile t;
    t.kind_ = Kind::Indicator;
    t.a_ = a;
    t.b_ = b;
    return t;
}

TypeProfile TypeProfile::cosine(int m)
{
    if (m < 1) throw std::invalid_argument("cosine type profile needs frequency >= 1");
    TypeProfile t;
    t.kind_ = Kind::Cosine;
    t.m_ = m;
    return t;
}

TypeProfile TypeProfile::custom(std::function<double(double)> f)
{
    TypeProfile t;
    t.kind_ = Kind::Custom;
    t.custom_ = std::move(f);
    return t;
}

double TypeProfile::operator()(double k) const
{
    switch (kind_) {
    case Kind::Constant: return c_;
    case Kind::Indicator: return (k >= a_ && k < b_) ? 1.0 : 0.0;
    case Kind::Cosine: return std::cos(2.0 * std::numbers::pi * m_ * k);
    default: return custom_(k);
    }
}

std::vector<double> TypeProfile::breakpoints() const
{
    if (kind_ == Kind::Indicator) return {a_, b_};
    return {};
}

double TypeProfile::mean() const
{
    switch (kind_) {
    case Kind::Constant: return c_;
    case Kind::Indicator: return b_ - a_;
    case Kind::Cosine: return 0.0;
    default: return integrate_smooth(custom_, 0.0, 1.0).value;
    }
}

double TypeProfile::inner(const TypeProfile& o) const
{
    if (kind_ == Kind::Constant) return c_ * o.mean();
    if (o.kind_ == Kind::Constant) return o.c_ * mean();
    if (kind_ == Kind::Indicator && o.kind_ == Kind::Indicator) {
        return std::max(0.0, std::min(b_, o.b_) - std::max(a_, o.a_));
    }
    if (kind_ == Kind::Cosine && o.kind_ == Kind::Cosine) return m_ == o.m_ ? 0.5 : 0.0;
    std::vector<double> cuts{0.0, 1.0};
    for (double c : breakpoints()) cuts.push_back(c);
    for (double c : o.breakpoints()) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = cuts[i], hi = cuts[i + 1];
        // evaluate at interior points only so indicator edges never matter
        total += integrate_smooth([&](double k) { return (*this)(k) * o(k); }, lo, hi).value;
    }
    return total;
}

double type_factor(const TypeProfile& f, const TypeProfile& g) { return f.inner(g) - f.mean() * g.mean(); }

}  // namespace slfv
