#ifndef SLFV_PROFILES_HPP
#define SLFV_PROFILES_HPP

#include "slfv/geometry.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace slfv {

/// Smooth rapidly decaying function on R^d (rescaled units).
class SpatialProfile {
public:
    enum class Kind { Gaussian, OddGaussian, Custom };

    /// Normalized isotropic Gaussian density.
    static SpatialProfile gaussian_density(int d, Point center, double sd);
    static SpatialProfile gaussian(int d, Point center, double sd, double amplitude);
    /// amplitude * ((x_1 - c_1)/sd) * exp(-|x - c|^2 / (2 sd^2)); zero mean, odd in x_1.
    static SpatialProfile odd_gaussian(int d, Point center, double sd, double amplitude);
    static SpatialProfile custom(int d, std::function<double(const Point&)> f, Point center, double extent);

    double operator()(const Point& x) const;
    /// Value at center + v.
    double at_offset(const Point& v) const;

    Kind kind() const { return kind_; }
    int dim() const { return d_; }
    const Point& center() const { return center_; }
    double width() const { return sd_; }
    double amplitude() const { return amp_; }
    /// Radius around the center beyond which the profile is negligible.
    double extent() const { return extent_; }
    /// Closed-form integral of the profile (Gaussian kinds only).
    std::optional<double> integral() const;

private:
    Kind kind_ = Kind::Gaussian;
    int d_ = 1;
    Point center_{0.0, 0.0, 0.0};
    double sd_ = 1.0;
    double amp_ = 1.0;
    double extent_ = 8.0;
    std::function<double(const Point&)> custom_;
};

/// Function of the type coordinate k in [0, 1].
class TypeProfile {
public:
    enum class Kind { Constant, Indicator, Cosine, Custom };

    static TypeProfile constant(double c);
    static TypeProfile indicator(double a, double b);
    /// cos(2 pi m k).
    static TypeProfile cosine(int m);
    static TypeProfile custom(std::function<double(double)> f);

    double operator()(double k) const;
    double mean() const;
    /// Integral over [0,1] of this times other.
    double inner(const TypeProfile& other) const;

    Kind kind() const { return kind_; }
    double lower() const { return a_; }
    double upper() const { return b_; }
    int frequency() const { return m_; }
    double level() const { return c_; }

private:
    Kind kind_ = Kind::Constant;
    double c_ = 1.0;
    double a_ = 0.0, b_ = 1.0;
    int m_ = 1;
    std::function<double(double)> custom_;

    std::vector<double> breakpoints() const;
};

/// Type component of the noise covariance: int f g dk - int f dk int g dk.
double type_factor(const TypeProfile& f, const TypeProfile& g);

/// phi(x, k) = spatial(x) * type(k); without a type profile the function is space-only.
struct TestFunction {
    SpatialProfile spatial;
    std::optional<TypeProfile> type;
};

}  // namespace slfv

#endif
