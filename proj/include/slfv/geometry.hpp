#ifndef SLFV_GEOMETRY_HPP
#define SLFV_GEOMETRY_HPP

#include <array>
#include <stdexcept>

namespace slfv {

using Point = std::array<double, 3>;

/// Periodic cube [0, L)^d with minimum-image distances.
class Domain {
public:
    Domain() = default;
    Domain(int dim, double side);

    int dim() const { return dim_; }
    double side() const { return side_; }
    double volume() const;

    /// Map a point into [0, L)^d.
    Point wrap(Point p) const;
    /// Minimum-image displacement b - a, each coordinate in [-L/2, L/2].
    Point displacement(const Point& a, const Point& b) const;
    double distance(const Point& a, const Point& b) const;

private:
    int dim_ = 1;
    double side_ = 1.0;
};

struct LensQuery {
    double r = 1.0;
    double h = 0.0;
    int d = 1;
};

void check_dimension(int d);
/// Throws unless 0 < alpha < min(d, 2).
void check_stable_index(int d, double alpha);

double unit_ball_volume(int d);
double ball_volume(int d, double r);
double lens_volume(const LensQuery& q);

/// Long-range jump intensity Phi(h) by quadrature of its radius integral.
double phi_kernel(double h, int d, double alpha);
/// C_{d,alpha}: the radius integral of the lens volume at unit separation.
double k_alpha_constant(int d, double alpha);
/// K_alpha(h) = C_{d,alpha} h^{-alpha}.
double k_alpha(double h, int d, double alpha);

}  // namespace slfv

#endif
