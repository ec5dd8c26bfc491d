#ifndef SLFV_OPERATORS_HPP
#define SLFV_OPERATORS_HPP

#include "slfv/geometry.hpp"
#include "slfv/profiles.hpp"
#include "slfv/simulator.hpp"

#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace slfv {

/// Values on the periodic grid {i h} of a torus [0, L)^d (rescaled units), row-major with
/// the last coordinate fastest.
class GridFunction {
public:
    GridFunction(Domain domain, double spacing);
    /// Samples a profile through minimum-image offsets from its center.
    static GridFunction sample(Domain domain, double spacing, const SpatialProfile& f);
    static GridFunction sample(Domain domain, double spacing, const std::function<double(const Point&)>& f);

    int dim() const { return domain_.dim(); }
    const Domain& domain() const { return domain_; }
    double spacing() const { return h_; }
    int sites_per_side() const { return n_; }
    std::size_t size() const { return values_.size(); }
    Point position(std::size_t i) const;

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    /// Grid norm (h^d sum |f|^q)^{1/q}; q = infinity gives the max norm.
    double norm(double q) const;
    /// h^d sum f.
    double total() const;

    GridFunction& operator+=(const GridFunction& o);
    GridFunction& operator-=(const GridFunction& o);
    GridFunction& operator*=(double a);

private:
    Domain domain_;
    double h_ = 1.0;
    int n_ = 1;
    std::vector<double> values_;
};

GridFunction operator+(GridFunction a, const GridFunction& b);
GridFunction operator-(GridFunction a, const GridFunction& b);
GridFunction operator*(double a, GridFunction f);

/// Sites: plain mean over the grid sites strictly inside the ball (needs r >= 2h).
/// Spectral: exact ball mean of the trigonometric interpolant of the grid values.
enum class BallRule { Sites, Spectral };

GridFunction ball_average(const GridFunction& f, double r, BallRule rule = BallRule::Sites);
/// Ball average of the ball average at the same radius.
GridFunction double_ball_average(const GridFunction& f, double r, BallRule rule = BallRule::Sites);

/// Applies the Fourier multiplier m(k) (k in angular wavenumbers, even in k) to f.
GridFunction apply_multiplier(const GridFunction& f, const std::function<double(const Point&)>& m);
/// Radial Fourier transform of the normalized unit-ball indicator at |k| = s.
double ball_transform(int d, double s);
/// 1 - ball_transform(d, s)^2 without cancellation at small s.
double one_minus_ball_transform_sq(int d, double s);

struct LnOptions {
    /// Sites is available for fixed radius only.
    BallRule rule = BallRule::Spectral;
    /// Allowed sup-norm error from truncating the radius integral (stable case).
    double tail_tolerance = 1e-8;
};

struct LnResult {
    GridFunction value;
    double truncation_bound = 0.0;
};

/// Rescaled generator: V_R/delta^2 (double average at delta R - f) for fixed radius, and
/// int_{delta r_min}^inf V_r (double average at r - f) r^{-1-alpha-d} dr for stable radii.
LnResult apply_l_n_with_bound(const GridFunction& f, const SlfvParams& params, const LnOptions& opt = {});
GridFunction apply_l_n(const GridFunction& f, const SlfvParams& params, const LnOptions& opt = {});

/// Limit operators: V_R R^2/(d+2) Laplacian, and the symbol -c_{d,alpha}|k|^alpha.
GridFunction apply_fixed_limit(const GridFunction& f, double R);
GridFunction apply_d_alpha_spectral(const GridFunction& f, double alpha);

/// D^alpha f(x) = int Phi(|x - y|)(f(y) - f(x)) dy by grid quadrature: all periodic images
/// of Phi beyond 2.5h, a second-order Taylor term inside. One dimension.
GridFunction apply_d_alpha(const GridFunction& f, double alpha);

/// max over |beta| = 2 of the grid q-norm of the spectral second derivative.
double second_derivative_norm(const GridFunction& f, double q);

struct ConvergenceCase {
    bool stable = false;
    double radius = 1.0;  // fixed radius
    double alpha = 0.5;   // stable
};

struct ConvergenceRow {
    double delta = 0.0;
    double q = 1.0;
    double norm_gap = 0.0;
    double fitted_slope = 0.0;
};

struct SlopeFit {
    double slope = 0.0;
    double residual = 0.0;  // root mean square residual of the log-log fit
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;  // family total per (delta, q)
    std::vector<double> qs;
    std::vector<SlopeFit> family_fits;                 // per q
    std::vector<std::vector<SlopeFit>> profile_fits;   // [profile][q]
    std::vector<std::string> profile_names;
    /// ball-average error bound (d/2) r^2 max|d^2 f|_q held at every (profile, delta, q).
    bool ball_bound_holds = true;
    double min_slope() const;
};

struct NamedProfile {
    std::string name;
    std::function<double(const Point&)> f;
};

/// Gaussians of widths 1, 1.5, 2 and a Gaussian-windowed cosine, centered in [0, L)^d.
std::vector<NamedProfile> standard_test_family(int d, double side);

struct ConvergenceOptions {
    int d = 1;
    double side = 40.0;
    /// Grid spacing is min(base_spacing, delta r_min / 4).
    double base_spacing = 0.05;
    std::vector<double> qs{1.0, 2.0};
};

SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

ConvergenceReport convergence_study(const std::vector<NamedProfile>& family, const std::vector<double>& deltas,
                                    const ConvergenceCase& c, const ConvergenceOptions& opt = {});

/// CSV with header delta,q,norm_gap,fitted_slope.
void write_convergence_csv(std::ostream& out, const ConvergenceReport& report);

}  // namespace slfv

#endif
