#ifndef SLFV_QUADRATURE_HPP
#define SLFV_QUADRATURE_HPP

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace slfv {

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
};

using RealFn = std::function<double(double)>;

/// Adaptive Gauss-Kronrod on a finite interval with a smooth integrand.
QuadResult integrate_smooth(const RealFn& f, double a, double b, double rel_tol = 1e-11);
/// Double-exponential rule, tolerant of integrable endpoint singularities.
QuadResult integrate_singular(const RealFn& f, double a, double b, double rel_tol = 1e-12);
/// int_0^b x^{p-1} g(x) dx for a regular g, through x = b v^{1/p}.
QuadResult integrate_power(const RealFn& g, double p, double b, double rel_tol = 1e-12);
/// Integral over [a, inf) for integrands with exponential or fast algebraic decay.
QuadResult integrate_to_infinity(const RealFn& f, double a, double rel_tol = 1e-12);

/// Wynn epsilon extrapolation of a sequence of partial sums; returns the
/// best estimate and an error taken from consecutive extrapolants.
QuadResult wynn_epsilon(const std::vector<double>& partial_sums);

struct OscillatoryOptions {
    /// Break points b_0 < b_1 < ... (ideally zeros of the oscillating factor).
    std::function<double(int)> breaks;
    /// Lower integration limit; must lie below breaks(0).
    double start = 0.0;
    /// Integration stops past this abscissa (damped integrands); infinity means
    /// the tail is extrapolated.
    double cutoff = std::numeric_limits<double>::infinity();
    double rel_tol = 1e-10;
    double abs_tol = 1e-14;
    int max_intervals = 2000;
};

/// Integral over [start, inf) of an oscillatory integrand: singular-safe rule on
/// [start, b_0], Gauss-Kronrod between breaks, Wynn acceleration of partial sums.
QuadResult integrate_oscillatory(const RealFn& f, const OscillatoryOptions& opt);

}  // namespace slfv

#endif
