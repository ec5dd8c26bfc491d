#ifndef SLFV_WRIGHT_MALECOT_HPP
#define SLFV_WRIGHT_MALECOT_HPP

#include "slfv/profiles.hpp"
#include "slfv/quadrature.hpp"
#include "slfv/random.hpp"

#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace slfv {

struct ShortRangeModel {
    int d = 1;
    double mu = 0.5;
    double sigma2 = 1.0;
    double prefactor = 1.0;

    /// sigma^2 = u V_R 2R^2/(d+2), prefactor = u^2 V_R^2 / (2 pi sigma^2)^{d/2}.
    static ShortRangeModel from_dispersal(int d, double u, double mu, double R);
    void validate() const;
    double sigma() const;
    /// u^2 V_R^2 recovered from the prefactor.
    double noise_scale() const;
};

/// F(x) = (x/sqrt(2mu))^{1-d/2} K_{1-d/2}(sqrt(2mu) x). For d=1 x=0 gives the finite limit;
/// for d >= 2 arguments below 1e-8 are rejected.
double f_short(int d, double mu, double x);
double f_short(const ShortRangeModel& model, double x);
/// The same function through its time-integral form
/// (2 pi)^{d/2} int_0^inf e^{-2 mu t} G_{2t}(x) dt with unit diffusivity.
double f_short_time_integral(int d, double mu, double x);

struct LongRangeModel {
    int d = 1;
    double alpha = 0.5;
    double u = 0.8;
    double mu = 0.5;
    double symbol_constant = 1.0;  // c_{d,alpha}
    double riesz_constant = 1.0;   // C_{d,alpha}
    double riesz_weight = 1.0;     // Fourier transform of |z|^{-alpha} is riesz_weight |xi|^{alpha-d}

    /// Computes every constant by quadrature.
    static LongRangeModel create(int d, double alpha, double u, double mu);
    void validate() const;
    /// (mu/u)^{1/alpha}.
    double length_scale() const;
};

/// Fourier weight of |z|^{-alpha} in R^d from a Gaussian-mollified Parseval identity.
double riesz_fourier_weight(int d, double alpha);

/// F_{d,alpha}(h) via its radial frequency integral.
QuadResult f_long_with_error(const LongRangeModel& model, double h);
double f_long(const LongRangeModel& model, double h);

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
};

/// Monte Carlo of the defining (t, z1, z2) integral: t ~ Exp(2), z1, z2 from the stable kernels.
McEstimate f_long_mc(const LongRangeModel& model, double h, std::size_t samples, Rng& rng);

/// A(s) = int g1(x) g2(x + s) dx. Closed form for Gaussian kinds; custom profiles only in d = 1.
double overlap(const SpatialProfile& g1, const SpatialProfile& g2, const Point& s);
/// Integral of A over the sphere of radius rho.
double radial_overlap(const SpatialProfile& g1, const SpatialProfile& g2, double rho);
/// int int k(|x - y|) g1(x) g2(y) dx dy; the kernel may have an integrable singularity at 0.
/// Separations beyond `reach` are ignored (for kernels known to vanish there).
double pair_integral(const RealFn& kernel, const SpatialProfile& g1, const SpatialProfile& g2,
                     double reach = std::numeric_limits<double>::infinity(), double rel_tol = 1e-10);

double wm_rhs_short(const ShortRangeModel& model, const SpatialProfile& phi, const SpatialProfile& psi);
double wm_rhs_long(const LongRangeModel& model, const SpatialProfile& phi, const SpatialProfile& psi);

/// Type structure of a covariance functional: the identity functional 1_Delta
/// (factor 1) or a product of type profiles (factor int f g - int f int g).
struct TypeCoupling {
    bool diagonal = true;
    TypeProfile first = TypeProfile::constant(1.0);
    TypeProfile second = TypeProfile::constant(1.0);

    static TypeCoupling identity() { return {}; }
    static TypeCoupling product(TypeProfile f, TypeProfile g) { return {false, std::move(f), std::move(g)}; }
    double factor() const;
};

struct CovarianceValue {
    double value = 0.0;
    /// Bound on the neglected t-tail, from the e^{-2 mu t} envelope.
    double truncation_bound = 0.0;
};

/// <Q^infty, phi (x) psi> by the time-integral route.
CovarianceValue stationary_covariance(const ShortRangeModel& model, const SpatialProfile& phi,
                                      const SpatialProfile& psi, const TypeCoupling& types);
CovarianceValue stationary_covariance(const LongRangeModel& model, const SpatialProfile& phi,
                                      const SpatialProfile& psi, const TypeCoupling& types);

/// Fixed radius: type factor * int phi psi dx.
double noise_covariance_fixed(const SpatialProfile& phi, const SpatialProfile& psi, const TypeCoupling& types);
/// Stable: type factor * int int K_alpha phi psi, with an explicit Riesz constant.
double noise_covariance_stable(int d, double alpha, double riesz_constant, const SpatialProfile& phi,
                               const SpatialProfile& psi, const TypeCoupling& types);

struct FValueRow {
    double h = 0.0;
    double value = 0.0;
    std::string method;
    double est_error = 0.0;
    /// Set when the evaluator failed at this h; the row then carries no value.
    std::string error;
};

/// CSV with header h,F_value,method,est_error; failed rows read h,,error: <message>,.
void write_f_table(std::ostream& out, const std::vector<FValueRow>& rows);

}  // namespace slfv

#endif
