#ifndef SLFV_KERNELS_HPP
#define SLFV_KERNELS_HPP

#include "slfv/quadrature.hpp"

namespace slfv {

/// Modified Bessel function of the second kind, K_nu(x), x > 0.
double bessel_k(double nu, double x);

struct GaussianKernelSpec {
    double sigma2 = 1.0;
    double t = 1.0;
    int d = 1;
};

/// G_t at a point at distance |x| from the origin.
double gaussian_kernel(const GaussianKernelSpec& spec, double x);

/// Value of the integral of Phi(|z|)(1 - cos(xi e.z)) over R^d, i.e. minus the
/// Fourier multiplier of D^alpha at frequency |xi|.
double stable_symbol(int d, double alpha, double xi);
/// c_{d,alpha} = stable_symbol(d, alpha, 1).
double stable_symbol_constant(int d, double alpha);

struct StableKernelSpec {
    int d = 1;
    double alpha = 0.5;
    double symbol_constant = 1.0;
    double t = 1.0;
};

/// Inverse Fourier transform of a radial multiplier m(|xi|), evaluated at radius h.
/// A finite cutoff truncates the frequency integral there.
QuadResult radial_fourier_inverse(int d, const RealFn& multiplier, double h,
                                  double cutoff = std::numeric_limits<double>::infinity(),
                                  double rel_tol = 1e-10);
/// Same for a multiplier |xi|^{p-d} regular(|xi|) with regular bounded near 0.
QuadResult radial_fourier_inverse_power(int d, double p, const RealFn& regular, double h,
                                        double cutoff = std::numeric_limits<double>::infinity(), double rel_tol = 1e-10);

/// G^alpha_t at radius h, the kernel with Fourier transform exp(-t c |xi|^alpha).
double stable_kernel(const StableKernelSpec& spec, double h);
QuadResult stable_kernel_with_error(const StableKernelSpec& spec, double h);

/// Frequency beyond which exp(-t c xi^alpha) < 1e-12.
double stable_frequency_cutoff(const StableKernelSpec& spec);

}  // namespace slfv

#endif
