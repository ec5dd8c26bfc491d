#ifndef SLFV_OBSERVABLES_HPP
#define SLFV_OBSERVABLES_HPP

#include "slfv/profiles.hpp"
#include "slfv/random.hpp"
#include "slfv/simulator.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace slfv {

/// <rho_x (x) rho_y, 1_Delta>: sum over shared families of the two weights.
double identity_probability(const MeasureField& field, std::size_t x, std::size_t y);

/// Profile values at the site centers; `unit` converts grid lengths to profile units.
/// Positions are taken as minimum-image offsets from the profile center.
std::vector<double> grid_values(const MeasureField& field, const SpatialProfile& profile, double unit);
/// Same, normalized to sum 1 (a sampling density on the grid).
std::vector<double> grid_density(const MeasureField& field, const SpatialProfile& profile, double unit);

struct IdentityBin {
    double h = 0.0;
    double p_hat = 0.0;
    double std_error = 0.0;
    std::size_t n_pairs = 0;
};

struct IdentityCurve {
    std::vector<IdentityBin> bins;
    bool scaled = false;
    double scale = 1.0;
    double t = 0.0;
    /// Overall P(phi, psi) and its standard error.
    double total = 0.0;
    double total_error = 0.0;
    std::vector<std::string> warnings;
};

std::vector<double> uniform_edges(double width, double max);

struct IdentityCurveOptions {
    enum class Mode { Sampled, Exhaustive } mode = Mode::Sampled;
    std::size_t pairs = 10000;
    /// Separation bin edges in profile units.
    std::vector<double> edges;
    double unit = 1.0;
};

/// Identity probability of pairs drawn from phi (x) psi, binned by separation.
IdentityCurve identity_curve(const MeasureField& field, const std::vector<double>& phi, const std::vector<double>& psi,
                             const IdentityCurveOptions& options, Rng& rng);

/// Translation average C(lag) = mean over sites x of identity(x, x + lag), for
/// every lag vector with components in [-max_lag, max_lag].
struct LagIdentity {
    int d = 1;
    int max_lag = 0;
    std::vector<double> values;
    double at(int i, int j = 0, int k = 0) const;
};

LagIdentity lag_identity(const MeasureField& field, int max_lag);
/// P(phi, psi) = sum_{x,y} phi_x psi_y C(y - x); throws when phi (x) psi puts
/// more than `tolerance` of its mass on lags beyond the table.
double pair_identity(const MeasureField& field, const LagIdentity& lags, const std::vector<double>& phi,
                     const std::vector<double>& psi, double tolerance = 1e-9);
/// sum_{x,y} phi_x psi_y identity(x, y) over all grid pairs, accumulated per family as
/// sum_f (sum_x phi_x w_f(x)) (sum_y psi_y w_f(y)).
double pair_identity_exhaustive(const MeasureField& field, const std::vector<double>& phi, const std::vector<double>& psi);
/// Lag table binned by |lag| (scaled by unit) as an identity-by-distance curve.
IdentityCurve lag_curve(const MeasureField& field, const LagIdentity& lags, double unit, const std::vector<double>& edges);

/// Multiply estimates and errors by `factor` (N eta_N) and mark the curve.
IdentityCurve scale_curve(IdentityCurve curve, double factor);

/// Mean and standard error across replicate curves with identical bins.
IdentityCurve pool_curves(const std::vector<IdentityCurve>& replicates);

void write_curve_header(std::ostream& out);
void write_curve_rows(std::ostream& out, const IdentityCurve& curve);

/// scale^{1/2} (<rho, phi> - <lambda, phi>) by grid quadrature (cell volume in profile units).
double fluctuation_functional(const MeasureField& field, const TestFunction& phi, double scale, double unit);

struct QvarReport {
    double empirical = 0.0;
    double predicted = 0.0;
    double std_error = 0.0;
    double z = 0.0;
    std::size_t replicates = 0;
    double drift_ratio = 0.0;
};

/// Compare the sample variance of replicate functionals with a predicted variance.
QvarReport qvar_check(const std::vector<double>& samples, double predicted, double drift_ratio = 0.0);

}  // namespace slfv

#endif
