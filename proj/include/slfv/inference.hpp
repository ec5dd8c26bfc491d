#ifndef SLFV_INFERENCE_HPP
#define SLFV_INFERENCE_HPP

#include "slfv/observables.hpp"

#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace slfv {

/// Identity-vs-distance data; a non-positive or missing stderr means unit weight.
struct FitData {
    std::vector<double> h;
    std::vector<double> p_hat;
    std::vector<double> stderr_;

    static FitData from_curve(const IdentityCurve& curve);
    std::size_t size() const { return h.size(); }
    void validate() const;
};

/// CSV with header columns h, p_hat and optionally stderr (extra columns ignored). When a
/// t column holds several times, the rows of the latest time are used.
FitData read_identity_csv(std::istream& in);

enum class ModelKind { Short, Long };
enum class LossScale { Linear, Log };

std::string to_string(ModelKind k);

struct FitProblem {
    FitData data;
    ModelKind kind = ModelKind::Short;
    int d = 1;
    /// Mutation rate, known for the short model (it fixes the Bessel shape).
    double mu = 0.5;
    LossScale loss = LossScale::Linear;
    /// Short: (sigma2, prefactor). Long: (prefactor u, length scale (mu/u)^{1/alpha}, alpha).
    std::optional<std::vector<double>> initial;
    std::optional<std::vector<double>> lower;
    std::optional<std::vector<double>> upper;
    /// Weight multiplier for bins with h < sigma/2 in d >= 2 short-range fits.
    double small_bin_weight = 0.25;
    /// Extra starts at scaled initial guesses, run concurrently; the best residual wins.
    int starts = 1;

    void validate() const;
    std::vector<std::string> parameter_names() const;
    std::size_t parameter_count() const { return kind == ModelKind::Short ? 2 : 3; }
    std::vector<double> default_lower() const;
    std::vector<double> default_upper() const;
};

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FitResult {
    ModelKind kind = ModelKind::Short;
    std::vector<std::string> names;
    std::vector<double> estimate;
    std::vector<std::vector<double>> covariance;
    /// Euclidean norm of the weighted residual vector.
    double residual_norm = 0.0;
    double weighted_rss = 0.0;
    std::size_t n = 0;
    int iterations = 0;
    bool converged = false;
    std::string termination;
    double gradient_max_norm = 0.0;
    std::vector<std::string> warnings;

    std::vector<double> standard_errors() const;
};

/// Model value at distance h: A F(h/sigma) (short) or A F_{d,alpha}(lambda h) (long).
double model_value(const FitProblem& problem, const std::vector<double>& params, double h);
/// Weighted residuals and their Jacobian (analytic for the short model, central differences
/// for the long model), row-major n x k.
std::vector<double> weighted_residuals(const FitProblem& problem, const std::vector<double>& params,
                                       std::vector<double>* jacobian = nullptr);
/// Central-difference Jacobian of the weighted residuals with relative step `step`.
std::vector<double> finite_difference_jacobian(const FitProblem& problem, const std::vector<double>& params,
                                               double step);

/// Starting point from the data (e^-1 fall-off distance, tail slope, linear prefactor).
std::vector<double> initial_guess(const FitProblem& problem);

/// Levenberg-Marquardt with bounds; throws FitError when the solver does not converge.
FitResult fit(const FitProblem& problem);

struct ModelComparison {
    struct Entry {
        ModelKind kind;
        FitResult result;
        double aic = 0.0;
    };
    std::vector<Entry> entries;
    /// Winner, or nullopt for a tie (|delta AIC| <= tie_threshold).
    std::optional<ModelKind> preferred;
    double delta_aic = 0.0;
    double tie_threshold = 2.0;
};

/// AIC = n ln(RSS/n) + 2k on the weighted residuals.
double aic(const FitResult& r);
ModelComparison compare_models(const std::vector<FitResult>& fits, double tie_threshold = 2.0);
/// Fits both candidates to the data and compares them.
ModelComparison model_select(const FitData& data, int d, double mu, const std::vector<ModelKind>& candidates);

/// Structured text (JSON) report.
void write_fit_report(std::ostream& out, const FitResult& r);
void write_comparison_report(std::ostream& out, const ModelComparison& c);
/// CSV with header model,parameter,estimate,std_error.
void write_parameter_table(std::ostream& out, const std::vector<FitResult>& fits);

}  // namespace slfv

#endif
