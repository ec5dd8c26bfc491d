#ifndef SLFV_EXPERIMENT_HPP
#define SLFV_EXPERIMENT_HPP

#include "slfv/observables.hpp"
#include "slfv/profiles.hpp"
#include "slfv/simulator.hpp"
#include "slfv/wright_malecot.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace slfv {

/// Invalid configuration; the message names the offending field.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Comparison inputs that do not describe the same experiment.
struct ConfigMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

SpatialProfile spatial_profile_from_json(const nlohmann::json& j, int d, const std::string& path);
nlohmann::json spatial_profile_to_json(const SpatialProfile& p);
TypeProfile type_profile_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json type_profile_to_json(const TypeProfile& p);

struct ObservableSpec {
    enum class Kind { PairIdentity, IdentityCurve, Fluctuation };
    Kind kind = Kind::PairIdentity;
    std::string name;
    /// Sampling densities for the identity observables (rescaled units).
    std::optional<SpatialProfile> phi, psi;
    /// Test function for the fluctuation functional.
    std::optional<TestFunction> test;
    IdentityCurveOptions::Mode mode = IdentityCurveOptions::Mode::Exhaustive;
    std::size_t pairs = 10000;
    double bin_width = 0.5;
    double max_distance = 10.0;
};

/// Model geometry is given in rescaled units: torus side `side`, `sites_per_radius` grid sites
/// across the smallest event radius.
struct ExperimentConfig {
    SlfvParams params;
    int dim = 1;
    double side = 30.0;
    int sites_per_radius = 4;
    std::vector<double> schedule;
    std::vector<ObservableSpec> observables;
    int replicates = 1;
    std::uint64_t master_seed = 0;
    std::string output = "slfv-out";

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    /// SHA-256 of the normalized configuration.
    std::string hash() const;
    double t_end() const { return schedule.empty() ? 0.0 : schedule.back(); }
    /// N eta_N, the identity-probability scaling.
    double identity_scale() const { return params.rescale.N * params.eta(); }
};

ExperimentConfig load_config(const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// One observation of one observable in one replicate.
struct ObservationRow {
    std::size_t observable = 0;
    double t = 0.0;
    std::optional<double> h;  // identity-curve bins only
    double value = 0.0;
    std::size_t n_pairs = 0;
};

struct ReplicateResult {
    std::size_t replicate = 0;
    std::vector<ObservationRow> rows;
    std::uint64_t events = 0;
    double max_mass_defect = 0.0;
};

/// Runs replicate `index` on its own jump-ahead stream of the master seed.
ReplicateResult run_replicate(const ExperimentConfig& config, std::size_t index);

struct RunOptions {
    int threads = 1;
    /// Checked between replicates; set it to stop dispatching (completed replicates persist).
    const std::atomic<bool>* stop = nullptr;
    /// Called from the writer for each replicate, in replicate order.
    std::function<void(const ReplicateResult&)> on_replicate;
};

struct RunSummary {
    std::vector<ReplicateResult> replicates;
    bool complete = false;
    std::string error;
};

/// Replicates on a work pool; results are handed to the single writer in index order.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

struct PooledScalar {
    std::size_t observable = 0;
    double t = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
    double variance = 0.0;
    double variance_std_error = 0.0;
    std::size_t replicates = 0;
};

std::vector<PooledScalar> pool_scalars(const ExperimentConfig& config, const std::vector<ReplicateResult>& reps,
                                       ObservableSpec::Kind kind);
/// Pooled identity curve of one observable at one time, scaled by N eta_N.
IdentityCurve pooled_curve(const ExperimentConfig& config, const std::vector<ReplicateResult>& reps,
                           std::size_t observable, double t);

struct Manifest {
    std::string tool = "slfv";
    std::string version;
    std::string rng;
    std::uint64_t master_seed = 0;
    std::string config_hash;
    bool complete = false;
    int replicates_requested = 0;
    int replicates_completed = 0;
    std::string created;
    std::string error;
    std::vector<std::pair<std::string, std::string>> files;  // name, sha256

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);
};

Manifest read_manifest(const std::filesystem::path& dir);
/// Files whose hash differs from the manifest (or that are missing).
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

/// Runs the experiment and writes config.json, replicates.csv, pair_identity.csv,
/// identity_<name>.csv, fluctuation.csv, replicate_stats.csv and manifest.json into `dir`.
Manifest simulate_to_directory(const ExperimentConfig& config, const std::filesystem::path& dir,
                               const RunOptions& options = {});

/// Model description for curve tabulation and comparisons.
struct ModelSpec {
    enum class Kind { Short, Long };
    Kind kind = Kind::Short;
    int d = 1;
    double u = 0.8;
    double mu = 0.5;
    double radius = 1.0;  // short
    double alpha = 0.5;   // long
    std::optional<double> sigma2;  // short: overrides the dispersal-derived value
    double rel_tol = 0.15;
    double z_max = 3.0;

    static ModelSpec from_json(const nlohmann::json& j);
    ShortRangeModel short_model() const;
    LongRangeModel long_model() const;
    /// Point-pair limit N eta_N P at separation h.
    double point_value(double h) const;
    /// Limit of N eta_N P(phi, psi).
    double pair_value(const SpatialProfile& phi, const SpatialProfile& psi) const;
};

struct CurvesRequest {
    ModelSpec model;
    std::vector<double> h;
    std::size_t mc_samples = 0;
    std::uint64_t seed = 1;

    static CurvesRequest from_json(const nlohmann::json& j);
};

/// Rows of F (short) or F_{d,alpha} (long); h where the evaluator fails yields an error row.
std::vector<FValueRow> tabulate_curves(const CurvesRequest& req);

struct CompareRow {
    std::string observable;
    double t = 0.0;
    std::optional<double> h;
    double estimate = 0.0;
    double std_error = 0.0;
    double predicted = 0.0;
    double z = 0.0;
    double rel_error = 0.0;
    bool pass = false;
};

struct CompareReport {
    std::vector<CompareRow> rows;
    bool pass = false;
};

/// Scaled simulation estimates (pair functionals and identity-curve bins) against the limit values.
/// A row passes when the relative error is within rel_tol or |z| within z_max; the verdict needs
/// every row at the final observation time to pass (bins where the limit diverges are skipped).
CompareReport compare_results(const std::filesystem::path& sim_dir, const ModelSpec& model);
void write_compare_csv(std::ostream& out, const CompareReport& report);

/// Command-line entry point; returns the process exit code
/// (0 success, 1 validation error, 2 runtime failure, 3 acceptance failure).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slfv

#endif
