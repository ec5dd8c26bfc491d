#include "slfv/experiment.hpp"

#include "slfv/inference.hpp"
#include "slfv/operators.hpp"
#include "slfv/random.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace slfv {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Typed access to one JSON object with field-level error messages.
class Fields {
public:
    Fields(const json& j, std::string path, std::set<std::string> allowed) : j_(j), path_(std::move(path))
    {
        if (!j.is_object()) throw ConfigError((path_.empty() ? "config" : path_) + ": expected an object");
        for (const auto& [k, v] : j.items()) {
            if (!allowed.count(k)) throw ConfigError(join(path_, k) + ": unknown field");
        }
    }

    bool has(const std::string& k) const { return j_.contains(k); }
    std::string path(const std::string& k) const { return join(path_, k); }

    const json& at(const std::string& k) const
    {
        if (!j_.contains(k)) throw ConfigError(path(k) + ": required field is missing");
        return j_.at(k);
    }

    double number(const std::string& k) const
    {
        const json& v = at(k);
        if (!v.is_number()) throw ConfigError(path(k) + ": expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(path(k) + ": must be finite");
        return x;
    }
    double number(const std::string& k, double def) const { return has(k) ? number(k) : def; }

    long long integer(const std::string& k) const
    {
        const json& v = at(k);
        if (!v.is_number_integer()) throw ConfigError(path(k) + ": expected an integer");
        return v.get<long long>();
    }
    long long integer(const std::string& k, long long def) const { return has(k) ? integer(k) : def; }

    std::uint64_t unsigned_integer(const std::string& k, std::uint64_t def) const
    {
        if (!has(k)) return def;
        const json& v = at(k);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            throw ConfigError(path(k) + ": expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    std::string string(const std::string& k) const
    {
        const json& v = at(k);
        if (!v.is_string()) throw ConfigError(path(k) + ": expected a string");
        return v.get<std::string>();
    }
    std::string string(const std::string& k, const std::string& def) const { return has(k) ? string(k) : def; }

    std::vector<double> numbers(const std::string& k) const
    {
        const json& v = at(k);
        if (!v.is_array()) throw ConfigError(path(k) + ": expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(path(k) + "[" + std::to_string(i) + "]: expected a number");
            out.push_back(v[i].get<double>());
        }
        return out;
    }

private:
    const json& j_;
    std::string path_;
};

void require(bool ok, const std::string& path, const std::string& what)
{
    if (!ok) throw ConfigError(path + ": " + what);
}

Point center_from(const Fields& f, int d)
{
    const auto c = f.numbers("center");
    require(static_cast<int>(c.size()) == d, f.path("center"), "needs " + std::to_string(d) + " coordinates");
    Point p{0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a) p[a] = c[a];
    return p;
}

std::string number_text(double x)
{
    std::ostringstream s;
    s << std::setprecision(17) << x;
    return s.str();
}

std::string utc_now()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

const char* kind_name(ObservableSpec::Kind k)
{
    switch (k) {
    case ObservableSpec::Kind::PairIdentity: return "pair_identity";
    case ObservableSpec::Kind::IdentityCurve: return "identity_curve";
    default: return "fluctuation";
    }
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

// Header-keyed CSV rows.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::vector<std::map<std::string, std::string>> rows;
    if (!std::getline(in, line)) return rows;
    const auto header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
        rows.push_back(std::move(row));
    }
    return rows;
}

double cell_number(const std::map<std::string, std::string>& row, const std::string& key)
{
    const auto it = row.find(key);
    if (it == row.end()) throw std::runtime_error("missing column " + key);
    return std::stod(it->second);
}

}  // namespace

SpatialProfile spatial_profile_from_json(const json& j, int d, const std::string& path)
{
    Fields f(j, path, {"kind", "center", "sd", "amplitude"});
    const std::string kind = f.string("kind");
    const Point c = center_from(f, d);
    const double sd = f.number("sd");
    require(sd > 0.0, f.path("sd"), "must be positive");
    if (kind == "gaussian_density") {
        require(!f.has("amplitude"), f.path("amplitude"), "a density has no amplitude");
        return SpatialProfile::gaussian_density(d, c, sd);
    }
    if (kind == "gaussian") return SpatialProfile::gaussian(d, c, sd, f.number("amplitude", 1.0));
    if (kind == "odd_gaussian") return SpatialProfile::odd_gaussian(d, c, sd, f.number("amplitude", 1.0));
    throw ConfigError(f.path("kind") + ": expected gaussian_density, gaussian or odd_gaussian");
}

json spatial_profile_to_json(const SpatialProfile& p)
{
    if (p.kind() == SpatialProfile::Kind::Custom) throw std::invalid_argument("custom profiles have no JSON form");
    std::vector<double> c(p.center().begin(), p.center().begin() + p.dim());
    return {{"kind", p.kind() == SpatialProfile::Kind::Gaussian ? "gaussian" : "odd_gaussian"},
            {"center", c},
            {"sd", p.width()},
            {"amplitude", p.amplitude()}};
}

TypeProfile type_profile_from_json(const json& j, const std::string& path)
{
    Fields f(j, path, {"kind", "value", "lower", "upper", "m"});
    const std::string kind = f.string("kind");
    if (kind == "constant") return TypeProfile::constant(f.number("value", 1.0));
    if (kind == "indicator") {
        const double a = f.number("lower"), b = f.number("upper");
        require(0.0 <= a && a < b && b <= 1.0, f.path("upper"), "needs 0 <= lower < upper <= 1");
        return TypeProfile::indicator(a, b);
    }
    if (kind == "cosine") {
        const long long m = f.integer("m");
        require(m >= 1, f.path("m"), "must be at least 1");
        return TypeProfile::cosine(static_cast<int>(m));
    }
    throw ConfigError(f.path("kind") + ": expected constant, indicator or cosine");
}

json type_profile_to_json(const TypeProfile& p)
{
    switch (p.kind()) {
    case TypeProfile::Kind::Constant: return {{"kind", "constant"}, {"value", p.level()}};
    case TypeProfile::Kind::Indicator: return {{"kind", "indicator"}, {"lower", p.lower()}, {"upper", p.upper()}};
    case TypeProfile::Kind::Cosine: return {{"kind", "cosine"}, {"m", p.frequency()}};
    default: throw std::invalid_argument("custom type profiles have no JSON form");
    }
}

ExperimentConfig ExperimentConfig::from_json(const json& j)
{
    Fields top(j, "", {"model", "schedule", "observables", "replicates", "master_seed", "output"});
    ExperimentConfig c;
    Fields m(top.at("model"), "model",
             {"dim", "u", "mu", "dispersal", "N", "delta", "side", "sites_per_radius", "prune_threshold"});
    const long long d = m.integer("dim");
    require(d >= 1 && d <= 3, m.path("dim"), "must be 1, 2 or 3");
    c.dim = static_cast<int>(d);
    const double u = m.number("u");
    require(u > 0.0 && u <= 1.0, m.path("u"), "must lie in (0, 1]");
    const double mu = m.number("mu");
    require(mu >= 0.0, m.path("mu"), "must be non-negative");
    Fields disp(m.at("dispersal"), "model.dispersal", {"kind", "radius", "alpha"});
    const std::string dk = disp.string("kind");
    Dispersal dispersal;
    if (dk == "fixed") {
        const double r = disp.number("radius");
        require(r > 0.0, disp.path("radius"), "must be positive");
        dispersal = Dispersal::fixed(r);
    }
    else if (dk == "stable") {
        const double a = disp.number("alpha");
        require(a > 0.0 && a < std::min(c.dim, 2), disp.path("alpha"), "must lie in (0, min(dim, 2))");
        dispersal = Dispersal::stable(a);
    }
    else {
        throw ConfigError(disp.path("kind") + ": expected fixed or stable");
    }
    const long long N = m.integer("N");
    require(N >= 1, m.path("N"), "must be a positive integer");
    const double delta = m.number("delta");
    require(delta > 0.0 && delta <= 1.0, m.path("delta"), "must lie in (0, 1]");
    c.side = m.number("side");
    require(c.side > 0.0, m.path("side"), "must be positive");
    const long long spr = m.integer("sites_per_radius", 4);
    require(spr >= 4, m.path("sites_per_radius"), "must be at least 4");
    c.sites_per_radius = static_cast<int>(spr);
    try {
        c.params = SlfvParams::from_rescaled(u, mu, dispersal, {static_cast<int>(N), delta}, c.dim, c.side,
                                             c.sites_per_radius);
        c.params.prune_threshold = m.number("prune_threshold", 1e-9);
        c.params.validate();
    }
    catch (const ConfigError&) {
        throw;
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }

    c.schedule = top.has("schedule") ? top.numbers("schedule") : std::vector<double>{};
    for (double t : c.schedule) require(t >= 0.0, "schedule", "observation times must be non-negative");
    require(std::is_sorted(c.schedule.begin(), c.schedule.end()), "schedule", "observation times must be sorted");

    const long long reps = top.integer("replicates", 1);
    require(reps >= 1, "replicates", "must be at least 1");
    c.replicates = static_cast<int>(reps);
    c.master_seed = top.unsigned_integer("master_seed", 0);
    c.output = top.string("output", c.output);

    if (top.has("observables")) {
        const json& obs = top.at("observables");
        require(obs.is_array(), "observables", "expected an array");
        std::set<std::string> names;
        for (std::size_t i = 0; i < obs.size(); ++i) {
            const std::string p = "observables[" + std::to_string(i) + "]";
            Fields o(obs[i], p,
                     {"kind", "name", "phi", "psi", "spatial", "type", "mode", "pairs", "bin_width", "max_distance"});
            ObservableSpec s;
            const std::string kind = o.string("kind");
            s.name = o.string("name", kind + std::to_string(i));
            require(!s.name.empty() && s.name.find_first_of(",/\\ \"") == std::string::npos, o.path("name"),
                    "must be non-empty without commas, slashes, quotes or spaces");
            require(names.insert(s.name).second, o.path("name"), "duplicate observable name");
            auto inside = [&](const SpatialProfile& sp, const std::string& where) {
                for (int a = 0; a < c.dim; ++a) {
                    require(sp.center()[a] >= 0.0 && sp.center()[a] < c.side, where + ".center",
                            "must lie inside [0, side)");
                }
                require(8.0 * sp.width() <= 0.5 * c.side, where + ".sd",
                        "profile must fit well inside the torus (8 sd <= side / 2)");
            };
            if (kind == "pair_identity" || kind == "identity_curve") {
                s.kind = kind == "pair_identity" ? ObservableSpec::Kind::PairIdentity : ObservableSpec::Kind::IdentityCurve;
                s.phi = spatial_profile_from_json(o.at("phi"), c.dim, o.path("phi"));
                s.psi = spatial_profile_from_json(o.at("psi"), c.dim, o.path("psi"));
                require(s.phi->kind() == SpatialProfile::Kind::Gaussian && s.psi->kind() == SpatialProfile::Kind::Gaussian,
                        o.path("phi"), "sampling densities must be Gaussian");
                inside(*s.phi, o.path("phi"));
                inside(*s.psi, o.path("psi"));
                if (s.kind == ObservableSpec::Kind::IdentityCurve) {
                    const std::string mode = o.string("mode", "sampled");
                    require(mode == "sampled" || mode == "exhaustive", o.path("mode"), "expected sampled or exhaustive");
                    s.mode = mode == "sampled" ? IdentityCurveOptions::Mode::Sampled
                                               : IdentityCurveOptions::Mode::Exhaustive;
                    const long long pairs = o.integer("pairs", 10000);
                    require(pairs >= 1, o.path("pairs"), "must be positive");
                    s.pairs = static_cast<std::size_t>(pairs);
                    s.bin_width = o.number("bin_width", 0.5);
                    require(s.bin_width > 0.0, o.path("bin_width"), "must be positive");
                    s.max_distance = o.number("max_distance", 10.0);
                    require(s.max_distance > s.bin_width, o.path("max_distance"), "must exceed bin_width");
                    const std::size_t sites = MeasureField(c.params.domain, c.params.grid_spacing).size();
                    require(s.mode == IdentityCurveOptions::Mode::Sampled || sites <= 20000, o.path("mode"),
                            "exhaustive curves need at most 20000 sites");
                }
            }
            else if (kind == "fluctuation") {
                s.kind = ObservableSpec::Kind::Fluctuation;
                TestFunction tf{spatial_profile_from_json(o.at("spatial"), c.dim, o.path("spatial")), std::nullopt};
                if (o.has("type")) tf.type = type_profile_from_json(o.at("type"), o.path("type"));
                inside(tf.spatial, o.path("spatial"));
                s.test = tf;
            }
            else {
                throw ConfigError(o.path("kind") + ": expected pair_identity, identity_curve or fluctuation");
            }
            c.observables.push_back(std::move(s));
        }
    }
    return c;
}

json ExperimentConfig::to_json() const
{
    json disp = params.dispersal.is_stable() ? json{{"kind", "stable"}, {"alpha", params.dispersal.alpha}}
                                             : json{{"kind", "fixed"}, {"radius", params.dispersal.radius}};
    json j;
    j["model"] = {{"dim", dim},
                  {"u", params.u},
                  {"mu", params.mu},
                  {"dispersal", disp},
                  {"N", params.rescale.N},
                  {"delta", params.rescale.delta},
                  {"side", side},
                  {"sites_per_radius", sites_per_radius},
                  {"prune_threshold", params.prune_threshold}};
    j["schedule"] = schedule;
    j["observables"] = json::array();
    for (const auto& o : observables) {
        json e{{"kind", kind_name(o.kind)}, {"name", o.name}};
        if (o.kind == ObservableSpec::Kind::Fluctuation) {
            e["spatial"] = spatial_profile_to_json(o.test->spatial);
            if (o.test->type) e["type"] = type_profile_to_json(*o.test->type);
        }
        else {
            e["phi"] = spatial_profile_to_json(*o.phi);
            e["psi"] = spatial_profile_to_json(*o.psi);
            if (o.kind == ObservableSpec::Kind::IdentityCurve) {
                e["mode"] = o.mode == IdentityCurveOptions::Mode::Sampled ? "sampled" : "exhaustive";
                e["pairs"] = o.pairs;
                e["bin_width"] = o.bin_width;
                e["max_distance"] = o.max_distance;
            }
        }
        j["observables"].push_back(e);
    }
    j["replicates"] = replicates;
    j["master_seed"] = master_seed;
    j["output"] = output;
    return j;
}

std::string ExperimentConfig::hash() const
{
    json j = to_json();
    j.erase("output");
    return sha256_hex(j.dump());
}

ExperimentConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    }
    catch (const json::parse_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    return ExperimentConfig::from_json(j);
}

std::string sha256_hex(const std::string& bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    std::ostringstream s;
    for (unsigned int i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return s.str();
}

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return sha256_hex(s.str());
}

ReplicateResult run_replicate(const ExperimentConfig& config, std::size_t index)
{
    Simulation sim(config.params, hash_pair(config.master_seed, index));
    sim.rng() = replicate_stream(config.master_seed, index);
    Rng sampler(hash_pair(config.master_seed ^ 0x9e3779b97f4a7c15ULL, index));
    const double unit = config.params.rescale.delta;
    const double scale = config.identity_scale();

    struct Densities {
        std::vector<double> phi, psi;
    };
    std::vector<Densities> dens(config.observables.size());
    for (std::size_t k = 0; k < config.observables.size(); ++k) {
        const auto& o = config.observables[k];
        if (o.phi) dens[k] = {grid_density(sim.field(), *o.phi, unit), grid_density(sim.field(), *o.psi, unit)};
    }

    ReplicateResult r;
    r.replicate = index;
    auto observe = [&](const MeasureField& field, double t, std::size_t) {
        r.max_mass_defect = std::max(r.max_mass_defect, field.max_mass_defect());
        for (std::size_t k = 0; k < config.observables.size(); ++k) {
            const auto& o = config.observables[k];
            switch (o.kind) {
            case ObservableSpec::Kind::PairIdentity:
                r.rows.push_back({k, t, std::nullopt, pair_identity_exhaustive(field, dens[k].phi, dens[k].psi), 0});
                break;
            case ObservableSpec::Kind::IdentityCurve: {
                IdentityCurveOptions opt{o.mode, o.pairs, uniform_edges(o.bin_width, o.max_distance), unit};
                const IdentityCurve curve = identity_curve(field, dens[k].phi, dens[k].psi, opt, sampler);
                for (const auto& b : curve.bins) r.rows.push_back({k, t, b.h, b.p_hat, b.n_pairs});
                break;
            }
            case ObservableSpec::Kind::Fluctuation:
                r.rows.push_back({k, t, std::nullopt, fluctuation_functional(field, *o.test, scale, unit), 0});
                break;
            }
        }
    };
    sim.run(config.t_end(), config.schedule, observe);
    r.max_mass_defect = std::max(r.max_mass_defect, sim.field().max_mass_defect());
    r.events = sim.event_count();
    return r;
}

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options)
{
    const std::size_t total = static_cast<std::size_t>(config.replicates);
    int threads = options.threads > 0 ? options.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = static_cast<int>(std::min<std::size_t>(threads, total));

    std::mutex lock;
    std::condition_variable ready;
    std::map<std::size_t, ReplicateResult> done;
    std::size_t next = 0;
    int running = threads;
    bool failed = false;
    std::string error;

    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> g(lock);
                const bool stop = options.stop && options.stop->load();
                if (failed || stop || next >= total) break;
                i = next++;
            }
            try {
                ReplicateResult r = run_replicate(config, i);
                std::lock_guard<std::mutex> g(lock);
                done.emplace(i, std::move(r));
            }
            catch (const std::exception& e) {
                std::lock_guard<std::mutex> g(lock);
                failed = true;
                if (error.empty()) error = "replicate " + std::to_string(i) + ": " + e.what();
            }
            ready.notify_all();
        }
        std::lock_guard<std::mutex> g(lock);
        --running;
        ready.notify_all();
    };

    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);

    RunSummary summary;
    std::size_t expect = 0;
    for (;;) {
        std::unique_lock<std::mutex> g(lock);
        ready.wait(g, [&] { return done.count(expect) || running == 0; });
        if (!done.count(expect)) break;
        ReplicateResult r = std::move(done.at(expect));
        done.erase(expect);
        g.unlock();
        if (options.on_replicate) options.on_replicate(r);
        summary.replicates.push_back(std::move(r));
        ++expect;
    }
    for (auto& t : pool) t.join();
    summary.error = error;
    summary.complete = error.empty() && summary.replicates.size() == total;
    if (!summary.complete && summary.error.empty()) summary.error = "interrupted";
    return summary;
}

std::vector<PooledScalar> pool_scalars(const ExperimentConfig& config, const std::vector<ReplicateResult>& reps,
                                       ObservableSpec::Kind kind)
{
    std::map<std::pair<std::size_t, double>, std::vector<double>> groups;
    for (const auto& r : reps) {
        for (const auto& row : r.rows) {
            if (config.observables[row.observable].kind == kind) groups[{row.observable, row.t}].push_back(row.value);
        }
    }
    std::vector<PooledScalar> out;
    for (const auto& [key, xs] : groups) {
        PooledScalar p;
        p.observable = key.first;
        p.t = key.second;
        p.replicates = xs.size();
        const double n = static_cast<double>(xs.size());
        for (double x : xs) p.mean += x / n;
        if (xs.size() > 1) {
            double ss = 0.0;
            for (double x : xs) ss += (x - p.mean) * (x - p.mean);
            p.variance = ss / (n - 1.0);
            p.std_error = std::sqrt(p.variance / n);
            p.variance_std_error = p.variance * std::sqrt(2.0 / (n - 1.0));
        }
        out.push_back(p);
    }
    return out;
}

IdentityCurve pooled_curve(const ExperimentConfig& config, const std::vector<ReplicateResult>& reps,
                           std::size_t observable, double t)
{
    std::vector<IdentityCurve> curves;
    for (const auto& r : reps) {
        IdentityCurve c;
        c.t = t;
        for (const auto& row : r.rows) {
            if (row.observable != observable || row.t != t || !row.h) continue;
            IdentityBin b;
            b.h = *row.h;
            b.p_hat = row.value;
            b.n_pairs = row.n_pairs;
            c.bins.push_back(b);
        }
        if (!c.bins.empty()) curves.push_back(std::move(c));
    }
    if (curves.empty()) return {};
    IdentityCurve pooled = pool_curves(curves);
    pooled.t = t;
    return scale_curve(pooled, config.identity_scale());
}

json Manifest::to_json() const
{
    json f = json::object();
    for (const auto& [name, hash] : files) f[name] = hash;
    return {{"tool", tool},
            {"version", version},
            {"rng", rng},
            {"master_seed", master_seed},
            {"config_hash", config_hash},
            {"complete", complete},
            {"replicates_requested", replicates_requested},
            {"replicates_completed", replicates_completed},
            {"created", created},
            {"error", error},
            {"files", f}};
}

Manifest Manifest::from_json(const json& j)
{
    Manifest m;
    m.tool = j.at("tool").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.rng = j.at("rng").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.complete = j.at("complete").get<bool>();
    m.replicates_requested = j.at("replicates_requested").get<int>();
    m.replicates_completed = j.at("replicates_completed").get<int>();
    m.created = j.value("created", "");
    m.error = j.value("error", "");
    for (const auto& [name, hash] : j.at("files").items()) m.files.emplace_back(name, hash.get<std::string>());
    return m;
}

Manifest read_manifest(const fs::path& dir)
{
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("no manifest in " + dir.string());
    return Manifest::from_json(json::parse(in));
}

std::vector<std::string> verify_manifest(const fs::path& dir)
{
    const Manifest m = read_manifest(dir);
    std::vector<std::string> bad;
    for (const auto& [name, hash] : m.files) {
        if (!fs::exists(dir / name)) {
            bad.push_back(name + ": missing");
        }
        else if (sha256_file(dir / name) != hash) {
            bad.push_back(name + ": hash mismatch");
        }
    }
    try {
        if (load_config(dir / "config.json").hash() != m.config_hash) bad.push_back("config.json: config hash mismatch");
    }
    catch (const std::exception& e) {
        bad.push_back(std::string("config.json: ") + e.what());
    }
    return bad;
}

Manifest simulate_to_directory(const ExperimentConfig& config, const fs::path& dir, const RunOptions& options)
{
    fs::create_directories(dir);
    Manifest man;
    man.version = SLFV_VERSION;
    man.rng = Rng::name();
    man.master_seed = config.master_seed;
    man.config_hash = config.hash();
    man.replicates_requested = config.replicates;
    man.created = utc_now();
    man.error = "running";
    auto write_manifest = [&] {
        std::ofstream out(dir / "manifest.json");
        out << man.to_json().dump(2) << "\n";
    };
    {
        json j = config.to_json();
        j.erase("output");
        std::ofstream out(dir / "config.json");
        out << j.dump(2) << "\n";
    }
    write_manifest();

    std::ofstream reps(dir / "replicates.csv");
    std::ofstream stats(dir / "replicate_stats.csv");
    reps << "replicate,observable,t,h,value,n_pairs\n";
    stats << "replicate,events,max_mass_defect\n";
    RunOptions opt = options;
    opt.on_replicate = [&](const ReplicateResult& r) {
        for (const auto& row : r.rows) {
            reps << r.replicate << ',' << config.observables[row.observable].name << ',' << number_text(row.t) << ','
                 << (row.h ? number_text(*row.h) : std::string()) << ',' << number_text(row.value) << ',' << row.n_pairs
                 << '\n';
        }
        stats << r.replicate << ',' << r.events << ',' << number_text(r.max_mass_defect) << '\n';
        reps.flush();
        stats.flush();
        ++man.replicates_completed;
        if (options.on_replicate) options.on_replicate(r);
    };
    const RunSummary run = run_experiment(config, opt);
    reps.close();
    stats.close();

    std::vector<std::string> files{"config.json", "replicates.csv", "replicate_stats.csv"};
    {
        std::ofstream out(dir / "pair_identity.csv");
        out << "observable,t,mean,std_error,scaled_mean,scaled_std_error,replicates\n";
        const double s = config.identity_scale();
        for (const auto& p : pool_scalars(config, run.replicates, ObservableSpec::Kind::PairIdentity)) {
            out << config.observables[p.observable].name << ',' << number_text(p.t) << ',' << number_text(p.mean) << ','
                << number_text(p.std_error) << ',' << number_text(s * p.mean) << ',' << number_text(s * p.std_error)
                << ',' << p.replicates << '\n';
        }
        files.push_back("pair_identity.csv");
    }
    {
        std::ofstream out(dir / "fluctuation.csv");
        out << "observable,t,mean,variance,variance_std_error,replicates\n";
        for (const auto& p : pool_scalars(config, run.replicates, ObservableSpec::Kind::Fluctuation)) {
            out << config.observables[p.observable].name << ',' << number_text(p.t) << ',' << number_text(p.mean) << ','
                << number_text(p.variance) << ',' << number_text(p.variance_std_error) << ',' << p.replicates << '\n';
        }
        files.push_back("fluctuation.csv");
    }
    for (std::size_t k = 0; k < config.observables.size(); ++k) {
        const auto& o = config.observables[k];
        if (o.kind != ObservableSpec::Kind::IdentityCurve) continue;
        const std::string name = "identity_" + o.name + ".csv";
        std::ofstream out(dir / name);
        write_curve_header(out);
        std::set<double> times;
        for (const auto& r : run.replicates)
            for (const auto& row : r.rows)
                if (row.observable == k) times.insert(row.t);
        for (double t : times) write_curve_rows(out, pooled_curve(config, run.replicates, k, t));
        files.push_back(name);
    }

    man.complete = run.complete;
    man.error = run.error;
    for (const auto& f : files) man.files.emplace_back(f, sha256_file(dir / f));
    write_manifest();
    return man;
}

ModelSpec ModelSpec::from_json(const json& j)
{
    Fields f(j, "model", {"kind", "d", "u", "mu", "radius", "alpha", "sigma2", "rel_tol", "z_max"});
    ModelSpec m;
    const std::string kind = f.string("kind");
    require(kind == "short" || kind == "long", f.path("kind"), "expected short or long");
    m.kind = kind == "short" ? Kind::Short : Kind::Long;
    const long long d = f.integer("d");
    require(d >= 1 && d <= 3, f.path("d"), "must be 1, 2 or 3");
    m.d = static_cast<int>(d);
    m.u = f.number("u", m.u);
    require(m.u > 0.0 && m.u <= 1.0, f.path("u"), "must lie in (0, 1]");
    m.mu = f.number("mu");
    require(m.mu > 0.0, f.path("mu"), "must be positive");
    if (m.kind == Kind::Short) {
        m.radius = f.number("radius", m.radius);
        require(m.radius > 0.0, f.path("radius"), "must be positive");
        if (f.has("sigma2")) {
            m.sigma2 = f.number("sigma2");
            require(*m.sigma2 > 0.0, f.path("sigma2"), "must be positive");
        }
    }
    else {
        m.alpha = f.number("alpha");
        require(m.alpha > 0.0 && m.alpha < std::min(m.d, 2), f.path("alpha"), "must lie in (0, min(d, 2))");
        require(!f.has("sigma2"), f.path("sigma2"), "applies to the short-range model only");
    }
    m.rel_tol = f.number("rel_tol", m.rel_tol);
    m.z_max = f.number("z_max", m.z_max);
    require(m.rel_tol >= 0.0, f.path("rel_tol"), "must be non-negative");
    require(m.z_max >= 0.0, f.path("z_max"), "must be non-negative");
    return m;
}

ShortRangeModel ModelSpec::short_model() const
{
    ShortRangeModel m = ShortRangeModel::from_dispersal(d, u, mu, radius);
    if (sigma2) {
        const double noise = m.noise_scale();
        m.sigma2 = *sigma2;
        m.prefactor = noise / std::pow(2.0 * std::numbers::pi * m.sigma2, 0.5 * d);
    }
    return m;
}

LongRangeModel ModelSpec::long_model() const { return LongRangeModel::create(d, alpha, u, mu); }

double ModelSpec::point_value(double h) const
{
    if (kind == Kind::Short) {
        const ShortRangeModel m = short_model();
        return m.prefactor * f_short(m, h / m.sigma());
    }
    const LongRangeModel m = long_model();
    return m.u * f_long(m, m.length_scale() * h);
}

double ModelSpec::pair_value(const SpatialProfile& phi, const SpatialProfile& psi) const
{
    return kind == Kind::Short ? wm_rhs_short(short_model(), phi, psi) : wm_rhs_long(long_model(), phi, psi);
}

CurvesRequest CurvesRequest::from_json(const json& j)
{
    Fields f(j, "", {"model", "h", "mc_samples", "seed"});
    CurvesRequest r;
    r.model = ModelSpec::from_json(f.at("model"));
    r.h = f.numbers("h");
    require(!r.h.empty(), "h", "needs at least one distance");
    for (double h : r.h) require(h >= 0.0, "h", "distances must be non-negative");
    const long long mc = f.integer("mc_samples", 0);
    require(mc >= 0 && mc != 1, "mc_samples", "must be 0 or at least 2");
    r.mc_samples = static_cast<std::size_t>(mc);
    r.seed = f.unsigned_integer("seed", 1);
    return r;
}

std::vector<FValueRow> tabulate_curves(const CurvesRequest& req)
{
    std::vector<FValueRow> rows;
    const ModelSpec& m = req.model;
    std::optional<LongRangeModel> lm;
    if (m.kind == ModelSpec::Kind::Long) lm = m.long_model();
    Rng rng(req.seed);
    auto guarded = [&](double h, const std::string& method, const std::function<FValueRow()>& eval) {
        try {
            rows.push_back(eval());
        }
        catch (const std::exception& e) {
            FValueRow r;
            r.h = h;
            r.method = method;
            r.error = e.what();
            rows.push_back(r);
        }
    };
    for (double h : req.h) {
        if (m.kind == ModelSpec::Kind::Short) {
            guarded(h, "bessel", [&] { return FValueRow{h, f_short(m.d, m.mu, h), "bessel", 0.0, {}}; });
            continue;
        }
        guarded(h, "fourier", [&] {
            const QuadResult q = f_long_with_error(*lm, h);
            return FValueRow{h, q.value, "fourier", q.error, {}};
        });
        if (req.mc_samples > 0) {
            guarded(h, "monte_carlo", [&] {
                const McEstimate e = f_long_mc(*lm, h, req.mc_samples, rng);
                return FValueRow{h, e.mean, "monte_carlo", e.std_error, {}};
            });
        }
    }
    return rows;
}

CompareReport compare_results(const fs::path& sim_dir, const ModelSpec& model)
{
    const auto bad = verify_manifest(sim_dir);
    if (!bad.empty()) {
        std::string msg = "simulation outputs failed verification:";
        for (const auto& b : bad) msg += " " + b + ";";
        throw std::runtime_error(msg);
    }
    const ExperimentConfig config = load_config(sim_dir / "config.json");
    std::vector<std::string> mismatch;
    const bool stable = config.params.dispersal.is_stable();
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); };
    if (model.d != config.dim) mismatch.push_back("d");
    if (!close(model.u, config.params.u)) mismatch.push_back("u");
    if (!close(model.mu, config.params.mu)) mismatch.push_back("mu");
    if ((model.kind == ModelSpec::Kind::Long) != stable) mismatch.push_back("kind");
    else if (stable && !close(model.alpha, config.params.dispersal.alpha)) mismatch.push_back("alpha");
    else if (!stable && !close(model.radius, config.params.dispersal.radius)) mismatch.push_back("radius");
    if (!mismatch.empty()) {
        std::string msg = "model and simulation configs differ in:";
        for (const auto& f : mismatch) msg += " " + f;
        throw ConfigMismatch(msg);
    }
    std::map<std::string, const ObservableSpec*> by_name;
    for (const auto& o : config.observables) by_name[o.name] = &o;

    CompareReport rep;
    auto finish = [&](CompareRow& r) {
        const double diff = r.estimate - r.predicted;
        r.z = r.std_error > 0.0 ? diff / r.std_error : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff));
        r.rel_error = r.predicted != 0.0 ? std::abs(diff) / std::abs(r.predicted) : std::abs(diff);
        r.pass = r.rel_error <= model.rel_tol || std::abs(r.z) <= model.z_max;
    };
    bool decided = false;
    bool all = true;
    for (const auto& row : read_csv(sim_dir / "pair_identity.csv")) {
        const std::string name = row.at("observable");
        if (!by_name.count(name)) throw ConfigMismatch("unknown observable " + name + " in pair_identity.csv");
        const ObservableSpec& o = *by_name.at(name);
        CompareRow r;
        r.observable = name;
        r.t = cell_number(row, "t");
        r.estimate = cell_number(row, "scaled_mean");
        r.std_error = cell_number(row, "scaled_std_error");
        r.predicted = model.pair_value(*o.phi, *o.psi);
        finish(r);
        if (r.t == config.t_end()) {
            decided = true;
            all = all && r.pass;
        }
        rep.rows.push_back(r);
    }
    for (const auto& o : config.observables) {
        if (o.kind != ObservableSpec::Kind::IdentityCurve) continue;
        for (const auto& row : read_csv(sim_dir / ("identity_" + o.name + ".csv"))) {
            CompareRow r;
            r.observable = o.name;
            r.t = cell_number(row, "t");
            r.h = cell_number(row, "h");
            r.estimate = cell_number(row, "p_hat");
            r.std_error = cell_number(row, "stderr");
            try {
                r.predicted = model.point_value(*r.h);
            }
            catch (const std::domain_error&) {
                r.predicted = NAN;
            }
            finish(r);
            if (r.t == config.t_end() && std::isfinite(r.predicted)) {
                decided = true;
                all = all && r.pass;
            }
            rep.rows.push_back(r);
        }
    }
    rep.pass = decided && all;
    return rep;
}

void write_compare_csv(std::ostream& out, const CompareReport& report)
{
    out << "observable,t,h,estimate,std_error,predicted,z,rel_error,pass\n";
    for (const auto& r : report.rows) {
        out << r.observable << ',' << number_text(r.t) << ',' << (r.h ? number_text(*r.h) : std::string()) << ','
            << number_text(r.estimate) << ',' << number_text(r.std_error) << ',' << number_text(r.predicted) << ','
            << number_text(r.z) << ',' << number_text(r.rel_error) << ',' << (r.pass ? "pass" : "fail") << '\n';
    }
}

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_interrupt(int) { g_interrupted.store(true); }

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    try {
        return json::parse(in);
    }
    catch (const json::parse_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
}

struct CliOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> replicates;
    int threads = 1;
};

int cmd_simulate(const CliOptions& o, std::ostream& out, std::ostream& err)
{
    if (o.config.empty()) throw ConfigError("--config: required for simulate");
    ExperimentConfig c = load_config(o.config);
    if (o.seed) c.master_seed = *o.seed;
    if (o.replicates) {
        if (*o.replicates < 1) throw ConfigError("--replicates: must be at least 1");
        c.replicates = *o.replicates;
    }
    if (!o.out.empty()) c.output = o.out;
    g_interrupted = false;
    auto previous = std::signal(SIGINT, on_interrupt);
    RunOptions ro;
    ro.threads = o.threads;
    ro.stop = &g_interrupted;
    const Manifest m = simulate_to_directory(c, c.output, ro);
    std::signal(SIGINT, previous);
    out << "simulate: " << m.replicates_completed << "/" << m.replicates_requested << " replicates written to "
        << c.output << (m.complete ? "" : " (incomplete)") << "\n";
    if (!m.complete) {
        err << "simulate: run incomplete: " << m.error << "\n";
        return 2;
    }
    return 0;
}

int cmd_curves(const CliOptions& o, std::ostream& out, std::ostream&)
{
    if (o.config.empty()) throw ConfigError("--config: required for curves");
    CurvesRequest req = CurvesRequest::from_json(read_json_file(o.config));
    if (o.seed) req.seed = *o.seed;
    const auto rows = tabulate_curves(req);
    if (o.out.empty()) {
        write_f_table(out, rows);
    }
    else {
        fs::create_directories(o.out);
        std::ofstream f(fs::path(o.out) / "curves.csv");
        write_f_table(f, rows);
        out << "curves: " << rows.size() << " rows written to " << (fs::path(o.out) / "curves.csv").string() << "\n";
    }
    return 0;
}

int cmd_compare(const CliOptions& o, std::ostream& out, std::ostream&)
{
    if (o.config.empty()) throw ConfigError("--config: required for compare");
    const json j = read_json_file(o.config);
    Fields f(j, "", {"simulation", "model"});
    const std::string sim = f.string("simulation");
    const ModelSpec model = ModelSpec::from_json(f.at("model"));
    const CompareReport rep = compare_results(sim, model);
    const fs::path dest = o.out.empty() ? fs::path(sim) : fs::path(o.out);
    fs::create_directories(dest);
    std::ofstream csv(dest / "compare.csv");
    write_compare_csv(csv, rep);
    for (const auto& r : rep.rows) {
        if (r.h) continue;
        out << "compare " << r.observable << " t=" << r.t << ": estimate " << r.estimate << " +- " << r.std_error
            << ", predicted " << r.predicted << ", z " << r.z << ", relative error " << r.rel_error << " -> "
            << (r.pass ? "pass" : "fail") << "\n";
    }
    out << "compare: " << (rep.pass ? "PASS" : "FAIL") << "\n";
    return rep.pass ? 0 : 3;
}

int cmd_check_operators(const CliOptions& o, std::ostream& out, std::ostream&)
{
    json j = o.config.empty() ? json::object() : read_json_file(o.config);
    Fields f(j, "", {"d", "side", "base_spacing", "deltas", "qs", "cases"});
    ConvergenceOptions opt;
    opt.d = static_cast<int>(f.integer("d", 1));
    require(opt.d >= 1 && opt.d <= 3, "d", "must be 1, 2 or 3");
    opt.side = f.number("side", opt.side);
    opt.base_spacing = f.number("base_spacing", opt.base_spacing);
    if (f.has("qs")) opt.qs = f.numbers("qs");
    const std::vector<double> deltas = f.has("deltas") ? f.numbers("deltas") : std::vector<double>{0.4, 0.2, 0.1, 0.05};
    require(deltas.size() >= 2, "deltas", "needs at least two values");
    struct Case {
        ConvergenceCase c;
        double min_slope;
        std::string label;
    };
    std::vector<Case> cases;
    if (f.has("cases")) {
        const json& cs = f.at("cases");
        require(cs.is_array(), "cases", "expected an array");
        for (std::size_t i = 0; i < cs.size(); ++i) {
            Fields c(cs[i], "cases[" + std::to_string(i) + "]", {"kind", "radius", "alpha", "min_slope"});
            const std::string kind = c.string("kind");
            Case k;
            if (kind == "fixed") {
                k.c = {false, c.number("radius", 1.0), 0.5};
                k.min_slope = c.number("min_slope", 1.8);
                k.label = "fixed";
            }
            else if (kind == "stable") {
                k.c = {true, 1.0, c.number("alpha")};
                require(k.c.alpha > 0.0 && k.c.alpha < std::min(opt.d, 2), c.path("alpha"), "out of range");
                k.min_slope = c.number("min_slope", 1.2);
                k.label = "stable";
            }
            else {
                throw ConfigError(c.path("kind") + ": expected fixed or stable");
            }
            cases.push_back(k);
        }
    }
    else {
        cases = {{{false, 1.0, 0.5}, 1.8, "fixed"}, {{true, 1.0, 0.5}, 1.2, "stable"}};
    }
    const auto family = standard_test_family(opt.d, opt.side);
    bool ok = true;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const ConvergenceReport rep = convergence_study(family, deltas, cases[i].c, opt);
        const double slope = rep.min_slope();
        const bool pass = slope >= cases[i].min_slope;
        ok = ok && pass;
        out << "check-operators " << cases[i].label << ": minimum fitted slope " << slope << " (threshold "
            << cases[i].min_slope << ") -> " << (pass ? "pass" : "fail") << "\n";
        if (!o.out.empty()) {
            fs::create_directories(o.out);
            std::ofstream csv(fs::path(o.out) / ("convergence_" + std::to_string(i) + "_" + cases[i].label + ".csv"));
            write_convergence_csv(csv, rep);
        }
    }
    return ok ? 0 : 3;
}

int cmd_fit(const CliOptions& o, std::ostream& out, std::ostream&)
{
    if (o.config.empty()) throw ConfigError("--config: required for fit");
    const json j = read_json_file(o.config);
    Fields f(j, "", {"data", "d", "mu", "models", "loss", "small_bin_weight", "starts"});
    const std::string data_path = f.string("data");
    std::ifstream in(data_path);
    if (!in) throw ConfigError("data: cannot open " + data_path);
    FitData data;
    try {
        data = read_identity_csv(in);
    }
    catch (const std::invalid_argument& e) {
        throw ConfigError("data: " + std::string(e.what()));
    }
    const int d = static_cast<int>(f.integer("d"));
    require(d >= 1 && d <= 3, "d", "must be 1, 2 or 3");
    const double mu = f.number("mu", 0.5);
    const std::string loss = f.string("loss", "linear");
    require(loss == "linear" || loss == "log", "loss", "expected linear or log");
    std::vector<ModelKind> kinds;
    if (f.has("models")) {
        const json& ms = f.at("models");
        require(ms.is_array() && !ms.empty(), "models", "expected a non-empty array");
        for (const auto& m : ms) {
            require(m.is_string() && (m == "short" || m == "long"), "models", "entries must be short or long");
            kinds.push_back(m == "short" ? ModelKind::Short : ModelKind::Long);
        }
    }
    else {
        kinds = {ModelKind::Short, ModelKind::Long};
    }
    std::vector<FitResult> fits;
    for (ModelKind k : kinds) {
        FitProblem p;
        p.data = data;
        p.kind = k;
        p.d = d;
        p.mu = mu;
        p.loss = loss == "log" ? LossScale::Log : LossScale::Linear;
        p.small_bin_weight = f.number("small_bin_weight", p.small_bin_weight);
        p.starts = static_cast<int>(f.integer("starts", 1));
        fits.push_back(fit(p));
    }
    const fs::path dest = o.out.empty() ? fs::path(".") : fs::path(o.out);
    fs::create_directories(dest);
    {
        std::ofstream rep(dest / "fit_report.json");
        if (fits.size() >= 2) {
            write_comparison_report(rep, compare_models(fits));
        }
        else {
            write_fit_report(rep, fits.front());
        }
    }
    {
        std::ofstream tab(dest / "parameters.csv");
        write_parameter_table(tab, fits);
    }
    write_parameter_table(out, fits);
    if (fits.size() >= 2) {
        const ModelComparison c = compare_models(fits);
        out << "preferred: " << (c.preferred ? to_string(*c.preferred) : std::string("tie")) << " (delta AIC "
            << c.delta_aic << ")\n";
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Spatial Lambda-Fleming-Viot simulator and limit-formula toolkit", "slfv"};
    app.require_subcommand(1, 1);
    CliOptions o;
    std::uint64_t seed = 0;
    int reps = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "configuration file (JSON)");
        sub->add_option("--seed", seed, "master seed override");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--replicates", reps, "replicate count override");
        sub->add_option("--threads", o.threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    };
    std::string chosen;
    for (const char* name : {"simulate", "curves", "compare", "check-operators", "fit"}) {
        CLI::App* sub = app.add_subcommand(name);
        add_common(sub);
        sub->callback([&chosen, name] { chosen = name; });
    }
    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    }
    catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }
    for (CLI::App* sub : app.get_subcommands()) {
        if (sub->count("--seed")) o.seed = seed;
        if (sub->count("--replicates")) o.replicates = reps;
    }
    try {
        if (chosen == "simulate") return cmd_simulate(o, out, err);
        if (chosen == "curves") return cmd_curves(o, out, err);
        if (chosen == "compare") return cmd_compare(o, out, err);
        if (chosen == "check-operators") return cmd_check_operators(o, out, err);
        return cmd_fit(o, out, err);
    }
    catch (const std::invalid_argument& e) {
        err << "slfv " << chosen << ": " << e.what() << "\n";
        return 1;
    }
    catch (const json::exception& e) {
        err << "slfv " << chosen << ": " << e.what() << "\n";
        return 1;
    }
    catch (const std::exception& e) {
        err << "slfv " << chosen << ": " << e.what() << "\n";
        return 2;
    }
}

}  // namespace slfv
