#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "slfv/experiment.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unistd.h>

using namespace slfv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("slfv_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write(const fs::path& p, const std::string& text)
{
    std::ofstream out(p);
    out << text;
}

json small_config()
{
    return json::parse(R"({
      "model": {"dim": 1, "u": 0.8, "mu": 0.5, "dispersal": {"kind": "fixed", "radius": 1.0},
                "N": 10, "delta": 0.5, "side": 20},
      "schedule": [0.5, 1.0],
      "replicates": 3,
      "master_seed": 42,
      "observables": [
        {"kind": "pair_identity", "name": "pair",
         "phi": {"kind": "gaussian_density", "center": [9], "sd": 1},
         "psi": {"kind": "gaussian_density", "center": [11], "sd": 1}},
        {"kind": "identity_curve", "name": "curve", "mode": "sampled", "pairs": 500, "max_distance": 3,
         "phi": {"kind": "gaussian_density", "center": [10], "sd": 1},
         "psi": {"kind": "gaussian_density", "center": [10], "sd": 1}},
        {"kind": "fluctuation", "name": "fl",
         "spatial": {"kind": "gaussian", "center": [10], "sd": 1}, "type": {"kind": "cosine", "m": 1}}]
    })");
}

struct Run {
    int code;
    std::string out, err;
};

Run cli(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("invalid configurations are rejected with the offending field")
{
    auto expect = [](json j, const std::string& field) {
        CAPTURE(field);
        CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(j), doctest::Contains(field.c_str()), ConfigError);
    };
    json j = small_config();
    j["model"]["u"] = 1.5;
    expect(j, "model.u");
    j = small_config();
    j["model"]["dispersal"] = {{"kind", "stable"}, {"alpha", 1.5}};
    expect(j, "model.dispersal.alpha");
    j = small_config();
    j["model"]["sites_per_radius"] = 2;
    expect(j, "model.sites_per_radius");
    j = small_config();
    j["observables"][0]["phi"]["center"] = {1, 2};
    expect(j, "observables[0].phi.center");
    j = small_config();
    j["observables"][0]["psi"]["sd"] = 4;
    expect(j, "observables[0].psi.sd");
    j = small_config();
    j["replicates"] = 0;
    expect(j, "replicates");
    j = small_config();
    j["colour"] = "blue";
    expect(j, "colour");
    j = small_config();
    j["schedule"] = {2.0, 1.0};
    expect(j, "schedule");

    const fs::path dir = scratch("invalid");
    j = small_config();
    j["model"]["N"] = -3;
    write(dir / "c.json", j.dump());
    const Run r = cli({"simulate", "--config", (dir / "c.json").string(), "--out", (dir / "o").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("model.N") != std::string::npos);
    CHECK(cli({"simulate", "--bogus"}).code == 1);
    CHECK(cli({}).code == 1);
}

TEST_CASE("configuration round-trips through its normalized JSON")
{
    const auto c = ExperimentConfig::from_json(small_config());
    const auto d = ExperimentConfig::from_json(c.to_json());
    CHECK(c.to_json() == d.to_json());
    CHECK(c.hash() == d.hash());
    auto e = c;
    e.output = "elsewhere";
    CHECK(e.hash() == c.hash());
    e.master_seed = 43;
    CHECK(e.hash() != c.hash());
}

TEST_CASE("a run that ends at time zero writes a manifest and header-only outputs")
{
    json j = small_config();
    j["schedule"] = {0.0};
    j["replicates"] = 1;
    const fs::path dir = scratch("zero");
    write(dir / "c.json", j.dump());
    const Run r = cli({"simulate", "--config", (dir / "c.json").string(), "--out", (dir / "o").string()});
    REQUIRE(r.code == 0);
    const Manifest m = read_manifest(dir / "o");
    CHECK(m.complete);
    CHECK(m.replicates_completed == 1);
    CHECK(slurp(dir / "o" / "pair_identity.csv") ==
          "observable,t,mean,std_error,scaled_mean,scaled_std_error,replicates\n");
    CHECK(slurp(dir / "o" / "identity_curve.csv") == "t,h,p_hat,stderr,n_pairs,scaled_flag\n");
    CHECK(verify_manifest(dir / "o").empty());
}

TEST_CASE("runs are reproducible across seeds and thread counts, and tampering is detected")
{
    const fs::path dir = scratch("repro");
    write(dir / "c.json", small_config().dump());
    const std::string cfg = (dir / "c.json").string();
    REQUIRE(cli({"simulate", "--config", cfg, "--out", (dir / "a").string()}).code == 0);
    REQUIRE(cli({"simulate", "--config", cfg, "--out", (dir / "b").string(), "--threads", "3"}).code == 0);
    REQUIRE(cli({"simulate", "--config", cfg, "--out", (dir / "c").string(), "--seed", "43"}).code == 0);
    for (const char* f : {"config.json", "replicates.csv", "pair_identity.csv", "identity_curve.csv", "fluctuation.csv",
                          "replicate_stats.csv"}) {
        CAPTURE(f);
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    CHECK(slurp(dir / "a" / "replicates.csv") != slurp(dir / "c" / "replicates.csv"));
    CHECK(read_manifest(dir / "c").master_seed == 43);
    CHECK(read_manifest(dir / "a").config_hash == read_manifest(dir / "b").config_hash);

    const Manifest m = read_manifest(dir / "a");
    CHECK(m.rng == "xoshiro256**");
    CHECK(m.files.size() == 6);
    for (const auto& [name, hash] : m.files) CHECK(sha256_file(dir / "a" / name) == hash);

    std::string text = slurp(dir / "a" / "pair_identity.csv");
    text.back() = ' ';
    write(dir / "a" / "pair_identity.csv", text);
    const auto bad = verify_manifest(dir / "a");
    REQUIRE(bad.size() == 1);
    CHECK(bad[0].find("pair_identity.csv") != std::string::npos);
    write(dir / "cmp.json",
          json{{"simulation", (dir / "a").string()}, {"model", {{"kind", "short"}, {"d", 1}, {"mu", 0.5}}}}.dump());
    CHECK(cli({"compare", "--config", (dir / "cmp.json").string()}).code == 2);
}

TEST_CASE("SHA-256 of a known string")
{
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("an interrupted run keeps the completed replicates and is marked incomplete")
{
    json j = small_config();
    j["replicates"] = 30;
    const auto c = ExperimentConfig::from_json(j);
    std::atomic<bool> stop{false};
    RunOptions opt;
    opt.stop = &stop;
    opt.on_replicate = [&](const ReplicateResult&) { stop = true; };
    const fs::path dir = scratch("interrupt");
    const Manifest m = simulate_to_directory(c, dir, opt);
    CHECK_FALSE(m.complete);
    CHECK(m.replicates_completed >= 1);
    CHECK(m.replicates_completed < 30);
    CHECK(verify_manifest(dir).empty());

    const auto full = run_experiment(c);
    const auto part = run_replicate(c, 0);
    REQUIRE(full.complete);
    REQUIRE(full.replicates[0].rows.size() == part.rows.size());
    for (std::size_t i = 0; i < part.rows.size(); ++i) CHECK(full.replicates[0].rows[i].value == part.rows[i].value);
}

TEST_CASE("curves: short-range rows are the Bessel function, failures become error rows")
{
    const fs::path dir = scratch("curves");
    write(dir / "q.json", R"({"model": {"kind": "short", "d": 2, "mu": 0.5}, "h": [0, 0.5, 1, 3]})");
    const Run r = cli({"curves", "--config", (dir / "q.json").string()});
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    CHECK(line == "h,F_value,method,est_error");
    std::getline(in, line);
    CHECK(line.rfind("0,,error: ", 0) == 0);
    for (double h : {0.5, 1.0, 3.0}) {
        REQUIRE(std::getline(in, line));
        std::istringstream row(line);
        std::string hs, vs, method;
        std::getline(row, hs, ',');
        std::getline(row, vs, ',');
        std::getline(row, method, ',');
        CHECK(std::stod(hs) == h);
        CHECK(method == "bessel");
        CHECK(std::stod(vs) == doctest::Approx(std::cyl_bessel_k(0.0, h)).epsilon(1e-5));
    }
}

TEST_CASE("curves: long-range Fourier and Monte Carlo rows agree")
{
    CurvesRequest req;
    req.model.kind = ModelSpec::Kind::Long;
    req.model.d = 1;
    req.model.alpha = 0.5;
    req.h = {0.5, 2.0};
    req.mc_samples = 200000;
    req.seed = 3;
    const auto rows = tabulate_curves(req);
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 0; i < 4; i += 2) {
        CHECK(rows[i].method == "fourier");
        CHECK(rows[i + 1].method == "monte_carlo");
        CHECK(rows[i].error.empty());
        CHECK(std::abs(rows[i].value - rows[i + 1].value) <= 4.0 * rows[i + 1].est_error + 1e-3 * rows[i].value);
    }
}

TEST_CASE("compare: identical limit values give z = 0, a wrong sigma2 fails")
{
    const fs::path dir = scratch("compare");
    json j = small_config();
    j["observables"] = json::array({j["observables"][0], j["observables"][1]});
    const auto c = ExperimentConfig::from_json(j);
    ModelSpec model;
    model.d = 1;
    model.u = 0.8;
    model.mu = 0.5;
    const double predicted = model.pair_value(*c.observables[0].phi, *c.observables[0].psi);

    write(dir / "config.json", c.to_json().dump(2));
    std::ostringstream csv;
    csv << std::setprecision(17) << "observable,t,mean,std_error,scaled_mean,scaled_std_error,replicates\n"
        << "pair,1," << predicted / c.identity_scale() << ",0.001," << predicted << ",0.001,200\n";
    write(dir / "pair_identity.csv", csv.str());
    std::ostringstream bins;
    bins << std::setprecision(17) << "t,h,p_hat,stderr,n_pairs,scaled_flag\n";
    for (double h : {0.25, 0.75, 1.25, 1.75, 2.25, 2.75}) bins << "1," << h << ',' << model.point_value(h) << ",0.001,500,1\n";
    write(dir / "identity_curve.csv", bins.str());
    Manifest m;
    m.config_hash = c.hash();
    m.complete = true;
    for (const char* f : {"config.json", "pair_identity.csv", "identity_curve.csv"}) m.files.emplace_back(f, sha256_file(dir / f));
    write(dir / "manifest.json", m.to_json().dump());

    const auto rep = compare_results(dir, model);
    REQUIRE(rep.rows.size() == 7);
    for (const auto& row : rep.rows) {
        CHECK(row.z == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(row.rel_error <= 1e-12);
    }
    CHECK(rep.pass);

    model.sigma2 = 4.0 * model.short_model().sigma2;
    const auto wrong = compare_results(dir, model);
    CHECK_FALSE(wrong.pass);

    write(dir / "cmp.json", json{{"simulation", dir.string()},
                                 {"model", {{"kind", "short"}, {"d", 1}, {"mu", 0.5}, {"sigma2", *model.sigma2}}}}
                                .dump());
    const Run r = cli({"compare", "--config", (dir / "cmp.json").string(), "--out", (dir / "rep").string()});
    CHECK(r.code == 3);
    CHECK(slurp(dir / "rep" / "compare.csv").find(",fail\n") != std::string::npos);

    model.sigma2.reset();
    model.mu = 0.25;
    CHECK_THROWS_AS(compare_results(dir, model), ConfigMismatch);
    model.mu = 0.5;
    model.kind = ModelSpec::Kind::Long;
    CHECK_THROWS_AS(compare_results(dir, model), ConfigMismatch);
}

TEST_CASE("fit subcommand writes a report and parameter table")
{
    const fs::path dir = scratch("fit");
    std::ostringstream csv;
    csv << "h,p_hat,stderr\n";
    for (int i = 0; i < 16; ++i) {
        const double h = 0.25 + 0.5 * i;
        const double y = 0.3 * std::exp(-h / std::sqrt(2.0));
        csv << h << ',' << y << ',' << 0.01 * y << '\n';
    }
    write(dir / "data.csv", csv.str());
    write(dir / "f.json", json{{"data", (dir / "data.csv").string()}, {"d", 1}, {"mu", 0.5}, {"models", {"short"}}}.dump());
    const Run r = cli({"fit", "--config", (dir / "f.json").string(), "--out", (dir / "o").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("model,parameter,estimate,std_error\nshort,sigma2,", 0) == 0);
    const json rep = json::parse(slurp(dir / "o" / "fit_report.json"));
    CHECK(rep.dump().find("sigma2") != std::string::npos);
}

TEST_CASE("the installed binary maps outcomes to exit codes")
{
    const fs::path dir = scratch("binary");
    write(dir / "bad.json", "{ not json");
    const std::string bin = SLFV_CLI_PATH;
    auto run = [&](const std::string& args) {
        const int status = std::system((bin + " " + args + " > " + (dir / "log").string() + " 2>&1").c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    CHECK(run("--help") == 0);
    CHECK(run("simulate --config " + (dir / "bad.json").string()) == 1);
    CHECK(run("check-operators") == 0);
    CHECK(slurp(dir / "log").find("stable") != std::string::npos);
}
