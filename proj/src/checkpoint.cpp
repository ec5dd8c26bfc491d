#include "slfv/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

namespace slfv {

using nlohmann::json;

json params_to_json(const SlfvParams& p)
{
    json j;
    j["u"] = p.u;
    j["mu"] = p.mu;
    j["dispersal"] = p.dispersal.is_stable() ? json{{"kind", "stable"}, {"alpha", p.dispersal.alpha}}
                                              : json{{"kind", "fixed"}, {"radius", p.dispersal.radius}};
    j["N"] = p.rescale.N;
    j["delta"] = p.rescale.delta;
    j["dim"] = p.domain.dim();
    j["side"] = p.domain.side();
    j["grid_spacing"] = p.grid_spacing;
    j["prune_threshold"] = p.prune_threshold;
    return j;
}

SlfvParams params_from_json(const json& j)
{
    SlfvParams p;
    p.u = j.at("u").get<double>();
    p.mu = j.at("mu").get<double>();
    const json& disp = j.at("dispersal");
    p.dispersal = disp.at("kind").get<std::string>() == "stable" ? Dispersal::stable(disp.at("alpha").get<double>())
                                                                 : Dispersal::fixed(disp.at("radius").get<double>());
    p.rescale = {j.at("N").get<int>(), j.at("delta").get<double>()};
    p.domain = Domain(j.at("dim").get<int>(), j.at("side").get<double>());
    p.grid_spacing = j.at("grid_spacing").get<double>();
    p.prune_threshold = j.at("prune_threshold").get<double>();
    return p;
}

namespace {

json event_to_json(const ReproductionEvent& ev)
{
    return json{{"t", ev.t}, {"center", {ev.center[0], ev.center[1], ev.center[2]}}, {"radius", ev.radius}};
}

ReproductionEvent event_from_json(const json& j)
{
    ReproductionEvent ev;
    ev.t = j.at("t").get<double>();
    for (int a = 0; a < 3; ++a) ev.center[a] = j.at("center").at(a).get<double>();
    ev.radius = j.at("radius").get<double>();
    return ev;
}

}  // namespace

std::vector<std::uint8_t> checkpoint_bytes(const Simulation& sim)
{
    json j;
    j["format"] = "slfv-checkpoint";
    j["version"] = 1;
    j["params"] = params_to_json(sim.params());
    j["seed"] = sim.seed();
    j["time"] = sim.sim_time();
    j["events"] = sim.event_count();
    j["rng"] = sim.const_rng().state();
    if (auto p = sim.pending()) j["pending"] = event_to_json(*p);
    const MeasureField& f = sim.field();
    j["next_family"] = f.next_family();
    j["type_seed"] = f.type_seed();
    j["forced_parent"] = sim.forced_parent() ? json(*sim.forced_parent()) : json(nullptr);
    json sites = json::array();
    for (const Site& s : f.raw_sites()) {
        std::vector<std::uint64_t> ids;
        std::vector<double> raws;
        ids.reserve(s.atoms.size());
        raws.reserve(s.atoms.size());
        for (const Atom& a : s.atoms) {
            ids.push_back(a.family);
            raws.push_back(a.raw);
        }
        sites.push_back(json{{"s", s.scale}, {"l", s.lebesgue}, {"t", s.last_update}, {"w", s.scale_at_sweep},
                             {"ids", ids}, {"raw", raws}});
    }
    j["sites"] = std::move(sites);
    return json::to_cbor(j);
}

Simulation restore_checkpoint(const std::vector<std::uint8_t>& bytes)
{
    const json j = json::from_cbor(bytes);
    if (j.value("format", "") != "slfv-checkpoint") throw std::runtime_error("not a checkpoint");
    Simulation sim(params_from_json(j.at("params")), j.at("seed").get<std::uint64_t>());
    sim.rng().set_state(j.at("rng").get<std::array<std::uint64_t, 4>>());
    std::optional<ReproductionEvent> pending;
    if (j.contains("pending")) pending = event_from_json(j.at("pending"));
    sim.restore_state(j.at("time").get<double>(), j.at("events").get<std::uint64_t>(), pending);
    if (!j.at("forced_parent").is_null()) sim.event_options().forced_parent = j.at("forced_parent").get<std::uint64_t>();
    MeasureField& f = sim.field();
    f.set_next_family(j.at("next_family").get<std::uint64_t>());
    f.set_type_seed(j.at("type_seed").get<std::uint64_t>());
    const json& sites = j.at("sites");
    if (sites.size() != f.size()) throw std::runtime_error("checkpoint grid does not match its parameters");
    for (std::size_t i = 0; i < f.size(); ++i) {
        const json& js = sites[i];
        Site& s = f.site(i);
        s.scale = js.at("s").get<double>();
        s.lebesgue = js.at("l").get<double>();
        s.last_update = js.at("t").get<double>();
        s.scale_at_sweep = js.at("w").get<double>();
        const auto ids = js.at("ids").get<std::vector<std::uint64_t>>();
        const auto raws = js.at("raw").get<std::vector<double>>();
        if (ids.size() != raws.size()) throw std::runtime_error("corrupt checkpoint site");
        s.atoms.clear();
        for (std::size_t k = 0; k < ids.size(); ++k) s.atoms.push_back({ids[k], raws[k]});
    }
    return sim;
}

void save_checkpoint(const Simulation& sim, const std::string& path)
{
    const auto bytes = checkpoint_bytes(sim);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Simulation load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return restore_checkpoint(bytes);
}

}  // namespace slfv
