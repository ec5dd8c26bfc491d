#ifndef SLFV_SIMULATOR_HPP
#define SLFV_SIMULATOR_HPP

#include "slfv/geometry.hpp"
#include "slfv/random.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace slfv {

struct Dispersal {
    enum class Kind { FixedRadius, Stable };
    Kind kind = Kind::FixedRadius;
    double radius = 1.0;  // FixedRadius
    double alpha = 0.5;   // Stable

    static Dispersal fixed(double r) { return {Kind::FixedRadius, r, 0.0}; }
    static Dispersal stable(double a) { return {Kind::Stable, 1.0, a}; }

    bool is_stable() const { return kind == Kind::Stable; }
    /// Smallest radius the law can produce (simulation units).
    double min_radius() const { return is_stable() ? 1.0 : radius; }
};

struct Rescaling {
    int N = 1;
    double delta = 1.0;
};

/// Model and discretization. Domain and grid spacing are in simulation
/// (unrescaled) length units; u and mu are the limit-scale parameters and the
/// simulated values are u/N and delta^gamma mu/N.
struct SlfvParams {
    double u = 0.5;
    double mu = 0.0;
    Dispersal dispersal;
    Rescaling rescale;
    Domain domain;
    double grid_spacing = 0.25;
    double prune_threshold = 1e-9;

    void validate() const;

    double gamma() const { return dispersal.is_stable() ? dispersal.alpha : 2.0; }
    /// Fluctuation scaling eta_N.
    double eta() const;
    double sim_impact() const { return u / rescale.N; }
    double sim_mutation() const;
    double to_sim_time(double t) const;
    double to_rescaled_time(double s) const;
    double to_sim_length(double x) const { return x / rescale.delta; }
    double to_rescaled_length(double x) const { return x * rescale.delta; }
    int sites_per_side() const;

    /// Parameters from rescaled-unit geometry: torus side L and a grid with
    /// `sites_per_radius` sites across the smallest event radius.
    static SlfvParams from_rescaled(double u, double mu, Dispersal dispersal, Rescaling rescale, int d,
                                    double side, int sites_per_radius);
};

struct ReproductionEvent {
    double t = 0.0;
    Point center{0.0, 0.0, 0.0};
    double radius = 1.0;
};

struct Atom {
    std::uint64_t family = 0;
    double raw = 0.0;  // weight = site scale * raw
};

struct Site {
    double scale = 1.0;
    double lebesgue = 1.0;
    double last_update = 0.0;
    double scale_at_sweep = 1.0;
    std::vector<Atom> atoms;  // sorted by family id
};

/// Grid representation of rho_t: per-site family atoms plus the Lebesgue remainder.
class MeasureField {
public:
    MeasureField() = default;
    MeasureField(const Domain& domain, double spacing, double prune_threshold = 1e-9);

    const Domain& domain() const { return domain_; }
    int dim() const { return domain_.dim(); }
    double spacing() const { return spacing_; }
    int sites_per_side() const { return n_; }
    std::size_t size() const { return sites_.size(); }
    double prune_threshold() const { return prune_eps_; }

    std::size_t index(int i, int j = 0, int k = 0) const;
    std::array<int, 3> coords(std::size_t idx) const;
    Point center(std::size_t idx) const;
    std::size_t nearest_site(const Point& p) const;
    /// Sites whose centers lie strictly inside the ball.
    void sites_in_ball(const Point& c, double r, std::vector<std::size_t>& out) const;

    Site& site(std::size_t i) { return sites_[i]; }
    const Site& site(std::size_t i) const { return sites_[i]; }

    double weight(std::size_t i, const Atom& a) const { return sites_[i].scale * a.raw; }
    double lebesgue(std::size_t i) const { return sites_[i].lebesgue; }
    /// Materialized (family, weight) pairs at a site.
    std::vector<std::pair<std::uint64_t, double>> atoms(std::size_t i) const;
    /// lebesgue + sum of weights - 1 at a site.
    double mass_defect(std::size_t i) const;
    double max_mass_defect() const;

    /// Add an atom directly (tests and checkpoints); keeps sites consistent.
    void set_site(std::size_t i, double lebesgue, const std::vector<std::pair<std::uint64_t, double>>& atoms,
                  double last_update = 0.0);

    /// Fold atoms below the prune threshold into the Lebesgue component.
    void prune(std::size_t i);
    void prune_all();

    std::uint64_t mint_family() { return next_family_++; }
    std::uint64_t next_family() const { return next_family_; }
    void set_next_family(std::uint64_t f) { next_family_ = f; }

    /// Lazily assigned uniform type of a family in [0, 1).
    double family_type(std::uint64_t family) const;
    std::uint64_t type_seed() const { return type_seed_; }
    void set_type_seed(std::uint64_t s) { type_seed_ = s; }

    std::vector<Site>& raw_sites() { return sites_; }
    const std::vector<Site>& raw_sites() const { return sites_; }

private:
    Domain domain_;
    double spacing_ = 1.0;
    int n_ = 1;
    double prune_eps_ = 1e-9;
    std::vector<Site> sites_;
    std::uint64_t next_family_ = 1;
    std::uint64_t type_seed_ = 0;
};

double event_rate(const SlfvParams& params);
double sample_radius(const Dispersal& dispersal, int d, Rng& rng);
/// Radius from a given uniform variate (inverse CDF).
double radius_from_uniform(const Dispersal& dispersal, int d, double u);

/// Bring one site forward to `now` under the mutation flow at rate mu.
void apply_mutation_decay(MeasureField& field, std::size_t site, double now, double mu);

struct EventOptions {
    /// When set, this family is the parent of every event (degenerate sanity runs).
    std::optional<std::uint64_t> forced_parent;
};

/// Decay the touched sites to ev.t, draw the parent and update every site in the ball.
/// Returns the parental family id.
std::uint64_t apply_event(MeasureField& field, const ReproductionEvent& ev, double u, double mu, Rng& rng,
                          const EventOptions& options = {});

using Observer = std::function<void(const MeasureField& field, double t_rescaled, std::size_t obs_index)>;

/// One replicate of the rescaled process.
class Simulation {
public:
    Simulation(const SlfvParams& params, std::uint64_t seed);

    const SlfvParams& params() const { return params_; }
    MeasureField& field() { return field_; }
    const MeasureField& field() const { return field_; }
    double sim_time() const { return now_; }
    std::uint64_t event_count() const { return events_; }
    std::uint64_t seed() const { return seed_; }
    Rng& rng() { return rng_; }
    const Rng& const_rng() const { return rng_; }
    EventOptions& event_options() { return options_; }
    std::optional<std::uint64_t> forced_parent() const { return options_.forced_parent; }

    /// Run events up to simulation time s (exclusive of later events).
    void advance_to(double s);
    /// Decay every site to the current time and prune: the state observers see.
    void synchronize();
    /// Run to rescaled time t_end, observing at each scheduled rescaled time <= t_end.
    void run(double t_end, const std::vector<double>& schedule, const Observer& observer);

    // checkpoint plumbing
    std::optional<ReproductionEvent> pending() const { return pending_; }
    void restore_state(double now, std::uint64_t events, const std::optional<ReproductionEvent>& pending);

    /// Stream of events applied so far is recorded when enabled.
    void record_events(bool on) { record_ = on; }
    const std::vector<ReproductionEvent>& recorded() const { return recorded_; }

private:
    ReproductionEvent draw_event(double after);

    SlfvParams params_;
    std::uint64_t seed_;
    Rng rng_;
    MeasureField field_;
    EventOptions options_;
    double now_ = 0.0;
    std::uint64_t events_ = 0;
    std::optional<ReproductionEvent> pending_;
    bool record_ = false;
    std::vector<ReproductionEvent> recorded_;
};

}  // namespace slfv

#endif
