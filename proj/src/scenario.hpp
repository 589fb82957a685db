#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "feeder.hpp"

namespace gpopf {

/// Sliding-window median of odd order (even orders round up to the next odd
/// integer). Windows are truncated at the series edges; the median of a
/// window of length L is element (L-1)/2 of the sorted window.
std::vector<double> median_filter(const std::vector<double> &series, int order);

/// Synthetic daily profile generator settings. Loads follow a double-hump
/// template, solar availability a daylight bell; both carry seeded smooth
/// noise. Reactive loads come from per-bus lagging power factors drawn once.
struct ScenarioConfig {
    int start_min = 420; // 07:00
    int step_min = 1;
    int count = 781;

    double load_peak_default = 0.05;          // pu, per bus
    std::vector<std::pair<int, double>> load_peak_per_bus; // original ids
    double load_noise = 0.06;                 // relative smooth noise on loads
    double solar_penetration = 0.5;           // solar peak = pen * load peak
    double cloud_noise = 0.0;                 // relative dips on solar, [0,1)
    double pf_min = 0.9;                      // lagging power factor range
    double pf_max = 1.0;
    int median_filter_order = 0;              // 0 disables smoothing
    double inverter_oversize = 1.1;           // sizing rule for derived ratings

    std::string to_json_text() const;
    static ScenarioConfig from_json_text(const std::string &text);
};

/// A pool of grid-condition instances tied to one feeder.
struct ScenarioSet {
    std::uint64_t feeder_hash = 0;
    std::uint64_t seed = 0;
    std::string config_json; // empty for sets loaded from file
    std::vector<int> times;  // minutes
    std::vector<GridConditions> instances;

    int count() const { return static_cast<int>(instances.size()); }
};

ScenarioSet gen_scenarios(const FeederModel &f, const ScenarioConfig &cfg, std::uint64_t seed);

/// Peak solar availability per inverter bus implied by a config; the paper's
/// sizing rule (oversize x peak) gives the bundled fixtures' ratings.
std::vector<double> derived_inverter_ratings(const FeederModel &f, const ScenarioConfig &cfg);

// Scenario CSV: header `t,bus,p_load,q_load,pg_cap`, original bus ids,
// pg_cap blank for non-inverter buses.
std::string scenarios_to_csv(const FeederModel &f, const ScenarioSet &s);
ScenarioSet scenarios_from_csv(const FeederModel &f, const std::string &text);
void save_scenarios(const FeederModel &f, const ScenarioSet &s, const std::string &path);
ScenarioSet load_scenarios(const FeederModel &f, const std::string &path);

} // namespace gpopf
