#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "common.hpp"

namespace gpopf {

/// Radial single-phase feeder. Buses are renumbered at load time into
/// topological order: internal buses are 1..N with parent(k) < k, the
/// substation is bus 0. Voltage magnitudes, bounds and ampacities are stored
/// squared (pu^2); powers are per-unit.
struct FeederModel {
    std::string name;

    int n = 0; // bus count excluding the substation

    // Per-line data, line k connects bus k to parent(k); index 0 <-> bus 1.
    std::vector<int> parent; // values in [0, n), parent(k) < k
    std::vector<double> r;
    std::vector<double> x;
    std::vector<double> lbar; // squared-current ampacity

    // Per-bus data, index 0 <-> bus 1.
    std::vector<double> vmin;
    std::vector<double> vmax;

    // Inverter buses, ascending internal bus numbers; sbar aligned.
    std::vector<int> inverter_bus;
    std::vector<double> sbar;

    enum class V0Mode { variable, fixed };
    V0Mode v0_mode = V0Mode::fixed;
    double v0 = 1.0; // squared substation voltage when fixed

    // Original file ids: orig_id[k] is the file id of internal bus k (1..n).
    std::vector<int> orig_id;

    std::vector<std::vector<int>> children; // children[k] for k in [0, n]

    int bus_count() const { return n; }
    int inverter_count() const { return static_cast<int>(inverter_bus.size()); }
    int theta_dim() const { return 2 * n + inverter_count(); }
    int x_dim() const { return 2 * inverter_count() + 4 * n + 1; }

    double line_r(int bus) const { return r[bus - 1]; }
    double line_x(int bus) const { return x[bus - 1]; }
    double line_lbar(int bus) const { return lbar[bus - 1]; }
    int parent_of(int bus) const { return parent[bus - 1]; }
    double bus_vmin(int bus) const { return vmin[bus - 1]; }
    double bus_vmax(int bus) const { return vmax[bus - 1]; }

    bool is_inverter_bus(int bus) const;
    /// Index into the inverter block for an internal bus, -1 if none.
    int inverter_index(int bus) const;

    /// Internal bus number for an original file id (root id maps to 0).
    int internal_bus(int orig) const;
    int original_id(int bus) const { return bus == 0 ? 0 : orig_id[bus - 1]; }
};

FeederModel load_feeder(const std::string &path);
FeederModel feeder_from_json_text(const std::string &text);
std::string feeder_to_json_text(const FeederModel &f);
std::uint64_t feeder_fingerprint(const FeederModel &f);

/// OPF parameter vector theta. Canonical packing is
/// [p_load(1..N); q_load(1..N); pg_cap(inverter buses ascending)], length
/// M = 2N + N_g. All Jacobian/covariance columns follow this ordering.
struct GridConditions {
    Eigen::VectorXd p_load;
    Eigen::VectorXd q_load;
    Eigen::VectorXd pg_cap;
};

Eigen::VectorXd pack_theta(const FeederModel &f, const GridConditions &gc);
GridConditions unpack_theta(const FeederModel &f, const Eigen::VectorXd &theta);

} // namespace gpopf
