#include "feeder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <json.hpp>
#include <set>

using nlohmann::json;

namespace gpopf {

bool FeederModel::is_inverter_bus(int bus) const { return inverter_index(bus) >= 0; }

int FeederModel::inverter_index(int bus) const {
    auto it = std::lower_bound(inverter_bus.begin(), inverter_bus.end(), bus);
    if (it != inverter_bus.end() && *it == bus) return static_cast<int>(it - inverter_bus.begin());
    return -1;
}

int FeederModel::internal_bus(int orig) const {
    if (orig == 0) return 0;
    for (int k = 0; k < n; ++k)
        if (orig_id[k] == orig) return k + 1;
    throw Error::invalid("unknown bus id " + std::to_string(orig) + " in feeder '" + name + "'");
}

namespace {

struct RawLine {
    int bus = 0;
    int parent = 0;
    double r = 0, x = 0, lbar = 0;
};

// Topological renumbering: children after parents so that sweeps and matrix
// assembly are index-monotone.
void build_model(FeederModel &f, const std::map<int, std::pair<double, double>> &bus_bounds,
                 const std::vector<RawLine> &lines, const std::map<int, double> &inverters) {
    const int n = static_cast<int>(lines.size());
    if (n == 0) throw Error::invalid("feeder has no lines");
    if (static_cast<int>(bus_bounds.size()) != n)
        throw Error::invalid("feeder bus list and line list sizes differ");

    std::map<int, RawLine> by_bus;
    for (const auto &ln : lines) {
        if (ln.bus == 0) throw Error::invalid("line assigned to substation bus 0");
        if (!by_bus.emplace(ln.bus, ln).second)
            throw Error::invalid("bus " + std::to_string(ln.bus) + " has more than one line: not a tree");
        if (!bus_bounds.count(ln.bus))
            throw Error::invalid("line references bus " + std::to_string(ln.bus) + " missing from bus list");
        if (!(ln.r > 0)) throw Error::invalid("non-positive resistance on line of bus " + std::to_string(ln.bus));
        if (!std::isfinite(ln.x)) throw Error::invalid("non-finite reactance on line of bus " + std::to_string(ln.bus));
        if (!(ln.lbar > 0)) throw Error::invalid("non-positive ampacity on line of bus " + std::to_string(ln.bus));
    }

    // Walk up from every bus; detects cycles and disconnected components.
    std::map<int, int> depth; // orig id -> hops to root
    for (const auto &[bus, ln] : by_bus) {
        int cur = bus;
        int hops = 0;
        std::set<int> seen;
        while (cur != 0) {
            if (!seen.insert(cur).second) throw Error::invalid("not a tree: cycle through bus " + std::to_string(cur));
            auto it = by_bus.find(cur);
            if (it == by_bus.end())
                throw Error::invalid("not a tree: parent " + std::to_string(cur) + " has no line to the root");
            cur = it->second.parent;
            if (++hops > n) throw Error::invalid("not a tree: no path to substation from bus " + std::to_string(bus));
        }
        depth[bus] = hops;
    }

    // Sort by (depth, orig id): parents always precede children.
    std::vector<int> order;
    order.reserve(n);
    for (const auto &[bus, d] : depth) order.push_back(bus);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (depth[a] != depth[b]) return depth[a] < depth[b];
        return a < b;
    });

    std::map<int, int> to_internal;
    to_internal[0] = 0;
    for (int k = 0; k < n; ++k) to_internal[order[k]] = k + 1;

    f.n = n;
    f.parent.resize(n);
    f.r.resize(n);
    f.x.resize(n);
    f.lbar.resize(n);
    f.vmin.resize(n);
    f.vmax.resize(n);
    f.orig_id.resize(n);
    for (int k = 0; k < n; ++k) {
        const RawLine &ln = by_bus[order[k]];
        f.orig_id[k] = ln.bus;
        f.parent[k] = to_internal[ln.parent];
        f.r[k] = ln.r;
        f.x[k] = ln.x;
        f.lbar[k] = ln.lbar;
        const auto &[vlo, vhi] = bus_bounds.at(ln.bus);
        if (!(vlo > 0 && vlo < vhi))
            throw Error::invalid("voltage bounds must satisfy 0 < vmin < vmax at bus " + std::to_string(ln.bus));
        f.vmin[k] = vlo;
        f.vmax[k] = vhi;
    }

    for (const auto &[bus, sb] : inverters) {
        if (!to_internal.count(bus)) throw Error::invalid("inverter at unknown bus " + std::to_string(bus));
        if (bus == 0) throw Error::invalid("inverter at substation bus");
        if (!(sb > 0)) throw Error::invalid("non-positive inverter rating at bus " + std::to_string(bus));
        f.inverter_bus.push_back(to_internal[bus]);
    }
    std::sort(f.inverter_bus.begin(), f.inverter_bus.end());
    f.sbar.resize(f.inverter_bus.size());
    for (size_t i = 0; i < f.inverter_bus.size(); ++i) f.sbar[i] = inverters.at(f.orig_id[f.inverter_bus[i] - 1]);

    f.children.assign(n + 1, {});
    for (int k = 1; k <= n; ++k) f.children[f.parent_of(k)].push_back(k);
}

} // namespace

FeederModel feeder_from_json_text(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception &e) {
        throw Error::io(std::string("feeder parse failure: ") + e.what());
    }

    FeederModel f;
    try {
        f.name = j.value("name", "feeder");
        const std::string mode = j.value("v0_mode", "fixed");
        if (mode == "fixed")
            f.v0_mode = FeederModel::V0Mode::fixed;
        else if (mode == "variable")
            f.v0_mode = FeederModel::V0Mode::variable;
        else
            throw Error::invalid("v0_mode must be 'fixed' or 'variable'");
        f.v0 = j.value("v0", 1.0);
        if (!(f.v0 > 0)) throw Error::invalid("v0 must be positive");

        std::map<int, std::pair<double, double>> bus_bounds;
        for (const auto &b : j.at("buses")) {
            const int id = b.at("id").get<int>();
            if (bus_bounds.count(id)) throw Error::invalid("duplicate bus id " + std::to_string(id));
            bus_bounds[id] = {b.at("vmin").get<double>(), b.at("vmax").get<double>()};
        }
        std::vector<RawLine> lines;
        for (const auto &l : j.at("lines")) {
            RawLine ln;
            ln.bus = l.at("bus").get<int>();
            ln.parent = l.at("parent").get<int>();
            ln.r = l.at("r").get<double>();
            ln.x = l.at("x").get<double>();
            ln.lbar = l.at("lbar").get<double>();
            lines.push_back(ln);
        }
        std::map<int, double> inverters;
        if (j.contains("inverters")) {
            for (const auto &iv : j.at("inverters")) {
                const int bus = iv.at("bus").get<int>();
                if (inverters.count(bus)) throw Error::invalid("duplicate inverter bus " + std::to_string(bus));
                inverters[bus] = iv.at("sbar").get<double>();
            }
        }
        build_model(f, bus_bounds, lines, inverters);
    } catch (const json::exception &e) {
        throw Error::io(std::string("feeder schema error: ") + e.what());
    }
    return f;
}

FeederModel load_feeder(const std::string &path) { return feeder_from_json_text(read_text_file(path)); }

std::string feeder_to_json_text(const FeederModel &f) {
    json j;
    j["name"] = f.name;
    j["v0_mode"] = f.v0_mode == FeederModel::V0Mode::fixed ? "fixed" : "variable";
    j["v0"] = f.v0;
    json buses = json::array();
    json lines = json::array();
    for (int k = 1; k <= f.n; ++k) {
        buses.push_back({{"id", f.original_id(k)}, {"vmin", f.bus_vmin(k)}, {"vmax", f.bus_vmax(k)}});
        lines.push_back({{"bus", f.original_id(k)},
                         {"parent", f.original_id(f.parent_of(k))},
                         {"r", f.line_r(k)},
                         {"x", f.line_x(k)},
                         {"lbar", f.line_lbar(k)}});
    }
    json inverters = json::array();
    for (int i = 0; i < f.inverter_count(); ++i)
        inverters.push_back({{"bus", f.original_id(f.inverter_bus[i])}, {"sbar", f.sbar[i]}});
    j["buses"] = buses;
    j["lines"] = lines;
    j["inverters"] = inverters;
    return j.dump(2);
}

std::uint64_t feeder_fingerprint(const FeederModel &f) { return fnv1a(feeder_to_json_text(f)); }

Eigen::VectorXd pack_theta(const FeederModel &f, const GridConditions &gc) {
    const int n = f.bus_count();
    const int ng = f.inverter_count();
    if (gc.p_load.size() != n || gc.q_load.size() != n)
        throw Error::invalid("load vectors must have length N");
    if (gc.pg_cap.size() != ng) throw Error::invalid("pg_cap must have one entry per inverter bus");
    if ((gc.pg_cap.array() < 0).any()) throw Error::invalid("pg_cap must be nonnegative");
    Eigen::VectorXd theta(f.theta_dim());
    theta.segment(0, n) = gc.p_load;
    theta.segment(n, n) = gc.q_load;
    theta.segment(2 * n, ng) = gc.pg_cap;
    return theta;
}

GridConditions unpack_theta(const FeederModel &f, const Eigen::VectorXd &theta) {
    if (theta.size() != f.theta_dim()) throw Error::invalid("theta length mismatch");
    GridConditions gc;
    const int n = f.bus_count();
    gc.p_load = theta.segment(0, n);
    gc.q_load = theta.segment(n, n);
    gc.pg_cap = theta.segment(2 * n, f.inverter_count());
    return gc;
}

} // namespace gpopf
