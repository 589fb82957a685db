// Generates the bundled synthetic radial feeders and their default daily
// scenario configs. Impedances are calibrated so that peak uncontrolled load
// sits inside the voltage band with a small margin. Run from the repo root:
//   fixture_gen <out_dir>
#include <cstdio>
#include <iostream>
#include <map>

#include "acpf.hpp"
#include "common.hpp"
#include "feeder.hpp"
#include "scenario.hpp"
#include "socp_opf.hpp"

using namespace gpopf;

namespace {

struct FixtureSpec {
    std::string name;
    int n_bus;
    std::vector<std::pair<int, int>> edges; // (bus, parent)
    std::vector<int> inverter_buses;
    double load_peak_base;
    double target_drop; // desired worst |sqrt(v)-1| at peak load, no solar
    std::uint64_t seed;
};

FeederModel build(const FixtureSpec &fs, ScenarioConfig &cfg) {
    Rng rng(fs.seed);

    std::map<int, double> peak;
    for (const auto &[bus, par] : fs.edges) peak[bus] = fs.load_peak_base * rng.uniform(0.7, 1.3);

    cfg = ScenarioConfig{};
    cfg.load_peak_default = fs.load_peak_base;
    for (const auto &[bus, pk] : peak) cfg.load_peak_per_bus.emplace_back(bus, pk);
    std::sort(cfg.load_peak_per_bus.begin(), cfg.load_peak_per_bus.end());
    cfg.solar_penetration = 0.5;
    cfg.cloud_noise = 0.25;
    cfg.load_noise = 0.06;

    // depth for conductor sizing
    std::map<int, int> parent_of(fs.edges.begin(), fs.edges.end());
    std::map<int, int> depth;
    std::function<int(int)> depth_of = [&](int b) -> int {
        if (b == 0) return 0;
        auto it = depth.find(b);
        if (it != depth.end()) return it->second;
        return depth[b] = 1 + depth_of(parent_of[b]);
    };
    // subtree peak loads for ampacity sizing
    std::map<int, double> subtree = peak;
    std::vector<std::pair<int, int>> by_depth = fs.edges;
    std::sort(by_depth.begin(), by_depth.end(),
              [&](auto a, auto b) { return depth_of(a.first) > depth_of(b.first); });
    for (const auto &[bus, par] : by_depth)
        if (par != 0) subtree[par] += subtree[bus];

    std::map<int, double> rline, xline;
    for (const auto &[bus, par] : fs.edges) {
        const double trunk = std::min(1.0, subtree[bus] / (0.5 * fs.n_bus * fs.load_peak_base));
        const double base = 0.02 * (1.0 - 0.8 * trunk) + 0.004;
        rline[bus] = base * rng.uniform(0.8, 1.2);
        xline[bus] = 0.7 * rline[bus] * rng.uniform(0.9, 1.1);
    }

    auto make_feeder = [&](double rscale) {
        FeederModel raw;
        std::string json = "{\"name\":\"" + fs.name + "\",\"v0_mode\":\"fixed\",\"v0\":1.0,\"buses\":[";
        bool first = true;
        for (const auto &[bus, par] : fs.edges) {
            if (!first) json += ",";
            first = false;
            json += "{\"id\":" + std::to_string(bus) + ",\"vmin\":0.9409,\"vmax\":1.0609}";
        }
        json += "],\"lines\":[";
        first = true;
        for (const auto &[bus, par] : fs.edges) {
            const double pk = subtree[bus];
            const double lbar = 4.0 * pk * pk + 0.02;
            if (!first) json += ",";
            first = false;
            json += "{\"bus\":" + std::to_string(bus) + ",\"parent\":" + std::to_string(par) +
                    ",\"r\":" + format_double(rscale * rline[bus]) + ",\"x\":" + format_double(rscale * xline[bus]) +
                    ",\"lbar\":" + format_double(lbar) + "}";
        }
        json += "],\"inverters\":[";
        first = true;
        for (int bus : fs.inverter_buses) {
            const double sbar = cfg.inverter_oversize * cfg.solar_penetration * peak[bus];
            if (!first) json += ",";
            first = false;
            json += "{\"bus\":" + std::to_string(bus) + ",\"sbar\":" + format_double(sbar) + "}";
        }
        json += "]}";
        return feeder_from_json_text(json);
    };

    // calibrate impedance scale: peak load, no inverter support
    double rscale = 1.0;
    for (int pass = 0; pass < 40; ++pass) {
        FeederModel f = make_feeder(rscale);
        Eigen::VectorXd p(f.bus_count()), q(f.bus_count());
        for (int k = 1; k <= f.bus_count(); ++k) {
            p[k - 1] = -peak[f.original_id(k)];
            q[k - 1] = -peak[f.original_id(k)] * std::tan(std::acos(0.93));
        }
        auto pf = solve_pf(f, p, q, 1.0);
        auto rep = check_limits(pf, f);
        if (std::abs(rep.worst_dev - fs.target_drop) < 0.001) break;
        rscale *= fs.target_drop / rep.worst_dev;
    }
    return make_feeder(rscale);
}

FixtureSpec spec13() {
    FixtureSpec fs;
    fs.name = "synthetic-13";
    fs.n_bus = 13;
    fs.edges = {{1, 0}, {2, 1}, {3, 2}, {4, 3}, {5, 2},  {6, 5},  {7, 1},
                {8, 7}, {9, 8}, {10, 9}, {11, 7}, {12, 11}, {13, 12}};
    fs.inverter_buses = {4, 6, 10};
    fs.load_peak_base = 0.06;
    fs.target_drop = 0.022;
    fs.seed = 13013;
    return fs;
}

FixtureSpec spec123() {
    FixtureSpec fs;
    fs.name = "synthetic-123";
    fs.n_bus = 123;
    Rng rng(123123);
    fs.edges.push_back({1, 0});
    std::vector<int> open = {1};
    for (int bus = 2; bus <= 123; ++bus) {
        int parent;
        const double u = rng.next_double();
        if (u < 0.55) {
            parent = bus - 1; // extend the current lateral
        } else {
            parent = open[static_cast<size_t>(rng.next_double() * open.size())];
        }
        fs.edges.push_back({bus, parent});
        open.push_back(bus);
        if (open.size() > 40) open.erase(open.begin(), open.begin() + 10);
    }
    for (int bus = 7; bus <= 123; bus += 7) fs.inverter_buses.push_back(bus); // 17 inverters
    fs.load_peak_base = 0.012;
    fs.target_drop = 0.024;
    fs.seed = 123001;
    return fs;
}

} // namespace

int main(int argc, char **argv) {
    const std::string out = argc > 1 ? argv[1] : "data";
    for (const FixtureSpec &fs : {spec13(), spec123()}) {
        ScenarioConfig cfg;
        FeederModel f = build(fs, cfg);
        const std::string tag = std::to_string(fs.n_bus);
        write_text_file(out + "/feeder" + tag + ".json", feeder_to_json_text(f));
        write_text_file(out + "/scenario" + tag + ".json", cfg.to_json_text());
        std::printf("%s: N=%d Ng=%d M=%d -> %s/feeder%s.json\n", fs.name.c_str(), f.bus_count(),
                    f.inverter_count(), f.theta_dim(), out.c_str(), tag.c_str());

        // sanity: worst-case peak power flow and a midday OPF must be clean
        ParametricSocp ps = build_socp(f);
        ScenarioSet day = gen_scenarios(f, cfg, 1);
        int checked = 0;
        double worst_gap = 0, worst_kkt = 0;
        for (int t = 0; t < day.count(); t += 130) {
            auto sol = solve_opf(ps, pack_theta(f, day.instances[t]));
            if (sol.status != SolveStatus::optimal) {
                std::printf("  instance %d: %s\n", t, to_string(sol.status).c_str());
                return 1;
            }
            auto ex = check_exactness(f, ps, sol);
            worst_gap = std::max(worst_gap, ex.max_rel_gap);
            worst_kkt = std::max(worst_kkt, sol.kkt_residual());
            ++checked;
        }
        std::printf("  %d OPF probes: worst kkt %.2e, worst relaxation gap %.2e\n", checked, worst_kkt, worst_gap);
    }
    return 0;
}
