#include "scenario.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>

using nlohmann::json;

namespace gpopf {

std::vector<double> median_filter(const std::vector<double> &series, int order) {
    if (series.empty()) throw Error::invalid("median_filter: empty series");
    if (order < 1) throw Error::invalid("median_filter: order must be >= 1");
    if (order % 2 == 0) ++order;
    const int n = static_cast<int>(series.size());
    const int half = order / 2;
    std::vector<double> out(n);
    std::vector<double> window;
    window.reserve(order);
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        window.assign(series.begin() + lo, series.begin() + hi + 1);
        auto mid = window.begin() + (window.size() - 1) / 2;
        std::nth_element(window.begin(), mid, window.end());
        out[i] = *mid;
    }
    return out;
}

std::string ScenarioConfig::to_json_text() const {
    json j;
    j["start_min"] = start_min;
    j["step_min"] = step_min;
    j["count"] = count;
    j["load_peak_default"] = load_peak_default;
    json per;
    for (const auto &[bus, pk] : load_peak_per_bus) per[std::to_string(bus)] = pk;
    j["load_peak_per_bus"] = per;
    j["load_noise"] = load_noise;
    j["solar_penetration"] = solar_penetration;
    j["cloud_noise"] = cloud_noise;
    j["pf_min"] = pf_min;
    j["pf_max"] = pf_max;
    j["median_filter_order"] = median_filter_order;
    j["inverter_oversize"] = inverter_oversize;
    return j.dump(2);
}

ScenarioConfig ScenarioConfig::from_json_text(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception &e) {
        throw Error::io(std::string("scenario config parse failure: ") + e.what());
    }
    ScenarioConfig c;
    c.start_min = j.value("start_min", c.start_min);
    c.step_min = j.value("step_min", c.step_min);
    c.count = j.value("count", c.count);
    c.load_peak_default = j.value("load_peak_default", c.load_peak_default);
    if (j.contains("load_peak_per_bus"))
        for (const auto &[k, v] : j.at("load_peak_per_bus").items())
            c.load_peak_per_bus.emplace_back(std::stoi(k), v.get<double>());
    c.load_noise = j.value("load_noise", c.load_noise);
    c.solar_penetration = j.value("solar_penetration", c.solar_penetration);
    c.cloud_noise = j.value("cloud_noise", c.cloud_noise);
    c.pf_min = j.value("pf_min", c.pf_min);
    c.pf_max = j.value("pf_max", c.pf_max);
    c.median_filter_order = j.value("median_filter_order", c.median_filter_order);
    c.inverter_oversize = j.value("inverter_oversize", c.inverter_oversize);

    if (c.step_min < 1 || c.count < 1) throw Error::invalid("scenario config: count and step must be positive");
    if (!(c.load_peak_default > 0)) throw Error::invalid("scenario config: load peak must be positive");
    if (c.load_noise < 0 || c.cloud_noise < 0 || c.cloud_noise >= 1)
        throw Error::invalid("scenario config: noise levels out of range");
    if (!(c.pf_min > 0 && c.pf_min <= c.pf_max && c.pf_max <= 1))
        throw Error::invalid("scenario config: power factor range must satisfy 0 < pf_min <= pf_max <= 1");
    if (c.solar_penetration < 0) throw Error::invalid("scenario config: solar penetration must be nonnegative");
    return c;
}

namespace {

// Daily active-load shape: morning and evening humps on a base level with
// peak ~1 at the evening hump.
double load_template(double minute) {
    const double h = minute / 60.0;
    auto bump = [](double t, double c, double w) { return std::exp(-0.5 * (t - c) * (t - c) / (w * w)); };
    return 0.35 + 0.40 * bump(h, 9.0, 2.2) + 0.65 * bump(h, 19.5, 2.8);
}

// Solar availability bell, zero outside daylight.
double solar_template(double minute) {
    const double h = minute / 60.0;
    if (h < 5.5 || h > 20.5) return 0.0;
    const double bell = std::exp(-0.5 * (h - 13.0) * (h - 13.0) / (3.0 * 3.0));
    const double edge = std::exp(-0.5 * 7.5 * 7.5 / 9.0);
    return std::max(0.0, (bell - edge) / (1.0 - edge));
}

// Smooth unit-variance noise: first-order autoregression over the sample
// grid, stationary initialization.
std::vector<double> smooth_noise(int count, double step_min, double corr_min, Rng &rng) {
    std::vector<double> out(count);
    const double rho = std::exp(-step_min / corr_min);
    const double innov = std::sqrt(1.0 - rho * rho);
    double v = rng.normal();
    for (int i = 0; i < count; ++i) {
        out[i] = v;
        v = rho * v + innov * rng.normal();
    }
    return out;
}

double peak_for_bus(const ScenarioConfig &cfg, int orig_id) {
    for (const auto &[bus, pk] : cfg.load_peak_per_bus)
        if (bus == orig_id) return pk;
    return cfg.load_peak_default;
}

} // namespace

std::vector<double> derived_inverter_ratings(const FeederModel &f, const ScenarioConfig &cfg) {
    std::vector<double> out;
    out.reserve(f.inverter_count());
    for (int i = 0; i < f.inverter_count(); ++i) {
        const double peak = peak_for_bus(cfg, f.original_id(f.inverter_bus[i]));
        out.push_back(cfg.inverter_oversize * cfg.solar_penetration * peak);
    }
    return out;
}

ScenarioSet gen_scenarios(const FeederModel &f, const ScenarioConfig &cfg, std::uint64_t seed) {
    const int n = f.bus_count();
    const int ng = f.inverter_count();
    const int T = cfg.count;

    ScenarioSet set;
    set.feeder_hash = feeder_fingerprint(f);
    set.seed = seed;
    set.config_json = cfg.to_json_text();
    set.times.resize(T);
    for (int t = 0; t < T; ++t) set.times[t] = cfg.start_min + t * cfg.step_min;

    // Per-bus series; independent streams keyed by bus so results do not
    // depend on evaluation order.
    Eigen::MatrixXd p_load(T, n), q_load(T, n);
    Eigen::MatrixXd pg_cap = Eigen::MatrixXd::Zero(T, ng);

    for (int k = 1; k <= n; ++k) {
        const int orig = f.original_id(k);
        Rng noise_rng(mix_seed(seed, 1, static_cast<std::uint64_t>(orig)));
        Rng pf_rng(mix_seed(seed, 2, static_cast<std::uint64_t>(orig)));
        const double peak = peak_for_bus(cfg, orig);
        const double pf = pf_rng.uniform(cfg.pf_min, cfg.pf_max);
        const double tanphi = std::tan(std::acos(pf));

        std::vector<double> series(T);
        const auto noise = smooth_noise(T, cfg.step_min, 45.0, noise_rng);
        for (int t = 0; t < T; ++t) {
            const double shape = load_template(set.times[t]);
            series[t] = peak * shape * std::max(0.1, 1.0 + cfg.load_noise * noise[t]);
        }
        if (cfg.median_filter_order > 1) series = median_filter(series, cfg.median_filter_order);
        for (int t = 0; t < T; ++t) {
            p_load(t, k - 1) = series[t];
            q_load(t, k - 1) = series[t] * tanphi;
        }
    }

    for (int i = 0; i < ng; ++i) {
        const int orig = f.original_id(f.inverter_bus[i]);
        Rng cloud_rng(mix_seed(seed, 3, static_cast<std::uint64_t>(orig)));
        const double peak = cfg.solar_penetration * peak_for_bus(cfg, orig);
        std::vector<double> series(T);
        const auto noise = smooth_noise(T, cfg.step_min, 20.0, cloud_rng);
        for (int t = 0; t < T; ++t) {
            double dip = 1.0;
            if (cfg.cloud_noise > 0) dip = std::clamp(1.0 - cfg.cloud_noise * (0.6 + noise[t]), 0.0, 1.0);
            series[t] = peak * solar_template(set.times[t]) * dip;
        }
        if (cfg.median_filter_order > 1) series = median_filter(series, cfg.median_filter_order);
        for (int t = 0; t < T; ++t) pg_cap(t, i) = std::max(0.0, series[t]);
    }

    set.instances.resize(T);
    for (int t = 0; t < T; ++t) {
        GridConditions gc;
        gc.p_load = p_load.row(t);
        gc.q_load = q_load.row(t);
        gc.pg_cap = pg_cap.row(t);
        set.instances[t] = std::move(gc);
    }
    return set;
}

std::string scenarios_to_csv(const FeederModel &f, const ScenarioSet &s) {
    std::ostringstream out;
    out << "t,bus,p_load,q_load,pg_cap\n";
    for (int t = 0; t < s.count(); ++t) {
        const GridConditions &gc = s.instances[t];
        for (int k = 1; k <= f.bus_count(); ++k) {
            out << s.times[t] << ',' << f.original_id(k) << ',' << format_double(gc.p_load[k - 1]) << ','
                << format_double(gc.q_load[k - 1]);
            const int ii = f.inverter_index(k);
            out << ',';
            if (ii >= 0) out << format_double(gc.pg_cap[ii]);
            out << '\n';
        }
    }
    return out.str();
}

ScenarioSet scenarios_from_csv(const FeederModel &f, const std::string &text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error::io("scenario csv: empty file");
    // Tolerate \r\n
    auto strip = [](std::string &s) {
        while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
    };
    strip(line);
    if (line != "t,bus,p_load,q_load,pg_cap") throw Error::io("scenario csv: unexpected header '" + line + "'");

    struct Row {
        int bus;
        double p, q, cap;
        bool has_cap;
    };
    std::vector<int> times;
    std::vector<std::vector<Row>> groups;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip(line);
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        auto next = [&](bool required) {
            if (!std::getline(ls, tok, ','))
                tok.clear();
            else if (required && tok.empty())
                throw Error::io("scenario csv: missing field at line " + std::to_string(lineno));
            return tok;
        };
        const int t = std::stoi(next(true));
        Row row;
        row.bus = std::stoi(next(true));
        row.p = std::stod(next(true));
        row.q = std::stod(next(true));
        std::getline(ls, tok);
        row.has_cap = !tok.empty();
        row.cap = row.has_cap ? std::stod(tok) : 0.0;
        if (times.empty() || times.back() != t) {
            times.push_back(t);
            groups.emplace_back();
        }
        groups.back().push_back(row);
    }

    ScenarioSet set;
    set.feeder_hash = feeder_fingerprint(f);
    set.times = times;
    const int n = f.bus_count();
    const int ng = f.inverter_count();
    for (size_t g = 0; g < groups.size(); ++g) {
        GridConditions gc;
        gc.p_load = Eigen::VectorXd::Zero(n);
        gc.q_load = Eigen::VectorXd::Zero(n);
        gc.pg_cap = Eigen::VectorXd::Zero(ng);
        std::vector<bool> seen(n, false);
        for (const Row &row : groups[g]) {
            const int k = f.internal_bus(row.bus);
            if (k == 0) throw Error::io("scenario csv: row for substation bus");
            if (seen[k - 1]) throw Error::io("scenario csv: duplicate bus in instance t=" + std::to_string(times[g]));
            seen[k - 1] = true;
            gc.p_load[k - 1] = row.p;
            gc.q_load[k - 1] = row.q;
            const int ii = f.inverter_index(k);
            if (row.has_cap) {
                if (ii < 0) throw Error::io("scenario csv: pg_cap given for non-inverter bus " + std::to_string(row.bus));
                if (row.cap < 0) throw Error::io("scenario csv: negative pg_cap");
                gc.pg_cap[ii] = row.cap;
            }
        }
        if (std::count(seen.begin(), seen.end(), true) != n)
            throw Error::io("scenario csv: instance t=" + std::to_string(times[g]) + " does not cover all buses");
        set.instances.push_back(std::move(gc));
    }
    if (set.instances.empty()) throw Error::io("scenario csv: no instances");
    return set;
}

void save_scenarios(const FeederModel &f, const ScenarioSet &s, const std::string &path) {
    write_text_file(path, scenarios_to_csv(f, s));
}

ScenarioSet load_scenarios(const FeederModel &f, const std::string &path) {
    return scenarios_from_csv(f, read_text_file(path));
}

} // namespace gpopf
