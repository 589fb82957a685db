#include "gpopf/gpopf.h"

#include <cstring>
#include <map>
#include <sstream>
#include <string>

#include "acpf.hpp"
#include "common.hpp"
#include "feeder.hpp"
#include "lopf.hpp"
#include "pipeline.hpp"
#include "scenario.hpp"
#include "socp_opf.hpp"

using namespace gpopf;

struct gpopf_feeder {
    FeederModel model;
    ParametricSocp socp;
};
struct gpopf_scenarios {
    ScenarioSet set;
};
struct gpopf_dataset {
    std::vector<OpfRecord> records;
};
struct gpopf_model {
    TrainedModel model;
};

namespace {

thread_local std::string g_last_error;

gpopf_status from_error(const Error &e) {
    g_last_error = e.what();
    switch (e.kind()) {
        case Error::Kind::io: return GPOPF_ERR_IO;
        case Error::Kind::invalid: return GPOPF_ERR_INVALID;
        case Error::Kind::solver: return GPOPF_ERR_SOLVER;
        default: return GPOPF_ERR_INTERNAL;
    }
}

template <typename F>
gpopf_status guarded(F &&fn) {
    try {
        return fn();
    } catch (const Error &e) {
        return from_error(e);
    } catch (const std::exception &e) {
        g_last_error = e.what();
        return GPOPF_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return GPOPF_ERR_INTERNAL;
    }
}

gpopf_status invalid(const std::string &msg) {
    g_last_error = msg;
    return GPOPF_ERR_INVALID;
}

} // namespace

extern "C" {

const char *gpopf_last_error(void) { return g_last_error.c_str(); }
const char *gpopf_version(void) { return "1.0.0"; }

gpopf_status gpopf_feeder_load(const char *path, gpopf_feeder **out) {
    if (!path || !out) return invalid("feeder_load: null argument");
    return guarded([&] {
        auto *h = new gpopf_feeder{load_feeder(path), {}};
        h->socp = build_socp(h->model);
        *out = h;
        return GPOPF_OK;
    });
}

void gpopf_feeder_free(gpopf_feeder *f) { delete f; }
int gpopf_feeder_bus_count(const gpopf_feeder *f) { return f ? f->model.bus_count() : -1; }
int gpopf_feeder_inverter_count(const gpopf_feeder *f) { return f ? f->model.inverter_count() : -1; }
int gpopf_feeder_theta_dim(const gpopf_feeder *f) { return f ? f->model.theta_dim() : -1; }
int gpopf_feeder_x_dim(const gpopf_feeder *f) { return f ? f->model.x_dim() : -1; }
int gpopf_feeder_inverter_bus(const gpopf_feeder *f, int j) {
    if (!f || j < 0 || j >= f->model.inverter_count()) return -1;
    return f->model.original_id(f->model.inverter_bus[j]);
}

gpopf_status gpopf_scenarios_generate(const gpopf_feeder *f, const char *config_json_path, uint64_t seed,
                                      gpopf_scenarios **out) {
    if (!f || !config_json_path || !out) return invalid("scenarios_generate: null argument");
    return guarded([&] {
        auto cfg = ScenarioConfig::from_json_text(read_text_file(config_json_path));
        *out = new gpopf_scenarios{gen_scenarios(f->model, cfg, seed)};
        return GPOPF_OK;
    });
}

gpopf_status gpopf_scenarios_load_csv(const gpopf_feeder *f, const char *path, gpopf_scenarios **out) {
    if (!f || !path || !out) return invalid("scenarios_load_csv: null argument");
    return guarded([&] {
        *out = new gpopf_scenarios{load_scenarios(f->model, path)};
        return GPOPF_OK;
    });
}

gpopf_status gpopf_scenarios_save_csv(const gpopf_feeder *f, const gpopf_scenarios *s, const char *path) {
    if (!f || !s || !path) return invalid("scenarios_save_csv: null argument");
    return guarded([&] {
        save_scenarios(f->model, s->set, path);
        return GPOPF_OK;
    });
}

int gpopf_scenarios_count(const gpopf_scenarios *s) { return s ? s->set.count() : -1; }
int gpopf_scenarios_time(const gpopf_scenarios *s, int index) {
    if (!s || index < 0 || index >= s->set.count()) return -1;
    return s->set.times[index];
}

gpopf_status gpopf_scenarios_theta(const gpopf_feeder *f, const gpopf_scenarios *s, int index, double *theta,
                                   int theta_len) {
    if (!f || !s || !theta) return invalid("scenarios_theta: null argument");
    if (index < 0 || index >= s->set.count()) return invalid("scenarios_theta: index out of range");
    if (theta_len != f->model.theta_dim()) return invalid("scenarios_theta: theta buffer length mismatch");
    return guarded([&] {
        Eigen::VectorXd t = pack_theta(f->model, s->set.instances[index]);
        std::memcpy(theta, t.data(), sizeof(double) * t.size());
        return GPOPF_OK;
    });
}

void gpopf_scenarios_free(gpopf_scenarios *s) { delete s; }

gpopf_status gpopf_opf_solve(const gpopf_feeder *f, const double *theta, int theta_len, double fix_v0,
                             double kkt_tol, double *x_out, int x_len, double *objective_out,
                             double *exact_gap_out) {
    if (!f || !theta) return invalid("opf_solve: null argument");
    if (theta_len != f->model.theta_dim()) return invalid("opf_solve: theta length mismatch");
    if (x_out && x_len != f->model.x_dim()) return invalid("opf_solve: x buffer length mismatch");
    return guarded([&]() -> gpopf_status {
        const Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(theta, theta_len);
        SolveOptions opts;
        if (kkt_tol > 0) opts.kkt_tol = kkt_tol;
        PrimalDualSolution sol;
        if (fix_v0 > 0 && (f->model.v0_mode != FeederModel::V0Mode::fixed || f->model.v0 != fix_v0)) {
            FeederModel pinned = f->model;
            pinned.v0_mode = FeederModel::V0Mode::fixed;
            pinned.v0 = fix_v0;
            sol = solve_opf(build_socp(pinned), t, opts);
            if (sol.status == SolveStatus::optimal && exact_gap_out)
                *exact_gap_out = check_exactness(pinned, build_socp(pinned).layout, sol.x).max_rel_gap;
        } else {
            sol = solve_opf(f->socp, t, opts);
            if (sol.status == SolveStatus::optimal && exact_gap_out)
                *exact_gap_out = check_exactness(f->model, f->socp.layout, sol.x).max_rel_gap;
        }
        if (sol.status != SolveStatus::optimal) {
            g_last_error = "opf solve: " + to_string(sol.status);
            return GPOPF_ERR_SOLVER;
        }
        if (x_out) std::memcpy(x_out, sol.x.data(), sizeof(double) * sol.x.size());
        if (objective_out) *objective_out = sol.objective;
        return GPOPF_OK;
    });
}

gpopf_status gpopf_dataset_build(const gpopf_feeder *f, const gpopf_scenarios *s, int with_sensitivities,
                                 int drop_degenerate, double kkt_tol, gpopf_dataset **out) {
    if (!f || !s || !out) return invalid("dataset_build: null argument");
    return guarded([&] {
        DatasetOptions opts;
        opts.with_sensitivities = with_sensitivities != 0;
        opts.drop_degenerate = drop_degenerate != 0;
        if (kkt_tol > 0) opts.kkt_tol = kkt_tol;
        *out = new gpopf_dataset{build_dataset(f->model, f->socp, s->set, opts)};
        return GPOPF_OK;
    });
}

gpopf_status gpopf_dataset_save(const gpopf_dataset *d, const char *jsonl_path) {
    if (!d || !jsonl_path) return invalid("dataset_save: null argument");
    return guarded([&] {
        save_records(d->records, jsonl_path);
        return GPOPF_OK;
    });
}

gpopf_status gpopf_dataset_load(const char *jsonl_path, gpopf_dataset **out) {
    if (!jsonl_path || !out) return invalid("dataset_load: null argument");
    return guarded([&] {
        *out = new gpopf_dataset{load_records(jsonl_path)};
        return GPOPF_OK;
    });
}

int gpopf_dataset_count(const gpopf_dataset *d) { return d ? static_cast<int>(d->records.size()) : -1; }
int gpopf_dataset_with_jacobian_count(const gpopf_dataset *d) {
    if (!d) return -1;
    int n = 0;
    for (const auto &r : d->records)
        if (r.has_jac()) ++n;
    return n;
}
void gpopf_dataset_free(gpopf_dataset *d) { delete d; }

gpopf_status gpopf_train(const gpopf_feeder *f, const gpopf_dataset *d, const char *target, const char *method,
                         int rf_dim, uint64_t rf_seed, gpopf_model **out) {
    if (!f || !d || !target || !method || !out) return invalid("train: null argument");
    return guarded([&] {
        const std::string mth = method;
        TrainingSet ts = extract_training(f->model, f->socp.layout, d->records, target, method_needs_grads(mth));
        MleOptions mopts;
        mopts.fit_epsilon = ts.has_grads();
        const MleReport mle = fit_hyperparams(ts, mopts);
        *out = new gpopf_model{train_method(ts, mth, mle.hyper, rf_dim > 0 ? rf_dim : 1600, rf_seed)};
        return GPOPF_OK;
    });
}

gpopf_status gpopf_model_save(const gpopf_model *m, const char *path) {
    if (!m || !path) return invalid("model_save: null argument");
    return guarded([&] {
        write_text_file(path, model_to_json(m->model));
        return GPOPF_OK;
    });
}

gpopf_status gpopf_model_load(const char *path, gpopf_model **out) {
    if (!path || !out) return invalid("model_load: null argument");
    return guarded([&] {
        *out = new gpopf_model{model_from_json(read_text_file(path))};
        return GPOPF_OK;
    });
}

gpopf_status gpopf_predict(const gpopf_model *m, const double *theta, int theta_len, double *mean,
                           double *std_dev) {
    if (!m || !theta) return invalid("predict: null argument");
    return guarded([&] {
        const Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(theta, theta_len);
        Prediction p = predict_model(m->model, t);
        if (mean) *mean = p.mean;
        if (std_dev) *std_dev = p.std_dev;
        return GPOPF_OK;
    });
}

void gpopf_model_free(gpopf_model *m) { delete m; }

gpopf_status gpopf_pf_solve(const gpopf_feeder *f, const double *p_net, const double *q_net, int len, double v0,
                            double *v_out, double *residual_out, int *iterations_out) {
    if (!f || !p_net || !q_net) return invalid("pf_solve: null argument");
    if (len != f->model.bus_count()) return invalid("pf_solve: injection length mismatch");
    return guarded([&] {
        const Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(p_net, len);
        const Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(q_net, len);
        PfState st = solve_pf(f->model, p, q, v0);
        if (v_out) std::memcpy(v_out, st.v.data(), sizeof(double) * st.v.size());
        if (residual_out) *residual_out = st.residual;
        if (iterations_out) *iterations_out = st.iterations;
        return GPOPF_OK;
    });
}

gpopf_status gpopf_pf_check(const gpopf_feeder *f, const gpopf_scenarios *s, const char *setpoints_csv,
                            double band, const char *report_csv) {
    if (!f || !s || !setpoints_csv || !report_csv) return invalid("pf_check: null argument");
    return guarded([&]() -> gpopf_status {
        // setpoints: t,bus,pg,qg with original bus ids
        std::istringstream in(read_text_file(setpoints_csv));
        std::string line;
        if (!std::getline(in, line)) throw Error::io("setpoints csv empty");
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line != "t,bus,pg,qg") throw Error::io("setpoints csv: expected header t,bus,pg,qg");
        std::map<int, std::map<int, std::pair<double, double>>> by_time;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string tok;
            std::getline(ls, tok, ',');
            const int t = std::stoi(tok);
            std::getline(ls, tok, ',');
            const int bus = std::stoi(tok);
            std::getline(ls, tok, ',');
            const double pg = std::stod(tok);
            std::getline(ls, tok, ',');
            const double qg = std::stod(tok);
            by_time[t][bus] = {pg, qg};
        }
        std::ostringstream out;
        out << "t,max_dev,violations,ell_violations,residual\n";
        for (int i = 0; i < s->set.count(); ++i) {
            const int t = s->set.times[i];
            auto it = by_time.find(t);
            if (it == by_time.end()) continue;
            const GridConditions &gc = s->set.instances[i];
            Eigen::VectorXd pn = -gc.p_load, qn = -gc.q_load;
            for (const auto &[bus, pq] : it->second) {
                const int k = f->model.internal_bus(bus);
                pn[k - 1] += pq.first;
                qn[k - 1] += pq.second;
            }
            PfState st = solve_pf(f->model, pn, qn, 1.0);
            LimitReport rep = check_limits(st, f->model, band);
            out << t << ',' << format_double(rep.worst_dev) << ',' << rep.voltage_violations << ','
                << rep.current_violations << ',' << format_double(st.residual) << '\n';
        }
        write_text_file(report_csv, out.str());
        return GPOPF_OK;
    });
}

gpopf_status gpopf_lopf_solve(const gpopf_feeder *f, const double *theta, int theta_len, double v0,
                              double *pg_out, double *qg_out, int ng_len) {
    if (!f || !theta || !pg_out || !qg_out) return invalid("lopf_solve: null argument");
    if (theta_len != f->model.theta_dim()) return invalid("lopf_solve: theta length mismatch");
    if (ng_len != f->model.inverter_count()) return invalid("lopf_solve: setpoint buffer length mismatch");
    return guarded([&]() -> gpopf_status {
        const Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(theta, theta_len);
        LopfOptions opts;
        if (v0 > 0) opts.v0 = v0;
        LopfResult res = solve_lopf(f->model, t, opts);
        if (res.status != SolveStatus::optimal) {
            g_last_error = "lopf solve: " + to_string(res.status);
            return GPOPF_ERR_SOLVER;
        }
        std::memcpy(pg_out, res.pg.data(), sizeof(double) * ng_len);
        std::memcpy(qg_out, res.qg.data(), sizeof(double) * ng_len);
        return GPOPF_OK;
    });
}

gpopf_status gpopf_pipeline_run(const char *config_json_path, int self_check) {
    if (!config_json_path) return invalid("pipeline_run: null argument");
    return guarded([&]() -> gpopf_status {
        PipelineConfig cfg = PipelineConfig::from_file(config_json_path);
        EvaluationReport rep = run_pipeline(cfg);
        if (self_check && !rep.self_check_ok) {
            std::string msg = "self-check failed:";
            for (const auto &n : rep.self_check_notes) msg += " " + n + ";";
            g_last_error = msg;
            return GPOPF_ERR_CHECK;
        }
        return GPOPF_OK;
    });
}

} // extern "C"
