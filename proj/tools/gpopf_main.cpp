// Command-line front end. Everything goes through the public C API in
// gpopf/gpopf.h; no core headers are included here.
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "gpopf/gpopf.h"

namespace {

int status_to_exit(gpopf_status st) {
    switch (st) {
        case GPOPF_OK: return 0;
        case GPOPF_ERR_IO:
        case GPOPF_ERR_INVALID: return 2;
        case GPOPF_ERR_SOLVER: return 3;
        case GPOPF_ERR_CHECK: return 4;
        default: return 1;
    }
}

int fail(gpopf_status st) {
    std::fprintf(stderr, "error: %s\n", gpopf_last_error());
    return status_to_exit(st);
}

struct FeederHandle {
    gpopf_feeder *f = nullptr;
    ~FeederHandle() { gpopf_feeder_free(f); }
};
struct ScenarioHandle {
    gpopf_scenarios *s = nullptr;
    ~ScenarioHandle() { gpopf_scenarios_free(s); }
};
struct DatasetHandle {
    gpopf_dataset *d = nullptr;
    ~DatasetHandle() { gpopf_dataset_free(d); }
};
struct ModelHandle {
    gpopf_model *m = nullptr;
    ~ModelHandle() { gpopf_model_free(m); }
};

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"distribution-grid OPF surrogate toolkit"};
    app.require_subcommand(1);

    // ---- opf solve ----
    auto *opf = app.add_subcommand("opf", "exact SOCP optimal power flow");
    auto *opf_solve = opf->add_subcommand("solve", "solve the OPF for every instance of a theta file");
    std::string feeder_path, theta_file, out_path;
    double fix_v0 = 0, kkt_tol = 0;
    opf_solve->add_option("--feeder", feeder_path, "feeder JSON file")->required();
    opf_solve->add_option("--theta-file", theta_file, "scenario CSV (t,bus,p_load,q_load,pg_cap)")->required();
    opf_solve->add_option("--fix-v0", fix_v0, "pin the squared substation voltage");
    opf_solve->add_option("--kkt-tol", kkt_tol, "KKT residual tolerance (default 1e-8)");
    opf_solve->add_option("--out", out_path, "output JSONL dataset (default stdout summary)");

    // ---- scenario gen ----
    auto *scen = app.add_subcommand("scenario", "synthetic load/solar scenario pools");
    auto *scen_gen = scen->add_subcommand("gen", "generate a daily scenario CSV");
    std::string scen_cfg, scen_out;
    std::uint64_t scen_seed = 1;
    scen_gen->add_option("--feeder", feeder_path, "feeder JSON file")->required();
    scen_gen->add_option("--config", scen_cfg, "generator config JSON")->required();
    scen_gen->add_option("--seed", scen_seed, "generator seed");
    scen_gen->add_option("--out", scen_out, "output CSV")->required();

    // ---- dataset build ----
    auto *dataset = app.add_subcommand("dataset", "labeled OPF datasets");
    auto *ds_build = dataset->add_subcommand("build", "solve scenarios into a JSONL dataset");
    std::string ds_out;
    bool with_sens = false, drop_degenerate = false;
    ds_build->add_option("--feeder", feeder_path)->required();
    ds_build->add_option("--scenarios", theta_file, "scenario CSV")->required();
    ds_build->add_flag("--with-sensitivities", with_sens, "attach minimizer Jacobians");
    ds_build->add_flag("--drop-degenerate", drop_degenerate, "drop samples failing strict complementarity");
    ds_build->add_option("--kkt-tol", kkt_tol);
    ds_build->add_option("--out", ds_out)->required();

    // ---- train ----
    auto *train_cmd = app.add_subcommand("train", "fit one surrogate model");
    std::string train_dataset, train_target, train_method = "gp", model_out;
    int rf_dim = 1600;
    std::uint64_t rf_seed = 7;
    train_cmd->add_option("--dataset", train_dataset, "JSONL dataset")->required();
    train_cmd->add_option("--target", train_target, "pg:<bus> | qg:<bus> | v:<bus>")->required();
    train_cmd->add_option("--method", train_method, "gp | si-gp | rf-gp | rf-si-gp");
    train_cmd->add_option("--rf-dim", rf_dim, "random-feature count");
    train_cmd->add_option("--rf-seed", rf_seed, "random-feature seed");
    train_cmd->add_option("--feeder", feeder_path)->required();
    train_cmd->add_option("--out", model_out, "model JSON")->required();

    // ---- predict ----
    auto *predict_cmd = app.add_subcommand("predict", "evaluate a model over a theta file");
    std::string model_path, pred_out;
    predict_cmd->add_option("--model", model_path)->required();
    predict_cmd->add_option("--feeder", feeder_path)->required();
    predict_cmd->add_option("--theta-file", theta_file)->required();
    predict_cmd->add_option("--out", pred_out, "CSV with columns t,mean,std")->required();

    // ---- pf check ----
    auto *pf = app.add_subcommand("pf", "exact power-flow checks");
    auto *pf_check = pf->add_subcommand("check", "run setpoints through the AC power flow");
    std::string setpoints_csv, report_csv;
    double band = 0.03;
    pf_check->add_option("--feeder", feeder_path)->required();
    pf_check->add_option("--theta-file", theta_file)->required();
    pf_check->add_option("--setpoints", setpoints_csv, "CSV t,bus,pg,qg")->required();
    pf_check->add_option("--band", band, "voltage deviation band (pu)");
    pf_check->add_option("--out", report_csv)->required();

    // ---- lopf solve ----
    auto *lopf_cmd = app.add_subcommand("lopf", "linearized OPF baseline");
    auto *lopf_solve_cmd = lopf_cmd->add_subcommand("solve", "solve the linearized OPF per instance");
    std::string lopf_out;
    lopf_solve_cmd->add_option("--feeder", feeder_path)->required();
    lopf_solve_cmd->add_option("--theta-file", theta_file)->required();
    lopf_solve_cmd->add_option("--out", lopf_out, "CSV t,bus,pg,qg")->required();

    // ---- pipeline run ----
    auto *pipe = app.add_subcommand("pipeline", "end-to-end experiment runs");
    auto *pipe_run = pipe->add_subcommand("run", "run a pipeline config");
    std::string pipe_cfg;
    bool self_check = false;
    pipe_run->add_option("--config", pipe_cfg)->required();
    pipe_run->add_flag("--self-check", self_check, "exit 4 when the run's consistency checks fail");

    CLI11_PARSE(app, argc, argv);

    if (*scen_gen) {
        FeederHandle f;
        if (auto st = gpopf_feeder_load(feeder_path.c_str(), &f.f)) return fail(st);
        ScenarioHandle s;
        if (auto st = gpopf_scenarios_generate(f.f, scen_cfg.c_str(), scen_seed, &s.s)) return fail(st);
        if (auto st = gpopf_scenarios_save_csv(f.f, s.s, scen_out.c_str())) return fail(st);
        std::printf("wrote %d instances to %s\n", gpopf_scenarios_count(s.s), scen_out.c_str());
        return 0;
    }

    if (*opf_solve) {
        FeederHandle f;
        if (auto st = gpopf_feeder_load(feeder_path.c_str(), &f.f)) return fail(st);
        ScenarioHandle s;
        if (auto st = gpopf_scenarios_load_csv(f.f, theta_file.c_str(), &s.s)) return fail(st);
        const int M = gpopf_feeder_theta_dim(f.f);
        const int nx = gpopf_feeder_x_dim(f.f);
        std::vector<double> theta(M), x(nx);
        if (!out_path.empty()) {
            // route through the dataset writer so the record schema matches
            DatasetHandle d;
            if (auto st = gpopf_dataset_build(f.f, s.s, 0, 0, kkt_tol, &d.d)) return fail(st);
            if (auto st = gpopf_dataset_save(d.d, out_path.c_str())) return fail(st);
            std::printf("wrote %d records to %s\n", gpopf_dataset_count(d.d), out_path.c_str());
            return 0;
        }
        for (int i = 0; i < gpopf_scenarios_count(s.s); ++i) {
            if (auto st = gpopf_scenarios_theta(f.f, s.s, i, theta.data(), M)) return fail(st);
            double obj = 0, gap = 0;
            if (auto st = gpopf_opf_solve(f.f, theta.data(), M, fix_v0, kkt_tol, x.data(), nx, &obj, &gap))
                return fail(st);
            std::printf("t=%d objective=%.8f exact_gap=%.2e\n", gpopf_scenarios_time(s.s, i), obj, gap);
        }
        return 0;
    }

    if (*ds_build) {
        FeederHandle f;
        if (auto st = gpopf_feeder_load(feeder_path.c_str(), &f.f)) return fail(st);
        ScenarioHandle s;
        if (auto st = gpopf_scenarios_load_csv(f.f, theta_file.c_str(), &s.s)) return fail(st);
        DatasetHandle d;
        if (auto st = gpopf_dataset_build(f.f, s.s, with_sens ? 1 : 0, drop_degenerate ? 1 : 0, kkt_tol, &d.d))
            return fail(st);
        if (auto st = gpopf_dataset_save(d.d, ds_out.c_str())) return fail(st);
        std::printf("wrote %d records (%d with jacobians) to %s\n", gpopf_dataset_count(d.d),
                    gpopf_dataset_with_jacobian_count(d.d), ds_out.c_str());
        return 0;
    }

    if (*train_cmd) {
        FeederHandle f;
        if (auto st = gpopf_feeder_load(feeder_path.c_str(), &f.f)) return fail(st);
        DatasetHandle d;
        if (auto st = gpopf_dataset_load(train_dataset.c_str(), &d.d)) return fail(st);
        ModelHandle m;
        if (auto st = gpopf_train(f.f, d.d, train_target.c_str(), train_method.c_str(), rf_dim, rf_seed, &m.m))
            return fail(st);
        if (auto st = gpopf_model_save(m.m, model_out.c_str())) return fail(st);
        std::printf("trained %s on %s -> %s\n", train_method.c_str(), train_target.c_str(), model_out.c_str());
        return 0;
    }

    if (*predict_cmd) {
        FeederHandle f;
        if (auto st = gpopf_feeder_load(feeder_path.c_str(), &f.f)) return fail(st);
        ScenarioHandle s;
        if (auto st = gpopf_scenarios_load_csv(f.f, theta_file.c_str(), &s.s)) return fail(st);
        ModelHandle m;
        if (auto st = gpopf_model_load(model_path.c_str(), &m.m)) return fail(st);
        const int M = gpopf_feeder_theta_dim(f.f);
        std::vector<double> theta(M);
        std::ofstream out(pred_out);
        if (!out) {
            std::fprintf(stderr, "error: cannot write %s\n", pred_out.c_str());
            return 2;
        }
        out << "t,mean,std\n";
        out.precision(17);
        for (int i = 0; i < gpopf_scenarios_count(s.s); ++i) {
            if (auto st = gpopf_scenarios_theta(f.f, s.s, i, theta.data(), M)) return fail(st);
            double mean = 0, sd = 0;
            if (auto st = gpopf_predict(m.m, theta.data(), M, &mean, &sd)) return fail(st);
            out << gpopf_scenarios_time(s.s, i) << ',' << mean << ',' << sd << '\n';
        }
        std::printf("wrote predictions for %d instances to %s\n", gpopf_scenarios_count(s.s), pred_out.c_str());
        return 0;
    }

    if (*pf_check) {
        FeederHandle f;
        if (auto st = gpopf_feeder_load(feeder_path.c_str(), &f.f)) return fail(st);
        ScenarioHandle s;
        if (auto st = gpopf_scenarios_load_csv(f.f, theta_file.c_str(), &s.s)) return fail(st);
        if (auto st = gpopf_pf_check(f.f, s.s, setpoints_csv.c_str(), band, report_csv.c_str())) return fail(st);
        std::printf("wrote %s\n", report_csv.c_str());
        return 0;
    }

    if (*lopf_solve_cmd) {
        FeederHandle f;
        if (auto st = gpopf_feeder_load(feeder_path.c_str(), &f.f)) return fail(st);
        ScenarioHandle s;
        if (auto st = gpopf_scenarios_load_csv(f.f, theta_file.c_str(), &s.s)) return fail(st);
        const int M = gpopf_feeder_theta_dim(f.f);
        const int ng = gpopf_feeder_inverter_count(f.f);
        std::vector<double> theta(M), pg(ng), qg(ng);
        std::ofstream out(lopf_out);
        if (!out) {
            std::fprintf(stderr, "error: cannot write %s\n", lopf_out.c_str());
            return 2;
        }
        out << "t,bus,pg,qg\n";
        out.precision(17);
        for (int i = 0; i < gpopf_scenarios_count(s.s); ++i) {
            if (auto st = gpopf_scenarios_theta(f.f, s.s, i, theta.data(), M)) return fail(st);
            if (auto st = gpopf_lopf_solve(f.f, theta.data(), M, 1.0, pg.data(), qg.data(), ng)) return fail(st);
            for (int j = 0; j < ng; ++j)
                out << gpopf_scenarios_time(s.s, i) << ',' << gpopf_feeder_inverter_bus(f.f, j) << ',' << pg[j]
                    << ',' << qg[j] << '\n';
        }
        std::printf("wrote setpoints to %s\n", lopf_out.c_str());
        return 0;
    }

    if (*pipe_run) {
        if (auto st = gpopf_pipeline_run(pipe_cfg.c_str(), self_check ? 1 : 0)) return fail(st);
        std::printf("pipeline complete\n");
        return 0;
    }

    return 0;
}
