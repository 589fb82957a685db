#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "common.hpp"
#include "pipeline.hpp"

using namespace gpopf;
using Eigen::VectorXd;

namespace {

const std::string kData = GPOPF_DATA_DIR;

FeederModel fixture13() { return load_feeder(kData + "/feeder13.json"); }

ScenarioSet short_day(const FeederModel &f, int count = 60, int step = 10, std::uint64_t seed = 3) {
    auto cfg = ScenarioConfig::from_json_text(read_text_file(kData + "/scenario13.json"));
    cfg.count = count;
    cfg.step_min = step;
    return gen_scenarios(f, cfg, seed);
}

} // namespace

TEST_CASE("dataset build labels every instance and keeps degenerates without gradients") {
    FeederModel f = fixture13();
    ParametricSocp ps = build_socp(f);
    ScenarioSet scen = short_day(f, 40, 15);
    DatasetOptions opts;
    auto records = build_dataset(f, ps, scen, opts);
    REQUIRE(records.size() == 40);
    int with_jac = 0, degenerate = 0;
    for (const auto &r : records) {
        CHECK(r.status == "optimal");
        CHECK(r.exact_gap_max <= 1e-6);
        if (r.has_jac()) {
            ++with_jac;
            CHECK(r.jac->rows() == ps.layout.dim());
            CHECK(r.jac->cols() == ps.M);
        }
        if (!r.strict_comp) {
            ++degenerate;
            CHECK_FALSE(r.has_jac()); // kept, but without gradients
        }
    }
    CHECK(with_jac > 20);

    // thread-count independence
    DatasetOptions one;
    one.threads = 1;
    auto serial = build_dataset(f, ps, scen, one);
    REQUIRE(serial.size() == records.size());
    for (size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].x == records[i].x);
        CHECK(serial[i].has_jac() == records[i].has_jac());
        if (serial[i].has_jac()) CHECK(*serial[i].jac == *records[i].jac);
    }
}

TEST_CASE("records round-trip through jsonl") {
    FeederModel f = fixture13();
    ParametricSocp ps = build_socp(f);
    ScenarioSet scen = short_day(f, 6, 100);
    auto records = build_dataset(f, ps, scen, {});
    const std::string path = std::filesystem::temp_directory_path() / "gpopf_records_test.jsonl";
    save_records(records, path);
    auto back = load_records(path);
    REQUIRE(back.size() == records.size());
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].theta == records[i].theta);
        CHECK(back[i].x == records[i].x);
        CHECK(back[i].nu == records[i].nu);
        CHECK(back[i].objective == records[i].objective);
        CHECK(back[i].has_jac() == records[i].has_jac());
        if (back[i].has_jac()) CHECK(*back[i].jac == *records[i].jac);
    }
    CHECK(records_hash(back) == records_hash(records));
    std::filesystem::remove(path);
}

TEST_CASE("target descriptors address the minimizer") {
    FeederModel f = fixture13();
    ParametricSocp ps = build_socp(f);
    const int pg_bus = f.original_id(f.inverter_bus[0]);
    CHECK(target_x_index(f, ps.layout, "pg:" + std::to_string(pg_bus)) == ps.layout.pg(0));
    CHECK(target_x_index(f, ps.layout, "qg:" + std::to_string(pg_bus)) == ps.layout.qg(0));
    CHECK(target_x_index(f, ps.layout, "v:" + std::to_string(f.original_id(4))) == ps.layout.v(4));
    CHECK_THROWS_AS(target_x_index(f, ps.layout, "pg:2"), Error); // no inverter at bus 2
    CHECK_THROWS_AS(target_x_index(f, ps.layout, "frobnicate:1"), Error);

    auto expanded = expand_targets(f, {"pg:*"});
    CHECK(expanded.size() == 3);
    auto defaults = expand_targets(f, {});
    CHECK(defaults.size() == 6);
}

TEST_CASE("interpolating split gives near-zero rpe") {
    // test points inside the training pool and tiny noise: the gp must
    // essentially reproduce the labels
    FeederModel f = fixture13();
    ParametricSocp ps = build_socp(f);
    ScenarioSet scen = short_day(f, 30, 20, 5);
    auto records = build_dataset(f, ps, scen, {});
    const std::string target = "qg:" + std::to_string(f.original_id(f.inverter_bus[1]));
    TrainingSet ts = extract_training(f, ps.layout, records, target, false);
    MleOptions mopts;
    mopts.fit_epsilon = false;
    auto mle = fit_hyperparams(ts, mopts);
    Hyperparams h = mle.hyper;
    h.gamma = 1e-10 * h.alpha; // tiny-noise regime: the posterior interpolates
    TrainedModel m = train_method(ts, "gp", h, 0, 0);
    double worst = 0;
    for (int i = 0; i < ts.size(); ++i)
        worst = std::max(worst, std::abs(predict_model(m, ts.thetas[i]).mean - ts.y[i]));
    CHECK(worst < 1e-4 * (1.0 + ts.y.cwiseAbs().maxCoeff()));
}

TEST_CASE("full pipeline writes the report csvs deterministically") {
    namespace fs = std::filesystem;
    const std::string out1 = fs::temp_directory_path() / "gpopf_pipe1";
    const std::string out2 = fs::temp_directory_path() / "gpopf_pipe2";

    PipelineConfig cfg;
    cfg.feeder_path = kData + "/feeder13.json";
    cfg.scenario_config_path = kData + "/scenario13.json";
    cfg.scenario_seed = 2;
    cfg.train_stride_min = 60;
    cfg.test_stride_min = 12;
    cfg.methods = {"gp", "si-gp", "rf-si-gp", "lopf"};
    cfg.targets = {"qg:*"};
    cfg.rf_dim = 200;
    cfg.eps_subset = 10;
    cfg.cluster_experiment = true;
    cfg.cluster_k = 6;
    cfg.cluster_train = 4;
    cfg.cluster_test_per = 4;
    cfg.out_dir = out1;

    // shorten the generated day through a temp scenario config
    auto scfg = ScenarioConfig::from_json_text(read_text_file(kData + "/scenario13.json"));
    scfg.count = 130;
    scfg.step_min = 6;
    const std::string short_cfg = fs::temp_directory_path() / "gpopf_short_scenario.json";
    write_text_file(short_cfg, scfg.to_json_text());
    cfg.scenario_config_path = short_cfg;

    EvaluationReport rep = run_pipeline(cfg);
    CHECK(rep.train_count > 10);
    CHECK(rep.test_count > 20);
    CHECK(rep.skipped_inexact == 0);
    REQUIRE(rep.find("qg:" + std::to_string(load_feeder(cfg.feeder_path).original_id(
                                load_feeder(cfg.feeder_path).inverter_bus[0])),
                     "gp") != nullptr);
    for (const auto &s : rep.stats) {
        CHECK(std::isfinite(s.mean_rpe));
        CHECK(s.mean_rpe >= 0);
    }
    for (const char *name : {"rpe.csv", "ecdf.csv", "timing.csv", "pf_report.csv", "dsweep.csv", "cluster.csv"})
        CHECK(fs::exists(fs::path(out1) / name));

    // reproducibility: identical bytes for the data csvs (timing excluded,
    // wall-clock is not deterministic)
    cfg.out_dir = out2;
    run_pipeline(cfg);
    for (const char *name : {"rpe.csv", "ecdf.csv", "pf_report.csv", "dsweep.csv", "cluster.csv"}) {
        CHECK(read_text_file(fs::path(out1) / name) == read_text_file(fs::path(out2) / name));
    }

    // ecdf fractions are monotone and end at 1 per (target, method)
    {
        std::istringstream in(read_text_file(fs::path(out1) / "ecdf.csv"));
        std::string line;
        std::getline(in, line);
        std::map<std::string, double> last;
        while (std::getline(in, line)) {
            const auto p1 = line.find(','), p2 = line.find(',', p1 + 1);
            const auto p3 = line.find(',', p2 + 1);
            const std::string key = line.substr(0, p2);
            const double frac = std::stod(line.substr(p3 + 1));
            auto it = last.find(key);
            if (it != last.end()) CHECK(frac > it->second);
            last[key] = frac;
        }
        for (const auto &[k, v] : last) CHECK(v == doctest::Approx(1.0));
    }

    fs::remove_all(out1);
    fs::remove_all(out2);
    fs::remove(short_cfg);
}

TEST_CASE("pipeline config parsing and validation") {
    CHECK_THROWS_AS(PipelineConfig::from_json_text("{"), Error);
    CHECK_THROWS_AS(PipelineConfig::from_json_text("{}"), Error);
    auto cfg = PipelineConfig::from_json_text(R"({
      "feeder": "f.json",
      "scenarios": {"config": "s.json", "seed": 5},
      "split": {"train_stride_min": 40},
      "methods": ["gp"],
      "rf": {"D": 400, "seed": 9},
      "out_dir": "runs"
    })");
    CHECK(cfg.feeder_path == "f.json");
    CHECK(cfg.scenario_seed == 5);
    CHECK(cfg.train_stride_min == 40);
    CHECK(cfg.rf_dim == 400);
    CHECK(cfg.out_dir == "runs");
}
