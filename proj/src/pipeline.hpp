#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acpf.hpp"
#include "feeder.hpp"
#include "gp.hpp"
#include "lopf.hpp"
#include "metrics.hpp"
#include "opf_record.hpp"
#include "rf.hpp"
#include "scenario.hpp"
#include "sensitivity.hpp"
#include "socp_opf.hpp"

namespace gpopf {

struct DatasetOptions {
    bool with_sensitivities = true;
    bool drop_degenerate = false; // default keeps degenerate samples without gradients
    double kkt_tol = 1e-8;
    double exact_tol = 1e-6;
    int threads = 0;
};

/// Solves every scenario instance and attaches sensitivities per policy.
/// Inexact or failed instances are recorded with their status; degenerate
/// ones keep their labels and lose the gradients unless dropped.
std::vector<OpfRecord> build_dataset(const FeederModel &f, const ParametricSocp &ps, const ScenarioSet &scen,
                                     const DatasetOptions &opts = {});

/// Target descriptors use original bus ids: pg:<bus>, qg:<bus>, v:<bus>.
int target_x_index(const FeederModel &f, const XLayout &layout, const std::string &target);

/// Expands "pg:*" / "qg:*" / "v:*" over inverter buses (all buses for v).
std::vector<std::string> expand_targets(const FeederModel &f, const std::vector<std::string> &targets);

/// Pulls one scalar target out of a record list. need_grads keeps only
/// records whose Jacobian exists; rows are in record order.
TrainingSet extract_training(const FeederModel &f, const XLayout &layout, const std::vector<OpfRecord> &records,
                             const std::string &target, bool need_grads);

struct TrainedModel {
    std::string method; // gp | si-gp | rf-gp | rf-si-gp
    std::string target;
    std::optional<GpModel> gp;
    std::optional<RfModel> rf;
    double train_seconds = 0;
};

bool method_needs_grads(const std::string &method);

TrainedModel train_method(const TrainingSet &ts, const std::string &method, const Hyperparams &hyper,
                          int rf_dim, std::uint64_t rf_seed);

Prediction predict_model(const TrainedModel &m, const Eigen::VectorXd &theta);

std::string model_to_json(const TrainedModel &m);
TrainedModel model_from_json(const std::string &text);

struct PipelineConfig {
    std::string feeder_path;
    std::string scenario_csv;         // either a csv pool...
    std::string scenario_config_path; // ...or a generator config + seed
    std::uint64_t scenario_seed = 1;
    int train_stride_min = 30;
    int test_stride_min = 0; // 0: every non-training instance
    std::vector<std::string> methods = {"gp", "si-gp"};
    std::vector<std::string> targets; // empty: pg:* and qg:*
    int rf_dim = 1600;
    std::uint64_t rf_seed = 7;
    bool with_sensitivities = true;
    bool drop_degenerate = false;
    double kkt_tol = 1e-8;
    int eps_subset = 0; // 0: full augmented likelihood for the epsilon stage
    double pf_band = 0.03;
    bool pf_check = true;
    bool dsweep = false;
    int dsweep_from = 600, dsweep_to = 2000, dsweep_step = 200;
    bool cluster_experiment = false;
    int cluster_k = 20, cluster_train = 15, cluster_test_per = 8;
    std::uint64_t cluster_seed = 11;
    std::string out_dir = "out";

    static PipelineConfig from_json_text(const std::string &text);
    static PipelineConfig from_file(const std::string &path);
};

struct MethodStats {
    std::string target;
    std::string method;
    double mean_rpe = 0;
    double mean_std = 0;
    double predict_seconds_per_instance = 0;
    int variance_clamps = 0;
    int instances = 0;
};

struct EvaluationReport {
    std::vector<MethodStats> stats;
    double dataset_seconds = 0;
    double opf_seconds_per_instance = 0;
    int train_count = 0;
    int test_count = 0;
    int skipped_inexact = 0;
    int degenerate = 0;
    std::uint64_t dataset_hash = 0;
    bool self_check_ok = true;
    std::vector<std::string> self_check_notes;

    const MethodStats *find(const std::string &target, const std::string &method) const;
};

/// End-to-end run: dataset (shared across targets), per-target training for
/// every method, held-out evaluation, optional PF feasibility, D-sweep and
/// cluster-holdout stages. Writes rpe.csv, ecdf.csv, timing.csv,
/// pf_report.csv, dsweep.csv, cluster.csv under out_dir.
EvaluationReport run_pipeline(const PipelineConfig &cfg);

} // namespace gpopf
