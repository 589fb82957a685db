#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace gpopf {

/// One labeled OPF instance. Serialized as a JSON line:
/// {"theta": [...], "x": [...], "lambda": [...], "mu": [...], "nu": [...],
///  "objective": .., "exact_gap_max": .., "status": "optimal",
///  "strict_comp": bool, "jac_exists": bool, "jac": [row-major n_x x M]}.
/// The jac field is present only for records carrying sensitivities.
struct OpfRecord {
    Eigen::VectorXd theta;
    Eigen::VectorXd x;
    Eigen::VectorXd lambda;
    Eigen::VectorXd mu;
    Eigen::VectorXd nu;
    double objective = 0;
    double exact_gap_max = 0;
    std::string status = "optimal";
    bool strict_comp = true;
    bool jac_exists = false;
    std::optional<Eigen::MatrixXd> jac; // n_x x M

    bool has_jac() const { return jac.has_value(); }
};

std::string record_to_jsonl(const OpfRecord &r);
OpfRecord record_from_jsonl(const std::string &line);

void save_records(const std::vector<OpfRecord> &rs, const std::string &path);
std::vector<OpfRecord> load_records(const std::string &path);

std::uint64_t records_hash(const std::vector<OpfRecord> &rs);

} // namespace gpopf
