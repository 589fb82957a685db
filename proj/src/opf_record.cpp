#include "opf_record.hpp"

#include <json.hpp>
#include <sstream>

using nlohmann::json;

namespace gpopf {

namespace {

json vec_to_json(const Eigen::VectorXd &v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vec_from_json(const json &a) {
    Eigen::VectorXd v(a.size());
    for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
    return v;
}

} // namespace

std::string record_to_jsonl(const OpfRecord &r) {
    json j;
    j["theta"] = vec_to_json(r.theta);
    j["x"] = vec_to_json(r.x);
    j["lambda"] = vec_to_json(r.lambda);
    j["mu"] = vec_to_json(r.mu);
    j["nu"] = vec_to_json(r.nu);
    j["objective"] = r.objective;
    j["exact_gap_max"] = r.exact_gap_max;
    j["status"] = r.status;
    j["strict_comp"] = r.strict_comp;
    j["jac_exists"] = r.jac_exists;
    if (r.jac) {
        json a = json::array();
        for (int i = 0; i < r.jac->rows(); ++i)
            for (int c = 0; c < r.jac->cols(); ++c) a.push_back((*r.jac)(i, c));
        j["jac"] = a;
    }
    return j.dump();
}

OpfRecord record_from_jsonl(const std::string &line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const std::exception &e) {
        throw Error::io(std::string("record parse failure: ") + e.what());
    }
    OpfRecord r;
    r.theta = vec_from_json(j.at("theta"));
    r.x = vec_from_json(j.at("x"));
    r.lambda = vec_from_json(j.at("lambda"));
    r.mu = vec_from_json(j.at("mu"));
    r.nu = vec_from_json(j.at("nu"));
    r.objective = j.at("objective").get<double>();
    r.exact_gap_max = j.at("exact_gap_max").get<double>();
    r.status = j.at("status").get<std::string>();
    r.strict_comp = j.value("strict_comp", true);
    r.jac_exists = j.value("jac_exists", false);
    if (j.contains("jac")) {
        const auto &a = j.at("jac");
        const int nx = static_cast<int>(r.x.size());
        const int M = static_cast<int>(r.theta.size());
        if (static_cast<int>(a.size()) != nx * M) throw Error::io("record jac size mismatch");
        Eigen::MatrixXd jac(nx, M);
        for (int i = 0; i < nx; ++i)
            for (int c = 0; c < M; ++c) jac(i, c) = a[i * M + c].get<double>();
        r.jac = jac;
    }
    return r;
}

void save_records(const std::vector<OpfRecord> &rs, const std::string &path) {
    std::ostringstream out;
    for (const auto &r : rs) out << record_to_jsonl(r) << '\n';
    write_text_file(path, out.str());
}

std::vector<OpfRecord> load_records(const std::string &path) {
    std::istringstream in(read_text_file(path));
    std::vector<OpfRecord> rs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rs.push_back(record_from_jsonl(line));
    }
    if (rs.empty()) throw Error::io("dataset file has no records: " + path);
    return rs;
}

std::uint64_t records_hash(const std::vector<OpfRecord> &rs) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto &r : rs) {
        h = fnv1a(r.theta.data(), sizeof(double) * r.theta.size(), h);
        h = fnv1a(r.x.data(), sizeof(double) * r.x.size(), h);
        if (r.jac) h = fnv1a(r.jac->data(), sizeof(double) * r.jac->size(), h);
    }
    return h;
}

} // namespace gpopf
