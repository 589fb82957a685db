#include "rf.hpp"

#include <cmath>
#include <json.hpp>

using nlohmann::json;

namespace gpopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

RfBasis draw_basis(int M, int D, double beta, std::uint64_t seed) {
    if (D < 1) throw Error::invalid("draw_basis: D must be positive");
    if (M < 1) throw Error::invalid("draw_basis: M must be positive");
    if (beta < 0) throw Error::invalid("draw_basis: beta must be nonnegative");
    RfBasis b;
    b.D = D;
    b.beta = beta;
    b.seed = seed;
    b.V.resize(M, D);
    b.phi.resize(D);
    const double sd = std::sqrt(beta);
    // one stream per feature so the draw is independent of loop blocking
    for (int d = 0; d < D; ++d) {
        Rng rng(mix_seed(seed, 0xF0F0, static_cast<std::uint64_t>(d)));
        for (int i = 0; i < M; ++i) b.V(i, d) = sd * rng.normal();
        b.phi[d] = rng.uniform(0.0, 2.0 * M_PI);
    }
    return b;
}

VectorXd features_z(const RfBasis &b, const VectorXd &theta) {
    if (theta.size() != b.dim()) throw Error::invalid("features_z: theta length mismatch");
    const double scale = std::sqrt(2.0 / b.D);
    return (scale * ((b.V.transpose() * theta + b.phi).array().cos())).matrix();
}

RfFeatureJac features_jac(const RfBasis &b, const VectorXd &theta) {
    if (theta.size() != b.dim()) throw Error::invalid("features_jac: theta length mismatch");
    RfFeatureJac out;
    const double scale = std::sqrt(2.0 / b.D);
    out.s = (-scale * ((b.V.transpose() * theta + b.phi).array().sin())).matrix();
    out.jac = out.s.asDiagonal() * b.V.transpose(); // row d = s_d v_d'
    return out;
}

namespace {

struct RfCaches {
    MatrixXd G;
    Eigen::LLT<MatrixXd> factor; // of alpha G + (gamma or 1) I
};

// gram and factor from training thetas only (labels enter t5 separately)
RfCaches build_caches(const std::vector<VectorXd> &thetas, const Hyperparams &hs, const RfBasis &b, RfMode mode) {
    const int T = static_cast<int>(thetas.size());
    const int D = b.D;
    MatrixXd Z(T, D), S(T, D);
    for (int t = 0; t < T; ++t) {
        Z.row(t) = features_z(b, thetas[t]);
        if (mode == RfMode::rf_si_gp) {
            const double scale = std::sqrt(2.0 / D);
            S.row(t) = (-scale * ((b.V.transpose() * thetas[t] + b.phi).array().sin())).matrix();
        }
    }
    RfCaches c;
    MatrixXd F;
    if (mode == RfMode::rf_gp) {
        c.G = Z.transpose() * Z;
        F = hs.alpha * c.G;
        F.diagonal().array() += hs.gamma;
    } else {
        c.G = (Z.transpose() * Z) / hs.gamma +
              (S.transpose() * S).cwiseProduct(b.V.transpose() * b.V) / hs.epsilon;
        F = hs.alpha * c.G;
        F.diagonal().array() += 1.0;
    }
    c.factor = Eigen::LLT<MatrixXd>(F);
    if (c.factor.info() != Eigen::Success) {
        // jitter escalation mirrors the exact-GP policy
        const double unit = F.trace() / D;
        double jitter = 1e-10;
        while (jitter <= 1e-6) {
            F.diagonal().array() += jitter * unit;
            c.factor = Eigen::LLT<MatrixXd>(F);
            if (c.factor.info() == Eigen::Success) return c;
            jitter *= 10;
        }
        throw Error::solver("rf gram factorization failed after jitter escalation");
    }
    return c;
}

} // namespace

RfModel train_rf(const TrainingSet &raw, const Hyperparams &h, const RfBasis &b, RfMode mode) {
    raw.validate();
    if (raw.dim() != b.dim()) throw Error::invalid("train_rf: basis dimension mismatch");
    if (mode == RfMode::rf_si_gp && !raw.has_grads())
        throw Error::invalid("train_rf: rf-si-gp requires gradient labels");

    RfModel m;
    m.target = raw.target;
    m.mode = mode;
    m.hyper = h;
    m.basis = b;
    m.thetas = raw.thetas;
    m.train_hash = training_set_hash(raw);

    const int T = raw.size();
    const int M = raw.dim();
    m.label_mean = raw.y.sum() / T;
    double var = (raw.y.array() - m.label_mean).square().sum() / std::max(1, T - 1);
    m.label_scale = std::sqrt(std::max(var, 1e-24));
    const VectorXd y = (raw.y.array() - m.label_mean) / m.label_scale;

    Hyperparams hs = h;
    const double s2 = m.label_scale * m.label_scale;
    hs.alpha /= s2;
    hs.gamma /= s2;
    hs.epsilon /= s2;

    RfCaches c = build_caches(raw.thetas, hs, b, mode);

    VectorXd rhs = VectorXd::Zero(b.D);
    if (mode == RfMode::rf_gp) {
        for (int t = 0; t < T; ++t) rhs += features_z(b, raw.thetas[t]) * y[t];
    } else {
        for (int t = 0; t < T; ++t) {
            const VectorXd z = features_z(b, raw.thetas[t]);
            rhs += z * y[t] / hs.gamma;
            // (grad-feature block)' ydot = s o (V' ydot)
            const double scale = std::sqrt(2.0 / b.D);
            const VectorXd s = (-scale * ((b.V.transpose() * raw.thetas[t] + b.phi).array().sin())).matrix();
            const VectorXd g = raw.grads->row(t).transpose() / m.label_scale;
            rhs += s.cwiseProduct(b.V.transpose() * g) / hs.epsilon;
        }
    }
    m.t5 = c.factor.solve(rhs);
    m.t6 = c.factor.solve(c.G);
    return m;
}

Prediction predict_rf(const RfModel &m, const VectorXd &theta) {
    const VectorXd z = features_z(m.basis, theta);
    Hyperparams hs = m.hyper;
    const double s2 = m.label_scale * m.label_scale;
    hs.alpha /= s2;
    Prediction p;
    const double mean_std = hs.alpha * z.dot(m.t5);
    p.mean = m.label_mean + m.label_scale * mean_std;
    const double var_std = hs.alpha * z.squaredNorm() - hs.alpha * hs.alpha * z.dot(m.t6 * z);
    p.raw_variance = var_std * s2;
    p.variance = std::max(0.0, p.raw_variance);
    p.std_dev = std::sqrt(p.variance);
    return p;
}

std::string rf_model_to_json(const RfModel &m) {
    json j;
    j["format"] = "gpopf-model-v1";
    j["target"] = m.target;
    j["mode"] = m.mode == RfMode::rf_gp ? "rf-gp" : "rf-si-gp";
    j["hyperparams"] = {{"alpha", m.hyper.alpha},
                        {"beta", m.hyper.beta},
                        {"gamma", m.hyper.gamma},
                        {"epsilon", m.hyper.epsilon}};
    j["label"] = {{"mean", m.label_mean}, {"scale", m.label_scale}};
    json thetas = json::array();
    for (const auto &t : m.thetas) {
        json row = json::array();
        for (int i = 0; i < t.size(); ++i) row.push_back(t[i]);
        thetas.push_back(row);
    }
    j["thetas"] = thetas;
    json w = json::array();
    for (int i = 0; i < m.t5.size(); ++i) w.push_back(m.t5[i]);
    j["weights"] = w;
    j["train_hash"] = hash_hex(m.train_hash);
    j["rf"] = {{"seed", m.basis.seed}, {"D", m.basis.D}};
    return j.dump();
}

RfModel rf_model_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception &e) {
        throw Error::io(std::string("model parse failure: ") + e.what());
    }
    RfModel m;
    m.target = j.value("target", "");
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "rf-gp")
        m.mode = RfMode::rf_gp;
    else if (mode == "rf-si-gp")
        m.mode = RfMode::rf_si_gp;
    else
        throw Error::io("model mode '" + mode + "' is not an rf mode");
    const auto &h = j.at("hyperparams");
    m.hyper.alpha = h.at("alpha").get<double>();
    m.hyper.beta = h.at("beta").get<double>();
    m.hyper.gamma = h.at("gamma").get<double>();
    m.hyper.epsilon = h.value("epsilon", m.hyper.gamma);
    m.label_mean = j.at("label").at("mean").get<double>();
    m.label_scale = j.at("label").at("scale").get<double>();
    for (const auto &row : j.at("thetas")) {
        VectorXd t(row.size());
        for (size_t i = 0; i < row.size(); ++i) t[i] = row[i].get<double>();
        m.thetas.push_back(t);
    }
    const auto &w = j.at("weights");
    m.t5.resize(w.size());
    for (size_t i = 0; i < w.size(); ++i) m.t5[i] = w[i].get<double>();
    m.train_hash = std::stoull(j.at("train_hash").get<std::string>(), nullptr, 16);
    const auto &rf = j.at("rf");
    const int D = rf.at("D").get<int>();
    const std::uint64_t seed = rf.at("seed").get<std::uint64_t>();
    if (m.thetas.empty()) throw Error::io("rf model without training thetas");
    m.basis = draw_basis(static_cast<int>(m.thetas[0].size()), D, m.hyper.beta, seed);
    if (m.t5.size() != D) throw Error::io("rf model weights length mismatch");

    Hyperparams hs = m.hyper;
    const double s2 = m.label_scale * m.label_scale;
    hs.alpha /= s2;
    hs.gamma /= s2;
    hs.epsilon /= s2;
    RfCaches c = build_caches(m.thetas, hs, m.basis, m.mode);
    m.t6 = c.factor.solve(c.G);
    return m;
}

} // namespace gpopf
