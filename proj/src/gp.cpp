#include "gp.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

using nlohmann::json;

namespace gpopf {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

void TrainingSet::validate() const {
    if (thetas.empty()) throw Error::invalid("training set is empty");
    if (y.size() != size()) throw Error::invalid("training set: label count mismatch");
    const int m = dim();
    for (const auto &t : thetas)
        if (t.size() != m) throw Error::invalid("training set: inconsistent theta lengths");
    if (grads && (grads->rows() != size() || grads->cols() != m))
        throw Error::invalid("training set: gradient block must be T x M");
}

double kernel(const VectorXd &ti, const VectorXd &tj, const Hyperparams &h) {
    if (ti.size() != tj.size()) throw Error::invalid("kernel: length mismatch");
    return h.alpha * std::exp(-0.5 * h.beta * (ti - tj).squaredNorm());
}

VectorXd kernel_grad(const VectorXd &ti, const VectorXd &tj, const Hyperparams &h) {
    return h.beta * kernel(ti, tj, h) * (ti - tj);
}

MatrixXd kernel_hess(const VectorXd &ti, const VectorXd &tj, const Hyperparams &h) {
    const VectorXd d = ti - tj;
    const double k = kernel(ti, tj, h);
    MatrixXd out = -h.beta * h.beta * k * (d * d.transpose());
    out.diagonal().array() += h.beta * k;
    return out;
}

MatrixXd build_cov(const TrainingSet &ts, const Hyperparams &h, GpMode mode) {
    ts.validate();
    const int T = ts.size();
    const int M = ts.dim();
    if (mode == GpMode::plain) {
        MatrixXd K(T, T);
        for (int i = 0; i < T; ++i) {
            for (int j = i; j < T; ++j) K(i, j) = K(j, i) = kernel(ts.thetas[i], ts.thetas[j], h);
            K(i, i) += h.gamma;
        }
        return K;
    }
    const int Tb = T * (M + 1);
    MatrixXd K = MatrixXd::Zero(Tb, Tb);
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) {
            const double k = kernel(ts.thetas[i], ts.thetas[j], h);
            K(i, j) = k + (i == j ? h.gamma : 0.0);
            // E[y(ti) grad(tj)'] = beta k (ti - tj)'
            const VectorXd d = ts.thetas[i] - ts.thetas[j];
            K.block(i, T + j * M, 1, M) = (h.beta * k * d).transpose();
            if (j <= i) {
                MatrixXd blk = -h.beta * h.beta * k * (d * d.transpose());
                blk.diagonal().array() += h.beta * k;
                if (i == j) blk.diagonal().array() += h.epsilon;
                K.block(T + i * M, T + j * M, M, M) = blk.transpose();
                K.block(T + j * M, T + i * M, M, M) = blk;
            }
        }
    // mirror the y-gradient strip
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j)
            K.block(T + j * M, i, M, 1) = K.block(i, T + j * M, 1, M).transpose();
    return K;
}

namespace {

struct Standardized {
    TrainingSet set;  // centered/scaled copy
    double mean = 0, scale = 1;
};

Standardized standardize(const TrainingSet &ts) {
    Standardized s;
    s.set = ts;
    const int T = ts.size();
    if (T < 2) return s; // single-sample sets train against the zero prior
    s.mean = ts.y.sum() / T;
    const double var = (ts.y.array() - s.mean).square().sum() / (T - 1);
    s.scale = var > 1e-20 ? std::sqrt(var) : 1.0;
    s.set.y = (ts.y.array() - s.mean) / s.scale;
    if (ts.grads) s.set.grads = *ts.grads / s.scale; // scaled, not centered
    return s;
}

Hyperparams to_std_units(const Hyperparams &h, double scale) {
    Hyperparams o = h;
    const double s2 = scale * scale;
    o.alpha /= s2;
    o.gamma /= s2;
    o.epsilon /= s2;
    return o;
}

Hyperparams to_raw_units(const Hyperparams &h, double scale) {
    Hyperparams o = h;
    const double s2 = scale * scale;
    o.alpha *= s2;
    o.gamma *= s2;
    o.epsilon *= s2;
    return o;
}

// Cholesky with the escalation jitter policy.
Eigen::LLT<MatrixXd> factor_with_jitter(MatrixXd K) {
    const double unit = K.trace() / K.rows();
    double jitter = 0;
    for (int attempt = 0; attempt <= 5; ++attempt) {
        Eigen::LLT<MatrixXd> llt(K);
        if (llt.info() == Eigen::Success) return llt;
        const double next = (jitter == 0 ? 1e-10 : jitter * 10);
        if (next > 1e-6) break;
        K.diagonal().array() += (next - jitter) * unit;
        jitter = next;
    }
    throw Error::solver("covariance factorization failed after jitter escalation");
}

double log_marginal_core(const MatrixXd &K, const VectorXd &y) {
    Eigen::LLT<MatrixXd> llt = factor_with_jitter(K);
    const VectorXd a = llt.solve(y);
    double logdet = 0;
    for (int i = 0; i < K.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * y.dot(a) - 0.5 * logdet - 0.5 * K.rows() * std::log(2.0 * M_PI);
}

// Compact BFGS with Armijo backtracking, maximizing f via minimizing -f.
struct BfgsResult {
    VectorXd x;
    double f = 0;
    bool converged = false;
    int evals = 0;
};

template <typename F>
BfgsResult bfgs_minimize(const F &fn, VectorXd x0, int max_iter) {
    const int n = static_cast<int>(x0.size());
    BfgsResult res;
    MatrixXd H = MatrixXd::Identity(n, n);
    VectorXd g(n), x = x0;
    double f = fn(x, &g);
    ++res.evals;
    for (int it = 0; it < max_iter; ++it) {
        if (!std::isfinite(f)) break;
        if (g.lpNorm<Eigen::Infinity>() < 1e-7 * std::max(1.0, std::abs(f))) {
            res.converged = true;
            break;
        }
        VectorXd d = -(H * g);
        if (d.dot(g) > 0) {
            H.setIdentity();
            d = -g;
        }
        // log-space parameters: never move more than ~one decade per step
        const double dmax = d.lpNorm<Eigen::Infinity>();
        if (dmax > 2.0) d *= 2.0 / dmax;
        double t = 1.0;
        const double slope = g.dot(d);
        double fn_new = 0;
        VectorXd g_new(n), x_new;
        bool ok = false;
        for (int bt = 0; bt < 30; ++bt) {
            x_new = x + t * d;
            fn_new = fn(x_new, &g_new);
            ++res.evals;
            if (std::isfinite(fn_new) && fn_new <= f + 1e-4 * t * slope) {
                ok = true;
                break;
            }
            t *= 0.5;
        }
        if (!ok) break;
        const VectorXd s = x_new - x;
        const VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12) {
            const MatrixXd I = MatrixXd::Identity(n, n);
            H = (I - s * yv.transpose() / sy) * H * (I - yv * s.transpose() / sy) + s * s.transpose() / sy;
        }
        x = x_new;
        f = fn_new;
        g = g_new;
    }
    res.x = x;
    res.f = f;
    return res;
}

MatrixXd pairwise_sqdist(const std::vector<VectorXd> &ts) {
    const int T = static_cast<int>(ts.size());
    MatrixXd D(T, T);
    for (int i = 0; i < T; ++i)
        for (int j = i; j < T; ++j) D(i, j) = D(j, i) = (ts[i] - ts[j]).squaredNorm();
    return D;
}

} // namespace

double plain_log_marginal(const TrainingSet &ts, const Hyperparams &h, Vector3d *grad_log) {
    ts.validate();
    const int T = ts.size();
    const MatrixXd D2 = pairwise_sqdist(ts.thetas);
    const MatrixXd E = (-0.5 * h.beta * D2).array().exp().matrix();
    MatrixXd K = h.alpha * E;
    K.diagonal().array() += h.gamma;
    Eigen::LLT<MatrixXd> llt = factor_with_jitter(K);
    const VectorXd a = llt.solve(ts.y);
    double logdet = 0;
    for (int i = 0; i < T; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    const double ll = -0.5 * ts.y.dot(a) - 0.5 * logdet - 0.5 * T * std::log(2.0 * M_PI);
    if (grad_log) {
        const MatrixXd Kinv = llt.solve(MatrixXd::Identity(T, T));
        const MatrixXd A = a * a.transpose() - Kinv;
        const MatrixXd dxa = h.alpha * E;                                       // dK/dlog alpha
        const MatrixXd dxb = (-0.5 * h.beta) * (h.alpha * E.cwiseProduct(D2));  // dK/dlog beta
        (*grad_log)[0] = 0.5 * A.cwiseProduct(dxa).sum();
        (*grad_log)[1] = 0.5 * A.cwiseProduct(dxb).sum();
        (*grad_log)[2] = 0.5 * h.gamma * A.trace();
    }
    return ll;
}

MleReport fit_hyperparams(const TrainingSet &raw, const MleOptions &opts) {
    raw.validate();
    Standardized s = standardize(raw);
    const TrainingSet &ts = s.set;
    const int T = ts.size();

    // median pairwise squared distance for length-scale initialization
    const MatrixXd D2 = pairwise_sqdist(ts.thetas);
    std::vector<double> off;
    for (int i = 0; i < T; ++i)
        for (int j = i + 1; j < T; ++j) off.push_back(D2(i, j));
    double med = 1.0;
    if (!off.empty()) {
        std::nth_element(off.begin(), off.begin() + off.size() / 2, off.end());
        med = std::max(off[off.size() / 2], 1e-12);
    }

    auto objective = [&](const VectorXd &p, VectorXd *g) {
        Hyperparams h;
        h.alpha = std::exp(p[0]);
        h.beta = std::exp(p[1]);
        h.gamma = std::exp(p[2]);
        try {
            Vector3d gl;
            const double ll = plain_log_marginal(ts, h, g ? &gl : nullptr);
            if (g) *g = -gl;
            return -ll;
        } catch (const Error &) {
            // treat a non-factorizable covariance as a -inf likelihood region
            if (g) g->setZero(3);
            return std::numeric_limits<double>::infinity();
        }
    };

    Rng rng(opts.seed);
    MleReport rep;
    double best = std::numeric_limits<double>::infinity();
    VectorXd best_x(3);
    best_x << 0.0, std::log(1.0 / med), std::log(1e-3);
    bool any = false;
    for (int ms = 0; ms < std::max(1, opts.multistarts); ++ms) {
        VectorXd x0(3);
        if (ms == 0) {
            x0 = best_x; // median-heuristic start
        } else {
            x0[0] = rng.uniform(std::log(1e-2), std::log(1e2));
            x0[1] = std::log(1.0 / med) + rng.uniform(std::log(1e-3), std::log(1e3));
            x0[2] = rng.uniform(std::log(1e-8), 0.0);
        }
        BfgsResult r = bfgs_minimize(objective, x0, opts.max_iter);
        rep.evaluations += r.evals;
        if (std::isfinite(r.f) && r.f < best) {
            best = r.f;
            best_x = r.x;
            any = true;
            rep.converged = r.converged;
        }
    }
    if (!any) throw Error::solver("hyperparameter likelihood is non-finite for all starts (degenerate data)");

    Hyperparams h_std;
    h_std.alpha = std::exp(best_x[0]);
    h_std.beta = std::exp(best_x[1]);
    h_std.gamma = std::exp(best_x[2]);
    h_std.epsilon = h_std.gamma;
    rep.log_likelihood = -best;

    if (opts.fit_epsilon && ts.has_grads()) {
        TrainingSet sub = ts;
        if (opts.epsilon_subset > 0 && opts.epsilon_subset < T) {
            const int n = opts.epsilon_subset;
            sub.thetas.clear();
            sub.y.resize(n);
            sub.grads = MatrixXd(n, ts.dim());
            for (int i = 0; i < n; ++i) {
                const int idx = static_cast<int>((static_cast<long long>(i) * T) / n);
                sub.thetas.push_back(ts.thetas[idx]);
                sub.y[i] = ts.y[idx];
                sub.grads->row(i) = ts.grads->row(idx);
            }
        }
        VectorXd ybar(sub.size() * (sub.dim() + 1));
        ybar.head(sub.size()) = sub.y;
        for (int t = 0; t < sub.size(); ++t)
            ybar.segment(sub.size() + t * sub.dim(), sub.dim()) = sub.grads->row(t);

        auto eps_ll = [&](double log_eps) {
            Hyperparams h = h_std;
            h.epsilon = std::exp(log_eps);
            try {
                return log_marginal_core(build_cov(sub, h, GpMode::sensitivity_informed), ybar);
            } catch (const Error &) {
                return -std::numeric_limits<double>::infinity();
            }
        };
        // golden-section maximization over a wide log range
        double lo = std::log(1e-10), hi = std::log(1e3);
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double m1 = hi - phi * (hi - lo), m2 = lo + phi * (hi - lo);
        double f1 = eps_ll(m1), f2 = eps_ll(m2);
        rep.evaluations += 2;
        while (hi - lo > 0.05) {
            if (f1 < f2) {
                lo = m1;
                m1 = m2;
                f1 = f2;
                m2 = lo + phi * (hi - lo);
                f2 = eps_ll(m2);
            } else {
                hi = m2;
                m2 = m1;
                f2 = f1;
                m1 = hi - phi * (hi - lo);
                f1 = eps_ll(m1);
            }
            ++rep.evaluations;
        }
        h_std.epsilon = std::exp(0.5 * (lo + hi));
    }

    rep.hyper = to_raw_units(h_std, s.scale);
    return rep;
}

GpModel train(const TrainingSet &raw, const Hyperparams &h, GpMode mode) {
    raw.validate();
    if (mode == GpMode::sensitivity_informed && !raw.has_grads())
        throw Error::invalid("train: sensitivity-informed mode requires gradient labels");
    Standardized s = standardize(raw);
    GpModel m;
    m.target = raw.target;
    m.mode = mode;
    m.hyper = h;
    m.thetas = raw.thetas;
    m.label_mean = s.mean;
    m.label_scale = s.scale;
    m.train_hash = training_set_hash(raw);

    const Hyperparams hs = to_std_units(h, s.scale);
    const MatrixXd K = build_cov(s.set, hs, mode);
    m.chol = factor_with_jitter(K);

    const int T = raw.size(), M = raw.dim();
    if (mode == GpMode::plain) {
        m.weights = m.chol.solve(s.set.y);
    } else {
        VectorXd ybar(T * (M + 1));
        ybar.head(T) = s.set.y;
        for (int t = 0; t < T; ++t) ybar.segment(T + t * M, M) = s.set.grads->row(t);
        m.weights = m.chol.solve(ybar);
    }
    return m;
}

namespace {

// cross covariance between y(theta) and the stacked training vector
VectorXd cross_cov(const GpModel &m, const Hyperparams &hs, const VectorXd &theta) {
    const int T = static_cast<int>(m.thetas.size());
    const int M = m.dim();
    if (m.mode == GpMode::plain) {
        VectorXd c(T);
        for (int t = 0; t < T; ++t) c[t] = kernel(theta, m.thetas[t], hs);
        return c;
    }
    VectorXd c(T * (M + 1));
    for (int t = 0; t < T; ++t) {
        const VectorXd d = theta - m.thetas[t];
        const double k = hs.alpha * std::exp(-0.5 * hs.beta * d.squaredNorm());
        c[t] = k;
        c.segment(T + t * M, M) = (hs.beta * k) * d;
    }
    return c;
}

} // namespace

Prediction predict(const GpModel &m, const VectorXd &theta) {
    if (theta.size() != m.dim()) throw Error::invalid("predict: theta length mismatch");
    const Hyperparams hs = to_std_units(m.hyper, m.label_scale);
    const VectorXd c = cross_cov(m, hs, theta);
    Prediction p;
    const double mean_std = c.dot(m.weights);
    p.mean = m.label_mean + m.label_scale * mean_std;
    // one forward-substitution: var = k** - ||L^-1 c||^2
    const VectorXd v = m.chol.matrixL().solve(c);
    const double var_std = hs.alpha - v.squaredNorm();
    p.raw_variance = var_std * m.label_scale * m.label_scale;
    p.variance = std::max(0.0, p.raw_variance);
    p.std_dev = std::sqrt(p.variance);
    return p;
}

VectorXd predict_mean_grad(const GpModel &m, const VectorXd &theta) {
    const Hyperparams hs = to_std_units(m.hyper, m.label_scale);
    const int T = static_cast<int>(m.thetas.size());
    const int M = m.dim();
    VectorXd g = VectorXd::Zero(M);
    for (int t = 0; t < T; ++t) {
        const VectorXd d = theta - m.thetas[t];
        const double k = kernel(theta, m.thetas[t], hs);
        g += m.weights[t] * (-hs.beta * k) * d;
        if (m.mode == GpMode::sensitivity_informed) {
            const auto wg = m.weights.segment(T + t * M, M);
            g += (-hs.beta * hs.beta * k) * d * d.dot(wg) + hs.beta * k * wg;
        }
    }
    return m.label_scale * g;
}

std::uint64_t training_set_hash(const TrainingSet &ts) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto &t : ts.thetas) h = fnv1a(t.data(), sizeof(double) * t.size(), h);
    h = fnv1a(ts.y.data(), sizeof(double) * ts.y.size(), h);
    if (ts.grads) h = fnv1a(ts.grads->data(), sizeof(double) * ts.grads->size(), h);
    h = fnv1a(ts.target, h);
    return h;
}

std::string gp_model_to_json(const GpModel &m) {
    json j;
    j["format"] = "gpopf-model-v1";
    j["target"] = m.target;
    j["mode"] = m.mode == GpMode::plain ? "gp" : "si-gp";
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
    for (int i = 0; i < m.weights.size(); ++i) w.push_back(m.weights[i]);
    j["weights"] = w;
    j["train_hash"] = hash_hex(m.train_hash);
    return j.dump();
}

GpModel gp_model_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception &e) {
        throw Error::io(std::string("model parse failure: ") + e.what());
    }
    GpModel m;
    m.target = j.value("target", "");
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "gp")
        m.mode = GpMode::plain;
    else if (mode == "si-gp")
        m.mode = GpMode::sensitivity_informed;
    else
        throw Error::io("model mode '" + mode + "' is not an exact-GP mode");
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
    m.weights.resize(w.size());
    for (size_t i = 0; i < w.size(); ++i) m.weights[i] = w[i].get<double>();
    m.train_hash = std::stoull(j.at("train_hash").get<std::string>(), nullptr, 16);

    // rebuild the covariance factor; the file carries no factor by design
    const int T = static_cast<int>(m.thetas.size());
    const int M = m.dim();
    const Hyperparams hs = to_std_units(m.hyper, m.label_scale);
    TrainingSet shape;
    shape.thetas = m.thetas;
    shape.y = VectorXd::Zero(T);
    if (m.mode == GpMode::sensitivity_informed) shape.grads = MatrixXd::Zero(T, M);
    const MatrixXd K = build_cov(shape, hs, m.mode);
    m.chol = factor_with_jitter(K);
    const int expect = m.mode == GpMode::plain ? T : T * (M + 1);
    if (m.weights.size() != expect) throw Error::io("model weights length mismatch");
    return m;
}

} // namespace gpopf
