#include "ipm.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "common.hpp"

namespace gpopf {

using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

void ConeProgram::validate() const {
    const int n = num_vars();
    int dims = nlp;
    for (int d : soc_dims) {
        if (d < 2) throw Error::invalid("cone program: SOC dimension must be >= 2");
        dims += d;
    }
    if (G.rows() != dims || G.cols() != n || h.size() != dims)
        throw Error::invalid("cone program: G/h shape inconsistent with cone dimensions");
    if (A.rows() != b.size() || (A.rows() > 0 && A.cols() != n))
        throw Error::invalid("cone program: A/b shape mismatch");
    if (nlp < 0) throw Error::invalid("cone program: negative orthant dimension");
}

std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::unbounded: return "unbounded";
        case SolveStatus::max_iterations: return "max_iterations";
        default: return "numerical_error";
    }
}

namespace {

// ---------------------------------------------------------------------------
// Jordan-algebra helpers over K = R+^nlp x SOC(d_1) x ... x SOC(d_k)

struct ConeLayout {
    int nlp = 0;
    std::vector<int> dims;
    std::vector<int> offs; // offset of each SOC block
    int m = 0;
    int degree = 0; // nlp + #cones

    explicit ConeLayout(const ConeProgram &cp) : nlp(cp.nlp), dims(cp.soc_dims) {
        int off = nlp;
        for (int d : dims) {
            offs.push_back(off);
            off += d;
        }
        m = off;
        degree = nlp + static_cast<int>(dims.size());
    }
};

double cone_min_eig(const ConeLayout &K, const VectorXd &v) {
    double a = std::numeric_limits<double>::infinity();
    for (int i = 0; i < K.nlp; ++i) a = std::min(a, v[i]);
    for (size_t c = 0; c < K.dims.size(); ++c) {
        const int o = K.offs[c], d = K.dims[c];
        a = std::min(a, v[o] - v.segment(o + 1, d - 1).norm());
    }
    return a;
}

void cone_add_identity(const ConeLayout &K, VectorXd &v, double alpha) {
    for (int i = 0; i < K.nlp; ++i) v[i] += alpha;
    for (size_t c = 0; c < K.dims.size(); ++c) v[K.offs[c]] += alpha;
}

VectorXd jordan_prod(const ConeLayout &K, const VectorXd &u, const VectorXd &v) {
    VectorXd out(K.m);
    for (int i = 0; i < K.nlp; ++i) out[i] = u[i] * v[i];
    for (size_t c = 0; c < K.dims.size(); ++c) {
        const int o = K.offs[c], d = K.dims[c];
        out[o] = u.segment(o, d).dot(v.segment(o, d));
        out.segment(o + 1, d - 1) = u[o] * v.segment(o + 1, d - 1) + v[o] * u.segment(o + 1, d - 1);
    }
    return out;
}

// Solves lambda o w = d for w (arrow-matrix inverse).
VectorXd jordan_div(const ConeLayout &K, const VectorXd &lambda, const VectorXd &d) {
    VectorXd out(K.m);
    for (int i = 0; i < K.nlp; ++i) out[i] = d[i] / lambda[i];
    for (size_t c = 0; c < K.dims.size(); ++c) {
        const int o = K.offs[c], dim = K.dims[c];
        const double l0 = lambda[o];
        const auto l1 = lambda.segment(o + 1, dim - 1);
        const double det = l0 * l0 - l1.squaredNorm();
        const double w0 = (l0 * d[o] - l1.dot(d.segment(o + 1, dim - 1))) / det;
        out[o] = w0;
        out.segment(o + 1, dim - 1) = (d.segment(o + 1, dim - 1) - w0 * l1) / l0;
    }
    return out;
}

// Largest step alpha with v + alpha dv in K, for v strictly interior.
double cone_max_step(const ConeLayout &K, const VectorXd &v, const VectorXd &dv) {
    double alpha = std::numeric_limits<double>::infinity();
    for (int i = 0; i < K.nlp; ++i)
        if (dv[i] < 0) alpha = std::min(alpha, -v[i] / dv[i]);
    for (size_t c = 0; c < K.dims.size(); ++c) {
        const int o = K.offs[c], d = K.dims[c];
        const double v0 = v[o], dv0 = dv[o];
        const auto v1 = v.segment(o + 1, d - 1);
        const auto dv1 = dv.segment(o + 1, d - 1);
        // roots of (v0 + a dv0)^2 - ||v1 + a dv1||^2 = 0
        const double qa = dv0 * dv0 - dv1.squaredNorm();
        const double qb = 2.0 * (v0 * dv0 - v1.dot(dv1));
        const double qc = v0 * v0 - v1.squaredNorm();
        double best = std::numeric_limits<double>::infinity();
        const double disc = qb * qb - 4.0 * qa * qc;
        if (std::abs(qa) < 1e-300) {
            if (qb < 0) best = -qc / qb;
        } else if (disc >= 0) {
            const double sq = std::sqrt(disc);
            // numerically stable pair of roots
            const double r1 = (qb >= 0) ? (-qb - sq) / (2 * qa) : (2 * qc) / (-qb + sq);
            const double r2 = (qb >= 0) ? (2 * qc) / (-qb - sq) : (-qb + sq) / (2 * qa);
            for (double rt : {r1, r2})
                if (rt > 0 && rt < best) best = rt;
        }
        alpha = std::min(alpha, best);
    }
    return alpha;
}

// Nesterov-Todd scaling for the product cone.
struct NTScaling {
    const ConeLayout &K;
    VectorXd wlp;                // sqrt(s/z) per LP entry
    std::vector<double> eta;     // per SOC
    std::vector<VectorXd> wbar;  // per SOC, unit hyperbolic vector
    VectorXd lambda;             // scaled point W z = W^{-1} s

    explicit NTScaling(const ConeLayout &k) : K(k), eta(k.dims.size()), wbar(k.dims.size()) {
        wlp.resize(K.nlp);
        lambda.resize(K.m);
    }

    bool update(const VectorXd &s, const VectorXd &z) {
        for (int i = 0; i < K.nlp; ++i) {
            if (s[i] <= 0 || z[i] <= 0) return false;
            wlp[i] = std::sqrt(s[i] / z[i]);
            lambda[i] = std::sqrt(s[i] * z[i]);
        }
        for (size_t c = 0; c < K.dims.size(); ++c) {
            const int o = K.offs[c], d = K.dims[c];
            const double sres = s[o] * s[o] - s.segment(o + 1, d - 1).squaredNorm();
            const double zres = z[o] * z[o] - z.segment(o + 1, d - 1).squaredNorm();
            if (sres <= 0 || zres <= 0 || s[o] <= 0 || z[o] <= 0) return false;
            const double snorm = std::sqrt(sres), znorm = std::sqrt(zres);
            VectorXd sb = s.segment(o, d) / snorm;
            VectorXd zb = z.segment(o, d) / znorm;
            const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
            VectorXd w(d);
            w[0] = (sb[0] + zb[0]) / (2 * gamma);
            w.tail(d - 1) = (sb.tail(d - 1) - zb.tail(d - 1)) / (2 * gamma);
            wbar[c] = w;
            eta[c] = std::sqrt(snorm / znorm);
            // lambda block = W z
            lambda.segment(o, d) = apply_soc(c, z.segment(o, d), +1.0) * eta[c];
        }
        return true;
    }

    // Applies Wbar (sgn=+1) or Wbar^{-1} (sgn=-1) of one SOC block.
    VectorXd apply_soc(size_t c, const Eigen::Ref<const VectorXd> &u, double sgn) const {
        const VectorXd &w = wbar[c];
        const int d = static_cast<int>(w.size());
        VectorXd out(d);
        const double w0 = w[0];
        const auto w1 = w.tail(d - 1);
        const double dot = sgn * w1.dot(u.tail(d - 1));
        out[0] = w0 * u[0] + dot;
        out.tail(d - 1) = u.tail(d - 1) + sgn * w1 * (u[0] + dot / (1.0 + w0));
        return out;
    }

    VectorXd mult_W(const VectorXd &u) const {
        VectorXd out(K.m);
        out.head(K.nlp) = wlp.cwiseProduct(u.head(K.nlp));
        for (size_t c = 0; c < K.dims.size(); ++c)
            out.segment(K.offs[c], K.dims[c]) = eta[c] * apply_soc(c, u.segment(K.offs[c], K.dims[c]), +1.0);
        return out;
    }

    VectorXd mult_Winv(const VectorXd &u) const {
        VectorXd out(K.m);
        out.head(K.nlp) = u.head(K.nlp).cwiseQuotient(wlp);
        for (size_t c = 0; c < K.dims.size(); ++c)
            out.segment(K.offs[c], K.dims[c]) = apply_soc(c, u.segment(K.offs[c], K.dims[c]), -1.0) / eta[c];
        return out;
    }

    VectorXd mult_W2inv(const VectorXd &u) const {
        VectorXd out(K.m);
        out.head(K.nlp) = u.head(K.nlp).cwiseQuotient(wlp.cwiseProduct(wlp));
        for (size_t c = 0; c < K.dims.size(); ++c) {
            const int o = K.offs[c], d = K.dims[c];
            const VectorXd &w = wbar[c];
            VectorXd wt(d);
            wt[0] = w[0];
            wt.tail(d - 1) = -w.tail(d - 1);
            const auto u_blk = u.segment(o, d);
            VectorXd Ju(d);
            Ju[0] = u_blk[0];
            Ju.tail(d - 1) = -u_blk.tail(d - 1);
            out.segment(o, d) = (2.0 * wt.dot(u_blk) * wt - Ju) / (eta[c] * eta[c]);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Reduced KKT solver:  [H A'; A -dI] with H = G' W^-2 G + dI, refined against
// the unregularized system with matrix-free H products.

struct KktSolver {
    const ConeProgram &cp;
    const ConeLayout &K;
    double reg;
    int refine_steps;
    int n, p;
    SpMat Gt, At;
    Eigen::SparseMatrix<double, Eigen::RowMajor> Gr;
    std::vector<Eigen::SparseVector<double>> grows;
    std::vector<std::vector<int>> cone_cols; // column support per SOC block
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
    bool analyzed = false;
    const NTScaling *scaling = nullptr; // active scaling for products
    bool identity_scaling = false;

    KktSolver(const ConeProgram &cp_, const ConeLayout &k, double reg_, int refine_)
        : cp(cp_), K(k), reg(reg_), refine_steps(refine_), n(cp_.num_vars()), p(cp_.num_eq()) {
        Gt = cp.G.transpose();
        At = cp.A.transpose();
        Gr = cp.G;
        grows.resize(K.m);
        for (int r = 0; r < K.m; ++r) {
            Eigen::SparseVector<double> v(n);
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Gr, r); it; ++it)
                v.coeffRef(it.col()) = it.value();
            grows[r] = v;
        }
        // The NT-scaled cone blocks fill the whole column-support square of
        // each cone; pin that pattern so the symbolic factorization is reused.
        for (size_t c = 0; c < K.dims.size(); ++c) {
            std::vector<int> cols;
            for (int j = 0; j < K.dims[c]; ++j)
                for (Eigen::SparseVector<double>::InnerIterator it(grows[K.offs[c] + j]); it; ++it)
                    cols.push_back(static_cast<int>(it.index()));
            std::sort(cols.begin(), cols.end());
            cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
            cone_cols.push_back(std::move(cols));
        }
    }

    VectorXd w2inv_apply(const VectorXd &u) const {
        if (identity_scaling) return u;
        return scaling->mult_W2inv(u);
    }

    // H u = G' W^-2 G u  (+ reg handled by factor only)
    VectorXd h_apply(const VectorXd &u) const { return Gt * w2inv_apply(cp.G * u); }

    bool factorize(const NTScaling *w, bool identity) {
        scaling = w;
        identity_scaling = identity;

        // Assemble H = G' W^-2 G. W^-2 is diagonal on the LP block and
        // (2 wt wt' - J)/eta^2 per SOC block, so H is a sum of scaled sparse
        // outer products with a pattern independent of the scaling values.
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<size_t>(cp.G.nonZeros()) * 6 + n + p);

        auto add_outer = [&](const Eigen::SparseVector<double> &v, double scale) {
            for (Eigen::SparseVector<double>::InnerIterator it1(v); it1; ++it1)
                for (Eigen::SparseVector<double>::InnerIterator it2(v); it2; ++it2)
                    trips.emplace_back(it1.index(), it2.index(), scale * it1.value() * it2.value());
        };

        for (int i = 0; i < K.nlp; ++i) {
            const double s = identity ? 1.0 : 1.0 / (scaling->wlp[i] * scaling->wlp[i]);
            add_outer(grows[i], s);
        }
        for (const auto &cols : cone_cols)
            for (int i : cols)
                for (int j : cols) trips.emplace_back(i, j, 0.0);
        for (size_t c = 0; c < K.dims.size(); ++c) {
            const int o = K.offs[c], d = K.dims[c];
            if (identity) {
                for (int j = 0; j < d; ++j) add_outer(grows[o + j], 1.0);
            } else {
                const VectorXd &w = scaling->wbar[c];
                const double inv_eta2 = 1.0 / (scaling->eta[c] * scaling->eta[c]);
                // G_c' W^-2 G_c = inv_eta2 (2 v v' - G_c' J G_c), v = G_c' wt
                Eigen::SparseVector<double> v(n);
                for (int j = 0; j < d; ++j) {
                    const double coeff = (j == 0) ? w[0] : -w[j];
                    for (Eigen::SparseVector<double>::InnerIterator it(grows[o + j]); it; ++it)
                        v.coeffRef(it.index()) += coeff * it.value();
                }
                add_outer(v, 2.0 * inv_eta2);
                add_outer(grows[o], -inv_eta2);
                for (int j = 1; j < d; ++j) add_outer(grows[o + j], inv_eta2);
            }
        }
        for (int i = 0; i < n; ++i) trips.emplace_back(i, i, reg);
        // equality blocks
        for (int col = 0; col < At.outerSize(); ++col)
            for (SpMat::InnerIterator it(At, col); it; ++it) {
                trips.emplace_back(it.row(), n + col, it.value());
                trips.emplace_back(n + col, it.row(), it.value());
            }
        for (int i = 0; i < p; ++i) trips.emplace_back(n + i, n + i, -reg);

        SpMat Kmat(n + p, n + p);
        Kmat.setFromTriplets(trips.begin(), trips.end());
        Kmat.makeCompressed();

        if (!analyzed) {
            ldlt.analyzePattern(Kmat);
            analyzed = true;
        }
        ldlt.factorize(Kmat);
        return ldlt.info() == Eigen::Success;
    }

    // Solves [H A'; A 0][u1;u2] = [r1;r2] with iterative refinement.
    void solve(const VectorXd &r1, const VectorXd &r2, VectorXd &u1, VectorXd &u2) const {
        VectorXd rhs(n + p);
        rhs.head(n) = r1;
        rhs.tail(p) = r2;
        VectorXd u = ldlt.solve(rhs);
        for (int it = 0; it < refine_steps; ++it) {
            VectorXd res(n + p);
            res.head(n) = r1 - h_apply(u.head(n));
            if (p > 0) {
                res.head(n) -= At * u.tail(p);
                res.tail(p) = r2 - cp.A * u.head(n);
            }
            u += ldlt.solve(res);
        }
        u1 = u.head(n);
        u2 = u.tail(p);
    }
};

struct Residuals {
    VectorXd rx, ry, rz;
    double pres = 0, dres = 0, gap = 0, relgap = 0, pcost = 0, dcost = 0;
};

Residuals compute_residuals(const ConeProgram &cp, const VectorXd &x, const VectorXd &y, const VectorXd &z,
                            const VectorXd &s) {
    Residuals r;
    r.rx = cp.G.transpose() * z + cp.c;
    if (cp.num_eq() > 0) r.rx += cp.A.transpose() * y;
    r.ry = cp.A * x - cp.b;
    r.rz = cp.G * x + s - cp.h;
    const double bn = std::max(1.0, cp.b.norm());
    const double hn = std::max(1.0, cp.h.norm());
    const double cn = std::max(1.0, cp.c.norm());
    r.pres = std::max(cp.num_eq() ? r.ry.norm() / bn : 0.0, r.rz.norm() / hn);
    r.dres = r.rx.norm() / cn;
    r.gap = s.dot(z);
    r.pcost = cp.c.dot(x);
    r.dcost = -cp.b.dot(y) - cp.h.dot(z);
    r.relgap = r.gap / std::max(1.0, std::abs(r.pcost));
    return r;
}

// Newton cleanup on the KKT equalities (stationarity, primal feasibility and
// full Jordan complementarity). Quadratically sharpens residuals when the
// optimum is strictly complementary; falls back silently otherwise.
bool polish_solution(const ConeProgram &cp, const ConeLayout &K, VectorXd &x, VectorXd &y, VectorXd &z, VectorXd &s) {
    const int n = cp.num_vars(), p = cp.num_eq(), m = cp.num_conic();
    const int dim = n + p + 2 * m;

    auto eval = [&](const VectorXd &xx, const VectorXd &yy, const VectorXd &zz, const VectorXd &ss) {
        VectorXd F(dim);
        VectorXd rx = cp.G.transpose() * zz + cp.c;
        if (p > 0) rx += cp.A.transpose() * yy;
        F.head(n) = rx;
        F.segment(n, p) = cp.A * xx - cp.b;
        F.segment(n + p, m) = cp.G * xx + ss - cp.h;
        F.segment(n + p + m, m) = jordan_prod(K, ss, zz);
        return F;
    };

    VectorXd F = eval(x, y, z, s);
    const double f0 = F.lpNorm<Eigen::Infinity>();
    if (!(f0 > 0)) return true;

    VectorXd bx = x, by = y, bz = z, bs = s;
    double fbest = f0;

    for (int pass = 0; pass < 2; ++pass) {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<size_t>(cp.A.nonZeros()) * 2 + cp.G.nonZeros() * 2 + 6 * m);
        for (int col = 0; col < cp.A.outerSize(); ++col)
            for (SpMat::InnerIterator it(cp.A, col); it; ++it) {
                trips.emplace_back(n + it.row(), it.col(), it.value());           // A dx
                trips.emplace_back(it.col(), n + it.row(), it.value());           // A' dy
            }
        for (int col = 0; col < cp.G.outerSize(); ++col)
            for (SpMat::InnerIterator it(cp.G, col); it; ++it) {
                trips.emplace_back(n + p + it.row(), it.col(), it.value());       // G dx
                trips.emplace_back(it.col(), n + p + it.row(), it.value());       // G' dz
            }
        for (int i = 0; i < m; ++i) trips.emplace_back(n + p + i, n + p + m + i, 1.0); // ds
        // d(s o z) = Arw(z) ds + Arw(s) dz
        auto add_arrow = [&](int row0, int col0, const VectorXd &v) {
            for (int i = 0; i < K.nlp; ++i) trips.emplace_back(row0 + i, col0 + i, v[i]);
            for (size_t c = 0; c < K.dims.size(); ++c) {
                const int o = K.offs[c], d = K.dims[c];
                trips.emplace_back(row0 + o, col0 + o, v[o]);
                for (int j = 1; j < d; ++j) {
                    trips.emplace_back(row0 + o, col0 + o + j, v[o + j]);
                    trips.emplace_back(row0 + o + j, col0 + o, v[o + j]);
                    trips.emplace_back(row0 + o + j, col0 + o + j, v[o]);
                }
            }
        };
        add_arrow(n + p + m, n + p, bs);     // Arw(s) dz
        add_arrow(n + p + m, n + p + m, bz); // Arw(z) ds

        SpMat J(dim, dim);
        J.setFromTriplets(trips.begin(), trips.end());
        J.makeCompressed();
        Eigen::SparseLU<SpMat> lu;
        lu.analyzePattern(J);
        lu.factorize(J);
        if (lu.info() != Eigen::Success) return false;
        VectorXd delta = lu.solve(-F);
        if (!delta.allFinite()) return false;

        double t = 1.0;
        bool improved = false;
        for (int bt = 0; bt < 4; ++bt) {
            VectorXd nx = bx + t * delta.head(n);
            VectorXd ny = by + t * delta.segment(n, p);
            VectorXd nz = bz + t * delta.segment(n + p, m);
            VectorXd ns = bs + t * delta.segment(n + p + m, m);
            VectorXd Fn = eval(nx, ny, nz, ns);
            const double fn = Fn.lpNorm<Eigen::Infinity>();
            if (fn < fbest) {
                bx = nx; by = ny; bz = nz; bs = ns;
                F = Fn;
                fbest = fn;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if (!improved) break;
    }

    // Only adopt if the cleanup did not push the point materially outside K.
    const double eig_s = cone_min_eig(K, bs);
    const double eig_z = cone_min_eig(K, bz);
    if (fbest <= f0 && eig_s > -1e-9 && eig_z > -1e-9) {
        x = bx; y = by; z = bz; s = bs;
        return true;
    }
    return false;
}

} // namespace

namespace {

// Phase-style feasibility probe: min t s.t. Ax = b, Gx + s = t e + h, s in K,
// t <= t_cap. A strictly positive minimum certifies primal infeasibility.
double feasibility_margin(const ConeProgram &cp) {
    const ConeLayout K(cp);
    ConeProgram probe;
    const int n = cp.num_vars();
    probe.c = VectorXd::Zero(n + 1);
    probe.c[n] = 1.0;
    probe.b = cp.b;
    probe.nlp = cp.nlp + 1;
    probe.soc_dims = cp.soc_dims;

    std::vector<Eigen::Triplet<double>> at, gt;
    for (int col = 0; col < cp.A.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(cp.A, col); it; ++it)
            at.emplace_back(it.row(), it.col(), it.value());
    probe.A.resize(cp.num_eq(), n + 1);
    probe.A.setFromTriplets(at.begin(), at.end());

    // row 0: t <= 100 keeps the probe bounded; the shifted rows follow
    gt.emplace_back(0, n, 1.0);
    for (int col = 0; col < cp.G.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(cp.G, col); it; ++it)
            gt.emplace_back(1 + it.row(), it.col(), it.value());
    for (int i = 0; i < K.nlp; ++i) gt.emplace_back(1 + i, n, -1.0);
    for (size_t c = 0; c < K.dims.size(); ++c) gt.emplace_back(1 + K.offs[c], n, -1.0);
    probe.G.resize(cp.num_conic() + 1, n + 1);
    probe.G.setFromTriplets(gt.begin(), gt.end());
    probe.h = VectorXd(cp.num_conic() + 1);
    probe.h[0] = 100.0;
    probe.h.tail(cp.num_conic()) = cp.h;

    IpmSettings st;
    st.feas_tol = 1e-7;
    st.gap_rel_tol = 1e-7;
    st.gap_abs_tol = 1e-9;
    st.probe_infeasibility = false;
    ConeSolution sol = solve_cone_program(probe, st);
    if (sol.status == SolveStatus::optimal) return sol.obj;
    // only the sign of the margin matters; a nearly-converged probe is enough
    const bool near_feasible = sol.x.size() > 0 && sol.res_primal_eq <= 1e-6 && sol.res_primal_cone <= 1e-6 &&
                               std::abs(sol.duality_gap) <= 1e-3 * std::max(1.0, std::abs(sol.obj));
    if (near_feasible) return sol.obj;
    return std::numeric_limits<double>::quiet_NaN();
}

} // namespace

ConeSolution solve_cone_program(const ConeProgram &cp, const IpmSettings &st) {
    cp.validate();
    const ConeLayout K(cp);
    const int n = cp.num_vars(), p = cp.num_eq(), m = cp.num_conic();
    if (m == 0) throw Error::invalid("cone program without conic constraints is not supported");

    ConeSolution sol;
    KktSolver kkt(cp, K, st.static_reg, st.refine_steps);

    // --- Initial point: least-squares primal/dual with unit scaling.
    if (!kkt.factorize(nullptr, true)) {
        sol.status = SolveStatus::numerical_error;
        return sol;
    }
    VectorXd x(n), y(p);
    kkt.solve(cp.G.transpose() * cp.h, cp.b, x, y);
    VectorXd s = cp.h - cp.G * x;
    {
        const double a = cone_min_eig(K, s);
        if (a < 1e-8) cone_add_identity(K, s, 1.0 - a);
    }
    VectorXd u(n);
    kkt.solve(-cp.c, VectorXd::Zero(p), u, y);
    VectorXd z = cp.G * u;
    {
        const double a = cone_min_eig(K, z);
        if (a < 1e-8) cone_add_identity(K, z, 1.0 - a);
    }

    NTScaling W(K);
    double mu = s.dot(z) / K.degree;

    // Conditioning of the scaled system collapses as mu -> 0; keep the best
    // iterate and fall back to it if late iterations degrade.
    VectorXd bx = x, by = y, bz = z, bs = s;
    double best_score = std::numeric_limits<double>::infinity();
    int stalled = 0;

    int iter = 0;
    for (; iter < st.max_iter; ++iter) {
        Residuals r = compute_residuals(cp, x, y, z, s);
        if (st.verbose)
            std::printf("it %2d  pres %9.2e  dres %9.2e  gap %9.2e\n", iter, r.pres, r.dres, r.gap);

        const double score = std::max({r.pres / st.feas_tol, r.dres / st.feas_tol,
                                       std::min(r.gap / st.gap_abs_tol, r.relgap / st.gap_rel_tol)});
        if (score < best_score) {
            best_score = score;
            bx = x; by = y; bz = z; bs = s;
            stalled = 0;
        } else if (++stalled >= 3) {
            break; // no longer improving; the best point decides the outcome
        }

        if (score <= 1.0) {
            sol.status = SolveStatus::optimal;
            break;
        }

        // Infeasibility certificates (Farkas directions carried by iterates).
        const double by_hz = cp.b.dot(y) + cp.h.dot(z);
        if (by_hz < 0) {
            VectorXd dual_dir = cp.G.transpose() * z;
            if (p > 0) dual_dir += cp.A.transpose() * y;
            if (dual_dir.norm() / (-by_hz) < 1e-8 && cone_min_eig(K, z) > -1e-9 * z.norm()) {
                sol.status = SolveStatus::infeasible;
                break;
            }
        }
        const double cx = cp.c.dot(x);
        if (cx < 0) {
            const double pn = (p > 0 ? (cp.A * x).norm() : 0.0);
            VectorXd sdir = -(cp.G * x);
            if (pn / (-cx) < 1e-8 && cone_min_eig(K, sdir) > -1e-9 * std::max(1.0, sdir.norm())) {
                sol.status = SolveStatus::unbounded;
                break;
            }
        }

        if (!W.update(s, z)) {
            sol.status = SolveStatus::numerical_error;
            break;
        }
        mu = s.dot(z) / K.degree;
        if (!kkt.factorize(&W, false)) {
            sol.status = SolveStatus::numerical_error;
            break;
        }

        auto direction = [&](const VectorXd &w1, VectorXd &dx, VectorXd &dy, VectorXd &dz, VectorXd &ds) {
            const VectorXd Ww1 = W.mult_W(w1);
            const VectorXd rhs1 = -r.rx - cp.G.transpose() * W.mult_W2inv(r.rz + Ww1);
            kkt.solve(rhs1, -r.ry, dx, dy);
            dz = W.mult_W2inv(cp.G * dx + r.rz + Ww1);
            ds = -r.rz - cp.G * dx;
        };

        // predictor
        VectorXd dx_a, dy_a, dz_a, ds_a;
        direction(-W.lambda, dx_a, dy_a, dz_a, ds_a);
        const double alpha_aff =
            std::min({1.0, cone_max_step(K, s, ds_a), cone_max_step(K, z, dz_a)});
        const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 0.0, 1.0);

        // corrector
        const VectorXd corr = jordan_prod(K, W.mult_Winv(ds_a), W.mult_W(dz_a));
        VectorXd dsc = -jordan_prod(K, W.lambda, W.lambda) - corr;
        cone_add_identity(K, dsc, sigma * mu);
        const VectorXd w1 = jordan_div(K, W.lambda, dsc);

        VectorXd dx, dy, dz, ds;
        direction(w1, dx, dy, dz, ds);
        double alpha = std::min({1.0 / st.step_frac, cone_max_step(K, s, ds), cone_max_step(K, z, dz)});
        alpha *= st.step_frac;
        if (!(alpha > 0) || !dx.allFinite() || !dz.allFinite()) {
            sol.status = SolveStatus::numerical_error;
            break;
        }

        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
    }
    if (iter >= st.max_iter) sol.status = SolveStatus::max_iterations;
    sol.iterations = iter;

    // A failed or stalled iteration stream often still carries a clean
    // Farkas certificate in its last iterate.
    if (sol.status == SolveStatus::max_iterations || sol.status == SolveStatus::numerical_error) {
        const double by_hz = cp.b.dot(y) + cp.h.dot(z);
        if (by_hz < 0) {
            VectorXd dual_dir = cp.G.transpose() * z;
            if (p > 0) dual_dir += cp.A.transpose() * y;
            if (dual_dir.norm() / (-by_hz) < 1e-6 * std::max(1.0, cp.c.norm()) &&
                cone_min_eig(K, z) > -1e-9 * z.norm())
                sol.status = SolveStatus::infeasible;
        }
        const double cx = cp.c.dot(x);
        if (cx < 0) {
            const double pn = (p > 0 ? (cp.A * x).norm() : 0.0);
            VectorXd sdir = -(cp.G * x);
            if (pn / (-cx) < 1e-6 && cone_min_eig(K, sdir) > -1e-9 * std::max(1.0, sdir.norm()))
                sol.status = SolveStatus::unbounded;
        }
    }
    if ((sol.status == SolveStatus::max_iterations || sol.status == SolveStatus::numerical_error) &&
        st.probe_infeasibility) {
        const double margin = feasibility_margin(cp);
        if (std::isfinite(margin) && margin > 1e-7) sol.status = SolveStatus::infeasible;
    }

    if (sol.status != SolveStatus::infeasible && sol.status != SolveStatus::unbounded) {
        x = bx; y = by; z = bz; s = bs;
        if (st.polish && best_score < 1e6) sol.polished = polish_solution(cp, K, x, y, z, s);
        // Final arbiter on unscaled residuals at the returned point.
        Residuals rf = compute_residuals(cp, x, y, z, s);
        const bool ok = rf.pres <= st.feas_tol && rf.dres <= st.feas_tol &&
                        (rf.gap <= st.gap_abs_tol || rf.relgap <= st.gap_rel_tol);
        if (ok)
            sol.status = SolveStatus::optimal;
        else if (sol.status == SolveStatus::optimal)
            sol.status = SolveStatus::numerical_error;
    }

    sol.x = x;
    sol.y = y;
    sol.z = z;
    sol.s = s;
    sol.obj = cp.c.dot(x);
    VectorXd rx = cp.G.transpose() * z + cp.c;
    if (p > 0) rx += cp.A.transpose() * y;
    sol.res_dual = rx.lpNorm<Eigen::Infinity>();
    sol.res_primal_eq = p > 0 ? (cp.A * x - cp.b).lpNorm<Eigen::Infinity>() : 0.0;
    sol.res_primal_cone = (cp.G * x + s - cp.h).lpNorm<Eigen::Infinity>();
    sol.res_comp = jordan_prod(K, s, z).lpNorm<Eigen::Infinity>();
    sol.duality_gap = s.dot(z);
    return sol;
}

} // namespace gpopf
