#include "lopf.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <vector>

namespace gpopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

LinearGridModel build_rx(const FeederModel &f, double v0) {
    const int n = f.bus_count();
    LinearGridModel m;
    m.v0 = v0;
    m.R = MatrixXd::Zero(n, n);
    m.X = MatrixXd::Zero(n, n);
    // path(k) as a bus -> root chain; shared-path sums by walking both chains
    std::vector<std::vector<int>> path(n + 1);
    for (int k = 1; k <= n; ++k) {
        path[k] = path[f.parent_of(k)];
        path[k].push_back(k);
    }
    for (int a = 1; a <= n; ++a)
        for (int b = a; b <= n; ++b) {
            double rs = 0, xs = 0;
            size_t i = 0;
            while (i < path[a].size() && i < path[b].size() && path[a][i] == path[b][i]) {
                rs += f.line_r(path[a][i]);
                xs += f.line_x(path[a][i]);
                ++i;
            }
            m.R(a - 1, b - 1) = m.R(b - 1, a - 1) = 2.0 * rs;
            m.X(a - 1, b - 1) = m.X(b - 1, a - 1) = 2.0 * xs;
        }
    return m;
}

LopfResult solve_lopf(const FeederModel &f, const VectorXd &theta, const LopfOptions &opts) {
    const int n = f.bus_count();
    const int ng = f.inverter_count();
    if (theta.size() != f.theta_dim()) throw Error::invalid("solve_lopf: theta length mismatch");
    const VectorXd pl = theta.head(n);
    const VectorXd ql = theta.segment(n, n);
    const VectorXd cap = theta.tail(ng);

    LinearGridModel m = build_rx(f, opts.v0);
    const double loss_scale = opts.half_loss ? 0.5 : 1.0;
    Eigen::LLT<MatrixXd> llt((loss_scale * m.R).selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success) throw Error::internal("solve_lopf: R is not positive definite");
    const MatrixXd L = llt.matrixL(); // p' (sR) p = ||L' p||^2

    // scatter matrix: net p = Sc pg - pl
    MatrixXd Sc = MatrixXd::Zero(n, ng);
    for (int j = 0; j < ng; ++j) Sc(f.inverter_bus[j] - 1, j) = 1.0;
    const MatrixXd LtS = L.transpose() * Sc; // n x ng

    // variables u = [pg; qg; tp; tq]
    const int nv = 2 * ng + 2;
    ConeProgram cp;
    cp.c = VectorXd::Zero(nv);
    cp.c.head(ng).setConstant(-1.0);
    cp.c[2 * ng] = 1.0;
    cp.c[2 * ng + 1] = 1.0;
    cp.A.resize(0, nv);
    cp.b.resize(0);

    const MatrixXd RS = m.R * Sc, XS = m.X * Sc;
    const VectorXd voff = opts.v0 - (m.R * pl + m.X * ql).array(); // v at pg=qg=0

    // lp rows: voltage band (2n), pg box (2ng), polytope (32 ng)
    const int nlp = 2 * n + 2 * ng + 32 * ng;
    std::vector<Triplet> gt;
    VectorXd h(nlp + 2 * (n + 2));
    int row = 0;
    for (int k = 0; k < n; ++k) { // v <= vmax
        for (int j = 0; j < ng; ++j) {
            if (RS(k, j) != 0) gt.emplace_back(row, j, RS(k, j));
            if (XS(k, j) != 0) gt.emplace_back(row, ng + j, XS(k, j));
        }
        h[row++] = f.vmax[k] - voff[k];
    }
    for (int k = 0; k < n; ++k) { // -v <= -vmin
        for (int j = 0; j < ng; ++j) {
            if (RS(k, j) != 0) gt.emplace_back(row, j, -RS(k, j));
            if (XS(k, j) != 0) gt.emplace_back(row, ng + j, -XS(k, j));
        }
        h[row++] = voff[k] - f.vmin[k];
    }
    for (int j = 0; j < ng; ++j) { // 0 <= pg <= cap
        gt.emplace_back(row, j, 1.0);
        h[row++] = cap[j];
        gt.emplace_back(row, j, -1.0);
        h[row++] = 0.0;
    }
    for (int j = 0; j < ng; ++j) // |pg cos(k pi/16) + qg sin(k pi/16)| <= sbar
        for (int k = 1; k <= 16; ++k) {
            const double ck = std::cos(k * M_PI / 16.0), sk = std::sin(k * M_PI / 16.0);
            gt.emplace_back(row, j, ck);
            gt.emplace_back(row, ng + j, sk);
            h[row++] = f.sbar[j];
            gt.emplace_back(row, j, -ck);
            gt.emplace_back(row, ng + j, -sk);
            h[row++] = f.sbar[j];
        }

    // loss epigraphs as rotated-cone style SOCs:
    // || [2 L'(Sc pg - pl); 1 - tp] || <= 1 + tp  <=>  ||L'(Sc pg - pl)||^2 <= tp
    const VectorXd gp0 = L.transpose() * pl; // offset inside the p-cone
    const VectorXd gq0 = L.transpose() * ql;
    auto add_epigraph = [&](int tvar, const MatrixXd &lts, const VectorXd &g0, int var_off) {
        gt.emplace_back(row, tvar, -1.0);
        h[row++] = 1.0; // s0 = 1 + t
        for (int k = 0; k < n; ++k) {
            for (int j = 0; j < ng; ++j)
                if (lts(k, j) != 0) gt.emplace_back(row, var_off + j, -2.0 * lts(k, j));
            h[row++] = -2.0 * g0[k];
        }
        gt.emplace_back(row, tvar, 1.0);
        h[row++] = 1.0; // last entry = 1 - t
        cp.soc_dims.push_back(n + 2);
    };
    add_epigraph(2 * ng, LtS, gp0, 0);
    add_epigraph(2 * ng + 1, LtS, gq0, ng);

    cp.G.resize(row, nv);
    cp.G.setFromTriplets(gt.begin(), gt.end());
    cp.h = h.head(row);
    cp.nlp = nlp;

    IpmSettings st;
    st.feas_tol = std::min(1e-9, opts.kkt_tol);
    ConeSolution cs = solve_cone_program(cp, st);

    LopfResult res;
    res.status = cs.status;
    if (cs.status != SolveStatus::optimal) return res;
    res.pg = cs.x.head(ng);
    res.qg = cs.x.segment(ng, ng);
    const VectorXd pnet = Sc * res.pg - pl;
    const VectorXd qnet = Sc * res.qg - ql;
    res.objective = pl.sum() - res.pg.sum() + loss_scale * (pnet.dot(m.R * pnet) + qnet.dot(m.R * qnet));
    res.kkt_residual = std::max({cs.res_dual, cs.res_primal_cone, cs.res_comp});
    return res;
}

} // namespace gpopf
