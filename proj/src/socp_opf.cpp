#include "socp_opf.hpp"

#include <algorithm>
#include <cmath>

namespace gpopf {

using Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

ParametricSocp build_socp(const FeederModel &f) {
    const int n = f.bus_count();
    const int ng = f.inverter_count();
    ParametricSocp ps;
    ps.layout.n = n;
    ps.layout.ng = ng;
    ps.M = f.theta_dim();
    const XLayout &L = ps.layout;
    const int nx = L.dim();

    // cost: minimize substation intake = sum(p_load) - sum(p^g) + sum(r ell);
    // the theta-linear constant sum(p_load) is kept out of c.
    ps.c = VectorXd::Zero(nx);
    for (int j = 0; j < ng; ++j) ps.c[L.pg(j)] = -1.0;
    for (int k = 1; k <= n; ++k) ps.c[L.ell(k)] = f.line_r(k);

    // equalities: power balance (2 rows per bus) and voltage drop, plus an
    // optional substation-voltage pin.
    const bool pin_v0 = f.v0_mode == FeederModel::V0Mode::fixed;
    const int ne = 3 * n + (pin_v0 ? 1 : 0);
    std::vector<Triplet> ae, be;
    ps.fe = VectorXd::Zero(ne);
    for (int k = 1; k <= n; ++k) {
        const int rp = k - 1, rq = n + k - 1, rv = 2 * n + k - 1;
        const int inv = f.inverter_index(k);
        if (inv >= 0) {
            ae.emplace_back(rp, L.pg(inv), 1.0);
            ae.emplace_back(rq, L.qg(inv), 1.0);
        }
        ae.emplace_back(rp, L.pflow(k), 1.0);
        ae.emplace_back(rq, L.qflow(k), 1.0);
        for (int c : f.children[k]) {
            ae.emplace_back(rp, L.pflow(c), -1.0);
            ae.emplace_back(rq, L.qflow(c), -1.0);
        }
        ae.emplace_back(rp, L.ell(k), -f.line_r(k));
        ae.emplace_back(rq, L.ell(k), -f.line_x(k));
        be.emplace_back(rp, k - 1, 1.0);     // p_load
        be.emplace_back(rq, n + k - 1, 1.0); // q_load

        const double rk = f.line_r(k), xk = f.line_x(k);
        ae.emplace_back(rv, L.v(k), 1.0);
        ae.emplace_back(rv, L.v_or_v0(f.parent_of(k)), -1.0);
        ae.emplace_back(rv, L.ell(k), -(rk * rk + xk * xk));
        ae.emplace_back(rv, L.pflow(k), 2.0 * rk);
        ae.emplace_back(rv, L.qflow(k), 2.0 * xk);
    }
    if (pin_v0) {
        ae.emplace_back(3 * n, L.v0(), 1.0);
        ps.fe[3 * n] = f.v0;
    }
    ps.Ae.resize(ne, nx);
    ps.Ae.setFromTriplets(ae.begin(), ae.end());
    ps.Be.resize(ne, ps.M);
    ps.Be.setFromTriplets(be.begin(), be.end());

    // inequalities: [ell <= lbar; v <= vmax; -v <= -vmin; p^g <= cap; -p^g <= 0]
    const int ni = 3 * n + 2 * ng;
    std::vector<Triplet> ai, bi;
    ps.fi = VectorXd::Zero(ni);
    for (int k = 1; k <= n; ++k) {
        ai.emplace_back(k - 1, L.ell(k), 1.0);
        ps.fi[k - 1] = f.line_lbar(k);
        ai.emplace_back(n + k - 1, L.v(k), 1.0);
        ps.fi[n + k - 1] = f.bus_vmax(k);
        ai.emplace_back(2 * n + k - 1, L.v(k), -1.0);
        ps.fi[2 * n + k - 1] = -f.bus_vmin(k);
    }
    for (int j = 0; j < ng; ++j) {
        ai.emplace_back(3 * n + j, L.pg(j), 1.0);
        bi.emplace_back(3 * n + j, 2 * n + j, 1.0); // pg_cap entry of theta
        ai.emplace_back(3 * n + ng + j, L.pg(j), -1.0);
    }
    ps.Ai.resize(ni, nx);
    ps.Ai.setFromTriplets(ai.begin(), ai.end());
    ps.Bi.resize(ni, ps.M);
    ps.Bi.setFromTriplets(bi.begin(), bi.end());

    // relaxation cones ||[2P; 2Q; v_pi - ell]|| <= ell + v_pi
    for (int k = 1; k <= n; ++k) {
        SocBlock cb;
        cb.A.resize(3, nx);
        std::vector<Triplet> at;
        at.emplace_back(0, L.pflow(k), 2.0);
        at.emplace_back(1, L.qflow(k), 2.0);
        at.emplace_back(2, L.v_or_v0(f.parent_of(k)), 1.0);
        at.emplace_back(2, L.ell(k), -1.0);
        cb.A.setFromTriplets(at.begin(), at.end());
        cb.b.resize(nx);
        cb.b.coeffRef(L.ell(k)) = 1.0;
        cb.b.coeffRef(L.v_or_v0(f.parent_of(k))) += 1.0;
        cb.f = 0.0;
        ps.cones.push_back(std::move(cb));
    }
    ps.relax_cones = n;
    // inverter apparent-power cones ||[p^g; q^g]|| <= sbar
    for (int j = 0; j < ng; ++j) {
        SocBlock cb;
        cb.A.resize(2, nx);
        std::vector<Triplet> at;
        at.emplace_back(0, L.pg(j), 1.0);
        at.emplace_back(1, L.qg(j), 1.0);
        cb.A.setFromTriplets(at.begin(), at.end());
        cb.b.resize(nx);
        cb.f = f.sbar[j];
        ps.cones.push_back(std::move(cb));
    }
    return ps;
}

ConeProgram instantiate(const ParametricSocp &ps, const VectorXd &theta) {
    if (theta.size() != ps.M) throw Error::invalid("theta length does not match the parametric program");
    const int nx = ps.layout.dim();
    ConeProgram cp;
    cp.c = ps.c;
    cp.A = ps.Ae;
    cp.b = ps.Be * theta + ps.fe;
    cp.nlp = ps.num_ineq();

    int rows = cp.nlp;
    for (const auto &cb : ps.cones) {
        cp.soc_dims.push_back(1 + static_cast<int>(cb.A.rows()));
        rows += 1 + static_cast<int>(cb.A.rows());
    }
    cp.G.resize(rows, nx);
    cp.h = VectorXd::Zero(rows);
    std::vector<Triplet> gt;
    for (int col = 0; col < ps.Ai.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(ps.Ai, col); it; ++it)
            gt.emplace_back(it.row(), it.col(), it.value());
    cp.h.head(cp.nlp) = ps.Bi * theta + ps.fi;
    int off = cp.nlp;
    for (const auto &cb : ps.cones) {
        for (Eigen::SparseVector<double>::InnerIterator it(cb.b); it; ++it)
            gt.emplace_back(off, it.index(), -it.value());
        cp.h[off] = cb.f;
        for (int col = 0; col < cb.A.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(cb.A, col); it; ++it)
                gt.emplace_back(off + 1 + it.row(), it.col(), -it.value());
        off += 1 + static_cast<int>(cb.A.rows());
    }
    cp.G.setFromTriplets(gt.begin(), gt.end());
    return cp;
}

PrimalDualSolution solve_opf(const ParametricSocp &ps, const VectorXd &theta, const SolveOptions &opts) {
    ConeProgram cp = instantiate(ps, theta);
    IpmSettings st;
    st.feas_tol = std::min(1e-9, opts.kkt_tol);
    st.gap_abs_tol = std::min(1e-10, opts.kkt_tol * 0.1);
    st.gap_rel_tol = std::min(1e-9, opts.kkt_tol);
    st.max_iter = opts.max_iter;
    st.polish = opts.polish;
    ConeSolution cs = solve_cone_program(cp, st);

    PrimalDualSolution sol;
    sol.status = cs.status;
    sol.iterations = cs.iterations;
    if (cs.status == SolveStatus::infeasible || cs.status == SolveStatus::unbounded) return sol;

    sol.x = cs.x;
    sol.lambda = cs.y;
    sol.mu = cs.z.head(ps.num_ineq());
    sol.nu.resize(ps.num_cones());
    int off = ps.num_ineq();
    for (int m = 0; m < ps.num_cones(); ++m) {
        const int d = 1 + static_cast<int>(ps.cones[m].A.rows());
        sol.nu_full.push_back(cs.z.segment(off, d));
        sol.nu[m] = cs.z[off];
        off += d;
    }
    sol.objective_cx = cs.obj;
    sol.objective = cs.obj + theta.head(ps.layout.n).sum();

    // direct-form KKT residuals
    VectorXd stat = ps.c + ps.Ae.transpose() * sol.lambda + ps.Ai.transpose() * sol.mu;
    double comp = 0, cone_feas = 0;
    const double xscale = std::max(1.0, sol.x.norm());
    for (int m = 0; m < ps.num_cones(); ++m) {
        const SocBlock &cb = ps.cones[m];
        const VectorXd ax = cb.A * sol.x;
        const double anorm = ax.norm();
        const double rhs = cb.b.dot(sol.x) + cb.f;
        cone_feas = std::max(cone_feas, anorm - rhs);
        comp = std::max(comp, std::abs(sol.nu[m] * (anorm - rhs)));
        if (anorm > 1e-12 * xscale) stat += sol.nu[m] * (cb.A.transpose() * (ax / anorm));
        for (Eigen::SparseVector<double>::InnerIterator it(cb.b); it; ++it)
            stat[it.index()] -= sol.nu[m] * it.value();
    }
    const VectorXd slack = ps.Ai * sol.x - (ps.Bi * theta + ps.fi);
    for (int i = 0; i < slack.size(); ++i) comp = std::max(comp, std::abs(sol.mu[i] * slack[i]));
    sol.stationarity_inf = stat.lpNorm<Eigen::Infinity>();
    sol.primal_eq_inf = (ps.Ae * sol.x - (ps.Be * theta + ps.fe)).lpNorm<Eigen::Infinity>();
    sol.primal_ineq_inf = std::max(0.0, slack.maxCoeff());
    sol.cone_feas_inf = std::max(0.0, cone_feas);
    sol.comp_inf = comp;

    if (sol.status == SolveStatus::optimal && sol.kkt_residual() > opts.kkt_tol)
        sol.status = SolveStatus::numerical_error;
    return sol;
}

ExactnessReport check_exactness(const FeederModel &f, const XLayout &L, const VectorXd &x, double exact_tol) {
    const int n = f.bus_count();
    ExactnessReport rep;
    rep.gap.resize(n);
    rep.gap_rel.resize(n);
    for (int k = 1; k <= n; ++k) {
        const double P = x[L.pflow(k)], Q = x[L.qflow(k)];
        const double vpi = x[L.v_or_v0(f.parent_of(k))];
        const double ell = x[L.ell(k)];
        const double lhs = std::sqrt(4 * P * P + 4 * Q * Q + (vpi - ell) * (vpi - ell));
        const double rhs = ell + vpi;
        rep.gap[k - 1] = rhs - lhs;
        rep.gap_rel[k - 1] = (rhs - lhs) / std::max(rhs, 1e-300);
    }
    rep.max_rel_gap = rep.gap_rel.cwiseAbs().maxCoeff();
    rep.exact = rep.max_rel_gap <= exact_tol;
    return rep;
}

} // namespace gpopf
