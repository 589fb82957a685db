#include "sensitivity.hpp"

#include <Eigen/SVD>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>

namespace gpopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

bool KktSystem::any_degenerate() const {
    return std::find(degenerate_ineq.begin(), degenerate_ineq.end(), true) != degenerate_ineq.end() ||
           std::find(degenerate_cone.begin(), degenerate_cone.end(), true) != degenerate_cone.end();
}

KktSystem build_su(const ParametricSocp &ps, const PrimalDualSolution &sol, const VectorXd &theta,
                   const SensitivityOptions &opts) {
    if (sol.x.size() == 0) throw Error::invalid("build_su: unsolved instance");
    KktSystem k;
    k.nx = ps.layout.dim();
    k.ne = ps.num_eq();
    k.ni = ps.num_ineq();

    const double xscale = std::max(1.0, sol.x.norm());

    for (int m = 0; m < ps.num_cones(); ++m) {
        const double anorm = (ps.cones[m].A * sol.x).norm();
        if (m < ps.relax_cones) {
            // exact relaxation keeps ||A_m x|| = v_pi + ell >= vmin > 0
            if (anorm <= 1e-9 * xscale)
                throw Error::invalid("build_su: relaxation cone " + std::to_string(m + 1) +
                                     " has vanishing ||A x||; relaxation not usable for sensitivities");
            k.kept_cones.push_back(m);
        } else if (anorm <= 1e-9 * xscale) {
            if (opts.idle_cones == SensitivityOptions::IdleCones::quadratic) {
                k.kept_cones.push_back(m);
                k.quad_cones.push_back(m);
            } else {
                k.dropped_cones.push_back(m);
            }
        } else {
            k.kept_cones.push_back(m);
        }
    }
    k.nc = static_cast<int>(k.kept_cones.size());

    const int nx = k.nx, ne = k.ne, ni = k.ni, nc = k.nc;
    const int r_eq = 0, r_st = ne, r_in = ne + nx, r_cn = ne + nx + ni;
    const int c_x = 0, c_la = nx, c_mu = nx + ne, c_nu = nx + ne + ni;

    std::vector<Triplet> st, ut;

    // row block 1: Ae dx = Be dtheta
    for (int col = 0; col < ps.Ae.outerSize(); ++col)
        for (SpMat::InnerIterator it(ps.Ae, col); it; ++it)
            st.emplace_back(r_eq + it.row(), c_x + it.col(), it.value());
    for (int col = 0; col < ps.Be.outerSize(); ++col)
        for (SpMat::InnerIterator it(ps.Be, col); it; ++it)
            ut.emplace_back(r_eq + it.row(), it.col(), it.value());

    // row block 2: stationarity differential
    for (int col = 0; col < ps.Ae.outerSize(); ++col)
        for (SpMat::InnerIterator it(ps.Ae, col); it; ++it)
            st.emplace_back(r_st + it.col(), c_la + it.row(), it.value()); // Ae'
    for (int col = 0; col < ps.Ai.outerSize(); ++col)
        for (SpMat::InnerIterator it(ps.Ai, col); it; ++it)
            st.emplace_back(r_st + it.col(), c_mu + it.row(), it.value()); // Ai'

    for (int j = 0; j < nc; ++j) {
        const int m = k.kept_cones[j];
        const SocBlock &cb = ps.cones[m];
        const bool quad = std::find(k.quad_cones.begin(), k.quad_cones.end(), m) != k.quad_cones.end();
        if (quad) {
            // quadratic twin g = ||A x||^2 - f^2 <= 0, grad = 2 A'A x,
            // hessian = 2 A'A; dual is zero at an idle inverter.
            const VectorXd grad = 2.0 * (cb.A.transpose() * (cb.A * sol.x));
            for (int i = 0; i < nx; ++i)
                if (grad[i] != 0.0) st.emplace_back(r_st + i, c_nu + j, grad[i]);
            // S21 += nu' * 2 A'A = 0 since nu' = 0 at an idle cone
            // row block 4: nu' grad' dx + g dnu' = 0
            const double g = (cb.A * sol.x).squaredNorm() - cb.f * cb.f;
            st.emplace_back(r_cn + j, c_nu + j, g);
            continue;
        }
        const VectorXd ax = cb.A * sol.x;
        const double anorm = ax.norm();

        // column support of the cone block
        std::vector<int> cols;
        for (int col = 0; col < cb.A.outerSize(); ++col)
            if (SpMat::InnerIterator(cb.A, col)) cols.push_back(col);
        for (Eigen::SparseVector<double>::InnerIterator it(cb.b); it; ++it)
            if (!std::binary_search(cols.begin(), cols.end(), it.index()))
                cols.insert(std::lower_bound(cols.begin(), cols.end(), it.index()), static_cast<int>(it.index()));

        const int nl = static_cast<int>(cols.size());
        MatrixXd Aloc = MatrixXd::Zero(cb.A.rows(), nl);
        for (int l = 0; l < nl; ++l)
            for (SpMat::InnerIterator it(cb.A, cols[l]); it; ++it) Aloc(it.row(), l) = it.value();
        const VectorXd wloc = Aloc.transpose() * ax; // (A'A x) on the support
        VectorXd s24 = wloc / anorm;
        for (Eigen::SparseVector<double>::InnerIterator it(cb.b); it; ++it) {
            const int l = static_cast<int>(std::lower_bound(cols.begin(), cols.end(), it.index()) - cols.begin());
            s24[l] -= it.value();
        }
        for (int l = 0; l < nl; ++l)
            if (s24[l] != 0.0) st.emplace_back(r_st + cols[l], c_nu + j, s24[l]);

        // S21 contribution: nu (A'A/||Ax|| - w w'/||Ax||^3) on the support
        const double nu = sol.nu[m];
        if (nu != 0.0) {
            const MatrixXd blk =
                nu * (Aloc.transpose() * Aloc / anorm - wloc * wloc.transpose() / (anorm * anorm * anorm));
            for (int a = 0; a < nl; ++a)
                for (int b = 0; b < nl; ++b)
                    if (blk(a, b) != 0.0) st.emplace_back(r_st + cols[a], c_x + cols[b], blk(a, b));

            // row block 4: nu (x'A'A/||Ax|| - b') dx + slack dnu = 0
            for (int l = 0; l < nl; ++l)
                if (s24[l] != 0.0) st.emplace_back(r_cn + j, c_x + cols[l], nu * s24[l]);
        }
        const double cone_slack = anorm - cb.b.dot(sol.x) - cb.f; // <= 0
        st.emplace_back(r_cn + j, c_nu + j, cone_slack);
    }

    // row block 3: diag(mu) (Ai dx - Bi dtheta) + diag(slack) dmu = 0
    const VectorXd slack = ps.Ai * sol.x - (ps.Bi * theta + ps.fi); // <= 0
    for (int col = 0; col < ps.Ai.outerSize(); ++col)
        for (SpMat::InnerIterator it(ps.Ai, col); it; ++it) {
            const double v = sol.mu[it.row()] * it.value();
            if (v != 0.0) st.emplace_back(r_in + it.row(), c_x + it.col(), v);
        }
    for (int i = 0; i < ni; ++i) st.emplace_back(r_in + i, c_mu + i, slack[i]);
    for (int col = 0; col < ps.Bi.outerSize(); ++col)
        for (SpMat::InnerIterator it(ps.Bi, col); it; ++it) {
            const double v = sol.mu[it.row()] * it.value();
            if (v != 0.0) ut.emplace_back(r_in + it.row(), it.col(), v);
        }

    const int dim = k.dim();
    k.S.resize(dim, dim);
    k.S.setFromTriplets(st.begin(), st.end());
    k.U.resize(dim, ps.M);
    k.U.setFromTriplets(ut.begin(), ut.end());

    // degeneracy flags: binding constraints with vanishing duals
    k.degenerate_ineq.assign(ni, false);
    for (int i = 0; i < ni; ++i)
        if (-slack[i] <= opts.slack_tol && sol.mu[i] < opts.strict_tol) k.degenerate_ineq[i] = true;
    k.degenerate_cone.assign(ps.num_cones(), false);
    for (int m = 0; m < ps.num_cones(); ++m) {
        const double cs = ps.cones[m].b.dot(sol.x) + ps.cones[m].f - (ps.cones[m].A * sol.x).norm();
        if (cs <= opts.slack_tol && sol.nu[m] < opts.strict_tol) k.degenerate_cone[m] = true;
    }
    return k;
}

namespace {

struct SvdCache {
    Eigen::BDCSVD<MatrixXd> svd;
    double sigma_max = 0;
    double rank_tol = 0;
    int rank = 0;
};

SvdCache decompose(const KktSystem &k, const SensitivityOptions &opts) {
    SvdCache c;
    MatrixXd S = MatrixXd(k.S);
    c.svd.compute(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
    c.sigma_max = c.svd.singularValues().size() ? c.svd.singularValues()[0] : 0.0;
    const double factor = opts.rank_tol_factor > 0
                              ? opts.rank_tol_factor
                              : k.dim() * std::numeric_limits<double>::epsilon();
    c.rank_tol = factor * c.sigma_max;
    const auto &sv = c.svd.singularValues();
    c.rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > c.rank_tol) ++c.rank;
    return c;
}

ExistenceReport existence_from_svd(const KktSystem &k, const SvdCache &c) {
    ExistenceReport rep;
    rep.rank = c.rank;
    rep.null_dim = k.dim() - c.rank;
    rep.residual = 0;
    const MatrixXd &V = c.svd.matrixV();
    for (int i = c.rank; i < V.cols(); ++i)
        rep.residual = std::max(rep.residual, V.col(i).head(k.nx).lpNorm<Eigen::Infinity>());
    return rep;
}

} // namespace

ExistenceReport check_existence(const KktSystem &k, const SensitivityOptions &opts) {
    SvdCache c = decompose(k, opts);
    ExistenceReport rep = existence_from_svd(k, c);
    rep.exists = rep.residual <= opts.dx_tol;
    return rep;
}

SensitivityRecord solve_sensitivities(const KktSystem &k, const SensitivityOptions &opts) {
    SensitivityRecord rec;
    const int dim = k.dim();
    const MatrixXd U = MatrixXd(k.U);

    if (!opts.force_svd) {
        // fast path: a cleanly nonsingular S is the generic case and the LU
        // solution coincides with the pseudoinverse route
        Eigen::SparseLU<SpMat> lu;
        SpMat S = k.S;
        S.makeCompressed();
        lu.analyzePattern(S);
        lu.factorize(S);
        if (lu.info() == Eigen::Success) {
            MatrixXd X = lu.solve(U);
            const double res = (k.S * X - U).lpNorm<Eigen::Infinity>();
            const double xn = X.lpNorm<Eigen::Infinity>();
            if (std::isfinite(xn) && xn < 1e9 && res <= 1e-8 * (1.0 + U.lpNorm<Eigen::Infinity>())) {
                rec.exists = true;
                rec.rank = dim;
                rec.null_residual = 0;
                rec.jac = X.topRows(k.nx);
                return rec;
            }
        }
    }

    SvdCache c = decompose(k, opts);
    ExistenceReport rep = existence_from_svd(k, c);
    rec.null_residual = rep.residual;
    rec.rank = rep.rank;
    rec.exists = rep.residual <= opts.dx_tol;
    if (!rec.exists) return rec;

    const auto &sv = c.svd.singularValues();
    VectorXd inv_sv = VectorXd::Zero(sv.size());
    for (int i = 0; i < c.rank; ++i) inv_sv[i] = 1.0 / sv[i];
    // S^+ U = V diag(1/sigma) U' applied column-wise
    MatrixXd X = c.svd.matrixV() * (inv_sv.asDiagonal() * (c.svd.matrixU().transpose() * U));
    rec.jac = X.topRows(k.nx);
    return rec;
}

bool strict_complementarity(const ParametricSocp &ps, const PrimalDualSolution &sol, const VectorXd &theta,
                            double slack_tol, double strict_tol) {
    const VectorXd slack = (ps.Bi * theta + ps.fi) - ps.Ai * sol.x; // >= 0
    for (int i = 0; i < slack.size(); ++i) {
        const bool binding = slack[i] <= slack_tol;
        const bool positive = sol.mu[i] >= strict_tol;
        if (binding != positive) return false;
    }
    for (int m = 0; m < ps.num_cones(); ++m) {
        const double cs = ps.cones[m].b.dot(sol.x) + ps.cones[m].f - (ps.cones[m].A * sol.x).norm();
        const bool binding = cs <= slack_tol;
        const bool positive = sol.nu[m] >= strict_tol;
        if (binding != positive) return false;
    }
    return true;
}

} // namespace gpopf
