#include "acpf.hpp"

#include <cmath>

namespace gpopf {

using Eigen::VectorXd;

PfState solve_pf(const FeederModel &f, const VectorXd &p_net, const VectorXd &q_net, double v0,
                 const PfOptions &opts) {
    const int n = f.bus_count();
    if (p_net.size() != n || q_net.size() != n) throw Error::invalid("solve_pf: injection vectors must have length N");
    if (!(v0 > 0)) throw Error::invalid("solve_pf: v0 must be positive");

    PfState st;
    st.v = VectorXd::Constant(n + 1, v0);
    st.P = VectorXd::Zero(n);
    st.Q = VectorXd::Zero(n);
    st.ell = VectorXd::Zero(n);

    auto residual = [&]() {
        double res = 0;
        for (int k = 1; k <= n; ++k) {
            // p_n = sum_c P_c - (P_n - r ell_n), and the q analogue
            double sp = -st.P[k - 1] + f.line_r(k) * st.ell[k - 1];
            double sq = -st.Q[k - 1] + f.line_x(k) * st.ell[k - 1];
            for (int c : f.children[k]) {
                sp += st.P[c - 1];
                sq += st.Q[c - 1];
            }
            res = std::max(res, std::abs(p_net[k - 1] - sp));
            res = std::max(res, std::abs(q_net[k - 1] - sq));
            const double rk = f.line_r(k), xk = f.line_x(k);
            const double vdrop = st.v[f.parent_of(k)] + (rk * rk + xk * xk) * st.ell[k - 1] -
                                 2.0 * (rk * st.P[k - 1] + xk * st.Q[k - 1]);
            res = std::max(res, std::abs(st.v[k] - vdrop));
            const double vpi = st.v[f.parent_of(k)];
            res = std::max(res, std::abs(st.ell[k - 1] - (st.P[k - 1] * st.P[k - 1] + st.Q[k - 1] * st.Q[k - 1]) / vpi));
        }
        return res;
    };

    for (int it = 0; it < opts.max_iter; ++it) {
        // backward: aggregate flows leaves -> root using current ell
        for (int k = n; k >= 1; --k) {
            double sp = -p_net[k - 1] + f.line_r(k) * st.ell[k - 1];
            double sq = -q_net[k - 1] + f.line_x(k) * st.ell[k - 1];
            for (int c : f.children[k]) {
                sp += st.P[c - 1];
                sq += st.Q[c - 1];
            }
            st.P[k - 1] = sp;
            st.Q[k - 1] = sq;
        }
        // forward: propagate squared voltages root -> leaves
        st.v[0] = v0;
        for (int k = 1; k <= n; ++k) {
            const double rk = f.line_r(k), xk = f.line_x(k);
            st.v[k] = st.v[f.parent_of(k)] + (rk * rk + xk * xk) * st.ell[k - 1] -
                      2.0 * (rk * st.P[k - 1] + xk * st.Q[k - 1]);
            if (st.v[k] <= 0) throw Error::solver("solve_pf: voltage collapse at bus " + std::to_string(f.original_id(k)));
        }
        // refresh squared currents
        for (int k = 1; k <= n; ++k) {
            const double vpi = st.v[f.parent_of(k)];
            st.ell[k - 1] = (st.P[k - 1] * st.P[k - 1] + st.Q[k - 1] * st.Q[k - 1]) / vpi;
        }
        st.iterations = it + 1;
        st.residual = residual();
        if (st.residual <= opts.tol) {
            st.converged = true;
            return st;
        }
        if (!std::isfinite(st.residual)) break;
    }
    throw Error::solver("solve_pf: sweep did not converge (residual " + format_double(st.residual) + ")");
}

LimitReport check_limits(const PfState &s, const FeederModel &f, double band) {
    const int n = f.bus_count();
    LimitReport rep;
    rep.dev.resize(n);
    for (int k = 1; k <= n; ++k) {
        const double dev = std::abs(std::sqrt(s.v[k]) - 1.0);
        rep.dev[k - 1] = dev;
        rep.worst_dev = std::max(rep.worst_dev, dev);
        if (dev > band) ++rep.voltage_violations;
        const double excess = s.ell[k - 1] - f.line_lbar(k);
        if (excess > 0) {
            ++rep.current_violations;
            rep.worst_ell_excess = std::max(rep.worst_ell_excess, excess);
        }
    }
    return rep;
}

} // namespace gpopf
