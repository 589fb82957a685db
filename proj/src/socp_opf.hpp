#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "feeder.hpp"
#include "ipm.hpp"

namespace gpopf {

/// Index map of the OPF decision vector
/// x = [p^g (N_g); q^g (N_g); P (N); Q (N); v (N); ell (N); v0].
struct XLayout {
    int n = 0;
    int ng = 0;
    int pg(int inv) const { return inv; }
    int qg(int inv) const { return ng + inv; }
    int pflow(int bus) const { return 2 * ng + (bus - 1); }
    int qflow(int bus) const { return 2 * ng + n + (bus - 1); }
    int v(int bus) const { return 2 * ng + 2 * n + (bus - 1); }
    int ell(int bus) const { return 2 * ng + 3 * n + (bus - 1); }
    int v0() const { return 2 * ng + 4 * n; }
    int v_or_v0(int bus) const { return bus == 0 ? v0() : v(bus); }
    int dim() const { return 2 * ng + 4 * n + 1; }
};

/// One second-order cone constraint ||A x|| <= b'x + f.
struct SocBlock {
    Eigen::SparseMatrix<double> A;
    Eigen::SparseVector<double> b;
    double f = 0;
};

/// The OPF written as a parametric SOCP over theta:
///   min c'x  s.t.  Ae x = Be theta + fe,  Ai x <= Bi theta + fi,
///                  ||A_m x|| <= b_m'x + f_m.
/// Cone data is theta-independent. The linear objective drops the
/// theta-linear offset sum(p_load); full objective (substation active intake
/// including losses) is c'x + sum(p_load).
struct ParametricSocp {
    XLayout layout;
    int M = 0;
    Eigen::VectorXd c;
    Eigen::SparseMatrix<double> Ae, Be;
    Eigen::VectorXd fe;
    Eigen::SparseMatrix<double> Ai, Bi;
    Eigen::VectorXd fi;
    std::vector<SocBlock> cones; // N relaxation cones, then N_g inverter cones
    int relax_cones = 0;

    int num_eq() const { return static_cast<int>(fe.size()); }
    int num_ineq() const { return static_cast<int>(fi.size()); }
    int num_cones() const { return static_cast<int>(cones.size()); }
};

ParametricSocp build_socp(const FeederModel &f);

/// Materializes right-hand sides for one theta.
ConeProgram instantiate(const ParametricSocp &ps, const Eigen::VectorXd &theta);

struct SolveOptions {
    double kkt_tol = 1e-8;
    int max_iter = 100;
    bool polish = true;
};

struct PrimalDualSolution {
    SolveStatus status = SolveStatus::numerical_error;
    Eigen::VectorXd x;
    Eigen::VectorXd lambda; // equality duals
    Eigen::VectorXd mu;     // inequality duals >= 0
    Eigen::VectorXd nu;     // first entries of the conic duals, >= 0
    std::vector<Eigen::VectorXd> nu_full;
    double objective = 0;    // c'x + sum(p_load)
    double objective_cx = 0; // linear part only
    int iterations = 0;
    // Residuals of the direct-form KKT conditions at (x, lambda, mu, nu).
    double stationarity_inf = 0;
    double primal_eq_inf = 0;
    double primal_ineq_inf = 0;
    double cone_feas_inf = 0;
    double comp_inf = 0;

    double kkt_residual() const {
        return std::max({stationarity_inf, primal_eq_inf, primal_ineq_inf, cone_feas_inf, comp_inf});
    }
};

PrimalDualSolution solve_opf(const ParametricSocp &ps, const Eigen::VectorXd &theta,
                             const SolveOptions &opts = {});

struct ExactnessReport {
    Eigen::VectorXd gap;     // absolute gaps, relaxation cones only
    Eigen::VectorXd gap_rel; // gap / (ell + v_parent)
    double max_rel_gap = 0;
    bool exact = false;
};

/// Relaxation tightness of the N DistFlow cones:
/// gap_m = (ell_n + v_pi) - ||[2P; 2Q; v_pi - ell]|| >= 0, zero iff exact.
ExactnessReport check_exactness(const FeederModel &f, const XLayout &layout, const Eigen::VectorXd &x,
                                double exact_tol = 1e-6);
inline ExactnessReport check_exactness(const FeederModel &f, const ParametricSocp &ps,
                                       const PrimalDualSolution &sol, double exact_tol = 1e-6) {
    return check_exactness(f, ps.layout, sol.x, exact_tol);
}

} // namespace gpopf
