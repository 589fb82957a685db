#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "socp_opf.hpp"

namespace gpopf {

struct SensitivityOptions {
    double strict_tol = 1e-7; // binding duals below this flag degeneracy
    double slack_tol = 1e-7;
    /// Idle inverter cones (||A_m x|| = 0, nu_m = 0) are non-differentiable in
    /// SOC form; they are dropped by default, or carried in their smooth
    /// quadratic form with zero dual.
    enum class IdleCones { drop, quadratic };
    IdleCones idle_cones = IdleCones::drop;
    double rank_tol_factor = -1; // <0: max(dim) * eps relative to sigma_max
    double dx_tol = 1e-8;        // null-space sparsity threshold on the dx block
    bool force_svd = false;      // skip the nonsingular LU fast path
};

/// Linearized KKT system S d(delta) = U d(theta) at a primal/dual optimum,
/// with delta = (dx, dlambda, dmu, dnu). Row blocks follow the same order:
/// equality feasibility, stationarity, inequality complementarity, cone
/// complementarity.
struct KktSystem {
    Eigen::SparseMatrix<double> S;
    Eigen::SparseMatrix<double> U;
    int nx = 0, ne = 0, ni = 0, nc = 0; // nc = cones kept in the system
    std::vector<int> kept_cones;        // parametric-cone index per dnu column
    std::vector<int> quad_cones;        // kept cones carried in quadratic form
    std::vector<int> dropped_cones;
    std::vector<bool> degenerate_ineq; // binding with dual below strict_tol
    std::vector<bool> degenerate_cone;
    int dim() const { return nx + ne + ni + nc; }
    bool any_degenerate() const;
};

KktSystem build_su(const ParametricSocp &ps, const PrimalDualSolution &sol, const Eigen::VectorXd &theta,
                   const SensitivityOptions &opts = {});

struct ExistenceReport {
    bool exists = false;
    double residual = 0; // worst dx-block magnitude over the null-space basis
    int null_dim = 0;
    int rank = 0;
};

/// Null-space sparsity test: sensitivities exist iff no null vector of S has
/// mass on the dx block.
ExistenceReport check_existence(const KktSystem &k, const SensitivityOptions &opts = {});

struct SensitivityRecord {
    bool exists = false;
    Eigen::MatrixXd jac; // nx x M, columns in canonical theta order
    double null_residual = 0;
    int rank = 0;
};

/// Minimizer Jacobian: dx rows of the minimum-norm solution of S ddelta = U.
/// A nonsingular S takes a sparse LU fast path (identical result); otherwise
/// the SVD pseudoinverse route of check_existence is used.
SensitivityRecord solve_sensitivities(const KktSystem &k, const SensitivityOptions &opts = {});

/// True iff binding constraints carry strictly positive duals and strictly
/// positive duals sit on binding constraints, for inequalities and cones.
bool strict_complementarity(const ParametricSocp &ps, const PrimalDualSolution &sol,
                            const Eigen::VectorXd &theta, double slack_tol = 1e-7, double strict_tol = 1e-7);

} // namespace gpopf
