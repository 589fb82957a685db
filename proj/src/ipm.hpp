#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

namespace gpopf {

/// Conic program in standard form
///   min c'x  s.t.  A x = b,  G x + s = h,  s in K,
/// where K is the product of a nonnegative orthant of dimension `nlp`
/// followed by second-order cones of the listed dimensions (first entry of
/// each cone block is the scalar side). Rows of G/h are ordered the same way.
struct ConeProgram {
    Eigen::VectorXd c;
    Eigen::SparseMatrix<double> A; // p x n
    Eigen::VectorXd b;
    Eigen::SparseMatrix<double> G; // m x n
    Eigen::VectorXd h;
    int nlp = 0;
    std::vector<int> soc_dims;

    int num_vars() const { return static_cast<int>(c.size()); }
    int num_eq() const { return static_cast<int>(b.size()); }
    int num_conic() const { return static_cast<int>(h.size()); }
    void validate() const;
};

enum class SolveStatus { optimal, infeasible, unbounded, max_iterations, numerical_error };

std::string to_string(SolveStatus s);

struct IpmSettings {
    double feas_tol = 1e-9;
    double gap_abs_tol = 1e-10;
    double gap_rel_tol = 1e-9;
    int max_iter = 100;
    double step_frac = 0.99;
    double static_reg = 1e-10;
    int refine_steps = 2;
    bool polish = true; // Newton cleanup on the KKT equalities after convergence
    bool probe_infeasibility = true; // run a phase probe when iterations fail
    bool verbose = false;
};

struct ConeSolution {
    SolveStatus status = SolveStatus::numerical_error;
    Eigen::VectorXd x;
    Eigen::VectorXd y; // equality duals
    Eigen::VectorXd z; // conic duals, z in K*
    Eigen::VectorXd s; // conic slacks
    double obj = 0;
    int iterations = 0;
    bool polished = false;
    // Unscaled residual norms at the returned point.
    double res_primal_eq = 0;   // ||Ax - b||_inf
    double res_primal_cone = 0; // ||Gx + s - h||_inf
    double res_dual = 0;        // ||A'y + G'z + c||_inf
    double res_comp = 0;        // ||s o z||_inf
    double duality_gap = 0;     // s'z
};

ConeSolution solve_cone_program(const ConeProgram &cp, const IpmSettings &settings = {});

} // namespace gpopf
