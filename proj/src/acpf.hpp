#pragma once

#include <Eigen/Dense>

#include "feeder.hpp"

namespace gpopf {

/// Converged DistFlow power-flow state. v holds squared voltages for buses
/// 0..N (entry 0 is the substation); P, Q, ell are per-line.
struct PfState {
    Eigen::VectorXd v;   // N+1
    Eigen::VectorXd P;   // N
    Eigen::VectorXd Q;   // N
    Eigen::VectorXd ell; // N
    double residual = 0; // max violation over all four equation families
    int iterations = 0;
    bool converged = false;
};

struct PfOptions {
    double tol = 1e-10;
    int max_iter = 100;
};

/// Backward/forward sweep for the exact (non-relaxed) DistFlow equations.
/// p_net/q_net are net injections at buses 1..N.
PfState solve_pf(const FeederModel &f, const Eigen::VectorXd &p_net, const Eigen::VectorXd &q_net,
                 double v0, const PfOptions &opts = {});

struct LimitReport {
    int voltage_violations = 0;
    int current_violations = 0;
    double worst_dev = 0;      // max |sqrt(v) - 1| over buses 1..N
    double worst_ell_excess = 0;
    Eigen::VectorXd dev;       // per bus
};

/// Band is on voltage magnitude deviation from 1 pu (default +-3%).
LimitReport check_limits(const PfState &s, const FeederModel &f, double band = 0.03);

} // namespace gpopf
