#pragma once

#include <Eigen/Dense>

#include "feeder.hpp"
#include "ipm.hpp"

namespace gpopf {

/// Affine voltage model v = R p + X q + v0 1 with the path-intersection
/// sensitivity matrices R_{nm} = 2 sum of r over path(n) cap path(m).
struct LinearGridModel {
    Eigen::MatrixXd R;
    Eigen::MatrixXd X;
    double v0 = 1.0;
};

LinearGridModel build_rx(const FeederModel &f, double v0 = 1.0);

struct LopfOptions {
    double v0 = 1.0;
    bool half_loss = false; // use (1/2) p'Rp + (1/2) q'Rq instead of the printed form
    double kkt_tol = 1e-8;
};

struct LopfResult {
    SolveStatus status = SolveStatus::numerical_error;
    Eigen::VectorXd pg; // inverter-bus order
    Eigen::VectorXd qg;
    double objective = 0; // approximate substation intake incl. loss surrogate
    double kkt_residual = 0;
};

/// Quadratic-program OPF surrogate: linear voltage model, quadratic loss
/// term, box bounds on p^g, voltage band, and a 32-half-plane inner
/// approximation of each inverter's apparent-power disk. Line-current limits
/// are not modeled. Solved through the cone backend with epigraph variables.
LopfResult solve_lopf(const FeederModel &f, const Eigen::VectorXd &theta, const LopfOptions &opts = {});

} // namespace gpopf
