#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <string>

#include "gp.hpp"

namespace gpopf {

/// Random Fourier basis for the Gaussian kernel: frequencies v_d drawn from
/// Normal(0, beta I_M), phases uniform on [0, 2pi). Fully regenerable from
/// (seed, D, beta, M).
struct RfBasis {
    Eigen::MatrixXd V;   // M x D
    Eigen::VectorXd phi; // D
    int D = 0;
    double beta = 0;
    std::uint64_t seed = 0;

    int dim() const { return static_cast<int>(V.rows()); }
};

RfBasis draw_basis(int M, int D, double beta, std::uint64_t seed);

/// z_d = sqrt(2/D) cos(v_d'theta + phi_d)
Eigen::VectorXd features_z(const RfBasis &b, const Eigen::VectorXd &theta);

/// s_d = -sqrt(2/D) sin(v_d'theta + phi_d) and the Jacobian row s_d v_d'
/// (the Khatri-Rao stack (s' * V)').
struct RfFeatureJac {
    Eigen::VectorXd s;   // D
    Eigen::MatrixXd jac; // D x M
};
RfFeatureJac features_jac(const RfBasis &b, const Eigen::VectorXd &theta);

enum class RfMode { rf_gp, rf_si_gp };

struct RfModel {
    std::string target;
    RfMode mode = RfMode::rf_gp;
    Hyperparams hyper; // raw label units, shared with the exact-GP fit
    RfBasis basis;
    double label_mean = 0;
    double label_scale = 1;
    std::uint64_t train_hash = 0;
    // D-sized caches; prediction never touches T-sized objects
    Eigen::VectorXd t5;  // (alpha G + I)^-1 rhs  (plain: (alpha Z'Z + gamma I)^-1 Z'y)
    Eigen::MatrixXd t6;  // (alpha G + I)^-1 G    (plain: (alpha Z'Z + gamma I)^-1 Z'Z)
    std::vector<Eigen::VectorXd> thetas; // retained for cache rebuild on load
};

/// Structured training. SI mode assembles the Gram through the Hadamard
/// identity gamma^-1 Z'Z + eps^-1 (S'S) o (V'V); the T(M+1) x D stack is
/// never materialized.
RfModel train_rf(const TrainingSet &ts, const Hyperparams &h, const RfBasis &b, RfMode mode);

Prediction predict_rf(const RfModel &m, const Eigen::VectorXd &theta);

std::string rf_model_to_json(const RfModel &m);
RfModel rf_model_from_json(const std::string &text);

} // namespace gpopf
