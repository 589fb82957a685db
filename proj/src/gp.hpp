#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace gpopf {

/// Gaussian-kernel hyperparameters in raw label units. Optimization happens
/// in log-space; epsilon is only meaningful for sensitivity-informed models.
struct Hyperparams {
    double alpha = 1.0;   // kernel scale
    double beta = 1.0;    // inverse squared length-scale
    double gamma = 1e-4;  // label noise variance
    double epsilon = 1e-4; // gradient-label noise variance
};

struct TrainingSet {
    std::vector<Eigen::VectorXd> thetas;
    Eigen::VectorXd y;
    std::optional<Eigen::MatrixXd> grads; // T x M, all-or-none
    std::string target;

    int size() const { return static_cast<int>(thetas.size()); }
    int dim() const { return thetas.empty() ? 0 : static_cast<int>(thetas[0].size()); }
    bool has_grads() const { return grads.has_value(); }
    void validate() const;
};

double kernel(const Eigen::VectorXd &ti, const Eigen::VectorXd &tj, const Hyperparams &h);
/// grad of the kernel in its second argument: beta k (ti - tj)
Eigen::VectorXd kernel_grad(const Eigen::VectorXd &ti, const Eigen::VectorXd &tj, const Hyperparams &h);
/// mixed second derivative: beta k [I - beta (ti-tj)(ti-tj)']
Eigen::MatrixXd kernel_hess(const Eigen::VectorXd &ti, const Eigen::VectorXd &tj, const Hyperparams &h);

enum class GpMode { plain, sensitivity_informed };

/// Training covariance: T x T for plain mode; T(M+1) square for SI mode with
/// the stacked ordering [y_1..y_T; grad(theta_1); ...; grad(theta_T)].
Eigen::MatrixXd build_cov(const TrainingSet &ts, const Hyperparams &h, GpMode mode);

struct MleReport {
    Hyperparams hyper;
    double log_likelihood = 0; // plain-stage value at the optimum
    bool converged = true;
    int evaluations = 0;
};

struct MleOptions {
    int multistarts = 8;
    int max_iter = 120;
    std::uint64_t seed = 0x9e1dULL;
    bool fit_epsilon = true;  // second stage, needs gradients
    int epsilon_subset = 0;   // >0: fit epsilon on this many training points
};

/// Staged MLE: (alpha, beta, gamma) maximize the plain marginal likelihood
/// with multi-start BFGS in log-space; epsilon follows by a 1-D search of the
/// augmented likelihood with the first three frozen.
MleReport fit_hyperparams(const TrainingSet &ts, const MleOptions &opts = {});

/// log marginal likelihood of the plain GP and its gradient in
/// (log alpha, log beta, log gamma); exposed for testing.
double plain_log_marginal(const TrainingSet &ts, const Hyperparams &h, Eigen::Vector3d *grad_log = nullptr);

struct GpModel {
    std::string target;
    GpMode mode = GpMode::plain;
    Hyperparams hyper; // raw label units
    std::vector<Eigen::VectorXd> thetas;
    Eigen::VectorXd weights; // standardized-unit solve of cov^-1 ybar
    double label_mean = 0;
    double label_scale = 1;
    std::uint64_t train_hash = 0;
    Eigen::LLT<Eigen::MatrixXd> chol; // factor of the standardized covariance

    int dim() const { return thetas.empty() ? 0 : static_cast<int>(thetas[0].size()); }
};

GpModel train(const TrainingSet &ts, const Hyperparams &h, GpMode mode);

struct Prediction {
    double mean = 0;
    double variance = 0; // clamped at zero
    double std_dev = 0;
    double raw_variance = 0; // pre-clamp, for diagnostics
};

Prediction predict(const GpModel &m, const Eigen::VectorXd &theta);

/// Closed-form gradient of the posterior mean (for gradient-interpolation
/// checks on SI models).
Eigen::VectorXd predict_mean_grad(const GpModel &m, const Eigen::VectorXd &theta);

std::uint64_t training_set_hash(const TrainingSet &ts);

std::string gp_model_to_json(const GpModel &m);
GpModel gp_model_from_json(const std::string &text);

} // namespace gpopf
