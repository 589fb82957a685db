#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace gpopf {

/// Relative percent error: 100 |est - truth| / |mean of the truth pool|.
/// The pool mean is taken in absolute value so entries stay nonnegative for
/// sign-mixed targets; a vanishing pool mean is an error.
Eigen::VectorXd rpe(const Eigen::VectorXd &estimates, const Eigen::VectorXd &truths);
Eigen::VectorXd rpe(const Eigen::VectorXd &estimates, const Eigen::VectorXd &truths, double normalizer);

struct EcdfPoint {
    double value;
    double fraction;
};

/// Right-continuous empirical CDF; duplicate values collapse to one point.
std::vector<EcdfPoint> ecdf(const std::vector<double> &values);

double quantile(const std::vector<double> &values, double q);

struct KmeansResult {
    std::vector<int> assignment;
    Eigen::MatrixXd centers; // k x dim
    double distortion = 0;
    int iterations = 0;
};

/// Lloyd iterations from a seeded k-means++ start; deterministic for a fixed
/// seed, at most 100 rounds.
KmeansResult kmeans(const std::vector<Eigen::VectorXd> &points, int k, std::uint64_t seed);

} // namespace gpopf
