#include "metrics.hpp"

#include <algorithm>
#include <cmath>

#include "common.hpp"

namespace gpopf {

using Eigen::VectorXd;

VectorXd rpe(const VectorXd &estimates, const VectorXd &truths, double normalizer) {
    if (estimates.size() != truths.size()) throw Error::invalid("rpe: length mismatch");
    if (!(std::abs(normalizer) > 1e-300)) throw Error::invalid("rpe: zero normalizer (degenerate truth pool)");
    return 100.0 * (estimates - truths).cwiseAbs() / std::abs(normalizer);
}

VectorXd rpe(const VectorXd &estimates, const VectorXd &truths) {
    if (truths.size() == 0) throw Error::invalid("rpe: empty truth pool");
    return rpe(estimates, truths, truths.mean());
}

std::vector<EcdfPoint> ecdf(const std::vector<double> &values) {
    if (values.empty()) throw Error::invalid("ecdf: empty sample");
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    std::vector<EcdfPoint> out;
    const double n = static_cast<double>(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        if (i + 1 < v.size() && v[i + 1] == v[i]) continue; // keep the last of a tie
        out.push_back({v[i], static_cast<double>(i + 1) / n});
    }
    return out;
}

double quantile(const std::vector<double> &values, double q) {
    if (values.empty()) throw Error::invalid("quantile: empty sample");
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    const double pos = q * (static_cast<double>(v.size()) - 1.0);
    const size_t lo = static_cast<size_t>(std::floor(std::clamp(pos, 0.0, double(v.size() - 1))));
    const size_t hi = std::min(lo + 1, v.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * v[lo] + w * v[hi];
}

KmeansResult kmeans(const std::vector<VectorXd> &points, int k, std::uint64_t seed) {
    const int n = static_cast<int>(points.size());
    if (k < 1 || k > n) throw Error::invalid("kmeans: k must be in [1, #points]");
    const int dim = static_cast<int>(points[0].size());

    // k-means++ seeding
    Rng rng(seed);
    std::vector<int> centers_idx;
    centers_idx.push_back(static_cast<int>(rng.next_double() * n));
    VectorXd d2(n);
    for (int i = 0; i < n; ++i) d2[i] = (points[i] - points[centers_idx[0]]).squaredNorm();
    while (static_cast<int>(centers_idx.size()) < k) {
        const double total = d2.sum();
        int pick = 0;
        if (total <= 0) {
            pick = static_cast<int>(rng.next_double() * n);
        } else {
            double r = rng.next_double() * total;
            for (; pick < n - 1; ++pick) {
                r -= d2[pick];
                if (r <= 0) break;
            }
        }
        centers_idx.push_back(pick);
        for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], (points[i] - points[pick]).squaredNorm());
    }

    KmeansResult res;
    res.centers.resize(k, dim);
    for (int c = 0; c < k; ++c) res.centers.row(c) = points[centers_idx[c]].transpose();
    res.assignment.assign(n, -1);

    for (int it = 0; it < 100; ++it) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = (points[i].transpose() - res.centers.row(0)).squaredNorm();
            for (int c = 1; c < k; ++c) {
                const double d = (points[i].transpose() - res.centers.row(c)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (res.assignment[i] != best) {
                res.assignment[i] = best;
                changed = true;
            }
        }
        res.iterations = it + 1;
        // recompute centers; empty clusters grab the farthest point
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            sums.row(res.assignment[i]) += points[i].transpose();
            ++counts[res.assignment[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                res.centers.row(c) = sums.row(c) / counts[c];
            } else {
                int far = 0;
                double fd = -1;
                for (int i = 0; i < n; ++i) {
                    const double d = (points[i].transpose() - res.centers.row(res.assignment[i])).squaredNorm();
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                res.centers.row(c) = points[far].transpose();
                res.assignment[far] = c;
                changed = true;
            }
        }
        if (!changed) break;
    }
    res.distortion = 0;
    for (int i = 0; i < n; ++i)
        res.distortion += (points[i].transpose() - res.centers.row(res.assignment[i])).squaredNorm();
    return res;
}

} // namespace gpopf
