#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library's numerical code paths.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

inline double poisson_log_pmf(std::int64_t y, double mu) {
    if (mu == 0.0) return y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    const double yd = static_cast<double>(y);
    return yd * std::log(mu) - mu - std::lgamma(yd + 1.0);
}

// Straight-loop INGARCH mean path with covariates (t-1)^k.
inline std::vector<double> ingarch_path(const std::vector<std::int64_t>& y, double a0, double a1,
                                        const std::vector<double>& gamma, double mu1) {
    std::vector<double> mu(y.size());
    mu[0] = mu1;
    for (std::size_t t = 1; t < y.size(); ++t) {
        // t here is zero-based, so the one-based lag index t-1 equals this t.
        const double lag = static_cast<double>(t);
        double trend = 0.0;
        for (std::size_t k = 0; k < gamma.size(); ++k) trend += gamma[k] * std::pow(lag, static_cast<double>(k));
        mu[t] = a0 * mu[t - 1] + a1 * static_cast<double>(y[t - 1]) + trend;
    }
    return mu;
}

inline double ingarch_loglik(const std::vector<std::int64_t>& y, double a0, double a1,
                             const std::vector<double>& gamma, double mu1) {
    const auto mu = ingarch_path(y, a0, a1, gamma, mu1);
    double sum = 0.0;
    for (std::size_t t = 1; t < y.size(); ++t) sum += poisson_log_pmf(y[t], mu[t]);
    return sum;
}

struct PanelData {
    std::vector<std::vector<std::int64_t>> counts;  // [region][t-1]
    std::vector<double> populations;
};

// Pooled Poisson GLM, log mu = b0 + b1 t + b2 t^2 + log pop, by IRLS on the
// raw design with normal equations.
inline Eigen::Vector3d irls_glm(const PanelData& data, int iterations = 100) {
    Eigen::Vector3d beta = Eigen::Vector3d::Zero();
    double total = 0.0;
    double exposure = 0.0;
    for (std::size_t i = 0; i < data.counts.size(); ++i) {
        for (auto c : data.counts[i]) total += static_cast<double>(c);
        exposure += data.populations[i] * static_cast<double>(data.counts[i].size());
    }
    beta[0] = std::log(std::max(total, 0.5) / exposure);
    for (int it = 0; it < iterations; ++it) {
        Eigen::Matrix3d xtwx = Eigen::Matrix3d::Zero();
        Eigen::Vector3d xtwz = Eigen::Vector3d::Zero();
        for (std::size_t i = 0; i < data.counts.size(); ++i) {
            const double offset = std::log(data.populations[i]);
            for (std::size_t k = 0; k < data.counts[i].size(); ++k) {
                const double t = static_cast<double>(k + 1);
                const Eigen::Vector3d x(1.0, t, t * t);
                const double eta = x.dot(beta) + offset;
                const double mu = std::exp(eta);
                const double z = eta - offset + (static_cast<double>(data.counts[i][k]) - mu) / mu;
                xtwx += mu * x * x.transpose();
                xtwz += mu * z * x;
            }
        }
        const Eigen::Vector3d next = xtwx.ldlt().solve(xtwz);
        const double change = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        if (change < 1e-13) break;
    }
    return beta;
}

inline double glm_loglik(const PanelData& data, const Eigen::Vector3d& beta) {
    double sum = 0.0;
    for (std::size_t i = 0; i < data.counts.size(); ++i) {
        for (std::size_t k = 0; k < data.counts[i].size(); ++k) {
            const double t = static_cast<double>(k + 1);
            const double mu = std::exp(beta[0] + beta[1] * t + beta[2] * t * t + std::log(data.populations[i]));
            sum += poisson_log_pmf(data.counts[i][k], mu);
        }
    }
    return sum;
}

// log of p(y_i | b) N(b; 0, sigma) for one region.
inline double joint_log_density(const std::vector<std::int64_t>& y, double population,
                                const Eigen::Vector3d& beta, const Eigen::Matrix3d& sigma,
                                const Eigen::Vector3d& b) {
    const Eigen::Matrix3d precision = sigma.inverse();
    const double log_det = std::log(sigma.determinant());
    double sum = -0.5 * b.dot(precision * b) - 0.5 * log_det - 1.5 * std::log(2.0 * std::numbers::pi);
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double t = static_cast<double>(k + 1);
        const Eigen::Vector3d x(1.0, t, t * t);
        sum += poisson_log_pmf(y[k], std::exp(x.dot(beta + b) + std::log(population)));
    }
    return sum;
}

// Marginal log-likelihood of one region by brute-force integration of the
// joint density over a dense 3-D grid. The grid is laid out in whitened
// coordinates around an approximate mode; the change of variables is exact,
// so the result is a quadrature of the true integral, not a Laplace value.
inline double grid_marginal_region(const std::vector<std::int64_t>& y, double population,
                                   const Eigen::Vector3d& beta, const Eigen::Matrix3d& sigma,
                                   int points_per_axis = 61, double half_width = 7.0) {
    auto f = [&](const Eigen::Vector3d& b) { return joint_log_density(y, population, beta, sigma, b); };
    const Eigen::Matrix3d precision = sigma.inverse();
    // Analytic gradient and negative Hessian of the joint in b.
    auto derivatives = [&](const Eigen::Vector3d& b, Eigen::Vector3d& g, Eigen::Matrix3d& h) {
        g = -precision * b;
        h = precision;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double t = static_cast<double>(k + 1);
            const Eigen::Vector3d x(1.0, t, t * t);
            const double mu = std::exp(x.dot(beta + b) + std::log(population));
            g += (static_cast<double>(y[k]) - mu) * x;
            h += mu * x * x.transpose();
        }
    };
    // Approximate mode; it only centres and scales the grid.
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    Eigen::Vector3d g;
    Eigen::Matrix3d neg_h;
    for (int it = 0; it < 200; ++it) {
        derivatives(b, g, neg_h);
        const Eigen::Vector3d step = neg_h.ldlt().solve(g);
        double scale = 1.0;
        const double base = f(b);
        while (scale > 1e-8 && !(f(b + scale * step) >= base)) scale *= 0.5;
        b += scale * step;
        if ((scale * step).norm() < 1e-12) break;
    }
    derivatives(b, g, neg_h);
    const Eigen::Matrix3d cov = neg_h.inverse();
    const Eigen::Matrix3d root = cov.llt().matrixL();
    const double jacobian = root.determinant();
    const double peak = f(b);

    const int n = points_per_axis;
    const double dz = 2.0 * half_width / (n - 1);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < n; ++k) {
                const Eigen::Vector3d z(-half_width + i * dz, -half_width + j * dz, -half_width + k * dz);
                sum += std::exp(f(b + root * z) - peak);
            }
        }
    }
    return peak + std::log(sum * dz * dz * dz * jacobian);
}

inline double grid_marginal(const PanelData& data, const Eigen::Vector3d& beta, const Eigen::Matrix3d& sigma) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.counts.size(); ++i) {
        total += grid_marginal_region(data.counts[i], data.populations[i], beta, sigma);
    }
    return total;
}

// Weight minimizing |x p1 + (1 - x) p2 - y| summed over triples, by scanning
// x = 0, 1/steps, ..., 1. Returns (x, objective).
struct GridWeight {
    double x = 0.0;
    double objective = 0.0;
};

inline double weight_objective(const std::vector<std::array<double, 3>>& triples, double x) {
    double sum = 0.0;
    for (const auto& t : triples) sum += std::abs(x * t[0] + (1.0 - x) * t[1] - t[2]);
    return sum;
}

inline GridWeight grid_weight(const std::vector<std::array<double, 3>>& triples, int steps = 10000) {
    GridWeight best{0.0, std::numeric_limits<double>::infinity()};
    for (int s = 0; s <= steps; ++s) {
        const double x = static_cast<double>(s) / steps;
        const double v = weight_objective(triples, x);
        if (v < best.objective) best = {x, v};
    }
    return best;
}

// Exact Poisson quantile: smallest k with P(X <= k) >= q.
inline std::int64_t poisson_quantile(double lambda, double q) {
    double log_p = -lambda;
    double cdf = std::exp(log_p);
    std::int64_t k = 0;
    while (cdf < q) {
        ++k;
        log_p += std::log(lambda) - std::log(static_cast<double>(k));
        cdf += std::exp(log_p);
    }
    return k;
}

}  // namespace oracle
