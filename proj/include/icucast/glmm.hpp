#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icucast/data.hpp"
#include "icucast/interval.hpp"
#include "icucast/numeric.hpp"

namespace icucast {

// Pooled Poisson mixed model with quadratic trend:
//   log mu_it = (beta0 + b0i) + (beta1 + b1i) t + (beta2 + b2i) t^2 + log(population_i),
//   b_i ~ N(0, Sigma_B), t = 1..T inside the fitting window.

enum class CovarianceStructure {
    diagonal,      // independent intercept, slope and curvature
    block_01,      // intercept/slope correlated, curvature independent
    unstructured,  // full 3x3
};

std::string_view to_string(CovarianceStructure structure);
/// Accepts "diagonal", "block_01", "unstructured"; throws ValueError otherwise.
CovarianceStructure parse_covariance_structure(std::string_view name);
int covariance_param_count(CovarianceStructure structure);

/// Log-Cholesky parameterization of Sigma_B = L L^T. Diagonal entries of L are
/// stored as logs; off-diagonals that the structure allows are stored raw.
/// theta layout: diagonal (l00, l11, l22); block_01 (l00, L10, l11, l22);
/// unstructured (l00, L10, l11, L20, L21, l22).
struct CovarianceParams {
    CovarianceStructure structure = CovarianceStructure::block_01;
    Vector theta;

    Eigen::Matrix3d cholesky_factor() const;
    Eigen::Matrix3d matrix() const;

    /// Default start: Cholesky diagonal 0.1, off-diagonals 0.
    static CovarianceParams initial(CovarianceStructure structure);
    /// Requires a positive-definite matrix respecting the structure's zero pattern.
    static CovarianceParams from_matrix(CovarianceStructure structure, const Eigen::Matrix3d& sigma);
    /// Same Sigma_B expressed in a structure that nests this one.
    CovarianceParams embed(CovarianceStructure target) const;
    /// Parameters of D Sigma_B D for D = diag(scale).
    CovarianceParams rescaled(const Eigen::Vector3d& scale) const;
};

struct GlmmSpec {
    int trend_degree = 2;
    CovarianceStructure covariance = CovarianceStructure::block_01;
};

struct GlmmFit {
    GlmmSpec spec;
    Eigen::Vector3d beta = Eigen::Vector3d::Zero();
    CovarianceParams sigma_params;
    std::vector<std::string> region_ids;
    std::vector<Eigen::Vector3d> b_modes;
    double loglik = 0.0;
    double bic = 0.0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    std::size_t num_days = 0;
    std::size_t num_observations = 0;

    Eigen::Matrix3d sigma() const { return sigma_params.matrix(); }
    int num_parameters() const { return 3 + covariance_param_count(spec.covariance); }
    /// Throws LookupError for an unknown region.
    const Eigen::Vector3d& mode(const std::string& region_id) const;
};

struct LaplaceResult {
    double loglik = 0.0;
    std::vector<Eigen::Vector3d> b_modes;
};

/// Laplace-approximated marginal log-likelihood. For each region the random
/// effect mode is found by damped Newton (gradient tolerance 1e-8, at most
/// 50 iterations, step halving) and the region contributes
/// joint(b_hat) + 0.5 log det(2 pi H^-1).
/// Throws DomainError if Sigma_B is not positive definite and
/// NonConvergenceError naming the region if its inner solve fails.
LaplaceResult laplace_loglik(const Panel& panel, const Eigen::Vector3d& beta,
                             const Eigen::Matrix3d& sigma_b);
LaplaceResult laplace_loglik(const Panel& panel, const Eigen::Vector3d& beta,
                             const CovarianceParams& sigma_params, const GlmmSpec& spec);

/// Empirical-Bayes mode of one region's random effect under (beta, Sigma_B),
/// with the region's own series (t = 1..series length).
Eigen::Vector3d random_effect_mode(const RegionSeries& series, const Eigen::Vector3d& beta,
                                   const Eigen::Matrix3d& sigma_b);

/// Pooled Poisson GLM with log-population offset by IRLS; returns
/// (beta0, beta1, beta2) on the raw time scale.
Eigen::Vector3d pooled_poisson_glm(const Panel& panel);

struct GlmmOptions {
    double tol = 1e-4;
    int max_iterations = 500;
    /// Hold Sigma_B fixed and optimize the fixed effects only.
    std::optional<CovarianceParams> fixed_covariance;
    /// Override the IRLS start for beta.
    std::optional<Eigen::Vector3d> start_beta;
    /// Override the default covariance start.
    std::optional<CovarianceParams> start_covariance;
};

/// Maximizes the Laplace likelihood over beta and the log-Cholesky
/// parameters. Requires >= 2 regions, >= 3 days and attached populations
/// (InsufficientDataError / LookupError). Optimizer non-convergence is
/// reported through `converged`, not thrown.
GlmmFit fit_glmm(const Panel& panel, const GlmmSpec& spec, const GlmmOptions& options = {});

/// Standard errors of beta from the inverse observed information of the
/// Laplace likelihood (numeric Hessian at the fit). Falls back to the
/// fixed-effects block when the covariance block is singular.
Eigen::Vector3d glmm_standard_errors(const Panel& panel, const GlmmFit& fit);

struct CovarianceSelection {
    GlmmSpec spec;
    GlmmFit fit;
    std::vector<std::pair<CovarianceStructure, double>> bic;
};

/// Fits each candidate (in order of increasing parameter count, each started
/// from the best nested fit so far) and keeps the smallest BIC; ties go to the
/// candidate with fewer parameters. Throws SelectionError when no candidate
/// converges.
CovarianceSelection select_covariance(const Panel& panel,
                                      std::span<const CovarianceStructure> candidates,
                                      const GlmmOptions& options = {});

/// Plug-in mean for day T + horizon of the region.
double predict_glmm(const GlmmFit& fit, const Panel& panel, const std::string& region_id,
                    int horizon);

struct BootstrapOptions {
    int replicates = 500;
    double level = 0.99;
    unsigned workers = 1;
    double max_failure_fraction = 0.2;
};

struct GlmmBootstrap {
    std::vector<std::string> region_ids;
    int max_horizon = 1;
    /// intervals[region][horizon - 1]
    std::vector<std::vector<Interval>> intervals;
    int replicates = 0;
    int failed_replicates = 0;

    const Interval& interval(const std::string& region_id, int horizon) const;
};

/// Region block bootstrap: each replicate resamples whole regions with
/// replacement, refits the model (warm-started at `base`), re-estimates every
/// original region's random-effect mode from its own series, and draws one
/// Poisson count per region and horizon. Replicate r uses rng.derive(r), so
/// results do not depend on the worker count. Throws IntervalError when more
/// than max_failure_fraction of the refits fail.
GlmmBootstrap glmm_bootstrap(const Panel& panel, const GlmmSpec& spec, const GlmmFit& base,
                             int max_horizon, const BootstrapOptions& options,
                             const RngStream& rng);

Interval glmm_interval(const Panel& panel, const GlmmSpec& spec, const std::string& region_id,
                       int horizon, int replicates, double level, const RngStream& rng);

}  // namespace icucast
