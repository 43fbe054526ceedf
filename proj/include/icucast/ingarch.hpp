#pragma once

#include <span>
#include <utility>
#include <vector>

#include "icucast/data.hpp"
#include "icucast/interval.hpp"
#include "icucast/numeric.hpp"

namespace icucast {

// Linear Poisson INGARCH(1,1) with polynomial trend covariates:
//   mu_t = alpha0 mu_{t-1} + alpha1 y_{t-1} + sum_k gamma_k (t-1)^k,  t > 1.

struct IngarchSpec {
    int trend_order = 0;  // r in {0, 1, 2, 3}
    bool include_feedback = true;

    int num_parameters() const { return trend_order + 2 + (include_feedback ? 1 : 0); }
    friend bool operator==(const IngarchSpec&, const IngarchSpec&) = default;
};

struct IngarchParams {
    double alpha0 = 0.0;
    double alpha1 = 0.0;
    std::vector<double> gamma;
};

/// Upper bound on alpha0 + alpha1.
inline constexpr double kMaxPersistence = 1.0 - 1e-6;

/// Throws DomainError when the parameters violate the model constraints
/// (nonnegativity, alpha0 + alpha1 <= 1 - 1e-6, gamma length r + 1).
void validate(const IngarchParams& params, const IngarchSpec& spec);

/// Starting mean: y_1 if positive, otherwise the series mean (floored at 1e-3).
double initial_mean(std::span<const Count> counts);

/// mu_1 = mu1, then the recursion above. Throws NumericError on a
/// non-finite intermediate.
std::vector<double> mu_recursion(std::span<const Count> counts, const IngarchParams& params,
                                 const IngarchSpec& spec, double mu1);
std::vector<double> mu_recursion(const RegionSeries& series, const IngarchParams& params,
                                 const IngarchSpec& spec, double mu1);

/// Conditional Poisson log-likelihood sum_{t=2}^T [y_t log mu_t - mu_t - log y_t!].
/// Returns -infinity if some mu_t <= 0.
double quasi_loglik(std::span<const Count> counts, const IngarchParams& params,
                    const IngarchSpec& spec, double mu1);
double quasi_loglik(const RegionSeries& series, const IngarchParams& params,
                    const IngarchSpec& spec, double mu1);

struct IngarchFit {
    IngarchSpec spec;
    IngarchParams params;
    double mu1 = 0.0;
    std::vector<double> mu_path;
    double quasi_loglik = 0.0;
    double bic = 0.0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;
    std::size_t num_observations = 0;
};

struct IngarchOptions {
    double tol = 1e-6;
    int max_iterations = 500;
};

/// Constrained conditional quasi-likelihood fit. gamma is optimized on the
/// log scale and (alpha0, alpha1) through a multinomial-logistic map onto
/// {a0, a1 >= 0, a0 + a1 <= 1 - 1e-6}. BIC uses the effective sample size T - 1.
/// Needs at least r + 4 observations (InsufficientDataError).
IngarchFit fit_ingarch(const RegionSeries& series, const IngarchSpec& spec,
                       const IngarchOptions& options = {});

struct TrendSelection {
    IngarchSpec spec;
    IngarchFit fit;
    std::vector<std::pair<int, double>> bic;  // (order, BIC) for every order tried
};

/// Fits r = 0..3 (orders too long for the series are skipped) and keeps the
/// smallest BIC, ties to the smaller order. Throws SelectionError if nothing fits.
TrendSelection select_trend_order(const RegionSeries& series, bool include_feedback = true,
                                  const IngarchOptions& options = {});

/// Conditional-mean forecast for day T + horizon; future counts are replaced
/// by their conditional means.
double forecast_ingarch(const IngarchFit& fit, const RegionSeries& series, int horizon);
/// Forecasts for horizons 1..max_horizon.
std::vector<double> forecast_path(const IngarchFit& fit, const RegionSeries& series, int max_horizon);

/// Parametric bootstrap: `replicates` simulated trajectories fed back through
/// the recursion with Poisson draws; one interval per horizon 1..max_horizon.
std::vector<Interval> ingarch_intervals(const IngarchFit& fit, const RegionSeries& series,
                                        int max_horizon, int replicates, double level,
                                        const RngStream& rng);
Interval ingarch_interval(const IngarchFit& fit, const RegionSeries& series, int horizon,
                          int replicates, double level, const RngStream& rng);

}  // namespace icucast
