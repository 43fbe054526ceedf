#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icucast/data.hpp"
#include "icucast/glmm.hpp"
#include "icucast/ingarch.hpp"
#include "icucast/interval.hpp"

namespace icucast {

/// Per-forecast provenance flags.
enum ForecastFlag : unsigned {
    kFlagNone = 0,
    kFlagGlmmFailed = 1u << 0,
    kFlagIngarchFailed = 1u << 1,
    kFlagGlmmNotConverged = 1u << 2,
    kFlagIngarchNotConverged = 1u << 3,
    kFlagPooledWeight = 1u << 4,
};

std::vector<std::string> flag_names(unsigned flags);

struct EnsembleForecast {
    std::string region_id;
    int horizon = 1;
    Date target_date{};
    double point = 0.0;
    Interval interval;
    double weight = 0.5;
    double glmm_point = 0.0;
    double ingarch_point = 0.0;
    Interval glmm_interval;
    Interval ingarch_interval;
    unsigned flags = kFlagNone;
};

enum class WeightMode { per_region, pooled };

struct WeightSolution {
    std::vector<std::string> region_ids;
    std::vector<double> weights;
    /// |w p1 + (1 - w) p2 - y| per region at its weight.
    std::vector<double> objective;
    WeightMode mode = WeightMode::per_region;
};

struct WeightTriple {
    double pred1 = 0.0;  // pooled mixed model
    double pred2 = 0.0;  // per-region autoregression
    double observed = 0.0;
};

/// argmin over x in [0, 1] of |x p1 + (1 - x) p2 - y|; 0.5 when p1 == p2.
double optimal_weight(double pred1, double pred2, double observed);
/// Exact minimizer of sum_i |x p1_i + (1 - x) p2_i - y_i| over [0, 1]:
/// evaluates every clamped breakpoint and both endpoints, ties to the smaller x.
/// 0.5 when every triple has p1 == p2.
double pooled_weight(std::span<const WeightTriple> triples);

struct EnsembleConfig {
    int horizon = 1;  // forecasts for 1..horizon
    double level = 0.99;
    int glmm_replicates = 500;
    int ingarch_replicates = 1000;
    std::uint64_t seed = 20200409;
    unsigned workers = 1;
    std::vector<CovarianceStructure> covariance_candidates{CovarianceStructure::block_01};
    /// Windows shorter than this share one pooled weight.
    std::size_t per_region_weight_min_days = 15;
    /// Calibrate a separate weight for each horizon h by holding out the last h days.
    bool reoptimize_per_horizon = false;
    bool include_feedback = true;
};

struct EnsembleRun {
    std::vector<EnsembleForecast> forecasts;
    /// One solution per calibrated horizon (a single entry unless reoptimize_per_horizon).
    std::vector<WeightSolution> weights;
    std::optional<GlmmFit> glmm_fit;
    std::optional<GlmmSpec> glmm_spec;
    int glmm_failed_replicates = 0;
    std::map<std::string, IngarchFit> ingarch_fits;
    std::vector<std::string> warnings;
};

/// Full ensemble procedure on an already windowed panel:
/// hold out the last day, fit both models on the rest and calibrate weights
/// against the held-out counts (per region when the window has at least
/// per_region_weight_min_days days, pooled otherwise), refit on the full
/// window, and combine points and interval limits with the weights.
/// A component that fails degrades its regions to the surviving component
/// (weight 0 or 1) with a warning; regions where both fail are omitted.
EnsembleRun forecast_ensemble(const Panel& panel, const EnsembleConfig& config);

}  // namespace icucast
