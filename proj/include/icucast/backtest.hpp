#pragma once

#include <string>
#include <vector>

#include "icucast/data.hpp"
#include "icucast/ensemble.hpp"

namespace icucast {

struct DailyScore {
    Date origin{};  // last day of the fitting window
    Date target{};  // day being forecast
    std::vector<std::string> region_ids;
    std::vector<double> points;
    std::vector<Interval> intervals;
    std::vector<Count> observed;
    std::vector<double> abs_errors;
    /// |forecast - y| / max(y, 1)
    std::vector<double> rel_errors;
    std::vector<bool> hits;         // lo <= y <= hi
    std::vector<bool> exceedances;  // y > hi
};

/// Throws ScoringError naming the first forecast region without an observation.
DailyScore score_day(std::span<const EnsembleForecast> forecasts, const Observations& observed);

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
};

struct SkippedDate {
    Date date{};
    std::string reason;
};

struct BacktestReport {
    std::vector<DailyScore> days;
    std::vector<SkippedDate> skipped;
    Quartiles abs_error;
    Quartiles rel_error;
    double mean_rel_error = 0.0;
    double coverage = 0.0;
    double miss_rate = 0.0;
    double exceedance_rate = 0.0;
    std::size_t interval_count = 0;
    std::size_t miss_count = 0;
    std::size_t exceedance_count = 0;
};

/// Pools every (date, region) score; empty input gives zero aggregates.
BacktestReport aggregate(std::vector<DailyScore> days, std::vector<SkippedDate> skipped = {});

struct BacktestConfig {
    std::size_t window = 15;
    int horizon = 1;
    EnsembleConfig ensemble;
    /// With several covariance candidates: choose once on the first evaluated
    /// window (false) or on every window (true).
    bool select_daily = false;
};

/// For each origin d in [start, end]: fit on the window ending at d, forecast
/// d + horizon, score against the observed count. Origins with too little
/// history, without an observation at the target, or whose fit fails are
/// skipped with a reason.
BacktestReport rolling_backtest(const Panel& panel, Date start, Date end, const BacktestConfig& config);

}  // namespace icucast
