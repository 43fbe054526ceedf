#include "icucast/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "icucast/errors.hpp"
#include "icucast/numeric.hpp"

namespace icucast {

DailyScore score_day(std::span<const EnsembleForecast> forecasts, const Observations& observed) {
    DailyScore score;
    for (const auto& f : forecasts) {
        const auto it = observed.find(f.region_id);
        if (it == observed.end()) throw ScoringError("no observation for region '" + f.region_id + "'");
        const Count y = it->second;
        const double yd = static_cast<double>(y);
        const double abs_err = std::abs(f.point - yd);
        score.region_ids.push_back(f.region_id);
        score.points.push_back(f.point);
        score.intervals.push_back(f.interval);
        score.observed.push_back(y);
        score.abs_errors.push_back(abs_err);
        score.rel_errors.push_back(abs_err / std::max(yd, 1.0));
        score.hits.push_back(f.interval.contains(yd));
        score.exceedances.push_back(yd > f.interval.hi);
        score.target = f.target_date;
        score.origin = f.target_date - std::chrono::days{f.horizon};
    }
    return score;
}

namespace {

Quartiles quartiles(std::vector<double> values) {
    if (values.empty()) return {};
    std::sort(values.begin(), values.end());
    return {sorted_quantile(values, 0.25), sorted_quantile(values, 0.5), sorted_quantile(values, 0.75)};
}

}  // namespace

BacktestReport aggregate(std::vector<DailyScore> days, std::vector<SkippedDate> skipped) {
    BacktestReport report;
    std::vector<double> abs_errors;
    std::vector<double> rel_errors;
    for (const auto& d : days) {
        abs_errors.insert(abs_errors.end(), d.abs_errors.begin(), d.abs_errors.end());
        rel_errors.insert(rel_errors.end(), d.rel_errors.begin(), d.rel_errors.end());
        report.interval_count += d.hits.size();
        report.miss_count += static_cast<std::size_t>(std::count(d.hits.begin(), d.hits.end(), false));
        report.exceedance_count +=
            static_cast<std::size_t>(std::count(d.exceedances.begin(), d.exceedances.end(), true));
    }
    report.abs_error = quartiles(abs_errors);
    report.rel_error = quartiles(rel_errors);
    if (!rel_errors.empty()) {
        // Sorted summation keeps the mean independent of region and date order.
        std::sort(rel_errors.begin(), rel_errors.end());
        report.mean_rel_error =
            std::accumulate(rel_errors.begin(), rel_errors.end(), 0.0) / static_cast<double>(rel_errors.size());
    }
    if (report.interval_count > 0) {
        const auto total = static_cast<double>(report.interval_count);
        report.miss_rate = static_cast<double>(report.miss_count) / total;
        report.coverage = 1.0 - report.miss_rate;
        report.exceedance_rate = static_cast<double>(report.exceedance_count) / total;
    }
    report.days = std::move(days);
    report.skipped = std::move(skipped);
    return report;
}

BacktestReport rolling_backtest(const Panel& panel, Date start, Date end, const BacktestConfig& config) {
    if (config.horizon < 1) throw DomainError("horizon must be >= 1");
    if (config.window < 2) throw DomainError("window must be >= 2");
    std::vector<DailyScore> days;
    std::vector<SkippedDate> skipped;
    if (panel.empty()) return aggregate({}, {});

    const auto& dates = panel.common_dates();
    EnsembleConfig ens = config.ensemble;
    ens.horizon = config.horizon;
    bool structure_frozen = ens.covariance_candidates.size() <= 1 || config.select_daily;

    for (Date origin = start; origin <= end; origin += std::chrono::days{1}) {
        const Date target = origin + std::chrono::days{config.horizon};
        if (origin < dates.front() || origin > dates.back()) {
            skipped.push_back({origin, "origin outside available data"});
            continue;
        }
        if (target > dates.back()) {
            skipped.push_back({origin, "no observation at target " + format_date(target)});
            continue;
        }
        const Panel history = window(truncate_after(panel, origin), config.window);
        if (history.num_days() < 2) {
            skipped.push_back({origin, "insufficient history"});
            continue;
        }
        try {
            const EnsembleRun run = forecast_ensemble(history, ens);
            if (!structure_frozen && run.glmm_spec) {
                ens.covariance_candidates = {run.glmm_spec->covariance};
                structure_frozen = true;
            }
            std::vector<EnsembleForecast> at_target;
            for (const auto& f : run.forecasts) {
                if (f.horizon == config.horizon) at_target.push_back(f);
            }
            if (at_target.empty()) {
                skipped.push_back({origin, "no forecasts produced"});
                continue;
            }
            const auto t_index = static_cast<std::size_t>((target - dates.front()).count());
            Observations observed;
            for (const auto& s : panel.series()) observed.emplace(s.region_id(), s.counts()[t_index]);
            DailyScore score = score_day(at_target, observed);
            score.origin = origin;
            score.target = target;
            days.push_back(std::move(score));
        } catch (const Error& e) {
            skipped.push_back({origin, e.what()});
        }
    }
    return aggregate(std::move(days), std::move(skipped));
}

}  // namespace icucast
