#include "icucast/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icucast/errors.hpp"

namespace icucast {

namespace {

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw DomainError(std::string("non-finite ") + what);
}

double pooled_objective(std::span<const WeightTriple> triples, double x) {
    double total = 0.0;
    for (const auto& t : triples) total += std::abs(x * t.pred1 + (1.0 - x) * t.pred2 - t.observed);
    return total;
}

}  // namespace

std::vector<std::string> flag_names(unsigned flags) {
    std::vector<std::string> names;
    if (flags & kFlagGlmmFailed) names.emplace_back("glmm_failed");
    if (flags & kFlagIngarchFailed) names.emplace_back("ingarch_failed");
    if (flags & kFlagGlmmNotConverged) names.emplace_back("glmm_not_converged");
    if (flags & kFlagIngarchNotConverged) names.emplace_back("ingarch_not_converged");
    if (flags & kFlagPooledWeight) names.emplace_back("pooled_weight");
    return names;
}

double optimal_weight(double pred1, double pred2, double observed) {
    check_finite(pred1, "prediction");
    check_finite(pred2, "prediction");
    check_finite(observed, "observation");
    if (pred1 < 0.0 || pred2 < 0.0) throw DomainError("predictions must be nonnegative");
    if (pred1 == pred2) return 0.5;
    return std::clamp((observed - pred2) / (pred1 - pred2), 0.0, 1.0);
}

double pooled_weight(std::span<const WeightTriple> triples) {
    if (triples.empty()) throw DomainError("pooled weight needs at least one triple");
    std::vector<double> candidates{0.0, 1.0};
    for (const auto& t : triples) {
        check_finite(t.pred1, "prediction");
        check_finite(t.pred2, "prediction");
        check_finite(t.observed, "observation");
        if (t.pred1 != t.pred2) {
            candidates.push_back(std::clamp((t.observed - t.pred2) / (t.pred1 - t.pred2), 0.0, 1.0));
        }
    }
    if (candidates.size() == 2) return 0.5;
    std::sort(candidates.begin(), candidates.end());
    double best_x = candidates.front();
    double best = pooled_objective(triples, best_x);
    for (const double x : candidates) {
        const double v = pooled_objective(triples, x);
        if (v < best) {
            best = v;
            best_x = x;
        }
    }
    return best_x;
}

namespace {

struct Calibration {
    WeightSolution solution;
    std::vector<bool> glmm_ok;
    std::vector<bool> ingarch_ok;
};

Calibration calibrate(const Panel& panel, const std::optional<GlmmSpec>& spec, int holdout,
                      const EnsembleConfig& config, std::vector<std::string>& warnings) {
    const std::size_t n = panel.num_regions();
    Calibration cal;
    cal.glmm_ok.assign(n, false);
    cal.ingarch_ok.assign(n, false);
    cal.solution.region_ids = panel.region_ids();
    cal.solution.weights.assign(n, 0.5);
    cal.solution.objective.assign(n, 0.0);

    const std::string tag = "leave-last-out (h=" + std::to_string(holdout) + ")";
    Panel shortened;
    Observations observed;
    try {
        std::tie(shortened, observed) = drop_last_days(panel, static_cast<std::size_t>(holdout));
    } catch (const Error& e) {
        warnings.push_back(tag + ": " + e.what());
        return cal;
    }

    std::vector<double> pred1(n, 0.0);
    std::vector<double> pred2(n, 0.0);
    if (spec) {
        try {
            const GlmmFit fit = fit_glmm(shortened, *spec);
            for (std::size_t i = 0; i < n; ++i) {
                pred1[i] = predict_glmm(fit, shortened, cal.solution.region_ids[i], holdout);
                cal.glmm_ok[i] = std::isfinite(pred1[i]);
            }
        } catch (const Error& e) {
            warnings.push_back(tag + " GLMM: " + e.what());
        }
    }
    parallel_for(n, config.workers, [&](std::size_t i) {
        try {
            const auto& series = shortened.series()[i];
            const auto sel = select_trend_order(series, config.include_feedback);
            pred2[i] = forecast_ingarch(sel.fit, series, holdout);
            cal.ingarch_ok[i] = std::isfinite(pred2[i]);
        } catch (const Error&) {
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (!cal.ingarch_ok[i]) warnings.push_back(tag + " INGARCH failed for '" + cal.solution.region_ids[i] + "'");
    }

    std::vector<WeightTriple> triples;
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < n; ++i) {
        if (cal.glmm_ok[i] && cal.ingarch_ok[i]) {
            triples.push_back({pred1[i], pred2[i], static_cast<double>(observed.at(cal.solution.region_ids[i]))});
            usable.push_back(i);
        }
    }
    const bool pooled = panel.num_days() < config.per_region_weight_min_days;
    cal.solution.mode = pooled ? WeightMode::pooled : WeightMode::per_region;
    const double shared = (pooled && !triples.empty()) ? pooled_weight(triples) : 0.5;
    for (std::size_t k = 0; k < usable.size(); ++k) {
        const auto& t = triples[k];
        const double w = pooled ? shared : optimal_weight(t.pred1, t.pred2, t.observed);
        cal.solution.weights[usable[k]] = w;
        cal.solution.objective[usable[k]] = std::abs(w * t.pred1 + (1.0 - w) * t.pred2 - t.observed);
    }
    return cal;
}

}  // namespace

EnsembleRun forecast_ensemble(const Panel& panel, const EnsembleConfig& config) {
    if (config.horizon < 1) throw DomainError("horizon must be >= 1");
    if (!(config.level > 0.0 && config.level < 1.0)) throw DomainError("level must be in (0, 1)");
    if (panel.empty()) throw InsufficientDataError("empty panel");
    if (panel.num_days() < 2) throw InsufficientDataError("ensemble needs at least 2 days per series");
    if (!panel.has_population()) throw LookupError("panel has no population attached");

    const std::size_t n = panel.num_regions();
    const auto ids = panel.region_ids();
    const auto H = static_cast<std::size_t>(config.horizon);
    EnsembleRun run;

    // Mixed model on the full window; its structure is reused for calibration.
    std::optional<GlmmBootstrap> boot;
    try {
        if (config.covariance_candidates.size() > 1) {
            auto sel = select_covariance(panel, config.covariance_candidates);
            run.glmm_spec = sel.spec;
            run.glmm_fit = std::move(sel.fit);
        } else {
            const GlmmSpec spec{2, config.covariance_candidates.empty() ? CovarianceStructure::block_01
                                                                        : config.covariance_candidates.front()};
            run.glmm_spec = spec;
            run.glmm_fit = fit_glmm(panel, spec);
        }
        if (!run.glmm_fit->converged) run.warnings.emplace_back("GLMM fit did not converge");
        BootstrapOptions bopts;
        bopts.replicates = config.glmm_replicates;
        bopts.level = config.level;
        bopts.workers = config.workers;
        boot = glmm_bootstrap(panel, *run.glmm_spec, *run.glmm_fit, config.horizon, bopts,
                              RngStream(config.seed, 1));
        run.glmm_failed_replicates = boot->failed_replicates;
    } catch (const Error& e) {
        run.warnings.push_back(std::string("GLMM: ") + e.what());
        boot.reset();
        run.glmm_fit.reset();
    }

    // Per-region autoregressions on the full window.
    std::vector<std::optional<IngarchFit>> ing(n);
    std::vector<std::vector<double>> ing_points(n);
    std::vector<std::vector<Interval>> ing_intervals(n);
    const RngStream ingarch_stream(config.seed, 2);
    parallel_for(n, config.workers, [&](std::size_t i) {
        try {
            const auto& series = panel.series()[i];
            auto sel = select_trend_order(series, config.include_feedback);
            ing_points[i] = forecast_path(sel.fit, series, config.horizon);
            ing_intervals[i] = ingarch_intervals(sel.fit, series, config.horizon, config.ingarch_replicates,
                                                 config.level, ingarch_stream.derive(i));
            ing[i] = std::move(sel.fit);
        } catch (const Error&) {
            ing[i].reset();
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (ing[i]) {
            run.ingarch_fits.emplace(ids[i], *ing[i]);
        } else {
            run.warnings.push_back("INGARCH failed for '" + ids[i] + "'");
        }
    }

    const std::optional<GlmmSpec> calib_spec = boot ? run.glmm_spec : std::nullopt;
    const int calibrations = config.reoptimize_per_horizon ? config.horizon : 1;
    std::vector<Calibration> cals;
    for (int c = 1; c <= calibrations; ++c) {
        cals.push_back(calibrate(panel, calib_spec, c, config, run.warnings));
        run.weights.push_back(cals.back().solution);
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t h = 0; h < H; ++h) {
            const Calibration& cal = cals[config.reoptimize_per_horizon ? h : 0];
            const bool glmm_ok = boot.has_value();
            const bool ing_ok = ing[i].has_value();
            if (!glmm_ok && !ing_ok) {
                if (h == 0) run.warnings.push_back("no forecast for '" + ids[i] + "': both components failed");
                continue;
            }
            EnsembleForecast f;
            f.region_id = ids[i];
            f.horizon = static_cast<int>(h + 1);
            f.target_date = panel.last_date() + std::chrono::days{static_cast<int>(h + 1)};
            if (glmm_ok) {
                f.glmm_point = predict_glmm(*run.glmm_fit, panel, ids[i], f.horizon);
                f.glmm_interval = boot->intervals[i][h];
                if (!run.glmm_fit->converged) f.flags |= kFlagGlmmNotConverged;
            } else {
                f.flags |= kFlagGlmmFailed;
            }
            if (ing_ok) {
                f.ingarch_point = ing_points[i][h];
                f.ingarch_interval = ing_intervals[i][h];
                if (!ing[i]->converged) f.flags |= kFlagIngarchNotConverged;
            } else {
                f.flags |= kFlagIngarchFailed;
            }
            if (!ing_ok) {
                f.weight = 1.0;
            } else if (!glmm_ok) {
                f.weight = 0.0;
            } else if (!cal.glmm_ok[i] && cal.ingarch_ok[i]) {
                f.weight = 0.0;
            } else if (cal.glmm_ok[i] && !cal.ingarch_ok[i]) {
                f.weight = 1.0;
            } else {
                f.weight = cal.solution.weights[i];
                if (cal.solution.mode == WeightMode::pooled) f.flags |= kFlagPooledWeight;
            }
            const double w = f.weight;
            f.point = w * f.glmm_point + (1.0 - w) * f.ingarch_point;
            f.interval.lo = w * f.glmm_interval.lo + (1.0 - w) * f.ingarch_interval.lo;
            f.interval.hi = w * f.glmm_interval.hi + (1.0 - w) * f.ingarch_interval.hi;
            run.forecasts.push_back(std::move(f));
        }
    }
    return run;
}

}  // namespace icucast
