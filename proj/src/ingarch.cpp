#include "icucast/ingarch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "icucast/errors.hpp"

namespace icucast {

namespace {

double trend_term(const std::vector<double>& gamma, double lagged_time) {
    double value = 0.0;
    double power = 1.0;
    for (const double g : gamma) {
        value += g * power;
        power *= lagged_time;
    }
    return value;
}

constexpr double kTransformBound = 30.0;

// Unconstrained coordinates: [a, b] (or [b] without feedback) then log gamma.
IngarchParams from_unconstrained(const Vector& p, const IngarchSpec& spec) {
    IngarchParams params;
    Eigen::Index g0 = 0;
    if (spec.include_feedback) {
        const double m = std::max({0.0, p[0], p[1]});
        const double ea = std::exp(p[0] - m);
        const double eb = std::exp(p[1] - m);
        const double denom = std::exp(-m) + ea + eb;
        params.alpha0 = kMaxPersistence * ea / denom;
        params.alpha1 = kMaxPersistence * eb / denom;
        g0 = 2;
    } else {
        params.alpha1 = kMaxPersistence / (1.0 + std::exp(-p[0]));
        g0 = 1;
    }
    params.gamma.resize(static_cast<std::size_t>(spec.trend_order + 1));
    for (std::size_t k = 0; k < params.gamma.size(); ++k) {
        params.gamma[k] = std::exp(p[g0 + static_cast<Eigen::Index>(k)]);
    }
    return params;
}

Vector to_unconstrained(const IngarchParams& params, const IngarchSpec& spec) {
    const Eigen::Index head = spec.include_feedback ? 2 : 1;
    Vector p(head + spec.trend_order + 1);
    constexpr double kFloor = 1e-10;
    if (spec.include_feedback) {
        const double slack = std::max(kMaxPersistence - params.alpha0 - params.alpha1, kFloor);
        p[0] = std::log(std::max(params.alpha0, kFloor) / slack);
        p[1] = std::log(std::max(params.alpha1, kFloor) / slack);
    } else {
        const double a = std::clamp(params.alpha1 / kMaxPersistence, kFloor, 1.0 - kFloor);
        p[0] = std::log(a / (1.0 - a));
    }
    for (int k = 0; k <= spec.trend_order; ++k) {
        p[head + k] = std::log(std::max(params.gamma[static_cast<std::size_t>(k)], kFloor));
    }
    return p;
}

double mean_of(std::span<const Count> counts) {
    if (counts.empty()) return 0.0;
    return std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(counts.size());
}

IngarchParams fallback_start(std::span<const Count> counts, const IngarchSpec& spec) {
    IngarchParams params;
    params.alpha0 = spec.include_feedback ? 0.1 : 0.0;
    params.alpha1 = 0.3;
    params.gamma.assign(static_cast<std::size_t>(spec.trend_order + 1), 1e-3);
    params.gamma[0] = std::max(mean_of(counts) * (1.0 - 0.4), 1e-3);
    return params;
}

}  // namespace

void validate(const IngarchParams& params, const IngarchSpec& spec) {
    if (spec.trend_order < 0 || spec.trend_order > 3) throw DomainError("trend order must be in 0..3");
    if (params.gamma.size() != static_cast<std::size_t>(spec.trend_order + 1)) {
        throw DomainError("gamma must have trend_order + 1 entries");
    }
    if (!(params.alpha0 >= 0.0) || !(params.alpha1 >= 0.0)) throw DomainError("alpha must be >= 0");
    if (!spec.include_feedback && params.alpha0 != 0.0) {
        throw DomainError("alpha0 must be 0 without the feedback term");
    }
    if (params.alpha0 + params.alpha1 > kMaxPersistence + 1e-12) {
        throw DomainError("alpha0 + alpha1 must be <= 1 - 1e-6");
    }
    for (const double g : params.gamma) {
        if (!(g >= 0.0) || !std::isfinite(g)) throw DomainError("gamma must be finite and >= 0");
    }
}

double initial_mean(std::span<const Count> counts) {
    if (counts.empty()) throw InsufficientDataError("empty series");
    if (counts.front() > 0) return static_cast<double>(counts.front());
    return std::max(mean_of(counts), 1e-3);
}

std::vector<double> mu_recursion(std::span<const Count> counts, const IngarchParams& params,
                                 const IngarchSpec& spec, double mu1) {
    validate(params, spec);
    if (!(mu1 > 0.0) || !std::isfinite(mu1)) throw DomainError("mu1 must be positive");
    std::vector<double> mu(counts.size());
    if (mu.empty()) return mu;
    mu[0] = mu1;
    for (std::size_t t = 1; t < counts.size(); ++t) {
        // Day t + 1 (1-based) uses covariates at day t.
        mu[t] = params.alpha0 * mu[t - 1] + params.alpha1 * static_cast<double>(counts[t - 1]) +
                trend_term(params.gamma, static_cast<double>(t));
        if (!std::isfinite(mu[t])) throw NumericError("non-finite conditional mean");
    }
    return mu;
}

std::vector<double> mu_recursion(const RegionSeries& series, const IngarchParams& params,
                                 const IngarchSpec& spec, double mu1) {
    return mu_recursion(series.counts(), params, spec, mu1);
}

double quasi_loglik(std::span<const Count> counts, const IngarchParams& params,
                    const IngarchSpec& spec, double mu1) {
    const auto mu = mu_recursion(counts, params, spec, mu1);
    double total = 0.0;
    for (std::size_t t = 1; t < counts.size(); ++t) {
        if (!(mu[t] > 0.0)) return -std::numeric_limits<double>::infinity();
        total += log_poisson_pmf(counts[t], mu[t]);
    }
    return total;
}

double quasi_loglik(const RegionSeries& series, const IngarchParams& params,
                    const IngarchSpec& spec, double mu1) {
    return quasi_loglik(series.counts(), params, spec, mu1);
}

namespace {

void check_length(const RegionSeries& series, const IngarchSpec& spec) {
    if (spec.trend_order < 0 || spec.trend_order > 3) throw DomainError("trend order must be in 0..3");
    const auto required = static_cast<std::size_t>(spec.trend_order + 4);
    if (series.size() < required) {
        throw InsufficientDataError("region '" + series.region_id() + "': INGARCH order " +
                                    std::to_string(spec.trend_order) + " needs " +
                                    std::to_string(required) + " observations, got " +
                                    std::to_string(series.size()));
    }
}

// Best of the fallback start and, when given, the lower-order fit extended by
// a negligible new trend coefficient.
IngarchFit fit_with_starts(const RegionSeries& series, const IngarchSpec& spec,
                           const IngarchOptions& options, const IngarchFit* lower) {
    check_length(series, spec);
    const std::span<const Count> counts = series.counts();
    const double mu1 = initial_mean(counts);

    const Objective objective = [&](const Vector& p) {
        try {
            return quasi_loglik(counts, from_unconstrained(p, spec), spec, mu1);
        } catch (const Error&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    std::vector<IngarchParams> starts{fallback_start(counts, spec)};
    if (lower && lower->spec.trend_order + 1 == spec.trend_order &&
        lower->spec.include_feedback == spec.include_feedback) {
        IngarchParams warm = lower->params;
        warm.gamma.push_back(1e-8);
        starts.push_back(std::move(warm));
    }

    // A finite box on the transformed scale lets boundary optima (alpha or
    // gamma at zero) register as converged instead of drifting to -inf.
    const Eigen::Index dim = to_unconstrained(starts.front(), spec).size();
    const Bounds box{Vector::Constant(dim, -kTransformBound), Vector::Constant(dim, kTransformBound)};

    std::optional<OptimResult> best;
    for (const auto& start : starts) {
        const Vector p0 = to_unconstrained(start, spec);
        if (!std::isfinite(objective(p0))) continue;
        const auto res = maximize(objective, p0, box, {options.tol, options.max_iterations});
        if (!best || res.value > best->value) best = res;
    }
    if (!best) {
        throw NonConvergenceError("region '" + series.region_id() + "': no feasible INGARCH start");
    }

    IngarchFit fit;
    fit.spec = spec;
    fit.params = from_unconstrained(best->argmax, spec);
    fit.mu1 = mu1;
    fit.mu_path = mu_recursion(counts, fit.params, spec, mu1);
    fit.quasi_loglik = quasi_loglik(counts, fit.params, spec, mu1);
    fit.num_observations = series.size();
    fit.bic = -2.0 * fit.quasi_loglik +
              spec.num_parameters() * std::log(static_cast<double>(series.size() - 1));
    fit.converged = best->converged;
    fit.iterations = best->iterations;
    fit.gradient_norm = best->gradient_norm;
    return fit;
}

}  // namespace

IngarchFit fit_ingarch(const RegionSeries& series, const IngarchSpec& spec,
                       const IngarchOptions& options) {
    check_length(series, spec);
    std::optional<IngarchFit> lower;
    for (int r = 0; r < spec.trend_order; ++r) {
        lower = fit_with_starts(series, IngarchSpec{r, spec.include_feedback}, options,
                                lower ? &*lower : nullptr);
    }
    return fit_with_starts(series, spec, options, lower ? &*lower : nullptr);
}

TrendSelection select_trend_order(const RegionSeries& series, bool include_feedback,
                                  const IngarchOptions& options) {
    TrendSelection selection;
    std::optional<IngarchFit> best;
    std::optional<IngarchFit> previous;
    for (int r = 0; r <= 3; ++r) {
        if (series.size() < static_cast<std::size_t>(r + 4)) break;
        try {
            IngarchFit fit = fit_with_starts(series, IngarchSpec{r, include_feedback}, options,
                                             previous ? &*previous : nullptr);
            selection.bic.emplace_back(r, fit.bic);
            previous = fit;
            if (!best || fit.bic < best->bic) best = std::move(fit);
        } catch (const Error&) {
            previous.reset();
        }
    }
    if (!best) {
        throw SelectionError("region '" + series.region_id() + "': no INGARCH trend order could be fit");
    }
    selection.spec = best->spec;
    selection.fit = std::move(*best);
    return selection;
}

namespace {

struct ForecastState {
    double mu_last;
    double y_last;
    double t_last;  // T
};

ForecastState forecast_state(const IngarchFit& fit, const RegionSeries& series) {
    const auto mu = (series.size() == fit.mu_path.size())
                        ? mu_recursion(series, fit.params, fit.spec, fit.mu1)
                        : mu_recursion(series, fit.params, fit.spec, initial_mean(series.counts()));
    return {mu.back(), static_cast<double>(series.counts().back()), static_cast<double>(series.size())};
}

}  // namespace

std::vector<double> forecast_path(const IngarchFit& fit, const RegionSeries& series, int max_horizon) {
    if (max_horizon < 1) throw DomainError("horizon must be >= 1");
    const auto state = forecast_state(fit, series);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(max_horizon));
    double mu_prev = state.mu_last;
    double y_prev = state.y_last;
    for (int h = 1; h <= max_horizon; ++h) {
        const double mu = fit.params.alpha0 * mu_prev + fit.params.alpha1 * y_prev +
                          trend_term(fit.params.gamma, state.t_last + h - 1);
        out.push_back(mu);
        mu_prev = mu;
        y_prev = mu;
    }
    return out;
}

double forecast_ingarch(const IngarchFit& fit, const RegionSeries& series, int horizon) {
    return forecast_path(fit, series, horizon).back();
}

std::vector<Interval> ingarch_intervals(const IngarchFit& fit, const RegionSeries& series,
                                        int max_horizon, int replicates, double level,
                                        const RngStream& rng) {
    if (max_horizon < 1) throw DomainError("horizon must be >= 1");
    if (replicates < 1) throw DomainError("bootstrap needs at least one replicate");
    if (!(level > 0.0 && level < 1.0)) throw DomainError("level must be in (0, 1)");
    validate(fit.params, fit.spec);
    const auto state = forecast_state(fit, series);
    const auto horizons = static_cast<std::size_t>(max_horizon);
    std::vector<std::vector<double>> draws(horizons, std::vector<double>(static_cast<std::size_t>(replicates)));
    for (int r = 0; r < replicates; ++r) {
        auto engine = rng.derive(static_cast<std::uint64_t>(r)).engine();
        double mu_prev = state.mu_last;
        double y_prev = state.y_last;
        for (std::size_t h = 0; h < horizons; ++h) {
            const double mu = fit.params.alpha0 * mu_prev + fit.params.alpha1 * y_prev +
                              trend_term(fit.params.gamma, state.t_last + static_cast<double>(h));
            const auto y = static_cast<double>(draw_poisson(engine, mu));
            draws[h][static_cast<std::size_t>(r)] = y;
            mu_prev = mu;
            y_prev = y;
        }
    }
    std::vector<Interval> out;
    out.reserve(horizons);
    for (const auto& d : draws) out.push_back(count_interval(d, level));
    return out;
}

Interval ingarch_interval(const IngarchFit& fit, const RegionSeries& series, int horizon,
                          int replicates, double level, const RngStream& rng) {
    return ingarch_intervals(fit, series, horizon, replicates, level, rng).back();
}

}  // namespace icucast
