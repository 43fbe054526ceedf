#include "icucast/serialize.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "icucast/errors.hpp"

namespace icucast {

std::string format_number(double value) {
    if (!std::isfinite(value)) return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw ValueError("cannot format number");
    return std::string(buf, ptr);
}

namespace {

Json vec3(const Eigen::Vector3d& v) { return Json::array({v[0], v[1], v[2]}); }

Eigen::Vector3d vec3_from(const Json& j) {
    if (!j.is_array() || j.size() != 3) throw ValueError("expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Json sigma_summary(const GlmmFit& fit) {
    const Eigen::Matrix3d s = fit.sigma();
    Json out;
    out["sigma0_sq"] = s(0, 0);
    out["sigma1_sq"] = s(1, 1);
    out["sigma2_sq"] = s(2, 2);
    if (fit.spec.covariance != CovarianceStructure::diagonal) out["sigma01"] = s(1, 0);
    if (fit.spec.covariance == CovarianceStructure::unstructured) {
        out["sigma02"] = s(2, 0);
        out["sigma12"] = s(2, 1);
    }
    return out;
}

Json interval_json(const Interval& i) { return Json::array({i.lo, i.hi}); }

}  // namespace

Json glmm_fit_to_json(const GlmmFit& fit) {
    Json doc;
    doc["model"] = "glmm";
    doc["covariance_structure"] = std::string(to_string(fit.spec.covariance));
    doc["trend_degree"] = fit.spec.trend_degree;
    doc["beta"] = vec3(fit.beta);
    doc["sigma_params"] = sigma_summary(fit);
    doc["log_cholesky"] = std::vector<double>(fit.sigma_params.theta.begin(), fit.sigma_params.theta.end());
    Json modes = Json::object();
    for (std::size_t i = 0; i < fit.region_ids.size(); ++i) modes[fit.region_ids[i]] = vec3(fit.b_modes[i]);
    doc["b_modes"] = std::move(modes);
    doc["loglik"] = fit.loglik;
    doc["bic"] = fit.bic;
    doc["converged"] = fit.converged;
    doc["iterations"] = fit.iterations;
    doc["gradient_norm"] = fit.gradient_norm;
    doc["num_days"] = fit.num_days;
    doc["num_observations"] = fit.num_observations;
    return doc;
}

GlmmFit glmm_fit_from_json(const Json& doc) {
    try {
        GlmmFit fit;
        fit.spec.covariance = parse_covariance_structure(doc.at("covariance_structure").get<std::string>());
        fit.spec.trend_degree = doc.at("trend_degree").get<int>();
        fit.beta = vec3_from(doc.at("beta"));
        const auto theta = doc.at("log_cholesky").get<std::vector<double>>();
        fit.sigma_params.structure = fit.spec.covariance;
        fit.sigma_params.theta = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
        for (const auto& [region, mode] : doc.at("b_modes").items()) {
            fit.region_ids.push_back(region);
            fit.b_modes.push_back(vec3_from(mode));
        }
        fit.loglik = doc.at("loglik").get<double>();
        fit.bic = doc.at("bic").get<double>();
        fit.converged = doc.at("converged").get<bool>();
        fit.iterations = doc.value("iterations", 0);
        fit.gradient_norm = doc.value("gradient_norm", 0.0);
        fit.num_days = doc.at("num_days").get<std::size_t>();
        fit.num_observations = doc.at("num_observations").get<std::size_t>();
        (void)fit.sigma_params.cholesky_factor();
        return fit;
    } catch (const nlohmann::json::exception& e) {
        throw ValueError(std::string("invalid GLMM fit document: ") + e.what());
    }
}

Json ingarch_fit_to_json(const IngarchFit& fit) {
    Json doc;
    doc["model"] = "ingarch";
    doc["trend_order"] = fit.spec.trend_order;
    doc["include_feedback"] = fit.spec.include_feedback;
    doc["alpha0"] = fit.params.alpha0;
    doc["alpha1"] = fit.params.alpha1;
    doc["gamma"] = fit.params.gamma;
    doc["mu1"] = fit.mu1;
    doc["mu_path"] = fit.mu_path;
    doc["quasi_loglik"] = fit.quasi_loglik;
    doc["bic"] = fit.bic;
    doc["converged"] = fit.converged;
    doc["iterations"] = fit.iterations;
    doc["num_observations"] = fit.num_observations;
    return doc;
}

IngarchFit ingarch_fit_from_json(const Json& doc) {
    try {
        IngarchFit fit;
        fit.spec.trend_order = doc.at("trend_order").get<int>();
        fit.spec.include_feedback = doc.at("include_feedback").get<bool>();
        fit.params.alpha0 = doc.at("alpha0").get<double>();
        fit.params.alpha1 = doc.at("alpha1").get<double>();
        fit.params.gamma = doc.at("gamma").get<std::vector<double>>();
        validate(fit.params, fit.spec);
        fit.mu1 = doc.at("mu1").get<double>();
        fit.mu_path = doc.value("mu_path", std::vector<double>{});
        fit.quasi_loglik = doc.at("quasi_loglik").get<double>();
        fit.bic = doc.at("bic").get<double>();
        fit.converged = doc.at("converged").get<bool>();
        fit.iterations = doc.value("iterations", 0);
        fit.num_observations = doc.value("num_observations", fit.mu_path.size());
        return fit;
    } catch (const nlohmann::json::exception& e) {
        throw ValueError(std::string("invalid INGARCH fit document: ") + e.what());
    }
}

Json forecast_to_json(const EnsembleForecast& f) {
    Json doc;
    doc["region"] = f.region_id;
    doc["date_forecast"] = format_date(f.target_date);
    doc["horizon"] = f.horizon;
    doc["point"] = f.point;
    doc["lo"] = f.interval.lo;
    doc["hi"] = f.interval.hi;
    doc["weight"] = f.weight;
    doc["glmm_point"] = f.glmm_point;
    doc["ingarch_point"] = f.ingarch_point;
    doc["glmm_interval"] = interval_json(f.glmm_interval);
    doc["ingarch_interval"] = interval_json(f.ingarch_interval);
    doc["model_flags"] = flag_names(f.flags);
    return doc;
}

void write_forecasts_csv(std::span<const EnsembleForecast> forecasts, std::ostream& out) {
    out << "region,date_forecast,horizon,point,lo,hi,weight,glmm_point,ingarch_point,model_flags\n";
    for (const auto& f : forecasts) {
        std::string flags;
        for (const auto& name : flag_names(f.flags)) flags += (flags.empty() ? "" : "|") + name;
        const bool quote = f.region_id.find_first_of(",\"") != std::string::npos;
        out << (quote ? "\"" + f.region_id + "\"" : f.region_id) << ',' << format_date(f.target_date) << ','
            << f.horizon << ',' << format_number(f.point) << ',' << format_number(f.interval.lo) << ','
            << format_number(f.interval.hi) << ',' << format_number(f.weight) << ','
            << format_number(f.glmm_point) << ',' << format_number(f.ingarch_point) << ',' << flags << '\n';
    }
}

Json forecasts_to_json(std::span<const EnsembleForecast> forecasts) {
    Json arr = Json::array();
    for (const auto& f : forecasts) arr.push_back(forecast_to_json(f));
    return arr;
}

Json report_to_json(const BacktestReport& report) {
    Json doc;
    Json agg;
    agg["abs_error"] = {{"q1", report.abs_error.q1}, {"median", report.abs_error.median}, {"q3", report.abs_error.q3}};
    agg["rel_error"] = {{"q1", report.rel_error.q1},
                        {"median", report.rel_error.median},
                        {"q3", report.rel_error.q3},
                        {"mean", report.mean_rel_error}};
    agg["coverage"] = report.coverage;
    agg["miss_rate"] = report.miss_rate;
    agg["exceedance_rate"] = report.exceedance_rate;
    agg["interval_count"] = report.interval_count;
    agg["miss_count"] = report.miss_count;
    agg["exceedance_count"] = report.exceedance_count;
    doc["aggregates"] = std::move(agg);
    Json days = Json::array();
    for (const auto& d : report.days) {
        Json day;
        day["origin"] = format_date(d.origin);
        day["target"] = format_date(d.target);
        Json rows = Json::array();
        for (std::size_t i = 0; i < d.region_ids.size(); ++i) {
            rows.push_back({{"region", d.region_ids[i]},
                            {"point", d.points[i]},
                            {"lo", d.intervals[i].lo},
                            {"hi", d.intervals[i].hi},
                            {"observed", d.observed[i]},
                            {"abs_error", d.abs_errors[i]},
                            {"rel_error", d.rel_errors[i]},
                            {"hit", static_cast<bool>(d.hits[i])},
                            {"exceedance", static_cast<bool>(d.exceedances[i])}});
        }
        day["regions"] = std::move(rows);
        days.push_back(std::move(day));
    }
    doc["days"] = std::move(days);
    Json skipped = Json::array();
    for (const auto& s : report.skipped) skipped.push_back({{"date", format_date(s.date)}, {"reason", s.reason}});
    doc["skipped"] = std::move(skipped);
    return doc;
}

void write_report_csv(const BacktestReport& report, std::ostream& out) {
    out << "origin,target,region,point,lo,hi,observed,abs_error,rel_error,hit,exceedance\n";
    for (const auto& d : report.days) {
        for (std::size_t i = 0; i < d.region_ids.size(); ++i) {
            out << format_date(d.origin) << ',' << format_date(d.target) << ',' << d.region_ids[i] << ','
                << format_number(d.points[i]) << ',' << format_number(d.intervals[i].lo) << ','
                << format_number(d.intervals[i].hi) << ',' << d.observed[i] << ','
                << format_number(d.abs_errors[i]) << ',' << format_number(d.rel_errors[i]) << ','
                << (d.hits[i] ? 1 : 0) << ',' << (d.exceedances[i] ? 1 : 0) << '\n';
        }
    }
}

void write_report_summary(const BacktestReport& report, std::ostream& out) {
    char line[256];
    out << "target       median_abs  mean_rel  coverage  upper_exceed\n";
    for (const auto& d : report.days) {
        std::vector<double> abs = d.abs_errors;
        std::sort(abs.begin(), abs.end());
        const double med = abs.empty() ? 0.0 : sorted_quantile(abs, 0.5);
        double rel = 0.0;
        for (const double r : d.rel_errors) rel += r;
        const double n = std::max<double>(1.0, static_cast<double>(d.rel_errors.size()));
        const auto hits = std::count(d.hits.begin(), d.hits.end(), true);
        const auto exc = std::count(d.exceedances.begin(), d.exceedances.end(), true);
        std::snprintf(line, sizeof line, "%s  %10.2f  %8.4f  %8.4f  %12.4f\n", format_date(d.target).c_str(), med,
                      rel / n, static_cast<double>(hits) / n, static_cast<double>(exc) / n);
        out << line;
    }
    std::snprintf(line, sizeof line,
                  "\nabs error: median %.2f (q1 %.2f, q3 %.2f)\n"
                  "rel error: mean %.4f, median %.4f (q1 %.4f, q3 %.4f)\n",
                  report.abs_error.median, report.abs_error.q1, report.abs_error.q3, report.mean_rel_error,
                  report.rel_error.median, report.rel_error.q1, report.rel_error.q3);
    out << line;
    std::snprintf(line, sizeof line, "intervals: %zu, coverage %.4f, misses %zu, upper exceedances %zu\n",
                  report.interval_count, report.coverage, report.miss_count, report.exceedance_count);
    out << line;
    if (!report.skipped.empty()) out << "skipped dates: " << report.skipped.size() << '\n';
}

}  // namespace icucast
