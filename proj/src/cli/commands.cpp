#include "icucast/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "icucast/backtest.hpp"
#include "icucast/ensemble.hpp"
#include "icucast/errors.hpp"
#include "icucast/glmm.hpp"
#include "icucast/ingarch.hpp"
#include "icucast/serialize.hpp"
#include "icucast/simulate.hpp"

#ifndef ICUCAST_VERSION
#define ICUCAST_VERSION "0.0.0"
#endif

namespace icucast::cli {

namespace fs = std::filesystem;

void validate(const RunConfig& config) {
    if (config.horizon < 1 || config.horizon > 5) throw ValueError("horizon must be in 1..5");
    if (!(config.level > 0.0 && config.level < 1.0)) throw ValueError("level must be in (0, 1)");
    if (config.window < 2) throw ValueError("window must be >= 2");
    if (config.glmm_replicates < 1 || config.ingarch_replicates < 1) {
        throw ValueError("replicate counts must be >= 1");
    }
    if (config.covariance != "select") (void)parse_covariance_structure(config.covariance);
}

void write_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + tmp.string() + "'");
        out << contents;
        out.flush();
        if (!out) throw DataError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw fs::filesystem_error("cannot replace file", path, ec);
    }
}

namespace {

// All outputs of a command are rendered first and then renamed into place.
void commit(const std::vector<std::pair<fs::path, std::string>>& files) {
    for (const auto& [path, contents] : files) write_atomic(path, contents);
}

Panel load_panel(const RunConfig& config) {
    Panel panel;
    try {
        panel = parse_regional_csv(config.counts_path, config.columns);
    } catch (const SchemaError&) {
        // Files written by `simulate` (or serialize_panel_csv) use canonical names.
        const ColumnMap defaults;
        if (config.columns.date != defaults.date || config.columns.region != defaults.region ||
            config.columns.count != defaults.count) {
            throw;
        }
        panel = parse_panel_csv(config.counts_path);
    }
    if (!config.population_path.empty()) {
        panel = attach_population(panel, parse_population_csv(config.population_path));
    } else if (!panel.has_population()) {
        throw DataError("no population table given and the counts file has no population column");
    }
    if (panel.empty()) throw InsufficientDataError("counts file has no data rows");
    return panel;
}

std::vector<CovarianceStructure> candidates_for(const std::string& name) {
    if (name == "select") {
        return {CovarianceStructure::diagonal, CovarianceStructure::block_01, CovarianceStructure::unstructured};
    }
    return {parse_covariance_structure(name)};
}

EnsembleConfig ensemble_config(const RunConfig& config) {
    EnsembleConfig ens;
    ens.horizon = config.horizon;
    ens.level = config.level;
    ens.glmm_replicates = config.glmm_replicates;
    ens.ingarch_replicates = config.ingarch_replicates;
    ens.seed = config.seed;
    ens.workers = resolve_workers(config.workers);
    ens.covariance_candidates = candidates_for(config.covariance);
    ens.reoptimize_per_horizon = config.reoptimize_per_horizon;
    return ens;
}

Json config_json(const RunConfig& config) {
    Json doc;
    doc["counts_path"] = config.counts_path.string();
    doc["population_path"] = config.population_path.string();
    doc["columns"] = {{"date", config.columns.date}, {"region", config.columns.region}, {"count", config.columns.count}};
    doc["window"] = config.window;
    doc["horizon"] = config.horizon;
    doc["level"] = config.level;
    doc["glmm_replicates"] = config.glmm_replicates;
    doc["ingarch_replicates"] = config.ingarch_replicates;
    doc["seed"] = config.seed;
    doc["covariance"] = config.covariance;
    doc["select_daily"] = config.select_daily;
    doc["reoptimize_per_horizon"] = config.reoptimize_per_horizon;
    doc["as_of"] = config.as_of ? Json(*config.as_of) : Json(nullptr);
    return doc;
}

Json weights_json(const WeightSolution& w, int horizon) {
    Json doc;
    doc["calibration_horizon"] = horizon;
    doc["mode"] = w.mode == WeightMode::pooled ? "pooled" : "per_region";
    Json per = Json::object();
    for (std::size_t i = 0; i < w.region_ids.size(); ++i) {
        per[w.region_ids[i]] = {{"weight", w.weights[i]}, {"objective", w.objective[i]}};
    }
    doc["regions"] = std::move(per);
    return doc;
}

Panel forecast_window(const Panel& panel, const RunConfig& config) {
    Panel p = panel;
    if (config.as_of) p = truncate_after(p, parse_date(*config.as_of));
    return window(p, config.window);
}

template <class F>
int guarded(std::ostream& log, F&& body) {
    try {
        return body();
    } catch (const DataError& e) {
        log << "error: " << e.what() << '\n';
        return kExitDataError;
    } catch (const NumericError& e) {
        log << "numerical failure: " << e.what() << '\n';
        return kExitNumericFailure;
    } catch (const fs::filesystem_error& e) {
        log << "error: " << e.what() << '\n';
        return kExitDataError;
    }
}

}  // namespace

int cmd_forecast(const RunConfig& config, std::ostream& log) {
    return guarded(log, [&] {
        validate(config);
        const Panel panel = forecast_window(load_panel(config), config);
        const EnsembleRun run = forecast_ensemble(panel, ensemble_config(config));
        for (const auto& w : run.warnings) log << "warning: " << w << '\n';
        if (run.forecasts.empty()) {
            log << "numerical failure: no forecasts produced\n";
            return static_cast<int>(kExitNumericFailure);
        }

        std::ostringstream csv;
        write_forecasts_csv(run.forecasts, csv);

        Json meta;
        meta["tool"] = "icucast";
        meta["version"] = ICUCAST_VERSION;
        meta["command"] = "forecast";
        meta["config"] = config_json(config);
        meta["window"] = {{"start", format_date(panel.common_dates().front())},
                          {"end", format_date(panel.last_date())},
                          {"days", panel.num_days()}};
        meta["glmm"] = run.glmm_fit ? Json{{"covariance_structure", std::string(to_string(run.glmm_spec->covariance))},
                                           {"converged", run.glmm_fit->converged},
                                           {"bic", run.glmm_fit->bic},
                                           {"failed_bootstrap_replicates", run.glmm_failed_replicates}}
                                    : Json(nullptr);
        Json orders = Json::object();
        for (const auto& [region, fit] : run.ingarch_fits) {
            orders[region] = {{"trend_order", fit.spec.trend_order}, {"converged", fit.converged}, {"bic", fit.bic}};
        }
        meta["ingarch"] = std::move(orders);
        Json weights = Json::array();
        for (std::size_t c = 0; c < run.weights.size(); ++c) {
            weights.push_back(weights_json(run.weights[c], static_cast<int>(c + 1)));
        }
        meta["weights"] = std::move(weights);
        meta["warnings"] = run.warnings;

        commit({{config.output_dir / "forecast.csv", csv.str()},
                {config.output_dir / "forecast.json", forecasts_to_json(run.forecasts).dump(2) + "\n"},
                {config.output_dir / "metadata.json", meta.dump(2) + "\n"}});
        log << "wrote " << run.forecasts.size() << " forecasts to " << config.output_dir.string() << '\n';
        return static_cast<int>(kExitOk);
    });
}

int cmd_backtest(const RunConfig& config, const BacktestRange& range, std::ostream& log) {
    return guarded(log, [&] {
        validate(config);
        const Panel panel = load_panel(config);
        BacktestConfig bt;
        bt.window = config.window;
        bt.horizon = config.horizon;
        bt.ensemble = ensemble_config(config);
        bt.select_daily = config.select_daily;
        const BacktestReport report = rolling_backtest(panel, parse_date(range.start), parse_date(range.end), bt);

        std::ostringstream csv;
        write_report_csv(report, csv);
        std::ostringstream summary;
        write_report_summary(report, summary);
        Json meta;
        meta["tool"] = "icucast";
        meta["version"] = ICUCAST_VERSION;
        meta["command"] = "backtest";
        meta["config"] = config_json(config);
        meta["range"] = {{"start", range.start}, {"end", range.end}};
        commit({{config.output_dir / "backtest_report.json", report_to_json(report).dump(2) + "\n"},
                {config.output_dir / "backtest_days.csv", csv.str()},
                {config.output_dir / "backtest_summary.txt", summary.str()},
                {config.output_dir / "metadata.json", meta.dump(2) + "\n"}});
        log << summary.str();
        return static_cast<int>(kExitOk);
    });
}

namespace {

Eigen::Matrix3d sigma_from_values(const std::vector<double>& v) {
    Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
    if (v.size() == 3) {
        s.diagonal() << v[0], v[1], v[2];
    } else if (v.size() == 4) {
        s(0, 0) = v[0];
        s(1, 1) = v[1];
        s(0, 1) = s(1, 0) = v[2];
        s(2, 2) = v[3];
    } else if (v.size() == 9) {
        for (int i = 0; i < 9; ++i) s(i / 3, i % 3) = v[static_cast<std::size_t>(i)];
    } else {
        throw ValueError("sigma needs 3, 4 or 9 values");
    }
    return s;
}

}  // namespace

int cmd_simulate(const SimulateConfig& config, std::ostream& log) {
    return guarded(log, [&] {
        std::ostringstream csv;
        Json truth;
        const Date start = parse_date(config.start_date);
        if (config.model == "glmm") {
            if (config.beta.size() != 3) throw ValueError("beta needs 3 values");
            GlmmGenerator gen;
            gen.beta = {config.beta[0], config.beta[1], config.beta[2]};
            gen.sigma_b = sigma_from_values(config.sigma);
            gen.populations = config.populations;
            gen.days = config.days;
            gen.regions = config.regions;
            gen.seed = config.seed;
            gen.start_date = start;
            const auto sim = simulate_glmm_panel(gen);
            serialize_panel_csv(sim.panel, csv);
            Json b = Json::object();
            for (std::size_t i = 0; i < sim.b_true.size(); ++i) {
                b[sim.panel.series()[i].region_id()] = {sim.b_true[i][0], sim.b_true[i][1], sim.b_true[i][2]};
            }
            truth["model"] = "glmm";
            truth["beta"] = config.beta;
            truth["b"] = std::move(b);
        } else if (config.model == "ingarch") {
            IngarchGenerator gen;
            gen.alpha0 = config.alpha0;
            gen.alpha1 = config.alpha1;
            gen.gamma = config.gamma;
            gen.days = config.days;
            gen.mu1 = config.mu1;
            gen.seed = config.seed;
            gen.start_date = start;
            gen.population = config.populations.front();
            const auto sim = simulate_ingarch_series(gen);
            serialize_panel_csv(Panel({sim.series}), csv);
            truth["model"] = "ingarch";
            truth["mu"] = sim.mu;
        } else {
            throw ValueError("unknown generator '" + config.model + "'");
        }
        std::vector<std::pair<fs::path, std::string>> files{{config.output_path, csv.str()}};
        if (config.truth_path) files.emplace_back(*config.truth_path, truth.dump(2) + "\n");
        commit(files);
        log << "wrote " << config.output_path.string() << '\n';
        return static_cast<int>(kExitOk);
    });
}

int cmd_fit(const RunConfig& config, std::ostream& log) {
    return guarded(log, [&] {
        validate(config);
        const Panel panel = forecast_window(load_panel(config), config);
        const auto candidates = candidates_for(config.covariance);
        const auto selection = select_covariance(panel, candidates);
        Json glmm = glmm_fit_to_json(selection.fit);
        Json bics = Json::object();
        for (const auto& [structure, bic] : selection.bic) bics[std::string(to_string(structure))] = bic;
        glmm["candidate_bic"] = std::move(bics);

        Json ingarch = Json::object();
        for (const auto& s : panel.series()) {
            try {
                const auto sel = select_trend_order(s);
                Json fit = ingarch_fit_to_json(sel.fit);
                Json bics_r = Json::object();
                for (const auto& [order, bic] : sel.bic) bics_r[std::to_string(order)] = bic;
                fit["candidate_bic"] = std::move(bics_r);
                ingarch[s.region_id()] = std::move(fit);
            } catch (const NumericError& e) {
                log << "warning: INGARCH for '" << s.region_id() << "': " << e.what() << '\n';
                ingarch[s.region_id()] = nullptr;
            }
        }
        commit({{config.output_dir / "glmm_fit.json", glmm.dump(2) + "\n"},
                {config.output_dir / "ingarch_fits.json", ingarch.dump(2) + "\n"}});
        log << "wrote fits to " << config.output_dir.string() << '\n';
        return static_cast<int>(kExitOk);
    });
}

namespace {

void add_run_options(CLI::App& cmd, RunConfig& config, bool needs_output = true) {
    cmd.add_option("--counts", config.counts_path, "Counts CSV (one row per region and day)")->required();
    cmd.add_option("--population", config.population_path, "Population CSV with columns region,population");
    if (needs_output) cmd.add_option("--out", config.output_dir, "Output directory");
    cmd.add_option("--window", config.window, "Fitting window in days")->capture_default_str();
    cmd.add_option("--horizon", config.horizon, "Forecast horizon in days (1-5)")->capture_default_str();
    cmd.add_option("--level", config.level, "Prediction interval level")->capture_default_str();
    cmd.add_option("--glmm-replicates", config.glmm_replicates, "Block bootstrap replicates")->capture_default_str();
    cmd.add_option("--ingarch-replicates", config.ingarch_replicates, "Parametric bootstrap replicates")
        ->capture_default_str();
    cmd.add_option("--seed", config.seed, "Random seed")->capture_default_str();
    cmd.add_option("--workers", config.workers, "Worker threads (0 = all cores)")->capture_default_str();
    cmd.add_option("--covariance", config.covariance, "diagonal | block_01 | unstructured | select")
        ->capture_default_str();
    cmd.add_flag("--select-daily", config.select_daily, "Re-select the covariance structure on every backtest date");
    cmd.add_flag("--reoptimize-per-horizon", config.reoptimize_per_horizon,
                 "Calibrate a separate ensemble weight per horizon");
    cmd.add_option("--date-column", config.columns.date)->capture_default_str();
    cmd.add_option("--region-column", config.columns.region)->capture_default_str();
    cmd.add_option("--count-column", config.columns.count)->capture_default_str();
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Short-term ensemble forecasts for regional count panels"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ICUCAST_VERSION);

    RunConfig forecast_cfg;
    auto* forecast = app.add_subcommand("forecast", "Ensemble forecasts with prediction intervals");
    add_run_options(*forecast, forecast_cfg);
    std::string as_of;
    forecast->add_option("--as-of", as_of, "Forecast origin date (default: last date)");

    RunConfig backtest_cfg;
    BacktestRange range;
    auto* backtest = app.add_subcommand("backtest", "Rolling-origin evaluation");
    add_run_options(*backtest, backtest_cfg);
    backtest->add_option("--start", range.start, "First origin date")->required();
    backtest->add_option("--end", range.end, "Last origin date")->required();

    SimulateConfig sim_cfg;
    auto* simulate = app.add_subcommand("simulate", "Write a synthetic panel");
    simulate->add_option("model", sim_cfg.model, "glmm | ingarch")->capture_default_str();
    simulate->add_option("--out", sim_cfg.output_path, "Output CSV")->capture_default_str();
    simulate->add_option("--truth", sim_cfg.truth_path, "Optional JSON with latent truths");
    simulate->add_option("--seed", sim_cfg.seed)->capture_default_str();
    simulate->add_option("--start-date", sim_cfg.start_date)->capture_default_str();
    simulate->add_option("--days", sim_cfg.days)->capture_default_str();
    simulate->add_option("--regions", sim_cfg.regions)->capture_default_str();
    simulate->add_option("--beta", sim_cfg.beta, "Fixed effects b0 b1 b2")->delimiter(',');
    simulate->add_option("--sigma", sim_cfg.sigma, "Sigma_B: 3 (diag), 4 (s0,s1,s01,s2) or 9 values")
        ->delimiter(',');
    simulate->add_option("--population", sim_cfg.populations, "One value or one per region")->delimiter(',');
    simulate->add_option("--alpha0", sim_cfg.alpha0)->capture_default_str();
    simulate->add_option("--alpha1", sim_cfg.alpha1)->capture_default_str();
    simulate->add_option("--gamma", sim_cfg.gamma)->delimiter(',');
    simulate->add_option("--mu1", sim_cfg.mu1)->capture_default_str();

    RunConfig fit_cfg;
    auto* fit = app.add_subcommand("fit", "Fit both models and write the fits as JSON");
    add_run_options(*fit, fit_cfg);
    std::string fit_as_of;
    fit->add_option("--as-of", fit_as_of, "Last date of the fitting window");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(kExitDataError);
    }

    try {
        if (*forecast) {
            if (!as_of.empty()) forecast_cfg.as_of = as_of;
            return cmd_forecast(forecast_cfg, std::cerr);
        }
        if (*backtest) return cmd_backtest(backtest_cfg, range, std::cerr);
        if (*simulate) return cmd_simulate(sim_cfg, std::cerr);
        if (*fit) {
            if (!fit_as_of.empty()) fit_cfg.as_of = fit_as_of;
            return cmd_fit(fit_cfg, std::cerr);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDataError;
    }
    return kExitOk;
}

}  // namespace icucast::cli
