#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include <json.hpp>

#include "icucast/backtest.hpp"
#include "icucast/ensemble.hpp"
#include "icucast/glmm.hpp"
#include "icucast/ingarch.hpp"

namespace icucast {

using Json = nlohmann::ordered_json;

/// Shortest round-trip decimal representation.
std::string format_number(double value);

Json glmm_fit_to_json(const GlmmFit& fit);
GlmmFit glmm_fit_from_json(const Json& doc);

Json ingarch_fit_to_json(const IngarchFit& fit);
IngarchFit ingarch_fit_from_json(const Json& doc);

Json forecast_to_json(const EnsembleForecast& forecast);
/// Columns: region,date_forecast,horizon,point,lo,hi,weight,glmm_point,ingarch_point,model_flags
void write_forecasts_csv(std::span<const EnsembleForecast> forecasts, std::ostream& out);
Json forecasts_to_json(std::span<const EnsembleForecast> forecasts);

Json report_to_json(const BacktestReport& report);
/// One row per (date, region).
void write_report_csv(const BacktestReport& report, std::ostream& out);
/// Plain-text table of the four daily metrics plus the overall aggregates.
void write_report_summary(const BacktestReport& report, std::ostream& out);

}  // namespace icucast
