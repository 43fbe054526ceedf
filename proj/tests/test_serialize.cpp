#include <catch_amalgamated.hpp>

#include <sstream>

#include "helpers.hpp"
#include "icucast/data.hpp"
#include "icucast/errors.hpp"
#include "icucast/serialize.hpp"
#include "icucast/simulate.hpp"

using namespace icucast;
using testutil::day;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("format_number round-trips") {
    for (double v : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 1e-300, 123456789.125}) {
        CHECK(std::stod(format_number(v)) == v);
    }
    CHECK(format_number(57.0) == "57");
    CHECK(format_number(0.5) == "0.5");
}

TEST_CASE("GLMM fit JSON round trip") {
    GlmmGenerator gen;
    gen.regions = 6;
    gen.days = 15;
    gen.seed = 21;
    gen.sigma_b = Eigen::Vector3d(0.1, 1e-3, 1e-7).asDiagonal();
    const auto panel = simulate_glmm_panel(gen).panel;
    const auto fit = fit_glmm(panel, GlmmSpec{2, CovarianceStructure::block_01});
    const auto doc = glmm_fit_to_json(fit);
    const auto back = glmm_fit_from_json(Json::parse(doc.dump()));
    CHECK(back.beta == fit.beta);
    CHECK(back.sigma_params.structure == fit.sigma_params.structure);
    CHECK(back.sigma_params.theta == fit.sigma_params.theta);
    CHECK(back.region_ids == fit.region_ids);
    CHECK(back.b_modes == fit.b_modes);
    CHECK(back.loglik == fit.loglik);
    CHECK(back.bic == fit.bic);
    CHECK(back.num_observations == fit.num_observations);
    CHECK(glmm_fit_to_json(back) == doc);
    CHECK(doc["sigma_params"].contains("sigma01"));
    CHECK_FALSE(doc["sigma_params"].contains("sigma02"));

    Json broken = doc;
    broken.erase("beta");
    CHECK_THROWS_AS(glmm_fit_from_json(broken), ValueError);
    broken = doc;
    broken["log_cholesky"] = {1.0};
    CHECK_THROWS(glmm_fit_from_json(broken));
}

TEST_CASE("INGARCH fit JSON round trip") {
    IngarchGenerator gen;
    gen.days = 60;
    gen.seed = 4;
    const auto sim = simulate_ingarch_series(gen);
    const auto fit = fit_ingarch(sim.series, IngarchSpec{0, true});
    const auto doc = ingarch_fit_to_json(fit);
    const auto back = ingarch_fit_from_json(Json::parse(doc.dump()));
    CHECK(back.params.alpha0 == fit.params.alpha0);
    CHECK(back.params.alpha1 == fit.params.alpha1);
    CHECK(back.params.gamma == fit.params.gamma);
    CHECK(back.mu1 == fit.mu1);
    CHECK(back.mu_path == fit.mu_path);
    CHECK(back.spec == fit.spec);
    CHECK(ingarch_fit_to_json(back) == doc);

    Json broken = doc;
    broken["alpha0"] = 0.9;
    broken["alpha1"] = 0.9;
    CHECK_THROWS(ingarch_fit_from_json(broken));
}

TEST_CASE("forecast CSV and JSON layout") {
    EnsembleForecast f;
    f.region_id = "Abruzzo";
    f.horizon = 1;
    f.target_date = day(2020, 4, 10);
    f.point = 57;
    f.interval = {48, 91};
    f.weight = 0.25;
    f.glmm_point = 60;
    f.ingarch_point = 56;
    f.flags = kFlagPooledWeight;
    EnsembleForecast g = f;
    g.region_id = "Valle d'Aosta, VdA";
    g.flags = kFlagGlmmFailed | kFlagPooledWeight;
    const std::vector<EnsembleForecast> fs{f, g};

    std::ostringstream out;
    write_forecasts_csv(fs, out);
    const auto lines = lines_of(out.str());
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "region,date_forecast,horizon,point,lo,hi,weight,glmm_point,ingarch_point,model_flags");
    const auto row = csv::split_record(lines[1]);
    CHECK(row == std::vector<std::string>{"Abruzzo", "2020-04-10", "1", "57", "48", "91", "0.25", "60", "56",
                                          flag_names(kFlagPooledWeight).front()});
    const auto quoted = csv::split_record(lines[2]);
    REQUIRE(quoted.size() == 10);
    CHECK(quoted[0] == g.region_id);
    CHECK(quoted[9].find('|') != std::string::npos);

    const auto doc = forecasts_to_json(fs);
    REQUIRE(doc.size() == 2);
    CHECK(doc[0]["region"] == "Abruzzo");
    CHECK(doc[0]["lo"] == 48.0);
    CHECK(doc[1]["model_flags"].size() == 2);
}

TEST_CASE("report serialization") {
    EnsembleForecast f;
    f.region_id = "A";
    f.target_date = day(2020, 4, 10);
    f.point = 10;
    f.interval = {8, 12};
    const std::vector<EnsembleForecast> fs{f};
    const auto report = aggregate({score_day(fs, {{"A", 13}})}, {{day(2020, 4, 11), "insufficient history"}});
    const auto doc = report_to_json(report);
    CHECK(doc["aggregates"]["interval_count"] == 1);
    CHECK(doc["aggregates"]["exceedance_count"] == 1);
    CHECK(doc["days"][0]["regions"][0]["hit"] == false);
    CHECK(doc["skipped"][0]["reason"] == "insufficient history");

    std::ostringstream csv;
    write_report_csv(report, csv);
    const auto lines = lines_of(csv.str());
    REQUIRE(lines.size() == 2);
    CHECK(lines[1] == "2020-04-09,2020-04-10,A,10,8,12,13,3,0.23076923076923078,0,1");

    std::ostringstream summary;
    write_report_summary(report, summary);
    CHECK(summary.str().find("intervals: 1") != std::string::npos);
    CHECK(summary.str().find("skipped dates: 1") != std::string::npos);
}
