#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "icucast/data.hpp"
#include "icucast/ingarch.hpp"

namespace icucast {

struct GlmmGenerator {
    Eigen::Vector3d beta{-9.0, 0.2, -0.01};
    /// Positive semi-definite; zero gives a pure fixed-effects panel.
    Eigen::Matrix3d sigma_b = Eigen::Matrix3d::Zero();
    /// One entry per region, or a single entry shared by all regions.
    std::vector<Count> populations{1'000'000};
    int days = 30;
    int regions = 20;
    std::uint64_t seed = 1;
    Date start_date = Date{std::chrono::year{2020} / 3 / 1};
};

struct GlmmSimulation {
    Panel panel;
    std::vector<Eigen::Vector3d> b_true;
    /// mu[region][t]
    std::vector<std::vector<double>> mu;
};

/// Region ids are "R01", "R02", ...; time runs t = 1..days.
GlmmSimulation simulate_glmm_panel(const GlmmGenerator& gen);

struct IngarchGenerator {
    double alpha0 = 0.4;
    double alpha1 = 0.3;
    std::vector<double> gamma{2.0};
    int days = 200;
    double mu1 = 1.0;
    std::uint64_t seed = 1;
    std::string region_id = "R01";
    Count population = 1'000'000;
    Date start_date = Date{std::chrono::year{2020} / 3 / 1};
};

struct IngarchSimulation {
    RegionSeries series;
    std::vector<double> mu;
};

IngarchSimulation simulate_ingarch_series(const IngarchGenerator& gen);

}  // namespace icucast
