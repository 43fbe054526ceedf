#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "icucast/errors.hpp"
#include "icucast/simulate.hpp"

using namespace icucast;

namespace {

double mean_of(const std::vector<Count>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

TEST_CASE("GLMM generator is deterministic") {
    GlmmGenerator gen;
    gen.sigma_b = Eigen::Vector3d(0.1, 1e-3, 1e-6).asDiagonal();
    gen.seed = 42;
    const auto a = simulate_glmm_panel(gen);
    const auto b = simulate_glmm_panel(gen);
    CHECK(a.panel == b.panel);
    CHECK(a.b_true == b.b_true);
    gen.seed = 43;
    CHECK_FALSE(simulate_glmm_panel(gen).panel == a.panel);
    CHECK(a.panel.num_regions() == 20);
    CHECK(a.panel.num_days() == 30);
    CHECK(a.panel.series().front().region_id() == "R01");
    CHECK(a.panel.series().back().region_id() == "R20");
}

TEST_CASE("zero covariance gives an i.i.d. Poisson panel") {
    const double lambda = 25.0;
    const Count pop = 500'000;
    GlmmGenerator gen;
    gen.beta = {std::log(lambda) - std::log(static_cast<double>(pop)), 0.0, 0.0};
    gen.populations = {pop};
    gen.regions = 50;
    gen.days = 40;
    gen.seed = 3;
    const auto sim = simulate_glmm_panel(gen);
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : sim.panel.series()) {
        for (const Count c : s.counts()) {
            total += static_cast<double>(c);
            ++n;
        }
    }
    for (const auto& b : sim.b_true) CHECK(b.isZero());
    for (const auto& mu : sim.mu) {
        for (const double m : mu) CHECK_THAT(m, Catch::Matchers::WithinRel(lambda, 1e-12));
    }
    CHECK(std::abs(total / static_cast<double>(n) - lambda) <= 3.0 * std::sqrt(lambda / static_cast<double>(n)));
}

TEST_CASE("random-effect draws follow the covariance") {
    Eigen::Matrix3d sigma;
    sigma << 0.3, 0.01, 0.0, 0.01, 0.002, 0.0, 0.0, 0.0, 1e-4;
    GlmmGenerator gen;
    gen.sigma_b = sigma;
    gen.regions = 10'000;
    gen.days = 1;
    gen.seed = 9;
    const auto sim = simulate_glmm_panel(gen);
    Eigen::Matrix3d emp = Eigen::Matrix3d::Zero();
    for (const auto& b : sim.b_true) emp += b * b.transpose();
    emp /= static_cast<double>(sim.b_true.size());
    for (int k = 0; k < 3; ++k) CHECK(std::abs(emp(k, k) - sigma(k, k)) <= 0.05 * sigma(k, k));
    // Correlation 0.41: the off-diagonal is checked against its own scale.
    CHECK(std::abs(emp(0, 1) - sigma(0, 1)) <= 0.05 * std::sqrt(sigma(0, 0) * sigma(1, 1)));
}

TEST_CASE("GLMM generator validation") {
    GlmmGenerator gen;
    gen.sigma_b = Eigen::Vector3d(-1.0, 0.0, 0.0).asDiagonal();
    CHECK_THROWS_AS(simulate_glmm_panel(gen), DomainError);
    gen.sigma_b.setZero();
    gen.populations = {1, 2};
    CHECK_THROWS_AS(simulate_glmm_panel(gen), DomainError);
    gen.populations = {0};
    CHECK_THROWS_AS(simulate_glmm_panel(gen), DomainError);
    gen.populations = {100};
    gen.regions = 0;
    CHECK_THROWS_AS(simulate_glmm_panel(gen), DomainError);
}

TEST_CASE("INGARCH generator is deterministic") {
    IngarchGenerator gen;
    gen.seed = 5;
    const auto a = simulate_ingarch_series(gen);
    const auto b = simulate_ingarch_series(gen);
    CHECK(a.series == b.series);
    CHECK(a.mu == b.mu);
    CHECK(a.series.size() == 200);
    CHECK(a.mu.front() == gen.mu1);
    for (std::size_t t = 1; t < a.mu.size(); ++t) {
        CHECK(a.mu[t] == 0.4 * a.mu[t - 1] + 0.3 * static_cast<double>(a.series.counts()[t - 1]) + 2.0);
    }
}

TEST_CASE("INGARCH stationary mean") {
    IngarchGenerator gen;
    gen.days = 100'000;
    gen.seed = 11;
    const auto sim = simulate_ingarch_series(gen);
    const double expected = 2.0 / (1.0 - 0.4 - 0.3);
    CHECK(std::abs(mean_of(sim.series.counts()) - expected) <= 0.05 * expected);
}

TEST_CASE("INGARCH generator without feedback is i.i.d. Poisson") {
    IngarchGenerator gen;
    gen.alpha0 = 0.0;
    gen.alpha1 = 0.0;
    gen.gamma = {7.0};
    gen.mu1 = 7.0;
    gen.days = 20'000;
    gen.seed = 2;
    const auto sim = simulate_ingarch_series(gen);
    for (const double m : sim.mu) CHECK(m == 7.0);
    const double n = static_cast<double>(sim.series.size());
    CHECK(std::abs(mean_of(sim.series.counts()) - 7.0) <= 3.0 * std::sqrt(7.0 / n));
}

TEST_CASE("INGARCH generator validation") {
    IngarchGenerator gen;
    gen.alpha0 = 0.7;
    gen.alpha1 = 0.4;
    CHECK_THROWS(simulate_ingarch_series(gen));
    gen.alpha0 = 0.4;
    gen.alpha1 = 0.3;
    gen.mu1 = 0.0;
    CHECK_THROWS_AS(simulate_ingarch_series(gen), DomainError);
}
