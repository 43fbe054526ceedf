#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "icucast/errors.hpp"
#include "icucast/glmm.hpp"
#include "icucast/simulate.hpp"

using namespace icucast;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using Eigen::Matrix3d;
using Eigen::Vector3d;
using testutil::series;

namespace {

// Sigma_B that is eps * I on the internal time basis (1, t/T, (t/T)^2).
Matrix3d pinned_sigma(std::size_t days, double eps) {
    const double t = static_cast<double>(days);
    return Vector3d(eps, eps / (t * t), eps / (t * t * t * t)).asDiagonal();
}

GlmmSimulation simulated(std::uint64_t seed, int regions, int days, const Matrix3d& sigma) {
    GlmmGenerator gen;
    gen.seed = seed;
    gen.regions = regions;
    gen.days = days;
    gen.sigma_b = sigma;
    return simulate_glmm_panel(gen);
}

Matrix3d block_sigma() {
    Matrix3d s = Matrix3d::Zero();
    s(0, 0) = 0.1;
    s(1, 1) = 4e-4;
    s(0, 1) = s(1, 0) = 0.002;
    s(2, 2) = 1e-7;
    return s;
}

}  // namespace

TEST_CASE("tiny covariance reduces Laplace to the Poisson GLM") {
    const Panel panel({series("A", {3, 1, 4, 1, 5}, 1000)});
    const Vector3d beta(std::log(3.0 / 1000.0), 0.05, -0.01);
    const auto res = laplace_loglik(panel, beta, Matrix3d::Identity() * 1e-8);
    const double glm = oracle::glm_loglik(testutil::to_oracle(panel), beta);
    CHECK_THAT(res.loglik, WithinAbs(glm, 1e-4));
    CHECK(res.b_modes.at(0).norm() < 1e-5);
}

TEST_CASE("saturated constant fit") {
    const Count c = 4;
    const Count p = 5000;
    const Panel panel({series("A", {c, c, c, c, c}, p)});
    const Vector3d beta(std::log(static_cast<double>(c) / p), 0.0, 0.0);
    const auto res = laplace_loglik(panel, beta, Matrix3d::Identity() * 1e-8);
    CHECK_THAT(res.loglik, WithinAbs(5 * oracle::poisson_log_pmf(c, static_cast<double>(c)), 1e-4));
}

TEST_CASE("Laplace likelihood agrees with dense-grid integration") {
    for (std::uint64_t seed : {11u, 12u}) {
        const auto sim = simulated(seed, 3, 10, block_sigma());
        const Vector3d beta(-9.0, 0.2, -0.01);
        const double laplace = laplace_loglik(sim.panel, beta, block_sigma()).loglik;
        const double grid = oracle::grid_marginal(testutil::to_oracle(sim.panel), beta, block_sigma());
        CHECK(std::abs(laplace - grid) <= 0.005 * std::abs(grid));
    }
}

TEST_CASE("Laplace likelihood is invariant to region order") {
    const auto sim = simulated(5, 6, 12, block_sigma());
    auto reversed = sim.panel.series();
    std::reverse(reversed.begin(), reversed.end());
    const Vector3d beta(-9.0, 0.2, -0.01);
    const double a = laplace_loglik(sim.panel, beta, block_sigma()).loglik;
    const double b = laplace_loglik(Panel(reversed), beta, block_sigma()).loglik;
    CHECK_THAT(a, WithinRel(b, 1e-12));
}

TEST_CASE("Laplace likelihood requires a positive-definite covariance") {
    const auto sim = simulated(5, 3, 10, block_sigma());
    CHECK_THROWS_AS(laplace_loglik(sim.panel, Vector3d(-9, 0.2, -0.01), Matrix3d::Zero()), DomainError);
}

TEST_CASE("pinned covariance matches the pooled GLM by IRLS") {
    const auto sim = simulated(21, 20, 30, Matrix3d::Zero());
    const auto oracle_beta = oracle::irls_glm(testutil::to_oracle(sim.panel));
    CHECK((pooled_poisson_glm(sim.panel) - oracle_beta).cwiseAbs().maxCoeff() <= 1e-8);

    GlmmOptions options;
    options.fixed_covariance = CovarianceParams::from_matrix(CovarianceStructure::diagonal, pinned_sigma(30, 1e-10));
    const auto fit = fit_glmm(sim.panel, GlmmSpec{}, options);
    CHECK(fit.converged);
    for (int k = 0; k < 3; ++k) CHECK_THAT(fit.beta[k], WithinAbs(oracle_beta[k], 1e-4));
}

TEST_CASE("identical regions shrink the variance components") {
    std::vector<RegionSeries> regions;
    const std::vector<Count> counts{50, 55, 61, 70, 74, 80, 85, 88, 95, 99, 101, 104, 108, 110, 111};
    for (int i = 0; i < 6; ++i) regions.push_back(series("R" + std::to_string(i), counts, 500'000));
    const auto fit = fit_glmm(Panel(regions), GlmmSpec{});
    CHECK(fit.sigma().cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("minimal panel fits without error") {
    const Panel panel({series("A", {5, 6, 8}, 1000), series("B", {2, 3, 3}, 2000)});
    REQUIRE_NOTHROW(fit_glmm(panel, GlmmSpec{}));
    const Panel too_short({series("A", {5, 6}, 1000), series("B", {2, 3}, 2000)});
    CHECK_THROWS_AS(fit_glmm(too_short, GlmmSpec{}), InsufficientDataError);
    const Panel one({series("A", {5, 6, 7}, 1000)});
    CHECK_THROWS_AS(fit_glmm(one, GlmmSpec{}), InsufficientDataError);
}

TEST_CASE("fit recovers the fixed effects of a simulated panel") {
    const auto sim = simulated(101, 20, 30, block_sigma());
    const auto fit = fit_glmm(sim.panel, GlmmSpec{});
    REQUIRE(fit.converged);
    const Vector3d se = glmm_standard_errors(sim.panel, fit);
    const Vector3d truth(-9.0, 0.2, -0.01);
    for (int k = 0; k < 3; ++k) {
        CHECK(se[k] > 0.0);
        CHECK(std::abs(fit.beta[k] - truth[k]) <= 3.0 * se[k]);
    }
    CHECK(fit.beta[0] < 0.0);
    CHECK(fit.beta[1] > 0.0);
    CHECK(fit.beta[2] < 0.0);
    CHECK(fit.b_modes.size() == 20);
    CHECK_THAT(fit.bic, WithinRel(-2.0 * fit.loglik + 7.0 * std::log(600.0), 1e-12));
    CHECK(fit.sigma().ldlt().isPositive());
}

TEST_CASE("richer covariance structures never lower the maximized likelihood") {
    const auto sim = simulated(33, 12, 15, block_sigma());
    const auto diag = fit_glmm(sim.panel, GlmmSpec{2, CovarianceStructure::diagonal});
    GlmmOptions warm;
    warm.start_beta = diag.beta;
    warm.start_covariance = diag.sigma_params;
    const auto block = fit_glmm(sim.panel, GlmmSpec{2, CovarianceStructure::block_01}, warm);
    warm.start_beta = block.beta;
    warm.start_covariance = block.sigma_params;
    const auto full = fit_glmm(sim.panel, GlmmSpec{2, CovarianceStructure::unstructured}, warm);
    CHECK(block.loglik >= diag.loglik - 1e-6);
    CHECK(full.loglik >= block.loglik - 1e-6);
}

TEST_CASE("covariance selection") {
    const auto sim = simulated(44, 20, 15, Vector3d(0.2, 1e-3, 1e-7).asDiagonal());
    const std::vector<CovarianceStructure> single{CovarianceStructure::unstructured};
    CHECK(select_covariance(sim.panel, single).spec.covariance == CovarianceStructure::unstructured);

    int diagonal_wins = 0;
    for (std::uint64_t seed : {44u, 45u, 46u}) {
        const auto data = simulated(seed, 20, 15, Vector3d(0.2, 1e-3, 1e-7).asDiagonal());
        const std::vector<CovarianceStructure> both{CovarianceStructure::block_01, CovarianceStructure::diagonal};
        const auto sel = select_covariance(data.panel, both);
        REQUIRE(sel.bic.size() == 2);
        if (sel.spec.covariance == CovarianceStructure::diagonal) ++diagonal_wins;
    }
    CHECK(diagonal_wins >= 2);
}

TEST_CASE("covariance parameter maps") {
    for (auto s : {CovarianceStructure::diagonal, CovarianceStructure::block_01, CovarianceStructure::unstructured}) {
        CHECK(parse_covariance_structure(to_string(s)) == s);
        const auto init = CovarianceParams::initial(s);
        CHECK(init.theta.size() == covariance_param_count(s));
        CHECK(init.cholesky_factor().isApprox(Matrix3d::Identity() * 0.1));
    }
    CHECK_THROWS_AS(parse_covariance_structure("banded"), ValueError);

    const Matrix3d s = block_sigma();
    const auto p = CovarianceParams::from_matrix(CovarianceStructure::block_01, s);
    CHECK((p.matrix() - s).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((p.embed(CovarianceStructure::unstructured).matrix() - s).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(CovarianceParams::from_matrix(CovarianceStructure::diagonal, s), DomainError);
}

TEST_CASE("prediction plug-in identities") {
    const Count p = 250'000;
    const Panel panel({series("A", {1, 1, 1, 1}, p), series("B", {1, 1, 1, 1}, p)});
    GlmmFit fit;
    fit.beta = Vector3d(-std::log(static_cast<double>(p)), 0.0, 0.0);
    fit.region_ids = {"A", "B"};
    fit.b_modes = {Vector3d::Zero(), Vector3d::Zero()};
    fit.num_days = 4;
    for (int h = 1; h <= 5; ++h) CHECK_THAT(predict_glmm(fit, panel, "A", h), WithinRel(1.0, 1e-12));

    const Panel doubled({series("A", {1, 1, 1, 1}, 2 * p), series("B", {1, 1, 1, 1}, 2 * p)});
    GlmmFit shifted = fit;
    shifted.beta[0] -= std::log(2.0);
    CHECK_THAT(predict_glmm(shifted, doubled, "A", 3), WithinRel(predict_glmm(fit, panel, "A", 3), 1e-12));

    fit.beta = Vector3d(-10.0, 0.3, -0.02);
    fit.b_modes = {Vector3d(0.5, -0.05, 0.001), Vector3d::Zero()};
    const double t = 4 + 2;
    const double by_hand = std::exp((-10.0 + 0.5) + (0.3 - 0.05) * t + (-0.02 + 0.001) * t * t + std::log(250000.0));
    CHECK_THAT(predict_glmm(fit, panel, "A", 2), WithinRel(by_hand, 1e-12));

    fit.b_modes = {Vector3d::Zero(), Vector3d::Zero()};
    CHECK(predict_glmm(fit, panel, "A", 2) == predict_glmm(fit, panel, "B", 2));
    CHECK_THROWS_AS(predict_glmm(fit, panel, "Z", 1), LookupError);
}

TEST_CASE("bootstrap interval of a constant panel") {
    const Count c = 400;
    std::vector<RegionSeries> regions;
    for (int i = 0; i < 8; ++i) regions.push_back(series("R" + std::to_string(i), std::vector<Count>(12, c), 1'000'000));
    const Panel panel(regions);
    const auto iv = glmm_interval(panel, GlmmSpec{}, "R0", 1, 200, 0.99, RngStream(3, 1));
    CHECK(iv.contains(static_cast<double>(c)));
    const double expected = 2.0 * 2.576 * std::sqrt(static_cast<double>(c));
    CHECK(iv.width() >= 0.6 * expected);
    CHECK(iv.width() <= 1.5 * expected);
    CHECK(iv.lo == std::floor(iv.lo));
}

TEST_CASE("bootstrap intervals nest by level and degenerate at one replicate") {
    const auto sim = simulated(8, 6, 12, block_sigma());
    const auto wide = glmm_interval(sim.panel, GlmmSpec{}, "R02", 2, 60, 0.99, RngStream(5, 1));
    const auto narrow = glmm_interval(sim.panel, GlmmSpec{}, "R02", 2, 60, 0.95, RngStream(5, 1));
    CHECK(wide.lo <= narrow.lo);
    CHECK(narrow.hi <= wide.hi);
    const auto single = glmm_interval(sim.panel, GlmmSpec{}, "R02", 1, 1, 0.99, RngStream(5, 1));
    CHECK(single.lo == single.hi);
}

TEST_CASE("bootstrap does not depend on the worker count") {
    const auto sim = simulated(9, 6, 12, block_sigma());
    const auto base = fit_glmm(sim.panel, GlmmSpec{});
    BootstrapOptions one{30, 0.99, 1};
    BootstrapOptions three{30, 0.99, 3};
    const auto a = glmm_bootstrap(sim.panel, GlmmSpec{}, base, 3, one, RngStream(1, 1));
    const auto b = glmm_bootstrap(sim.panel, GlmmSpec{}, base, 3, three, RngStream(1, 1));
    CHECK(a.intervals == b.intervals);
    CHECK(a.failed_replicates == 0);
}
