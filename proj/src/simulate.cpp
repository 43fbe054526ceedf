#include "icucast/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "icucast/errors.hpp"
#include "icucast/numeric.hpp"

namespace icucast {

namespace {

std::string region_label(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "R%02d", i + 1);
    return buf;
}

std::vector<Date> date_range(Date start, int days) {
    std::vector<Date> dates(static_cast<std::size_t>(days));
    for (int t = 0; t < days; ++t) dates[static_cast<std::size_t>(t)] = start + std::chrono::days{t};
    return dates;
}

}  // namespace

GlmmSimulation simulate_glmm_panel(const GlmmGenerator& gen) {
    if (gen.regions < 1 || gen.days < 1) throw DomainError("generator needs regions >= 1 and days >= 1");
    if (gen.populations.size() != 1 && gen.populations.size() != static_cast<std::size_t>(gen.regions)) {
        throw DomainError("populations must have one entry or one per region");
    }
    for (const Count p : gen.populations) {
        if (p < 1) throw DomainError("populations must be positive");
    }
    // Symmetric square root handles semi-definite matrices.
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(gen.sigma_b);
    if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, gen.sigma_b.cwiseAbs().maxCoeff())) {
        throw DomainError("sigma_b must be positive semi-definite");
    }
    const Eigen::Matrix3d root =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    const RngStream stream(gen.seed, 0x474C4D4DULL);
    auto engine = stream.engine();
    std::normal_distribution<double> normal(0.0, 1.0);

    GlmmSimulation sim;
    std::vector<RegionSeries> series;
    const auto dates = date_range(gen.start_date, gen.days);
    for (int i = 0; i < gen.regions; ++i) {
        Eigen::Vector3d z;
        for (int k = 0; k < 3; ++k) z[k] = normal(engine);
        const Eigen::Vector3d b = root * z;
        const Count pop = gen.populations.size() == 1 ? gen.populations[0]
                                                      : gen.populations[static_cast<std::size_t>(i)];
        const Eigen::Vector3d coef = gen.beta + b;
        std::vector<double> mu(static_cast<std::size_t>(gen.days));
        std::vector<Count> counts(static_cast<std::size_t>(gen.days));
        for (int t = 1; t <= gen.days; ++t) {
            const double td = t;
            const double m =
                std::exp(coef[0] + coef[1] * td + coef[2] * td * td + std::log(static_cast<double>(pop)));
            mu[static_cast<std::size_t>(t - 1)] = m;
            counts[static_cast<std::size_t>(t - 1)] = draw_poisson(engine, m);
        }
        sim.b_true.push_back(b);
        sim.mu.push_back(std::move(mu));
        series.emplace_back(region_label(i), dates, std::move(counts), pop);
    }
    sim.panel = Panel(std::move(series));
    return sim;
}

IngarchSimulation simulate_ingarch_series(const IngarchGenerator& gen) {
    if (gen.days < 1) throw DomainError("generator needs days >= 1");
    if (!(gen.mu1 > 0.0)) throw DomainError("mu1 must be positive");
    const IngarchSpec spec{static_cast<int>(gen.gamma.size()) - 1, gen.alpha0 > 0.0};
    const IngarchParams params{gen.alpha0, gen.alpha1, gen.gamma};
    validate(params, spec);

    const RngStream stream(gen.seed, 0x494E4741ULL);
    auto engine = stream.engine();
    std::vector<double> mu(static_cast<std::size_t>(gen.days));
    std::vector<Count> counts(static_cast<std::size_t>(gen.days));
    for (std::size_t t = 0; t < counts.size(); ++t) {
        if (t == 0) {
            mu[0] = gen.mu1;
        } else {
            double trend = 0.0;
            double power = 1.0;
            for (const double g : gen.gamma) {
                trend += g * power;
                power *= static_cast<double>(t);
            }
            mu[t] = gen.alpha0 * mu[t - 1] + gen.alpha1 * static_cast<double>(counts[t - 1]) + trend;
        }
        counts[t] = draw_poisson(engine, mu[t]);
    }
    return {RegionSeries(gen.region_id, date_range(gen.start_date, gen.days), std::move(counts),
                         gen.population),
            std::move(mu)};
}

}  // namespace icucast
