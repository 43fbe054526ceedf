#include "icucast/glmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "icucast/errors.hpp"

namespace icucast {

using Eigen::Matrix3d;
using Eigen::Vector3d;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kNewtonTol = 1e-8;
constexpr int kNewtonMaxIter = 50;
constexpr double kNewtonDecrementTol = 1e-12;

struct RegionData {
    std::vector<double> y;
    double log_factorials = 0.0;  // sum of log(y_t!)
    double total = 0.0;           // sum of y_t
    double offset = 0.0;          // log(population)
};

// Time basis (1, t/s, (t/s)^2), t = 1..T. Raw-scale quantities are D times the
// scaled ones with D = diag(1, 1/s, 1/s^2).
struct Design {
    double scale = 1.0;
    std::vector<Vector3d> basis;
    std::vector<RegionData> regions;
};

Vector3d raw_from_scaled(double s) { return {1.0, 1.0 / s, 1.0 / (s * s)}; }
Vector3d scaled_from_raw(double s) { return {1.0, s, s * s}; }

std::vector<Vector3d> make_basis(std::size_t days, double scale) {
    std::vector<Vector3d> basis(days);
    for (std::size_t t = 0; t < days; ++t) {
        const double u = static_cast<double>(t + 1) / scale;
        basis[t] = {1.0, u, u * u};
    }
    return basis;
}

RegionData make_region(const RegionSeries& series) {
    RegionData data;
    data.y.reserve(series.size());
    for (const Count c : series.counts()) {
        data.y.push_back(static_cast<double>(c));
        data.log_factorials += std::lgamma(static_cast<double>(c) + 1.0);
        data.total += static_cast<double>(c);
    }
    data.offset = std::log(static_cast<double>(series.population()));
    return data;
}

Design make_design(const Panel& panel) {
    Design design;
    design.scale = static_cast<double>(panel.num_days());
    design.basis = make_basis(panel.num_days(), design.scale);
    design.regions.reserve(panel.num_regions());
    for (const auto& s : panel.series()) design.regions.push_back(make_region(s));
    return design;
}

// Random effects are solved for in whitened coordinates b = L z with
// Sigma_B = L L^T. The prior term is then -z.z/2 and the Newton Hessian is
// I + L^T X'WX L, which stays well conditioned when Sigma_B is close to
// singular. The Laplace value is unchanged by this affine substitution.
Matrix3d prior_factor(const Matrix3d& sigma) {
    Eigen::LLT<Matrix3d> llt(sigma);
    if (!sigma.allFinite() || llt.info() != Eigen::Success) {
        throw DomainError("random-effect covariance is not positive definite");
    }
    return llt.matrixL();
}

// log p(y | b = L z) + log N(z; 0, I) without the -1.5 log(2 pi) constant,
// which cancels against the Gaussian normalizer of the Laplace step.
double joint_value(const RegionData& region, const std::vector<Vector3d>& basis,
                   const Vector3d& beta, const Matrix3d& lower, const Vector3d& z) {
    const Vector3d eff = beta + lower * z;
    double value = -region.log_factorials - 0.5 * z.squaredNorm();
    for (std::size_t t = 0; t < basis.size(); ++t) {
        const double eta = basis[t].dot(eff) + region.offset;
        value += region.y[t] * eta - std::exp(eta);
    }
    return value;
}

struct JointDerivatives {
    double value;
    Vector3d gradient;
    Matrix3d neg_hessian;
};

JointDerivatives joint_derivatives(const RegionData& region, const std::vector<Vector3d>& basis,
                                   const Vector3d& beta, const Matrix3d& lower, const Vector3d& z) {
    const Vector3d eff = beta + lower * z;
    double value = -region.log_factorials - 0.5 * z.squaredNorm();
    Vector3d score = Vector3d::Zero();
    Matrix3d info = Matrix3d::Zero();
    for (std::size_t t = 0; t < basis.size(); ++t) {
        const double eta = basis[t].dot(eff) + region.offset;
        const double mu = std::exp(eta);
        value += region.y[t] * eta - mu;
        score += (region.y[t] - mu) * basis[t];
        info.noalias() += mu * basis[t] * basis[t].transpose();
    }
    return {value, lower.transpose() * score - z,
            Matrix3d::Identity() + lower.transpose() * info * lower};
}

struct ModeSolution {
    Vector3d z;
    double laplace = 0.0;  // joint(z) - 0.5 log det H
};

std::optional<ModeSolution> newton_mode(const RegionData& region, const std::vector<Vector3d>& basis,
                                        const Vector3d& beta, const Matrix3d& lower, Vector3d z) {
    // Gradient tolerance and ascent test are relative to the size of the
    // likelihood terms so that large counts do not fall below rounding.
    const double magnitude = std::max(1.0, region.total);
    const double value_slack = 1e-13 * (region.log_factorials + magnitude);
    for (int iter = 0;; ++iter) {
        const auto d = joint_derivatives(region, basis, beta, lower, z);
        if (!std::isfinite(d.value) || !d.neg_hessian.allFinite()) return std::nullopt;
        const double gnorm = d.gradient.norm();
        Eigen::LLT<Matrix3d> llt(d.neg_hessian);
        if (llt.info() != Eigen::Success) return std::nullopt;
        const Vector3d step = llt.solve(d.gradient);
        bool done = gnorm <= kNewtonTol * magnitude || d.gradient.dot(step) <= kNewtonDecrementTol;
        if (!done && iter >= kNewtonMaxIter) return std::nullopt;
        if (!done) {
            double lambda = 1.0;
            bool accepted = false;
            for (int k = 0; k < 40; ++k, lambda *= 0.5) {
                const Vector3d trial = z + lambda * step;
                const double v = joint_value(region, basis, beta, lower, trial);
                if (std::isfinite(v) && v >= d.value - value_slack) {
                    z = trial;
                    accepted = true;
                    break;
                }
            }
            // No ascent left: accept only if we are at the optimum to rounding.
            if (!accepted) {
                if (gnorm > 1e-6 * magnitude) return std::nullopt;
                done = true;
            }
        }
        if (done) {
            // One more full step removes the remaining mode error, which
            // otherwise leaks into log det H as noise in the outer objective.
            const Vector3d polished = z + step;
            auto final_d = joint_derivatives(region, basis, beta, lower, polished);
            Eigen::LLT<Matrix3d> final_llt(final_d.neg_hessian);
            if (std::isfinite(final_d.value) && final_d.value >= d.value - value_slack &&
                final_llt.info() == Eigen::Success) {
                z = polished;
            } else {
                final_d = d;
                final_llt = llt;
            }
            const Matrix3d chol = final_llt.matrixL();
            const double log_det_h = 2.0 * chol.diagonal().array().log().sum();
            return ModeSolution{z, final_d.value - 0.5 * log_det_h};
        }
    }
}

// Scaled-coordinate Laplace likelihood for Sigma_B = lower lower^T. `cache`
// holds whitened warm starts for the inner Newton solves and is overwritten
// with the new solutions; `modes` receives b = lower z when given.
double laplace_scaled(const Design& design, const Vector3d& beta, const Matrix3d& lower,
                      std::vector<Vector3d>& cache, const std::vector<std::string>* names = nullptr,
                      std::vector<Vector3d>* modes = nullptr) {
    double total = 0.0;
    if (modes) modes->assign(design.regions.size(), Vector3d::Zero());
    for (std::size_t i = 0; i < design.regions.size(); ++i) {
        auto sol = newton_mode(design.regions[i], design.basis, beta, lower, cache[i]);
        if (!sol && !cache[i].isZero()) {
            sol = newton_mode(design.regions[i], design.basis, beta, lower, Vector3d::Zero());
        }
        if (!sol) {
            const std::string name = names ? (*names)[i] : std::to_string(i);
            throw NonConvergenceError("random-effect mode did not converge for region '" + name + "'");
        }
        cache[i] = sol->z;
        if (modes) (*modes)[i] = lower * sol->z;
        total += sol->laplace;
    }
    return total;
}

Vector3d irls(const Design& design) {
    double total_y = 0.0;
    double total_exposure = 0.0;
    for (const auto& r : design.regions) {
        total_y += std::accumulate(r.y.begin(), r.y.end(), 0.0);
        total_exposure += static_cast<double>(r.y.size()) * std::exp(r.offset);
    }
    Vector3d beta(std::log(std::max(total_y, 0.5) / total_exposure), 0.0, 0.0);

    auto loglik = [&](const Vector3d& b) {
        double ll = 0.0;
        for (const auto& r : design.regions) {
            for (std::size_t t = 0; t < design.basis.size(); ++t) {
                const double eta = design.basis[t].dot(b) + r.offset;
                ll += r.y[t] * eta - std::exp(eta);
            }
        }
        return ll;
    };

    double current = loglik(beta);
    for (int iter = 0; iter < 100; ++iter) {
        Matrix3d info = Matrix3d::Zero();
        Vector3d score = Vector3d::Zero();
        for (const auto& r : design.regions) {
            for (std::size_t t = 0; t < design.basis.size(); ++t) {
                const double mu = std::exp(design.basis[t].dot(beta) + r.offset);
                score += (r.y[t] - mu) * design.basis[t];
                info.noalias() += mu * design.basis[t] * design.basis[t].transpose();
            }
        }
        const Vector3d step = info.ldlt().solve(score);
        if (!step.allFinite()) break;
        double lambda = 1.0;
        Vector3d next = beta + step;
        double value = loglik(next);
        for (int k = 0; k < 30 && !(std::isfinite(value) && value >= current); ++k) {
            lambda *= 0.5;
            next = beta + lambda * step;
            value = loglik(next);
        }
        if (!(std::isfinite(value) && value >= current)) break;
        const double change = (next - beta).lpNorm<Eigen::Infinity>();
        beta = next;
        current = value;
        if (change < 1e-12) break;
    }
    return beta;
}

int structure_rank(CovarianceStructure s) {
    switch (s) {
        case CovarianceStructure::diagonal: return 0;
        case CovarianceStructure::block_01: return 1;
        case CovarianceStructure::unstructured: return 2;
    }
    return 0;
}

Vector theta_from_factor(CovarianceStructure structure, const Matrix3d& lower) {
    Vector theta(covariance_param_count(structure));
    const auto log_diag = [&](int i) {
        if (!(lower(i, i) > 0.0)) throw DomainError("Cholesky factor diagonal must be positive");
        return std::log(lower(i, i));
    };
    switch (structure) {
        case CovarianceStructure::diagonal:
            theta << log_diag(0), log_diag(1), log_diag(2);
            break;
        case CovarianceStructure::block_01:
            theta << log_diag(0), lower(1, 0), log_diag(1), log_diag(2);
            break;
        case CovarianceStructure::unstructured:
            theta << log_diag(0), lower(1, 0), log_diag(1), lower(2, 0), lower(2, 1), log_diag(2);
            break;
    }
    return theta;
}

}  // namespace

std::string_view to_string(CovarianceStructure structure) {
    switch (structure) {
        case CovarianceStructure::diagonal: return "diagonal";
        case CovarianceStructure::block_01: return "block_01";
        case CovarianceStructure::unstructured: return "unstructured";
    }
    return "unknown";
}

CovarianceStructure parse_covariance_structure(std::string_view name) {
    if (name == "diagonal") return CovarianceStructure::diagonal;
    if (name == "block_01") return CovarianceStructure::block_01;
    if (name == "unstructured") return CovarianceStructure::unstructured;
    throw ValueError("unknown covariance structure '" + std::string(name) + "'");
}

int covariance_param_count(CovarianceStructure structure) {
    switch (structure) {
        case CovarianceStructure::diagonal: return 3;
        case CovarianceStructure::block_01: return 4;
        case CovarianceStructure::unstructured: return 6;
    }
    return 0;
}

Matrix3d CovarianceParams::cholesky_factor() const {
    if (theta.size() != covariance_param_count(structure)) {
        throw DomainError("covariance parameter vector has the wrong length");
    }
    Matrix3d lower = Matrix3d::Zero();
    switch (structure) {
        case CovarianceStructure::diagonal:
            lower.diagonal() << std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2]);
            break;
        case CovarianceStructure::block_01:
            lower(0, 0) = std::exp(theta[0]);
            lower(1, 0) = theta[1];
            lower(1, 1) = std::exp(theta[2]);
            lower(2, 2) = std::exp(theta[3]);
            break;
        case CovarianceStructure::unstructured:
            lower(0, 0) = std::exp(theta[0]);
            lower(1, 0) = theta[1];
            lower(1, 1) = std::exp(theta[2]);
            lower(2, 0) = theta[3];
            lower(2, 1) = theta[4];
            lower(2, 2) = std::exp(theta[5]);
            break;
    }
    return lower;
}

Matrix3d CovarianceParams::matrix() const {
    const Matrix3d lower = cholesky_factor();
    return lower * lower.transpose();
}

CovarianceParams CovarianceParams::initial(CovarianceStructure structure) {
    return {structure, theta_from_factor(structure, 0.1 * Matrix3d::Identity())};
}

CovarianceParams CovarianceParams::from_matrix(CovarianceStructure structure, const Matrix3d& sigma) {
    const double tol = 1e-12 * std::max(1.0, sigma.cwiseAbs().maxCoeff());
    switch (structure) {
        case CovarianceStructure::diagonal:
            if (std::abs(sigma(1, 0)) > tol) throw DomainError("diagonal structure requires sigma01 = 0");
            [[fallthrough]];
        case CovarianceStructure::block_01:
            if (std::abs(sigma(2, 0)) > tol || std::abs(sigma(2, 1)) > tol) {
                throw DomainError("block_01 structure requires zero curvature covariances");
            }
            break;
        case CovarianceStructure::unstructured: break;
    }
    Eigen::LLT<Matrix3d> llt(sigma);
    if (llt.info() != Eigen::Success) throw DomainError("covariance matrix is not positive definite");
    Matrix3d lower = llt.matrixL();
    return {structure, theta_from_factor(structure, lower)};
}

CovarianceParams CovarianceParams::embed(CovarianceStructure target) const {
    if (structure_rank(target) < structure_rank(structure)) {
        throw DomainError("cannot embed " + std::string(to_string(structure)) + " into " +
                          std::string(to_string(target)));
    }
    return {target, theta_from_factor(target, cholesky_factor())};
}

CovarianceParams CovarianceParams::rescaled(const Vector3d& scale) const {
    return {structure, theta_from_factor(structure, scale.asDiagonal() * cholesky_factor())};
}

const Vector3d& GlmmFit::mode(const std::string& region_id) const {
    const auto it = std::find(region_ids.begin(), region_ids.end(), region_id);
    if (it == region_ids.end()) throw LookupError("region '" + region_id + "' not in GLMM fit");
    return b_modes[static_cast<std::size_t>(it - region_ids.begin())];
}

LaplaceResult laplace_loglik(const Panel& panel, const Vector3d& beta, const Matrix3d& sigma_b) {
    if (panel.empty()) throw InsufficientDataError("empty panel");
    const Design design = make_design(panel);
    const Vector3d to_raw = raw_from_scaled(design.scale);
    const Vector3d to_scaled = scaled_from_raw(design.scale);
    const Vector3d beta_s = to_scaled.cwiseProduct(beta);
    const Matrix3d lower_s = to_scaled.asDiagonal() * prior_factor(sigma_b);
    std::vector<Vector3d> cache(design.regions.size(), Vector3d::Zero());
    std::vector<Vector3d> modes;
    const auto names = panel.region_ids();
    LaplaceResult result;
    result.loglik = laplace_scaled(design, beta_s, lower_s, cache, &names, &modes);
    result.b_modes.reserve(modes.size());
    for (const auto& m : modes) result.b_modes.push_back(to_raw.cwiseProduct(m));
    return result;
}

LaplaceResult laplace_loglik(const Panel& panel, const Vector3d& beta,
                             const CovarianceParams& sigma_params, const GlmmSpec& spec) {
    if (sigma_params.structure != spec.covariance) {
        throw DomainError("covariance parameters do not match the model's structure");
    }
    return laplace_loglik(panel, beta, sigma_params.matrix());
}

namespace {

// Mode for one series given the raw-scale Cholesky factor of Sigma_B.
Vector3d mode_from_factor(const RegionSeries& series, const Vector3d& beta, const Matrix3d& lower) {
    const double scale = static_cast<double>(series.size());
    const auto basis = make_basis(series.size(), scale);
    const RegionData region = make_region(series);
    const Vector3d to_scaled = scaled_from_raw(scale);
    const Matrix3d lower_s = to_scaled.asDiagonal() * lower;
    const auto sol = newton_mode(region, basis, to_scaled.cwiseProduct(beta), lower_s, Vector3d::Zero());
    if (!sol) {
        throw NonConvergenceError("random-effect mode did not converge for region '" +
                                  series.region_id() + "'");
    }
    return lower * sol->z;
}

}  // namespace

Vector3d random_effect_mode(const RegionSeries& series, const Vector3d& beta, const Matrix3d& sigma_b) {
    return mode_from_factor(series, beta, prior_factor(sigma_b));
}

Vector3d pooled_poisson_glm(const Panel& panel) {
    if (panel.empty()) throw InsufficientDataError("empty panel");
    const Design design = make_design(panel);
    return raw_from_scaled(design.scale).cwiseProduct(irls(design));
}

namespace {

void check_glmm_panel(const Panel& panel) {
    if (panel.num_regions() < 2) {
        throw InsufficientDataError("GLMM needs at least 2 regions, got " +
                                    std::to_string(panel.num_regions()));
    }
    if (panel.num_days() < 3) {
        throw InsufficientDataError("GLMM needs at least 3 days, got " +
                                    std::to_string(panel.num_days()));
    }
    for (const auto& s : panel.series()) (void)s.population();
}

// Objective over p = (beta_scaled, theta_scaled) or beta_scaled alone when the
// covariance is held fixed.
struct ScaledObjective {
    const Design& design;
    CovarianceStructure structure;
    std::optional<Matrix3d> fixed_lower;
    mutable std::vector<Vector3d> cache;

    double operator()(const Vector& p) const {
        try {
            const Vector3d beta = p.head<3>();
            const Matrix3d lower = fixed_lower ? *fixed_lower
                                               : CovarianceParams{structure, p.tail(p.size() - 3)}.cholesky_factor();
            return laplace_scaled(design, beta, lower, cache);
        } catch (const NumericError&) {
            std::fill(cache.begin(), cache.end(), Vector3d::Zero());
            return -std::numeric_limits<double>::infinity();
        }
    }
};

}  // namespace

GlmmFit fit_glmm(const Panel& panel, const GlmmSpec& spec, const GlmmOptions& options) {
    check_glmm_panel(panel);
    if (spec.trend_degree != 2) throw DomainError("GLMM trend degree is fixed at 2");
    const Design design = make_design(panel);
    const Vector3d to_raw = raw_from_scaled(design.scale);
    const Vector3d to_scaled = scaled_from_raw(design.scale);

    const Vector3d beta0 = options.start_beta ? Vector3d(to_scaled.cwiseProduct(*options.start_beta))
                                              : irls(design);
    ScaledObjective objective{design, spec.covariance, std::nullopt,
                              std::vector<Vector3d>(design.regions.size(), Vector3d::Zero())};
    CovarianceParams cov0 = CovarianceParams::initial(spec.covariance);
    if (options.fixed_covariance) {
        objective.fixed_lower = to_scaled.asDiagonal() * options.fixed_covariance->cholesky_factor();
    } else if (options.start_covariance) {
        cov0 = options.start_covariance->embed(spec.covariance).rescaled(to_scaled);
    }

    const Eigen::Index k = options.fixed_covariance ? 3 : 3 + cov0.theta.size();
    Vector start(k);
    start.head<3>() = beta0;
    if (!options.fixed_covariance) start.tail(k - 3) = cov0.theta;

    const auto opt = maximize(objective, start, std::nullopt, {options.tol, options.max_iterations});

    GlmmFit fit;
    fit.spec = spec;
    fit.region_ids = panel.region_ids();
    fit.num_days = panel.num_days();
    fit.num_observations = panel.num_days() * panel.num_regions();
    fit.converged = opt.converged;
    fit.iterations = opt.iterations;
    fit.gradient_norm = opt.gradient_norm;

    const Vector3d beta_s = opt.argmax.head<3>();
    const CovarianceParams cov_s =
        options.fixed_covariance
            ? options.fixed_covariance->embed(spec.covariance).rescaled(to_scaled)
            : CovarianceParams{spec.covariance, opt.argmax.tail(k - 3)};
    std::vector<Vector3d> cache(design.regions.size(), Vector3d::Zero());
    std::vector<Vector3d> modes;
    fit.loglik = laplace_scaled(design, beta_s, cov_s.cholesky_factor(), cache, &fit.region_ids, &modes);
    fit.beta = to_raw.cwiseProduct(beta_s);
    fit.sigma_params = cov_s.rescaled(to_raw);
    fit.b_modes.reserve(modes.size());
    for (const auto& m : modes) fit.b_modes.push_back(to_raw.cwiseProduct(m));
    const int free_params = options.fixed_covariance ? 3 : fit.num_parameters();
    fit.bic = -2.0 * fit.loglik + free_params * std::log(static_cast<double>(fit.num_observations));
    return fit;
}

Vector3d glmm_standard_errors(const Panel& panel, const GlmmFit& fit) {
    check_glmm_panel(panel);
    const Design design = make_design(panel);
    const Vector3d to_raw = raw_from_scaled(design.scale);
    const Vector3d to_scaled = scaled_from_raw(design.scale);
    const CovarianceParams cov_s = fit.sigma_params.rescaled(to_scaled);
    ScaledObjective objective{design, fit.spec.covariance, std::nullopt,
                              std::vector<Vector3d>(design.regions.size(), Vector3d::Zero())};
    Vector p(3 + cov_s.theta.size());
    p.head<3>() = to_scaled.cwiseProduct(fit.beta);
    p.tail(cov_s.theta.size()) = cov_s.theta;

    const Matrix info = -numeric_hessian(objective, p);
    Vector3d variance;
    Eigen::LLT<Matrix> full(info);
    if (full.info() == Eigen::Success) {
        variance = full.solve(Matrix::Identity(info.rows(), info.cols())).diagonal().head<3>();
    } else {
        const Matrix3d block = info.topLeftCorner<3, 3>();
        Eigen::LLT<Matrix3d> llt(block);
        if (llt.info() != Eigen::Success) {
            return Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
        }
        variance = llt.solve(Matrix3d::Identity()).diagonal();
    }
    return to_raw.cwiseProduct(variance.cwiseSqrt());
}

CovarianceSelection select_covariance(const Panel& panel,
                                      std::span<const CovarianceStructure> candidates,
                                      const GlmmOptions& options) {
    if (candidates.empty()) throw SelectionError("no covariance candidates");
    std::vector<CovarianceStructure> order(candidates.begin(), candidates.end());
    std::stable_sort(order.begin(), order.end(), [](auto a, auto b) {
        return covariance_param_count(a) < covariance_param_count(b);
    });
    order.erase(std::unique(order.begin(), order.end()), order.end());

    CovarianceSelection selection;
    std::optional<GlmmFit> best;
    std::optional<GlmmFit> nested;
    const bool single = order.size() == 1;
    for (const auto structure : order) {
        GlmmOptions opts = options;
        if (nested) opts.start_covariance = nested->sigma_params;
        if (nested) opts.start_beta = nested->beta;
        GlmmFit fit;
        try {
            fit = fit_glmm(panel, GlmmSpec{2, structure}, opts);
        } catch (const NumericError&) {
            if (single) throw;
            continue;
        }
        selection.bic.emplace_back(structure, fit.bic);
        if (!nested || fit.loglik > nested->loglik) nested = fit;
        if (!fit.converged && !single) continue;
        if (!best || fit.bic < best->bic) best = fit;
    }
    if (!best) throw SelectionError("no covariance structure converged");
    selection.spec = best->spec;
    selection.fit = *best;
    return selection;
}

double predict_glmm(const GlmmFit& fit, const Panel& panel, const std::string& region_id, int horizon) {
    if (horizon < 1) throw DomainError("horizon must be >= 1");
    const Vector3d& b = fit.mode(region_id);
    const double t = static_cast<double>(fit.num_days + static_cast<std::size_t>(horizon));
    const Vector3d coef = fit.beta + b;
    const double population = static_cast<double>(panel.region(region_id).population());
    return std::exp(coef[0] + coef[1] * t + coef[2] * t * t + std::log(population));
}

const Interval& GlmmBootstrap::interval(const std::string& region_id, int horizon) const {
    const auto it = std::find(region_ids.begin(), region_ids.end(), region_id);
    if (it == region_ids.end()) throw LookupError("region '" + region_id + "' not in bootstrap");
    if (horizon < 1 || horizon > max_horizon) throw DomainError("horizon outside bootstrap range");
    return intervals[static_cast<std::size_t>(it - region_ids.begin())][static_cast<std::size_t>(horizon - 1)];
}

GlmmBootstrap glmm_bootstrap(const Panel& panel, const GlmmSpec& spec, const GlmmFit& base,
                             int max_horizon, const BootstrapOptions& options, const RngStream& rng) {
    check_glmm_panel(panel);
    if (max_horizon < 1) throw DomainError("horizon must be >= 1");
    if (options.replicates < 1) throw DomainError("bootstrap needs at least one replicate");
    if (!(options.level > 0.0 && options.level < 1.0)) throw DomainError("level must be in (0, 1)");

    const std::size_t regions = panel.num_regions();
    const auto horizons = static_cast<std::size_t>(max_horizon);
    const auto reps = static_cast<std::size_t>(options.replicates);
    const double days = static_cast<double>(panel.num_days());
    // draws[rep][region * horizons + h]
    std::vector<std::vector<double>> draws(reps);
    std::vector<char> ok(reps, 0);

    GlmmOptions fit_options;
    fit_options.start_beta = base.beta;
    fit_options.start_covariance = base.sigma_params;

    parallel_for(reps, options.workers, [&](std::size_t r) {
        auto engine = rng.derive(r).engine();
        std::uniform_int_distribution<std::size_t> pick(0, regions - 1);
        std::vector<RegionSeries> resample;
        resample.reserve(regions);
        for (std::size_t k = 0; k < regions; ++k) {
            const auto& src = panel.series()[pick(engine)];
            resample.emplace_back(src.region_id() + "#" + std::to_string(k), src.dates(), src.counts(),
                                  src.population_opt());
        }
        try {
            const GlmmFit refit = fit_glmm(Panel(std::move(resample)), spec, fit_options);
            if (!std::isfinite(refit.loglik)) return;
            const Matrix3d lower = refit.sigma_params.cholesky_factor();
            std::vector<double> out(regions * horizons);
            for (std::size_t i = 0; i < regions; ++i) {
                const auto& series = panel.series()[i];
                const Vector3d coef = refit.beta + mode_from_factor(series, refit.beta, lower);
                const double offset = std::log(static_cast<double>(series.population()));
                for (std::size_t h = 0; h < horizons; ++h) {
                    const double t = days + static_cast<double>(h + 1);
                    const double mu = std::exp(coef[0] + coef[1] * t + coef[2] * t * t + offset);
                    if (!std::isfinite(mu)) return;
                    out[i * horizons + h] = static_cast<double>(draw_poisson(engine, mu));
                }
            }
            draws[r] = std::move(out);
            ok[r] = 1;
        } catch (const NumericError&) {
        }
    });

    GlmmBootstrap result;
    result.region_ids = panel.region_ids();
    result.max_horizon = max_horizon;
    result.replicates = options.replicates;
    result.failed_replicates = static_cast<int>(std::count(ok.begin(), ok.end(), 0));
    if (result.failed_replicates > options.max_failure_fraction * options.replicates ||
        result.failed_replicates == options.replicates) {
        throw IntervalError("GLMM bootstrap: " + std::to_string(result.failed_replicates) + " of " +
                            std::to_string(options.replicates) + " replicate refits failed");
    }
    result.intervals.assign(regions, std::vector<Interval>(horizons));
    std::vector<double> column;
    column.reserve(reps);
    for (std::size_t i = 0; i < regions; ++i) {
        for (std::size_t h = 0; h < horizons; ++h) {
            column.clear();
            for (std::size_t r = 0; r < reps; ++r) {
                if (ok[r]) column.push_back(draws[r][i * horizons + h]);
            }
            result.intervals[i][h] = count_interval(column, options.level);
        }
    }
    return result;
}

Interval glmm_interval(const Panel& panel, const GlmmSpec& spec, const std::string& region_id,
                       int horizon, int replicates, double level, const RngStream& rng) {
    (void)panel.region(region_id);
    const GlmmFit base = fit_glmm(panel, spec);
    BootstrapOptions options;
    options.replicates = replicates;
    options.level = level;
    return glmm_bootstrap(panel, spec, base, horizon, options, rng).interval(region_id, horizon);
}

}  // namespace icucast
