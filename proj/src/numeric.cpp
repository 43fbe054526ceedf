#include "icucast/numeric.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "icucast/errors.hpp"
#include "icucast/interval.hpp"

namespace icucast {

namespace {

Vector project(const Vector& x, const std::optional<Bounds>& bounds) {
    if (!bounds) return x;
    return x.cwiseMax(bounds->lo).cwiseMin(bounds->hi);
}

// Coordinates pinned at a bound whose gradient points out of the box.
std::vector<bool> active_set(const Vector& x, const Vector& g, const std::optional<Bounds>& bounds) {
    std::vector<bool> active(static_cast<std::size_t>(x.size()), false);
    if (!bounds) return active;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const bool at_lo = x[i] <= bounds->lo[i] && g[i] < 0.0;
        const bool at_hi = x[i] >= bounds->hi[i] && g[i] > 0.0;
        active[static_cast<std::size_t>(i)] = at_lo || at_hi;
    }
    return active;
}

}  // namespace

Vector numeric_gradient(const Objective& f, const Vector& x, const std::optional<Bounds>& bounds) {
    static const double kStep = std::cbrt(std::numeric_limits<double>::epsilon());
    Vector g(x.size());
    Vector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = kStep * std::max(1.0, std::abs(x[i]));
        double up = x[i] + h;
        double down = x[i] - h;
        if (bounds) {
            up = std::min(up, bounds->hi[i]);
            down = std::max(down, bounds->lo[i]);
        }
        probe[i] = up;
        const double f_up = f(probe);
        probe[i] = down;
        const double f_down = f(probe);
        probe[i] = x[i];
        g[i] = (f_up - f_down) / (up - down);
    }
    return g;
}

Matrix numeric_hessian(const Objective& f, const Vector& x) {
    static const double kStep = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
    const Eigen::Index n = x.size();
    Matrix hess(n, n);
    Vector step(n);
    for (Eigen::Index i = 0; i < n; ++i) step[i] = kStep * std::max(1.0, std::abs(x[i]));
    const double f0 = f(x);
    Vector probe = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        probe[i] = x[i] + step[i];
        const double fp = f(probe);
        probe[i] = x[i] - step[i];
        const double fm = f(probe);
        probe[i] = x[i];
        hess(i, i) = (fp - 2.0 * f0 + fm) / (step[i] * step[i]);
        for (Eigen::Index j = 0; j < i; ++j) {
            auto eval = [&](double si, double sj) {
                probe[i] = x[i] + si * step[i];
                probe[j] = x[j] + sj * step[j];
                const double v = f(probe);
                probe[i] = x[i];
                probe[j] = x[j];
                return v;
            };
            const double v = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) /
                             (4.0 * step[i] * step[j]);
            hess(i, j) = v;
            hess(j, i) = v;
        }
    }
    return hess;
}

OptimResult maximize(const Objective& f, const Vector& start, const std::optional<Bounds>& bounds,
                     const MaximizeOptions& options, const Gradient& gradient) {
    const Eigen::Index n = start.size();
    if (bounds) {
        if (bounds->lo.size() != n || bounds->hi.size() != n) {
            throw DomainError("maximize: bounds dimension mismatch");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(bounds->lo[i] <= start[i] && start[i] <= bounds->hi[i])) {
                throw DomainError("maximize: start outside bounds");
            }
        }
    }
    auto grad = [&](const Vector& x) {
        return gradient ? gradient(x) : numeric_gradient(f, x, bounds);
    };

    OptimResult result;
    Vector x = start;
    double fx = f(x);
    if (!std::isfinite(fx)) throw DomainError("maximize: objective not finite at start");
    Vector g = grad(x);

    Matrix inv_hess = Matrix::Identity(n, n);
    bool identity = true;
    std::vector<bool> prev_active = active_set(x, g, bounds);

    auto projected = [&](const std::vector<bool>& active) {
        Vector pg = g;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (active[static_cast<std::size_t>(i)]) pg[i] = 0.0;
        }
        return pg;
    };

    // Stall: no measurable ascent over several steps, or no ascent at all.
    // A stalled run still counts as converged when the gradient is small
    // relative to the objective, which is the floor set by rounding.
    bool stalled = false;
    int flat_steps = 0;
    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        const auto active = active_set(x, g, bounds);
        const Vector pg = projected(active);
        if (!std::isfinite(pg.norm())) break;
        if (pg.norm() <= options.tol) {
            result.converged = true;
            break;
        }
        if (active != prev_active) {
            inv_hess.setIdentity();
            identity = true;
        }
        prev_active = active;

        Vector dir = inv_hess * pg;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (active[static_cast<std::size_t>(i)]) dir[i] = 0.0;
        }
        if (!(dir.dot(pg) > 0.0)) {
            inv_hess.setIdentity();
            identity = true;
            dir = pg;
        }
        double alpha = identity ? std::min(1.0, 1.0 / pg.norm()) : 1.0;

        bool accepted = false;
        Vector trial;
        double f_trial = 0.0;
        for (int k = 0; k < 60; ++k, alpha *= 0.5) {
            trial = project(x + alpha * dir, bounds);
            const Vector step = trial - x;
            if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
            f_trial = f(trial);
            if (std::isfinite(f_trial) && f_trial >= fx + 1e-4 * g.dot(step) && f_trial >= fx) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (!identity) {
                inv_hess.setIdentity();
                identity = true;
                continue;
            }
            stalled = true;
            break;
        }
        flat_steps = f_trial - fx <= 1e-13 * std::max(1.0, std::abs(fx)) ? flat_steps + 1 : 0;

        const Vector g_trial = grad(trial);
        const Vector s = trial - x;
        // Curvature pair for minimizing -f.
        const Vector y = g - g_trial;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (identity) inv_hess *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Matrix left = Matrix::Identity(n, n) - rho * s * y.transpose();
            inv_hess = left * inv_hess * left.transpose() + rho * s * s.transpose();
            identity = false;
        }
        x = trial;
        fx = f_trial;
        g = g_trial;
        if (flat_steps >= 5) {
            stalled = true;
            break;
        }
    }

    result.argmax = x;
    result.value = fx;
    result.iterations = iter;
    result.gradient_norm = projected(active_set(x, g, bounds)).norm();
    if (result.gradient_norm <= options.tol) result.converged = true;
    if (stalled && result.gradient_norm <= options.tol * std::max(1.0, std::abs(fx))) {
        result.converged = true;
    }
    return result;
}

Matrix cholesky(const Matrix& matrix) {
    if (matrix.rows() != matrix.cols()) throw FactorizationError("cholesky: matrix not square");
    const double scale = std::max(1.0, matrix.cwiseAbs().maxCoeff());
    if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw FactorizationError("cholesky: matrix not symmetric");
    }
    Eigen::LLT<Matrix> llt(matrix);
    if (llt.info() != Eigen::Success) throw FactorizationError("cholesky: matrix not positive definite");
    Matrix lower = llt.matrixL();
    return lower;
}

double sorted_quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw DomainError("quantile of empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level outside [0, 1]");
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double empirical_quantile(std::span<const double> samples, double q) {
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    return sorted_quantile(sorted, q);
}

double log_poisson_pmf(std::int64_t y, double mu) {
    if (mu == 0.0) return y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    const double yd = static_cast<double>(y);
    return yd * std::log(mu) - mu - std::lgamma(yd + 1.0);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

RngStream RngStream::derive(std::uint64_t child) const {
    return RngStream(seed_, splitmix64(stream_id_ ^ splitmix64(child + 0x632BE59BD9B4E019ULL)));
}

RngStream::Engine RngStream::engine() const {
    const std::uint64_t a = splitmix64(seed_);
    const std::uint64_t b = splitmix64(a ^ stream_id_);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return Engine(seq);
}

std::int64_t draw_poisson(RngStream::Engine& engine, double mean) {
    if (!(mean > 0.0)) return 0;
    std::poisson_distribution<std::int64_t> dist(mean);
    return dist(engine);
}

unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body) {
    workers = std::min<unsigned>(resolve_workers(workers), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

Interval count_interval(std::span<const double> draws, double level) {
    if (!(level > 0.0 && level < 1.0)) throw DomainError("level must be in (0, 1)");
    std::vector<double> sorted(draws.begin(), draws.end());
    std::sort(sorted.begin(), sorted.end());
    const double tail = 0.5 * (1.0 - level);
    return {std::floor(sorted_quantile(sorted, tail)), std::ceil(sorted_quantile(sorted, 1.0 - tail))};
}

}  // namespace icucast
