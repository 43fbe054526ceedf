#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace icucast {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct OptimResult {
    Vector argmax;
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
    /// Euclidean norm of the projected gradient at argmax.
    double gradient_norm = 0.0;
};

struct Bounds {
    Vector lo;
    Vector hi;
};

struct MaximizeOptions {
    /// Convergence when the projected gradient norm drops to this value.
    double tol = 1e-6;
    int max_iterations = 500;
};

using Objective = std::function<double(const Vector&)>;
using Gradient = std::function<Vector(const Vector&)>;

/// Central differences with step cbrt(eps) * max(1, |x_i|), clipped to bounds
/// (one-sided at an active bound).
Vector numeric_gradient(const Objective& f, const Vector& x,
                        const std::optional<Bounds>& bounds = std::nullopt);

/// Central-difference Hessian; step eps^(1/4) * max(1, |x_i|).
Matrix numeric_hessian(const Objective& f, const Vector& x);

/// Local maximizer by BFGS. Bounds are handled by projection: coordinates
/// pinned at a bound with an outward gradient are frozen for the step, the
/// trial point is projected back into the box, and the inverse-Hessian
/// estimate is reset when the active set changes. Non-finite objective values
/// during the search are treated as failed trial steps.
///
/// Throws DomainError when the objective is non-finite at `start` or `start`
/// lies outside the bounds. Hitting the iteration cap returns converged=false.
OptimResult maximize(const Objective& f, const Vector& start,
                     const std::optional<Bounds>& bounds = std::nullopt,
                     const MaximizeOptions& options = {}, const Gradient& gradient = {});

/// Lower-triangular L with L * L^T == matrix. Throws FactorizationError when
/// the matrix is not symmetric positive definite.
Matrix cholesky(const Matrix& matrix);

/// Quantile by linear interpolation between order statistics:
/// position h = (n - 1) * q, result = x[floor h] + (h - floor h) * (x[floor h + 1] - x[floor h]).
double empirical_quantile(std::span<const double> samples, double q);
/// Same rule on already sorted samples.
double sorted_quantile(std::span<const double> sorted, double q);

/// log of the Poisson probability mass at y with mean mu (mu > 0, or y == 0 and mu == 0).
double log_poisson_pmf(std::int64_t y, double mu);

/// Deterministic random stream keyed by (seed, stream_id). Child streams are
/// derived by mixing, so replicate r of any computation draws from
/// stream.derive(r) regardless of which worker runs it.
class RngStream {
public:
    using Engine = std::mt19937_64;

    RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) : seed_(seed), stream_id_(stream_id) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    RngStream derive(std::uint64_t child) const;
    Engine engine() const;

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Draws from Poisson(mean); returns 0 for mean <= 0.
std::int64_t draw_poisson(RngStream::Engine& engine, double mean);

/// Runs body(i) for i in [0, n) on up to `workers` threads (0 = hardware
/// concurrency). The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body);

unsigned resolve_workers(unsigned requested);

}  // namespace icucast
