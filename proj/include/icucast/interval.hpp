#pragma once

#include <span>

namespace icucast {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double value) const noexcept { return lo <= value && value <= hi; }
    double width() const noexcept { return hi - lo; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Central interval of the simulated counts at the given level: empirical
/// quantiles (1 - level) / 2 and 1 - (1 - level) / 2, rounded outward to integers.
/// Throws DomainError for an empty sample or a level outside (0, 1).
Interval count_interval(std::span<const double> draws, double level);

}  // namespace icucast
