#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "icucast/data.hpp"
#include "oracles.hpp"

namespace testutil {

inline icucast::Date day(int y, unsigned m, unsigned d) {
    return icucast::Date{std::chrono::year{y} / m / d};
}

inline icucast::RegionSeries series(const std::string& id, std::vector<icucast::Count> counts,
                                    std::optional<icucast::Count> population = 1'000'000,
                                    icucast::Date start = day(2020, 3, 1)) {
    std::vector<icucast::Date> dates;
    for (std::size_t i = 0; i < counts.size(); ++i) dates.push_back(start + std::chrono::days{i});
    return icucast::RegionSeries(id, std::move(dates), std::move(counts), population);
}

inline oracle::PanelData to_oracle(const icucast::Panel& panel) {
    oracle::PanelData data;
    for (const auto& s : panel.series()) {
        data.counts.push_back(s.counts());
        data.populations.push_back(static_cast<double>(s.population()));
    }
    return data;
}

}  // namespace testutil
