#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace icucast {

using Date = std::chrono::sys_days;
using Count = std::int64_t;

/// Parses `YYYY-MM-DD`, optionally followed by a time part (`T...` or ` ...`).
/// Throws ValueError on malformed input.
Date parse_date(const std::string& text);
std::string format_date(Date date);

/// One region's daily count series. Immutable once constructed; the
/// constructor enforces daily spacing, matching lengths and nonnegative counts.
class RegionSeries {
public:
    RegionSeries(std::string region_id, std::vector<Date> dates, std::vector<Count> counts,
                 std::optional<Count> population = std::nullopt);

    const std::string& region_id() const noexcept { return region_id_; }
    const std::vector<Date>& dates() const noexcept { return dates_; }
    const std::vector<Count>& counts() const noexcept { return counts_; }
    std::size_t size() const noexcept { return counts_.size(); }
    Date first_date() const { return dates_.front(); }
    Date last_date() const { return dates_.back(); }

    bool has_population() const noexcept { return population_.has_value(); }
    /// Throws LookupError when no population has been attached.
    Count population() const;
    const std::optional<Count>& population_opt() const noexcept { return population_; }

    RegionSeries with_population(Count population) const;
    /// Contiguous sub-range [first, first + length).
    RegionSeries slice(std::size_t first, std::size_t length) const;

    friend bool operator==(const RegionSeries&, const RegionSeries&) = default;

private:
    std::string region_id_;
    std::vector<Date> dates_;
    std::vector<Count> counts_;
    std::optional<Count> population_;
};

/// Aligned collection of region series sharing one daily date grid.
class Panel {
public:
    Panel() = default;
    explicit Panel(std::vector<RegionSeries> series);

    const std::vector<RegionSeries>& series() const noexcept { return series_; }
    std::size_t num_regions() const noexcept { return series_.size(); }
    /// Days per series; 0 for an empty panel.
    std::size_t num_days() const noexcept { return series_.empty() ? 0 : series_.front().size(); }
    bool empty() const noexcept { return series_.empty(); }
    const std::vector<Date>& common_dates() const;
    Date last_date() const { return common_dates().back(); }

    /// Throws LookupError naming the region.
    const RegionSeries& region(const std::string& region_id) const;
    std::optional<std::size_t> index_of(const std::string& region_id) const;
    std::vector<std::string> region_ids() const;
    bool has_population() const;

    friend bool operator==(const Panel&, const Panel&) = default;

private:
    std::vector<RegionSeries> series_;
};

struct ColumnMap {
    std::string date = "data";
    std::string region = "denominazione_regione";
    std::string count = "terapia_intensiva";
};

/// Canonical column names used by serialize_panel_csv and the simulator.
inline const ColumnMap kCanonicalColumns{"date", "region", "count"};

Panel parse_regional_csv(const std::filesystem::path& path, const ColumnMap& columns = {});
Panel parse_regional_csv(std::istream& in, const ColumnMap& columns = {});

using PopulationTable = std::map<std::string, Count>;

PopulationTable parse_population_csv(const std::filesystem::path& path);
PopulationTable parse_population_csv(std::istream& in);
Panel attach_population(const Panel& panel, const PopulationTable& table);

/// Last min(width, available) days of every series.
Panel window(const Panel& panel, std::size_t width);
/// Panel restricted to dates <= last; empty series are an error.
Panel truncate_after(const Panel& panel, Date last);

using Observations = std::map<std::string, Count>;

std::pair<Panel, Observations> drop_last_day(const Panel& panel);
/// Drops the last `days` days; returns the removed counts of the final day
/// dropped last (i.e. the original last day).
std::pair<Panel, Observations> drop_last_days(const Panel& panel, std::size_t days);
/// Inverse of drop_last_day: appends one day with the given counts.
Panel append_day(const Panel& panel, const Observations& observations);

/// Canonical CSV: date,region,count[,population]. Rows sorted by region then date.
void serialize_panel_csv(const Panel& panel, std::ostream& out);
/// Reads the canonical format, including the optional population column.
Panel parse_panel_csv(std::istream& in);
Panel parse_panel_csv(const std::filesystem::path& path);

namespace csv {
/// Splits one logical CSV record; handles quoted fields and doubled quotes.
std::vector<std::string> split_record(const std::string& line);
/// Reads one logical record, joining physical lines inside open quotes.
bool read_record(std::istream& in, std::string& record);
}  // namespace csv

}  // namespace icucast
