#include "icucast/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "icucast/errors.hpp"

namespace icucast {

namespace {

using namespace std::chrono;

int parse_fixed_int(const std::string& text, std::size_t pos, std::size_t len) {
    int value = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (text[i] < '0' || text[i] > '9') throw ValueError("malformed date '" + text + "'");
        value = value * 10 + (text[i] - '0');
    }
    return value;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::string strip_bom(std::string s) {
    if (s.size() >= 3 && static_cast<unsigned char>(s[0]) == 0xEF &&
        static_cast<unsigned char>(s[1]) == 0xBB && static_cast<unsigned char>(s[2]) == 0xBF) {
        s.erase(0, 3);
    }
    return s;
}

std::optional<Count> parse_count(const std::string& field) {
    const std::string s = trim(field);
    if (s.empty()) return std::nullopt;
    Count value = 0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return value;
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

struct Row {
    Date date;
    Count count;
    std::optional<Count> population;
    std::size_t line;
};

// Groups rows by region, sorts by date, and checks duplicates, gaps and alignment.
Panel assemble(std::map<std::string, std::vector<Row>> by_region) {
    std::vector<RegionSeries> series;
    series.reserve(by_region.size());
    for (auto& [region, rows] : by_region) {
        std::stable_sort(rows.begin(), rows.end(),
                         [](const Row& a, const Row& b) { return a.date < b.date; });
        std::vector<Date> dates;
        std::vector<Count> counts;
        std::optional<Count> population;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i > 0) {
                if (rows[i].date == rows[i - 1].date) {
                    throw DuplicateRecordError("duplicate record for region '" + region +
                                               "' on " + format_date(rows[i].date) + " (line " +
                                               std::to_string(rows[i].line) + ")");
                }
                if (rows[i].date - rows[i - 1].date != days{1}) {
                    throw GapError("gap in region '" + region + "': missing " +
                                   format_date(rows[i - 1].date + days{1}));
                }
            }
            if (rows[i].population) population = rows[i].population;
            dates.push_back(rows[i].date);
            counts.push_back(rows[i].count);
        }
        series.emplace_back(region, std::move(dates), std::move(counts), population);
    }
    return Panel(std::move(series));
}

}  // namespace

Date parse_date(const std::string& raw) {
    const std::string text = trim(raw);
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') {
        throw ValueError("malformed date '" + text + "'");
    }
    if (text.size() > 10 && text[10] != 'T' && text[10] != ' ') {
        throw ValueError("malformed date '" + text + "'");
    }
    const year_month_day ymd{year{parse_fixed_int(text, 0, 4)},
                             month{static_cast<unsigned>(parse_fixed_int(text, 5, 2))},
                             day{static_cast<unsigned>(parse_fixed_int(text, 8, 2))}};
    if (!ymd.ok()) throw ValueError("invalid date '" + text + "'");
    return sys_days{ymd};
}

std::string format_date(Date date) {
    const year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

RegionSeries::RegionSeries(std::string region_id, std::vector<Date> dates,
                           std::vector<Count> counts, std::optional<Count> population)
    : region_id_(std::move(region_id)),
      dates_(std::move(dates)),
      counts_(std::move(counts)),
      population_(population) {
    if (counts_.empty()) throw InsufficientDataError("region '" + region_id_ + "' has no data");
    if (counts_.size() != dates_.size()) {
        throw ValueError("region '" + region_id_ + "': dates and counts differ in length");
    }
    for (std::size_t i = 1; i < dates_.size(); ++i) {
        if (dates_[i] - dates_[i - 1] != days{1}) {
            throw GapError("gap in region '" + region_id_ + "': missing " +
                           format_date(dates_[i - 1] + days{1}));
        }
    }
    for (const Count c : counts_) {
        if (c < 0) throw ValueError("region '" + region_id_ + "': negative count");
    }
    if (population_ && *population_ < 1) {
        throw ValueError("region '" + region_id_ + "': population must be >= 1");
    }
}

Count RegionSeries::population() const {
    if (!population_) throw LookupError("no population attached to region '" + region_id_ + "'");
    return *population_;
}

RegionSeries RegionSeries::with_population(Count population) const {
    return RegionSeries(region_id_, dates_, counts_, population);
}

RegionSeries RegionSeries::slice(std::size_t first, std::size_t length) const {
    if (first + length > size() || length == 0) {
        throw InsufficientDataError("region '" + region_id_ + "': invalid slice");
    }
    return RegionSeries(region_id_,
                        {dates_.begin() + static_cast<std::ptrdiff_t>(first),
                         dates_.begin() + static_cast<std::ptrdiff_t>(first + length)},
                        {counts_.begin() + static_cast<std::ptrdiff_t>(first),
                         counts_.begin() + static_cast<std::ptrdiff_t>(first + length)},
                        population_);
}

Panel::Panel(std::vector<RegionSeries> series) : series_(std::move(series)) {
    std::set<std::string> seen;
    for (const auto& s : series_) {
        if (!seen.insert(s.region_id()).second) {
            throw DuplicateRecordError("duplicate region '" + s.region_id() + "' in panel");
        }
        if (s.dates() != series_.front().dates()) {
            throw GapError("region '" + s.region_id() + "' is not aligned with region '" +
                           series_.front().region_id() + "'");
        }
    }
}

const std::vector<Date>& Panel::common_dates() const {
    static const std::vector<Date> kEmpty;
    return series_.empty() ? kEmpty : series_.front().dates();
}

const RegionSeries& Panel::region(const std::string& region_id) const {
    const auto idx = index_of(region_id);
    if (!idx) throw LookupError("unknown region '" + region_id + "'");
    return series_[*idx];
}

std::optional<std::size_t> Panel::index_of(const std::string& region_id) const {
    for (std::size_t i = 0; i < series_.size(); ++i) {
        if (series_[i].region_id() == region_id) return i;
    }
    return std::nullopt;
}

std::vector<std::string> Panel::region_ids() const {
    std::vector<std::string> ids;
    ids.reserve(series_.size());
    for (const auto& s : series_) ids.push_back(s.region_id());
    return ids;
}

bool Panel::has_population() const {
    return std::all_of(series_.begin(), series_.end(),
                       [](const RegionSeries& s) { return s.has_population(); });
}

namespace csv {

bool read_record(std::istream& in, std::string& record) {
    record.clear();
    std::string line;
    bool in_quotes = false;
    bool any = false;
    while (std::getline(in, line)) {
        any = true;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!record.empty() || in_quotes) record += '\n';
        record += line;
        for (const char c : line) {
            if (c == '"') in_quotes = !in_quotes;
        }
        if (!in_quotes) return true;
    }
    return any;
}

std::vector<std::string> split_record(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

}  // namespace csv

namespace {

Panel parse_counts(std::istream& in, const ColumnMap& columns,
                   const std::optional<std::string>& population_column) {
    std::string record;
    if (!csv::read_record(in, record)) return Panel{};
    auto header = csv::split_record(strip_bom(record));
    for (auto& h : header) h = trim(h);
    const std::size_t date_col = find_column(header, columns.date);
    const std::size_t region_col = find_column(header, columns.region);
    const std::size_t count_col = find_column(header, columns.count);
    std::optional<std::size_t> pop_col;
    if (population_column) {
        const auto it = std::find(header.begin(), header.end(), *population_column);
        if (it != header.end()) pop_col = static_cast<std::size_t>(it - header.begin());
    }
    const std::size_t needed = std::max({date_col, region_col, count_col, pop_col.value_or(0)});

    std::map<std::string, std::vector<Row>> by_region;
    std::size_t line = 1;
    while (csv::read_record(in, record)) {
        ++line;
        if (trim(record).empty()) continue;
        const auto fields = csv::split_record(record);
        if (fields.size() <= needed) {
            throw SchemaError("line " + std::to_string(line) + ": expected at least " +
                              std::to_string(needed + 1) + " fields");
        }
        Row row{};
        row.line = line;
        try {
            row.date = parse_date(fields[date_col]);
        } catch (const ValueError& e) {
            throw ValueError("line " + std::to_string(line) + ": " + e.what());
        }
        const auto count = parse_count(fields[count_col]);
        if (!count || *count < 0) {
            throw ValueError("line " + std::to_string(line) + ": invalid count '" +
                             fields[count_col] + "'");
        }
        row.count = *count;
        if (pop_col) {
            const auto pop = parse_count(fields[*pop_col]);
            if (!pop || *pop < 1) {
                throw ValueError("line " + std::to_string(line) + ": invalid population '" +
                                 fields[*pop_col] + "'");
            }
            row.population = pop;
        }
        by_region[trim(fields[region_col])].push_back(row);
    }
    return assemble(std::move(by_region));
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return in;
}

}  // namespace

Panel parse_regional_csv(std::istream& in, const ColumnMap& columns) {
    return parse_counts(in, columns, std::nullopt);
}

Panel parse_regional_csv(const std::filesystem::path& path, const ColumnMap& columns) {
    auto in = open_or_throw(path);
    return parse_regional_csv(in, columns);
}

PopulationTable parse_population_csv(std::istream& in) {
    PopulationTable table;
    std::string record;
    if (!csv::read_record(in, record)) return table;
    auto header = csv::split_record(strip_bom(record));
    for (auto& h : header) h = trim(h);
    const std::size_t region_col = find_column(header, "region");
    const std::size_t pop_col = find_column(header, "population");
    std::size_t line = 1;
    while (csv::read_record(in, record)) {
        ++line;
        if (trim(record).empty()) continue;
        const auto fields = csv::split_record(record);
        if (fields.size() <= std::max(region_col, pop_col)) {
            throw SchemaError("line " + std::to_string(line) + ": missing fields");
        }
        const std::string region = trim(fields[region_col]);
        const auto pop = parse_count(fields[pop_col]);
        if (!pop || *pop < 1) {
            throw ValueError("line " + std::to_string(line) + ": invalid population '" +
                             fields[pop_col] + "'");
        }
        if (!table.emplace(region, *pop).second) {
            throw DuplicateRecordError("duplicate population entry for '" + region + "'");
        }
    }
    return table;
}

PopulationTable parse_population_csv(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse_population_csv(in);
}

Panel attach_population(const Panel& panel, const PopulationTable& table) {
    std::vector<RegionSeries> out;
    out.reserve(panel.num_regions());
    for (const auto& s : panel.series()) {
        const auto it = table.find(s.region_id());
        if (it == table.end()) throw LookupError("no population for region '" + s.region_id() + "'");
        if (it->second < 1) {
            throw ValueError("population for region '" + s.region_id() + "' must be >= 1");
        }
        out.push_back(s.with_population(it->second));
    }
    return Panel(std::move(out));
}

Panel window(const Panel& panel, std::size_t width) {
    if (width < 1) throw ValueError("window width must be >= 1");
    if (panel.empty()) return panel;
    const std::size_t n = panel.num_days();
    const std::size_t keep = std::min(width, n);
    std::vector<RegionSeries> out;
    out.reserve(panel.num_regions());
    for (const auto& s : panel.series()) out.push_back(s.slice(n - keep, keep));
    return Panel(std::move(out));
}

Panel truncate_after(const Panel& panel, Date last) {
    if (panel.empty()) return panel;
    const auto& dates = panel.common_dates();
    const auto it = std::upper_bound(dates.begin(), dates.end(), last);
    const auto keep = static_cast<std::size_t>(it - dates.begin());
    if (keep == 0) {
        throw InsufficientDataError("no data on or before " + format_date(last));
    }
    std::vector<RegionSeries> out;
    out.reserve(panel.num_regions());
    for (const auto& s : panel.series()) out.push_back(s.slice(0, keep));
    return Panel(std::move(out));
}

std::pair<Panel, Observations> drop_last_days(const Panel& panel, std::size_t days_to_drop) {
    Observations removed;
    std::vector<RegionSeries> out;
    out.reserve(panel.num_regions());
    for (const auto& s : panel.series()) {
        if (s.size() <= days_to_drop) {
            throw InsufficientDataError("region '" + s.region_id() + "' has only " +
                                        std::to_string(s.size()) + " day(s)");
        }
        removed.emplace(s.region_id(), s.counts().back());
        out.push_back(s.slice(0, s.size() - days_to_drop));
    }
    return {Panel(std::move(out)), std::move(removed)};
}

std::pair<Panel, Observations> drop_last_day(const Panel& panel) {
    return drop_last_days(panel, 1);
}

Panel append_day(const Panel& panel, const Observations& observations) {
    std::vector<RegionSeries> out;
    out.reserve(panel.num_regions());
    for (const auto& s : panel.series()) {
        const auto it = observations.find(s.region_id());
        if (it == observations.end()) {
            throw LookupError("no observation for region '" + s.region_id() + "'");
        }
        auto dates = s.dates();
        auto counts = s.counts();
        dates.push_back(dates.back() + std::chrono::days{1});
        counts.push_back(it->second);
        out.emplace_back(s.region_id(), std::move(dates), std::move(counts), s.population_opt());
    }
    return Panel(std::move(out));
}

void serialize_panel_csv(const Panel& panel, std::ostream& out) {
    const bool with_pop = !panel.empty() && panel.has_population();
    out << "date,region,count" << (with_pop ? ",population" : "") << '\n';
    for (const auto& s : panel.series()) {
        const bool quote = s.region_id().find_first_of(",\"\n") != std::string::npos;
        std::string region = s.region_id();
        if (quote) {
            std::string escaped = "\"";
            for (const char c : region) {
                if (c == '"') escaped += '"';
                escaped += c;
            }
            region = escaped + '"';
        }
        for (std::size_t t = 0; t < s.size(); ++t) {
            out << format_date(s.dates()[t]) << ',' << region << ',' << s.counts()[t];
            if (with_pop) out << ',' << s.population();
            out << '\n';
        }
    }
}

Panel parse_panel_csv(std::istream& in) {
    return parse_counts(in, kCanonicalColumns, std::string("population"));
}

Panel parse_panel_csv(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse_panel_csv(in);
}

}  // namespace icucast
