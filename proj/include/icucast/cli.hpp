#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "icucast/data.hpp"

namespace icucast::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitDataError = 1,
    kExitNumericFailure = 2,
};

struct RunConfig {
    std::size_t window = 15;
    int horizon = 1;
    double level = 0.99;
    int glmm_replicates = 500;
    int ingarch_replicates = 1000;
    std::uint64_t seed = 20200409;
    unsigned workers = 0;
    std::filesystem::path counts_path;
    std::filesystem::path population_path;
    std::filesystem::path output_dir = ".";
    ColumnMap columns;
    /// "diagonal", "block_01", "unstructured" or "select".
    std::string covariance = "block_01";
    bool select_daily = false;
    bool reoptimize_per_horizon = false;
    /// Forecast origin; defaults to the last date in the counts file.
    std::optional<std::string> as_of;
};

/// Throws ValueError when a field is outside its allowed range.
void validate(const RunConfig& config);

struct BacktestRange {
    std::string start;
    std::string end;
};

struct SimulateConfig {
    std::string model = "glmm";  // "glmm" or "ingarch"
    std::filesystem::path output_path = "panel.csv";
    std::optional<std::filesystem::path> truth_path;
    std::uint64_t seed = 1;
    std::string start_date = "2020-03-01";
    int days = 60;
    // GLMM generator
    int regions = 20;
    std::vector<double> beta{-9.0, 0.2, -0.01};
    /// Sigma_B entries: 3 values (diagonal), 4 (s0^2, s1^2, s01, s2^2) or 9 (row-major).
    std::vector<double> sigma{0.0, 0.0, 0.0};
    std::vector<Count> populations{1'000'000};
    // INGARCH generator
    double alpha0 = 0.4;
    double alpha1 = 0.3;
    std::vector<double> gamma{2.0};
    double mu1 = 1.0;
};

int cmd_forecast(const RunConfig& config, std::ostream& log);
int cmd_backtest(const RunConfig& config, const BacktestRange& range, std::ostream& log);
int cmd_simulate(const SimulateConfig& config, std::ostream& log);
int cmd_fit(const RunConfig& config, std::ostream& log);

/// Parses argv and dispatches to the subcommands.
int run(int argc, char** argv);

/// Writes `contents` to `path` through a temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace icucast::cli
