#pragma once

#include "rdmix/balance.hpp"
#include "rdmix/data.hpp"
#include "rdmix/estimands.hpp"
#include "rdmix/gibbs.hpp"
#include "rdmix/model.hpp"
#include "rdmix/window.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rdmix {

struct DataSection {
    std::filesystem::path path;
    ColumnSchema columns;
    IngestOptions options;
};

struct SynthSection {
    std::string scenario;
    std::optional<std::size_t> n; // scenario default when absent
};

struct BalanceSection {
    bool enabled = true;
    WeightConvention weights = WeightConvention::reliability;
};

struct ImputationSection {
    bool enabled = false;
    int m = 5;
    int stride = 1; // in stored membership snapshots
};

struct StratifiedSection {
    bool enabled = false;
    std::vector<std::string> columns; // all covariates when empty
    StratumWeighting weighting = StratumWeighting::equal;
};

struct AnalysisSection {
    bool mixture = true;
    BalanceSection balance;
    std::vector<WindowSpec> windows;
    bool local_polynomial = false; // evaluated on every window
    ImputationSection imputation;
    StratifiedSection stratified; // evaluated on every window
};

enum class DrawFormat { csv, binary };

/// Everything a run needs. Exactly one of data / synth is set.
struct RunConfig {
    std::optional<DataSection> data;
    std::optional<SynthSection> synth;
    Priors priors;
    SamplerConfig sampler;
    AnalysisSection analysis;
    std::filesystem::path output_dir = "rdmix-out";
    DrawFormat draw_format = DrawFormat::csv;

    /// Cross-field checks; throws ConfigError.
    void validate() const;
};

/// Parses a config tree. Unknown keys at any level are rejected with the
/// full key path; the result is validated.
RunConfig parse_config(const nlohmann::json &tree);
/// Single sections, with the same key checking.
Priors parse_priors(const nlohmann::json &tree);
SamplerConfig parse_sampler(const nlohmann::json &tree);
WindowSpec parse_window(const nlohmann::json &tree);
/// Reads a JSON file (comments allowed) and parses it.
RunConfig load_config(const std::filesystem::path &path);
/// Normalized echo of a config, with every default filled in.
nlohmann::ordered_json config_to_json(const RunConfig &config);

/// Applies RDMIX_SEED, RDMIX_OUT and RDMIX_THREADS when set.
void apply_environment(RunConfig &config);

} // namespace rdmix
