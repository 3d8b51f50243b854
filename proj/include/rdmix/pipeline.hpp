#pragma once

#include "rdmix/config.hpp"
#include "rdmix/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rdmix {

inline constexpr const char *kVersion = "1.0.0";

struct LoadedData {
    ObservedDataset data;
    std::optional<IngestReport> report;  // ingested data
    std::optional<GroundTruth> truth;    // synthetic data
    std::string source;                  // path or "synth:<scenario>"
};

/// Ingests config.data or regenerates the synthetic scenario (seeded by the
/// sampler seed, so it is reproducible).
LoadedData load_dataset(const RunConfig &config);

/// Stages of a run. Each writes into config.output_dir and returns the
/// files it wrote.
std::vector<std::filesystem::path> stage_ingest_check(const RunConfig &config, const LoadedData &loaded);
std::vector<std::filesystem::path> stage_synth(const RunConfig &config, const LoadedData &loaded);
/// Runs the mixture sampler and persists the posterior. Writes a PARTIAL
/// marker and throws NumericError when a chain failed.
std::vector<std::filesystem::path> stage_sample(const RunConfig &config, const LoadedData &loaded);
/// Summaries from a persisted posterior in dir.
std::vector<std::filesystem::path> stage_summarize(const std::filesystem::path &dir);
/// Posterior balance from persisted membership draws, plus fixed-window
/// balance for every configured window.
std::vector<std::filesystem::path> stage_balance(const RunConfig &config, const LoadedData &loaded);
std::vector<std::filesystem::path> stage_windows(const RunConfig &config, const LoadedData &loaded);
std::vector<std::filesystem::path> stage_imputation(const RunConfig &config, const LoadedData &loaded);

/// Writes run_manifest.json: version, seed, config echo and hashes of the
/// inputs and of every listed output.
void write_manifest(const RunConfig &config, const LoadedData &loaded,
                    const std::vector<std::filesystem::path> &outputs);

/// Full pipeline: data, mixture sampling, summaries, balance, windows,
/// imputation export, manifest. Returns the run directory.
std::filesystem::path run(const RunConfig &config);

/// Machine-readable error record for any exception.
nlohmann::ordered_json error_json(const std::exception &e);
/// 0 ok, 2 config, 3 data, 4 numeric, 1 anything else.
int exit_code(const std::exception &e);

} // namespace rdmix
