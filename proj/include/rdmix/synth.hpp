#pragma once

#include "rdmix/data.hpp"
#include "rdmix/model.hpp"
#include "rdmix/random.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rdmix {

/// Independent covariate columns: standard normals first, then Bernoulli.
struct CovariateSpec {
    int normal = 2;
    int bernoulli = 1;
    double bernoulli_p = 0.5;

    std::size_t p() const noexcept { return static_cast<std::size_t>(normal + bernoulli); }
};

struct GenerateOptions {
    double eps0 = 0.5;
    /// Maximum (label, S) draws per unit before giving up.
    std::size_t max_attempts_per_unit = 1000;
    std::size_t shard_size = 4096;
};

struct GroundTruth {
    ParameterState theta;
    std::vector<Subpop> labels;
    /// Potential outcomes of U_zero units; -1 for U_minus / U_plus.
    std::vector<std::int8_t> y0, y1;
    std::array<std::size_t, 3> label_counts{0, 0, 0};
    /// Unit average of the mixing probabilities.
    MixingProbabilities average_mixing;
    double rr = 0.0;          // finite-sample RR over the true U_zero
    bool rr_defined = false;  // false when sum of Y(0) over U_zero is 0
    std::size_t rejections = 0;
    std::size_t attempts = 0;
};

struct SynthResult {
    ObservedDataset data;
    GroundTruth truth;
};

/// Draws n units from the mixture: covariates, a label from the mixing
/// probabilities, log S from the label's regression, and outcomes (both
/// potential outcomes for U_zero). (label, S) pairs that put a unit on the
/// wrong side of s0 for its label are redrawn; exceeding the cap throws
/// DataError.
SynthResult generate(const ParameterState &theta, const CovariateSpec &covariates, std::size_t n, double s0,
                     const RngStream &rng, const GenerateOptions &options = {});

struct Scenario {
    std::string name;
    std::string description;
    ParameterState theta;
    CovariateSpec covariates;
    double s0 = 120.0;
    std::size_t n = 20000;
};

/// Named presets: "separated", "null-effect", "rare-outcome".
const std::vector<Scenario> &scenario_library();
/// Throws ConfigError for an unknown name.
const Scenario &scenario(const std::string &name);

/// Writes <stem>.csv (unit_id,s,y,x1..xp), <stem>_truth.csv (unit_id,label,
/// y0,y1) and <stem>_truth.json (parameters, true RR, rejection counts).
void write_synth(const std::filesystem::path &dir, const std::string &stem, const SynthResult &result);

} // namespace rdmix
