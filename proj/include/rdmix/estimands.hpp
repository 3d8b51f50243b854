#pragma once

#include "rdmix/data.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rdmix {

struct PosteriorDraws;

struct PosteriorSummary {
    std::size_t draws = 0;
    double median = 0.0;
    double pct_2_5 = 0.0;
    double pct_97_5 = 0.0;
    double interval_width = 0.0;
    double prob_below_1 = 0.0; // fraction of draws strictly below 1
    std::size_t degenerate = 0;
};

/// Median, 95% percentile interval (linear interpolation between order
/// statistics) and Pr(value < 1). Throws DataError on an empty series.
PosteriorSummary summarize_series(std::span<const double> values, std::size_t degenerate = 0);
/// Requires at least two retained draws.
PosteriorSummary summarize_rr(const PosteriorDraws &draws);

struct MembershipTableRow {
    double lower = 0.0;
    double upper = 0.0;
    bool closed_lower = false; // the first bin includes its lower edge
    std::size_t units = 0;
    std::optional<double> median; // nullopt for empty bins
    std::optional<double> sd;     // nullopt for empty bins or a single draw
};

using MembershipTable = std::vector<MembershipTableRow>;

/// Posterior of Pr(i in U_zero) averaged within forcing-variable bins.
MembershipTable membership_table(const PosteriorDraws &draws);

/// Same table from explicit per-draw, per-unit membership values (indicators
/// or probabilities) over forcing values s.
MembershipTable membership_table(const std::vector<double> &s,
                                 const std::vector<std::vector<double>> &unit_values_per_draw,
                                 double bin_width);

/// Per-unit posterior frequency of U_zero membership.
std::vector<double> membership_frequencies(const PosteriorDraws &draws);

struct CountSummary {
    double median = 0.0;
    double pct_2_5 = 0.0;
    double pct_97_5 = 0.0;
};

struct MembershipCountSummary {
    CountSummary n_zero;
    CountSummary n_zero_eligible;
    CountSummary n_zero_ineligible;
    CountSummary n_minus;
    CountSummary n_plus;
    CountSummary pi_minus;
    CountSummary pi_zero;
    CountSummary pi_plus;
};

CountSummary summarize_counts(std::span<const double> values);
MembershipCountSummary summarize_membership_counts(const PosteriorDraws &draws);

enum class StratumWeighting {
    equal,      // average of the per-stratum arm means
    population, // stratum means weighted by stratum size
};

struct StratifiedEstimate {
    std::size_t strata = 0;
    double mean_treated = 0.0; // arm z = 1
    double mean_control = 0.0; // arm z = 0
    double rr = 0.0;
    bool degenerate = false; // control mean 0: rr is NaN
};

/// Stratified arm-mean estimator on a fixed subpopulation: units are stratified
/// by the exact value of the listed covariate columns (all columns when
/// empty) and arm means are computed within each stratum. Throws DataError
/// naming the stratum when a stratum lacks one arm.
StratifiedEstimate stratified_estimator(const ObservedDataset &data,
                                        const std::vector<std::size_t> &columns = {},
                                        StratumWeighting weighting = StratumWeighting::equal);

} // namespace rdmix
