#pragma once

#include <string>
#include <vector>

namespace rdmix {

struct PosteriorDraws;

/// Split-chain potential scale reduction: every chain is cut in half and the
/// halves are treated as separate chains. NaN when fewer than 4 draws per
/// chain; 1 when all draws are identical.
double split_rhat(const std::vector<std::vector<double>> &chains);

/// Effective sample size over split chains using Geyer's initial positive
/// sequence on the combined autocorrelation estimate.
double effective_sample_size(const std::vector<std::vector<double>> &chains);

struct ConvergenceEntry {
    std::string name;
    double rhat = 0.0;
    double ess = 0.0;
};

/// R-hat and ESS for RR and every scalar parameter. Advisory only.
std::vector<ConvergenceEntry> convergence_report(const PosteriorDraws &draws);

} // namespace rdmix
