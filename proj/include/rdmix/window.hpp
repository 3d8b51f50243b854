#pragma once

#include "rdmix/data.hpp"
#include "rdmix/estimands.hpp"
#include "rdmix/gibbs.hpp"
#include "rdmix/model.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rdmix {

enum class Kernel { uniform, triangular };

Kernel kernel_from_name(const std::string &name);
std::string kernel_name(Kernel k);

/// A fixed subpopulation around the threshold. When lower/upper are not
/// given the window is [s0 - bandwidth_left, s0 + bandwidth_right].
struct WindowSpec {
    std::string label;
    std::optional<double> lower;
    std::optional<double> upper;
    Kernel kernel = Kernel::uniform;
    int order = 1;
    double bandwidth_left = 0.0;
    double bandwidth_right = 0.0;

    double lower_bound(double s0) const { return lower ? *lower : s0 - bandwidth_left; }
    double upper_bound(double s0) const { return upper ? *upper : s0 + bandwidth_right; }
    void validate(double s0) const;
};

/// Rows with lower <= s <= upper.
std::vector<std::size_t> window_rows(const ObservedDataset &data, const WindowSpec &spec);

struct WindowDraws {
    WindowSpec spec;
    std::size_t n = 0, n_eligible = 0, n_ineligible = 0;
    std::vector<std::string> theta_names; // gamma00, gamma01, gamma_x_*
    std::vector<int> chain;
    std::vector<int> iteration;
    std::vector<std::vector<double>> theta;
    std::vector<ScoreRecord> scores;
    PosteriorSummary summary;

    std::vector<double> rr() const;
};

/// Probit analysis treating every window unit as a member of U_zero: outcome
/// latents, the two arm intercepts and the shared covariate slopes, then
/// counterfactual imputation and RR over the window. Throws DataError when
/// the window lacks units on either side of s0.
WindowDraws fixed_window_sampler(const ObservedDataset &data, const WindowSpec &spec, const Priors &priors,
                                 const SamplerConfig &config);

struct LocalPolynomialResult {
    WindowSpec spec;
    std::size_t n_left = 0, n_right = 0; // units with positive kernel weight
    double p0_hat = 0.0;                 // right of the threshold, P(Y(0)=1 | s0)
    double p1_hat = 0.0;                 // left of the threshold (eligible side)
    std::optional<double> rr;            // nullopt when p0_hat == 0
    double ate = 0.0;
    bool out_of_range = false;           // an estimate lies outside [0, 1]
    std::vector<double> coef_left;       // polynomial in (s - s0)
    std::vector<double> coef_right;
};

/// Kernel-weighted polynomial fits of y on (s - s0), separately on each side
/// within the bandwidths. Throws DataError for a rank-deficient side.
LocalPolynomialResult local_polynomial_rd(const ObservedDataset &data, const WindowSpec &spec);

/// Weighted least-squares polynomial fit of y on u; coefficients in
/// increasing degree. Throws DataError when the weighted design is rank
/// deficient.
std::vector<double> weighted_polyfit(std::span<const double> u, std::span<const double> y,
                                     std::span<const double> w, int order);

struct MICombined {
    std::size_t m = 0;
    double point = 0.0;
    double within = 0.0;
    double between = 0.0;
    double total_variance = 0.0;
};

/// Rubin's rules. Throws ConfigError when fewer than two imputations or a
/// negative variance is given. Inputs are combined in sorted order, so the
/// result does not depend on their order.
MICombined rubin_combine(std::span<const double> estimates, std::span<const double> variances);

/// m membership assignments taken every `stride` stored snapshots.
std::vector<MembershipSnapshot> export_membership_imputations(const PosteriorDraws &draws, int m, int stride);

/// One CSV per imputation (unit_id,label). Returns the written paths.
std::vector<std::filesystem::path> write_membership_imputations(const std::filesystem::path &dir,
                                                                const ObservedDataset &data,
                                                                const std::vector<MembershipSnapshot> &imputations);

} // namespace rdmix
