#pragma once

#include "rdmix/data.hpp"
#include "rdmix/model.hpp"
#include "rdmix/random.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rdmix {

class WorkerPool;

namespace detail {
struct Predictors;
}

enum class InitStrategy {
    random,   // z=1 units U_zero/U_minus and z=0 units U_zero/U_plus with probability 1/2
    all_zero, // every unit starts in U_zero
    provided, // labels supplied by the caller
};

struct SamplerConfig {
    int iterations = 2000;
    int burn_in = 500;
    int thinning = 1;
    int chains = 1;
    std::uint64_t seed = 20240101;
    InitStrategy init = InitStrategy::random;
    double rr_guard = 0.5;
    /// Keep the label vector of every k-th retained draw (0 disables).
    int membership_stride = 10;
    /// Evaluate the complete-data log likelihood on every k-th retained draw
    /// and count non-finite values (0 disables).
    int loglik_check_stride = 10;
    /// Skip step 1 and keep the initial labels for the whole chain.
    bool freeze_membership = false;
    std::size_t shard_size = 4096;
    int threads = 1;
    /// Forcing-variable bin width for the membership-by-income table.
    double bin_width = 10.0;

    void validate() const;
};

/// Counters for events the sampler recovers from.
struct IterationDiagnostics {
    std::uint64_t membership_fallbacks = 0; // both step-1 weights underflowed
    /// Regression blocks updated with zero members, indexed by Subpop.
    std::array<std::uint64_t, 3> empty_blocks{0, 0, 0};
    std::uint64_t degenerate_rr = 0;

    IterationDiagnostics &operator+=(const IterationDiagnostics &o);
};

/// Per-iteration quantities of the counterfactual imputation step.
struct ScoreRecord {
    double rr = 1.0;
    double numerator = 0.0;   // sum over U_zero of Y(1), observed or imputed
    double denominator = 0.0; // sum over U_zero of Y(0)
    bool degenerate = false;
    std::size_t n_minus = 0;
    std::size_t n_zero = 0;
    std::size_t n_plus = 0;
    std::size_t n_zero_eligible = 0;   // U_zero with z = 1
    std::size_t n_zero_ineligible = 0; // U_zero with z = 0
};

/// Two-point full conditional of one unit's label.
struct MembershipConditional {
    std::array<double, 3> prob{0.0, 0.0, 0.0}; // indexed by Subpop
    bool fallback = false;
};

/// Step-1 conditional for unit i under parameters theta.
MembershipConditional membership_probabilities(std::size_t i, const ParameterState &theta,
                                               const ObservedDataset &data);

Subpop draw_membership(std::size_t i, const ParameterState &theta, const ObservedDataset &data,
                       RngStream &rng);

MembershipState initial_membership(const ObservedDataset &data, InitStrategy init, RngStream &rng);
/// Labels are validated against the structural zeros; latent utilities are
/// set to values consistent with the labels.
MembershipState membership_from_labels(const ObservedDataset &data, const std::vector<Subpop> &labels);

/// Complete-data log likelihood of (theta, labels); -inf when a label is a
/// structural zero.
double complete_data_log_likelihood(const ParameterState &theta, const MembershipState &state,
                                    const ObservedDataset &data);

/// Mixture sampler bound to one dataset. Each block update is exposed as a
/// posterior so tests can compare it with closed forms; iterate() draws
/// from exactly these posteriors in the fixed schedule.
class MixtureGibbs {
  public:
    MixtureGibbs(const ObservedDataset &data, const Priors &priors, std::size_t shard_size = 4096,
                 WorkerPool *pool = nullptr);

    const ObservedDataset &data() const noexcept { return data_; }
    const Priors &priors() const noexcept { return priors_; }

    /// One full sweep. All randomness comes from substreams of rng, keyed by
    /// step and shard, so results do not depend on the worker count.
    void iterate(ParameterState &theta, MembershipState &state, const RngStream &rng,
                 bool freeze_membership = false);

    /// Imputes the missing potential outcome for U_zero units and scores RR.
    ScoreRecord impute_and_score(const ParameterState &theta, MembershipState &state,
                                 const RngStream &rng, double rr_guard) const;

    // Block posteriors given the current state.
    GaussianPosterior alpha_minus_posterior(const MembershipState &state) const;
    GaussianPosterior alpha_plus_posterior(const MembershipState &state) const;
    GaussianPosterior forcing_coefficient_posterior(Subpop g, const MembershipState &state,
                                                    double sigma2) const;
    InvChiSquared forcing_variance_posterior(Subpop g, const MembershipState &state,
                                             const Eigen::VectorXd &beta) const;
    /// (intercept, forcing slope) for U_minus or U_plus.
    GaussianPosterior outcome_slope_posterior(Subpop g, const ParameterState &theta,
                                              const MembershipState &state) const;
    /// Scalar U_zero intercept for the z arm.
    GaussianPosterior outcome_intercept_posterior(int z, const ParameterState &theta,
                                                  const MembershipState &state) const;
    GaussianPosterior shared_slope_posterior(const ParameterState &theta,
                                             const MembershipState &state) const;

    const IterationDiagnostics &diagnostics() const noexcept { return diag_; }

  private:
    struct BlockSums {
        std::array<Eigen::MatrixXd, 3> gram; // design Gram matrix per component
        std::array<Eigen::VectorXd, 3> dty;  // design' log S per component
        std::array<std::size_t, 3> count{0, 0, 0};
        Eigen::VectorXd dgp; // design' G*+ over U_zero and U_plus
    };
    BlockSums block_sums(const MembershipState &state) const;
    GaussianPosterior alpha_plus_posterior(const BlockSums &sums) const;
    GaussianPosterior forcing_coefficient_posterior(Subpop g, const BlockSums &sums, double sigma2) const;
    GaussianPosterior outcome_slope_posterior(Subpop g, const MembershipState &state,
                                              const Eigen::VectorXd &xg) const;
    GaussianPosterior outcome_intercept_posterior(int z, const MembershipState &state,
                                                  const Eigen::VectorXd &xg) const;

    void draw_memberships(const ParameterState &theta, const detail::Predictors &pr, MembershipState &state,
                          const RngStream &rng);
    void draw_mixing_latents(const detail::Predictors &pr, MembershipState &state, const RngStream &rng);
    void draw_outcome_latents(const ParameterState &theta, const Eigen::VectorXd &xg, MembershipState &state,
                              const RngStream &rng, std::uint64_t step);
    template <class F> void for_shards(F &&body) const;

    const ObservedDataset &data_;
    Priors priors_;
    std::size_t shard_size_;
    WorkerPool *pool_;
    Eigen::MatrixXd dtd_; // [1, X]'[1, X] over all units
    Eigen::MatrixXd xtx_; // X'X over all units
    IterationDiagnostics diag_;
};

/// One sweep with a throwaway sampler (convenience for tests and tooling).
void gibbs_iteration(ParameterState &theta, MembershipState &state, const ObservedDataset &data,
                     const Priors &priors, const RngStream &rng);

struct DrawRecord {
    int chain = 0;
    int iteration = 0;
    std::vector<double> theta; // ParameterState::flatten()
    MixingProbabilities pi_bar;
    ScoreRecord score;
};

struct MembershipSnapshot {
    int chain = 0;
    int iteration = 0;
    std::vector<Subpop> labels;
};

struct PosteriorDraws {
    std::size_t p = 0;
    std::size_t n = 0;
    std::vector<DrawRecord> draws;
    /// Per-unit retained-draw label counts, indexed by Subpop.
    std::vector<std::array<std::uint32_t, 3>> unit_counts;
    /// Bin lower edges for the membership table; bin b is (edge[b], edge[b]+width],
    /// except the first bin, which also includes its lower edge.
    std::vector<double> bin_edges;
    double bin_width = 0.0;
    std::vector<std::size_t> bin_sizes;
    /// Per retained draw, the U_zero share within each bin (NaN for empty bins).
    std::vector<std::vector<double>> bin_means;
    std::vector<MembershipSnapshot> snapshots;
    IterationDiagnostics diagnostics;
    std::uint64_t structural_violations = 0;
    std::uint64_t nonfinite_loglik = 0;
    bool partial = false;
    std::string failure;

    std::size_t size() const noexcept { return draws.size(); }
    std::vector<double> rr() const;
    /// Series of one flattened theta entry.
    std::vector<double> theta_series(std::size_t index) const;
    /// Appends another chain's draws (used to assemble multi-chain output).
    void append(PosteriorDraws &&other);
};

/// Bin index of a forcing value given the table layout.
std::size_t membership_bin(double s, double first_edge, double width, std::size_t bins);

/// Runs one chain. init_labels is used when config.init is `provided`.
PosteriorDraws run_chain(const ObservedDataset &data, const Priors &priors, const SamplerConfig &config,
                         int chain, const std::vector<Subpop> *init_labels = nullptr,
                         WorkerPool *pool = nullptr);

/// Runs config.chains chains (concurrently when threads allow) and
/// concatenates them in chain order.
PosteriorDraws run_chains(const ObservedDataset &data, const Priors &priors, const SamplerConfig &config,
                          const std::vector<Subpop> *init_labels = nullptr);

} // namespace rdmix
