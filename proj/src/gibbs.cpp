#include "rdmix/gibbs.hpp"

#include "rdmix/error.hpp"
#include "rdmix/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <memory>
#include <thread>

namespace rdmix {

// Linear predictors of every component at the current parameters.
struct detail::Predictors {
    Eigen::VectorXd a_minus, a_plus;
    Eigen::VectorXd m_zero, m_minus, m_plus;
    Eigen::VectorXd xg;
};

namespace {

using detail::Predictors;

constexpr double kLog2Pi = 1.83787706640934548356;

// Substream keys of the steps within one iteration stream.
enum StepKey : std::uint64_t {
    kStepMembership = 1,
    kStepMixingLatents = 2,
    kStepBlocks = 3,
    kStepOutcomeLatents = 9,
    kStepSharedLatents = 10,
    kStepImpute = 11,
};

double log_bernoulli_probit(std::uint8_t y, double eta) {
    return y ? log_std_normal_cdf(eta) : log_std_normal_cdf(-eta);
}

double log_normal_density(double v, double mean, double var) {
    const double d = v - mean;
    return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

Eigen::VectorXd shared_part(const ObservedDataset &data, const Eigen::VectorXd &gamma_x) {
    if (gamma_x.size() == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.n()));
    return data.x() * gamma_x;
}

Predictors predictors(const ObservedDataset &data, const ParameterState &theta) {
    const auto &d = data.design();
    Predictors out;
    out.a_minus = d * theta.alpha_minus;
    out.a_plus = d * theta.alpha_plus;
    out.m_zero = d * theta.beta;
    out.m_minus = d * theta.beta_minus;
    out.m_plus = d * theta.beta_plus;
    out.xg = shared_part(data, theta.gamma_x);
    return out;
}

// Log weights of U_zero and of the one admissible alternative for unit i.
// Terms common to both (log Phi(a_minus) when z = 0) are dropped.
struct UnitWeights {
    double zero = 0.0, other = 0.0;           // full conditional
    double mix_zero = 0.0, mix_other = 0.0;   // mixing part only
};

// Per-sweep constants of the forcing densities: -0.5 (log 2 pi + log sigma2_g).
struct DensityConstants {
    double minus, zero, plus;
    explicit DensityConstants(const ParameterState &t)
        : minus(-0.5 * (kLog2Pi + std::log(t.sigma2_minus))), zero(-0.5 * (kLog2Pi + std::log(t.sigma2))),
          plus(-0.5 * (kLog2Pi + std::log(t.sigma2_plus))) {}
};

UnitWeights unit_weights(std::size_t i, const ObservedDataset &data, const ParameterState &theta,
                         const DensityConstants &c, double a_minus, double a_plus, double m_zero,
                         double m_other, double xg) {
    const double ls = data.log_s()[static_cast<Eigen::Index>(i)];
    const std::uint8_t y = data.y()[i];
    const double d0 = ls - m_zero, d1 = ls - m_other;
    UnitWeights w;
    if (data.z()[i] == 0) {
        const auto [lp, lq] = log_std_normal_cdf_pair(a_plus);
        w.mix_zero = lp;
        w.mix_other = lq;
        w.zero = w.mix_zero + c.zero - 0.5 * d0 * d0 / theta.sigma2 +
                 log_bernoulli_probit(y, theta.gamma00 + xg);
        w.other = w.mix_other + c.plus - 0.5 * d1 * d1 / theta.sigma2_plus +
                  log_bernoulli_probit(y, theta.gamma_plus[0] + theta.gamma_plus[1] * ls + xg);
    } else {
        const auto [lp, lq] = log_std_normal_cdf_pair(a_minus);
        w.mix_zero = lp + log_std_normal_cdf(a_plus);
        w.mix_other = lq;
        w.zero = w.mix_zero + c.zero - 0.5 * d0 * d0 / theta.sigma2 +
                 log_bernoulli_probit(y, theta.gamma01 + xg);
        w.other = w.mix_other + c.minus - 0.5 * d1 * d1 / theta.sigma2_minus +
                  log_bernoulli_probit(y, theta.gamma_minus[0] + theta.gamma_minus[1] * ls + xg);
    }
    return w;
}

// Pr(U_zero) from two log weights; nullopt when both underflow.
std::optional<double> zero_probability(double lw_zero, double lw_other) {
    if (lw_zero == -kInf && lw_other == -kInf) return std::nullopt;
    if (std::isnan(lw_zero) || std::isnan(lw_other)) return std::nullopt;
    if (lw_other == -kInf) return 1.0;
    if (lw_zero == -kInf) return 0.0;
    return 1.0 / (1.0 + std::exp(lw_other - lw_zero));
}

std::pair<double, bool> resolve_zero_probability(const UnitWeights &w) {
    if (auto p = zero_probability(w.zero, w.other)) return {*p, false};
    if (auto p = zero_probability(w.mix_zero, w.mix_other)) return {*p, true};
    return {0.5, true};
}

Subpop alternative(std::uint8_t z) { return z ? Subpop::minus : Subpop::plus; }

double outcome_mean(Subpop g, std::uint8_t z, double ls, double xg, const ParameterState &theta) {
    switch (g) {
    case Subpop::minus: return theta.gamma_minus[0] + theta.gamma_minus[1] * ls + xg;
    case Subpop::plus: return theta.gamma_plus[0] + theta.gamma_plus[1] * ls + xg;
    default: return (z ? theta.gamma01 : theta.gamma00) + xg;
    }
}

double latent_draw(double mean, bool positive, RngStream &rng) {
    return positive ? sample_truncated_normal(mean, 1.0, 0.0, kInf, rng)
                    : sample_truncated_normal(mean, 1.0, -kInf, 0.0, rng);
}

void check_state(const ObservedDataset &data, const MembershipState &state) {
    if (state.g.size() != data.n() || static_cast<std::size_t>(state.y_star.size()) != data.n() ||
        static_cast<std::size_t>(state.g_star_minus.size()) != data.n() ||
        static_cast<std::size_t>(state.g_star_plus.size()) != data.n())
        throw std::invalid_argument("membership state does not match the dataset");
}

} // namespace

void SamplerConfig::validate() const {
    if (iterations < 1) throw ConfigError("mixture_gibbs", "iterations must be positive");
    if (burn_in < 0 || burn_in >= iterations)
        throw ConfigError("mixture_gibbs", "burn_in must be nonnegative and less than iterations");
    if (thinning < 1) throw ConfigError("mixture_gibbs", "thinning must be at least 1");
    if (chains < 1) throw ConfigError("mixture_gibbs", "chains must be at least 1");
    if (!(rr_guard > 0.0) || !std::isfinite(rr_guard))
        throw ConfigError("mixture_gibbs", "rr_guard must be positive");
    if (membership_stride < 0) throw ConfigError("mixture_gibbs", "membership_stride must be nonnegative");
    if (loglik_check_stride < 0) throw ConfigError("mixture_gibbs", "loglik_check_stride must be nonnegative");
    if (shard_size < 1) throw ConfigError("mixture_gibbs", "shard_size must be positive");
    if (threads < 1) throw ConfigError("mixture_gibbs", "threads must be at least 1");
    if (!(bin_width > 0.0) || !std::isfinite(bin_width))
        throw ConfigError("mixture_gibbs", "bin_width must be positive");
}

IterationDiagnostics &IterationDiagnostics::operator+=(const IterationDiagnostics &o) {
    membership_fallbacks += o.membership_fallbacks;
    for (std::size_t k = 0; k < 3; ++k) empty_blocks[k] += o.empty_blocks[k];
    degenerate_rr += o.degenerate_rr;
    return *this;
}

MembershipConditional membership_probabilities(std::size_t i, const ParameterState &theta,
                                               const ObservedDataset &data) {
    const auto d = data.design().row(static_cast<Eigen::Index>(i));
    const std::uint8_t z = data.z()[i];
    const Subpop other = alternative(z);
    const double xg = theta.gamma_x.size() ? data.x().row(static_cast<Eigen::Index>(i)).dot(theta.gamma_x) : 0.0;
    const auto w = unit_weights(i, data, theta, DensityConstants(theta), d.dot(theta.alpha_minus), d.dot(theta.alpha_plus),
                                d.dot(theta.beta), d.dot(theta.forcing_coefficients(other)), xg);
    const auto [p0, fallback] = resolve_zero_probability(w);
    MembershipConditional out;
    out.prob[static_cast<std::size_t>(Subpop::zero)] = p0;
    out.prob[static_cast<std::size_t>(other)] = 1.0 - p0;
    out.fallback = fallback;
    return out;
}

Subpop draw_membership(std::size_t i, const ParameterState &theta, const ObservedDataset &data,
                       RngStream &rng) {
    const auto c = membership_probabilities(i, theta, data);
    return rng.uniform() < c.prob[static_cast<std::size_t>(Subpop::zero)] ? Subpop::zero
                                                                          : alternative(data.z()[i]);
}

MembershipState membership_from_labels(const ObservedDataset &data, const std::vector<Subpop> &labels) {
    const std::size_t n = data.n();
    if (labels.size() != n) throw DataError("mixture_gibbs", "initial labels do not match the dataset size");
    MembershipState st;
    st.g = labels;
    st.g_star_minus.resize(static_cast<Eigen::Index>(n));
    st.g_star_plus.resize(static_cast<Eigen::Index>(n));
    st.y_star.resize(static_cast<Eigen::Index>(n));
    st.y_missing.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (!admissible(labels[i], data.z()[i]))
            throw DataError("mixture_gibbs", "initial label of unit " + data.unit_ids()[i] +
                                                 " violates the eligibility side constraint");
        const auto k = static_cast<Eigen::Index>(i);
        st.g_star_minus[k] = labels[i] == Subpop::minus ? -0.5 : 0.5;
        st.g_star_plus[k] = labels[i] == Subpop::plus ? -0.5 : 0.5;
        st.y_star[k] = data.y()[i] ? 0.5 : -0.5;
    }
    return st;
}

MembershipState initial_membership(const ObservedDataset &data, InitStrategy init, RngStream &rng) {
    std::vector<Subpop> labels(data.n(), Subpop::zero);
    if (init == InitStrategy::random) {
        for (std::size_t i = 0; i < data.n(); ++i)
            if (rng.uniform() < 0.5) labels[i] = alternative(data.z()[i]);
    } else if (init == InitStrategy::provided) {
        throw ConfigError("mixture_gibbs", "provided initialization requires initial labels");
    }
    return membership_from_labels(data, labels);
}

double complete_data_log_likelihood(const ParameterState &theta, const MembershipState &state,
                                    const ObservedDataset &data) {
    check_state(data, state);
    const auto pr = predictors(data, theta);
    double total = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const Subpop g = state.g[i];
        const std::uint8_t z = data.z()[i];
        if (!admissible(g, z)) return -kInf;
        const double ls = data.log_s()[k];
        double log_pi = 0.0, mean = 0.0;
        switch (g) {
        case Subpop::minus:
            log_pi = log_std_normal_cdf(-pr.a_minus[k]);
            mean = pr.m_minus[k];
            break;
        case Subpop::plus:
            log_pi = log_std_normal_cdf(pr.a_minus[k]) + log_std_normal_cdf(-pr.a_plus[k]);
            mean = pr.m_plus[k];
            break;
        default:
            log_pi = log_std_normal_cdf(pr.a_minus[k]) + log_std_normal_cdf(pr.a_plus[k]);
            mean = pr.m_zero[k];
        }
        total += log_pi + log_normal_density(ls, mean, theta.forcing_variance(g)) +
                 log_bernoulli_probit(data.y()[i], outcome_mean(g, z, ls, pr.xg[k], theta));
    }
    return total;
}

MixtureGibbs::MixtureGibbs(const ObservedDataset &data, const Priors &priors, std::size_t shard_size,
                           WorkerPool *pool)
    : data_(data), priors_(priors), shard_size_(std::max<std::size_t>(1, shard_size)), pool_(pool) {
    priors_.validate();
    const auto &d = data_.design();
    dtd_ = Eigen::MatrixXd::Zero(d.cols(), d.cols());
    dtd_.selfadjointView<Eigen::Lower>().rankUpdate(d.transpose());
    dtd_ = dtd_.selfadjointView<Eigen::Lower>();
    xtx_ = dtd_.bottomRightCorner(d.cols() - 1, d.cols() - 1);
}

template <class F> void MixtureGibbs::for_shards(F &&body) const {
    const std::size_t n = data_.n();
    const std::size_t shards = (n + shard_size_ - 1) / shard_size_;
    auto run = [&](std::size_t s) {
        const std::size_t lo = s * shard_size_;
        body(s, lo, std::min(n, lo + shard_size_));
    };
    if (pool_ && pool_->size() > 1) {
        pool_->parallel_for(shards, run);
    } else {
        for (std::size_t s = 0; s < shards; ++s) run(s);
    }
}

void MixtureGibbs::draw_memberships(const ParameterState &theta, const detail::Predictors &pr, MembershipState &state,
                                    const RngStream &rng) {
    const DensityConstants c(theta);
    const std::size_t shards = (data_.n() + shard_size_ - 1) / shard_size_;
    std::vector<std::uint64_t> fallbacks(shards, 0);
    for_shards([&](std::size_t s, std::size_t lo, std::size_t hi) {
        RngStream r = rng.substream(kStepMembership, s);
        for (std::size_t i = lo; i < hi; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            const std::uint8_t z = data_.z()[i];
            const auto w = unit_weights(i, data_, theta, c, pr.a_minus[k], pr.a_plus[k], pr.m_zero[k],
                                        z ? pr.m_minus[k] : pr.m_plus[k], pr.xg[k]);
            const auto [p0, fallback] = resolve_zero_probability(w);
            fallbacks[s] += fallback;
            state.g[i] = r.uniform() < p0 ? Subpop::zero : alternative(z);
        }
    });
    for (auto f : fallbacks) diag_.membership_fallbacks += f;
}

void MixtureGibbs::draw_mixing_latents(const detail::Predictors &pr, MembershipState &state, const RngStream &rng) {
    for_shards([&](std::size_t s, std::size_t lo, std::size_t hi) {
        RngStream r = rng.substream(kStepMixingLatents, s);
        for (std::size_t i = lo; i < hi; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            state.g_star_minus[k] = latent_draw(pr.a_minus[k], state.g[i] != Subpop::minus, r);
            state.g_star_plus[k] = latent_draw(pr.a_plus[k], state.g[i] != Subpop::plus, r);
        }
    });
}

void MixtureGibbs::draw_outcome_latents(const ParameterState &theta, const Eigen::VectorXd &xg,
                                        MembershipState &state, const RngStream &rng, std::uint64_t step) {
    for_shards([&](std::size_t s, std::size_t lo, std::size_t hi) {
        RngStream r = rng.substream(step, s);
        for (std::size_t i = lo; i < hi; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            const double eta = outcome_mean(state.g[i], data_.z()[i], data_.log_s()[k], xg[k], theta);
            state.y_star[k] = latent_draw(eta, data_.y()[i] == 1, r);
        }
    });
}

// One pass over the units: per-component Gram matrices and cross products of
// the design with log S, plus the alpha+ sums over U_zero and U_plus.
MixtureGibbs::BlockSums MixtureGibbs::block_sums(const MembershipState &state) const {
    const auto &d = data_.design();
    const Eigen::Index n = d.rows(), k = d.cols();
    BlockSums out;
    for (std::size_t g = 0; g < 3; ++g) {
        out.gram[g] = Eigen::MatrixXd::Zero(k, k);
        out.dty[g] = Eigen::VectorXd::Zero(k);
    }
    out.dgp = Eigen::VectorXd::Zero(k);
    std::vector<double> row(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto g = static_cast<std::size_t>(state.g[static_cast<std::size_t>(i)]);
        ++out.count[g];
        for (Eigen::Index a = 0; a < k; ++a) row[static_cast<std::size_t>(a)] = d(i, a);
        Eigen::MatrixXd &gram = out.gram[g];
        Eigen::VectorXd &dty = out.dty[g];
        const double ls = data_.log_s()[i];
        for (Eigen::Index a = 0; a < k; ++a) {
            const double va = row[static_cast<std::size_t>(a)];
            for (Eigen::Index b = 0; b <= a; ++b) gram(a, b) += va * row[static_cast<std::size_t>(b)];
            dty[a] += va * ls;
        }
        if (g != static_cast<std::size_t>(Subpop::minus)) {
            const double gp = state.g_star_plus[i];
            for (Eigen::Index a = 0; a < k; ++a) out.dgp[a] += row[static_cast<std::size_t>(a)] * gp;
        }
    }
    for (auto &gram : out.gram) gram = gram.selfadjointView<Eigen::Lower>();
    return out;
}

GaussianPosterior MixtureGibbs::alpha_minus_posterior(const MembershipState &state) const {
    const Eigen::VectorXd xty = data_.design().transpose() * state.g_star_minus;
    return conjugate_posterior(dtd_, xty, 1.0 / (priors_.sd_alpha * priors_.sd_alpha), 1.0);
}

GaussianPosterior MixtureGibbs::alpha_plus_posterior(const BlockSums &sums) const {
    const Eigen::MatrixXd xtx = sums.gram[static_cast<std::size_t>(Subpop::zero)] +
                                sums.gram[static_cast<std::size_t>(Subpop::plus)];
    return conjugate_posterior(xtx, sums.dgp, 1.0 / (priors_.sd_alpha * priors_.sd_alpha), 1.0);
}

GaussianPosterior MixtureGibbs::alpha_plus_posterior(const MembershipState &state) const {
    return alpha_plus_posterior(block_sums(state));
}

GaussianPosterior MixtureGibbs::forcing_coefficient_posterior(Subpop g, const BlockSums &sums,
                                                              double sigma2) const {
    const auto gi = static_cast<std::size_t>(g);
    Eigen::VectorXd prior_mean = Eigen::VectorXd::Zero(data_.design().cols());
    prior_mean[0] = priors_.beta_intercept_mean[gi];
    return conjugate_posterior(sums.gram[gi], sums.dty[gi], 1.0 / priors_.var_beta, sigma2, prior_mean);
}

GaussianPosterior MixtureGibbs::forcing_coefficient_posterior(Subpop g, const MembershipState &state,
                                                              double sigma2) const {
    return forcing_coefficient_posterior(g, block_sums(state), sigma2);
}

InvChiSquared MixtureGibbs::forcing_variance_posterior(Subpop g, const MembershipState &state,
                                                       const Eigen::VectorXd &beta) const {
    const auto &d = data_.design();
    double ss = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < data_.n(); ++i) {
        if (state.g[i] != g) continue;
        const auto k = static_cast<Eigen::Index>(i);
        double fit = 0.0;
        for (Eigen::Index a = 0; a < d.cols(); ++a) fit += d(k, a) * beta[a];
        const double r = data_.log_s()[k] - fit;
        ss += r * r;
        ++count;
    }
    return residual_variance_posterior(priors_.df, priors_.scale, ss, count);
}

GaussianPosterior MixtureGibbs::outcome_slope_posterior(Subpop g, const ParameterState &theta,
                                                        const MembershipState &state) const {
    return outcome_slope_posterior(g, state, shared_part(data_, theta.gamma_x));
}

GaussianPosterior MixtureGibbs::outcome_slope_posterior(Subpop g, const MembershipState &state,
                                                        const Eigen::VectorXd &xg) const {
    if (g == Subpop::zero) throw std::invalid_argument("outcome slope block exists only for U_minus and U_plus");
    Eigen::Matrix2d xtx = Eigen::Matrix2d::Zero();
    Eigen::Vector2d xty = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < data_.n(); ++i) {
        if (state.g[i] != g) continue;
        const auto k = static_cast<Eigen::Index>(i);
        const double ls = data_.log_s()[k];
        const double r = state.y_star[k] - xg[k];
        xtx(0, 0) += 1.0;
        xtx(0, 1) += ls;
        xtx(1, 1) += ls * ls;
        xty[0] += r;
        xty[1] += ls * r;
    }
    xtx(1, 0) = xtx(0, 1);
    return conjugate_posterior(xtx, xty, 1.0 / (priors_.sd_gamma * priors_.sd_gamma), 1.0);
}

GaussianPosterior MixtureGibbs::outcome_intercept_posterior(int z, const ParameterState &theta,
                                                            const MembershipState &state) const {
    return outcome_intercept_posterior(z, state, shared_part(data_, theta.gamma_x));
}

GaussianPosterior MixtureGibbs::outcome_intercept_posterior(int z, const MembershipState &state,
                                                            const Eigen::VectorXd &xg) const {
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(1, 1);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(1);
    for (std::size_t i = 0; i < data_.n(); ++i) {
        if (state.g[i] != Subpop::zero || data_.z()[i] != z) continue;
        const auto k = static_cast<Eigen::Index>(i);
        xtx(0, 0) += 1.0;
        xty[0] += state.y_star[k] - xg[k];
    }
    return conjugate_posterior(xtx, xty, 1.0 / (priors_.sd_gamma * priors_.sd_gamma), 1.0);
}

GaussianPosterior MixtureGibbs::shared_slope_posterior(const ParameterState &theta,
                                                       const MembershipState &state) const {
    Eigen::VectorXd resid(static_cast<Eigen::Index>(data_.n()));
    for (std::size_t i = 0; i < data_.n(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        resid[k] = state.y_star[k] - outcome_mean(state.g[i], data_.z()[i], data_.log_s()[k], 0.0, theta);
    }
    const Eigen::VectorXd xty = data_.x().transpose() * resid;
    return conjugate_posterior(xtx_, xty, 1.0 / (priors_.sd_gamma * priors_.sd_gamma), 1.0);
}

void MixtureGibbs::iterate(ParameterState &theta, MembershipState &state, const RngStream &rng,
                           bool freeze_membership) {
    check_state(data_, state);
    // alpha, beta and gamma_x are unchanged until their own blocks, so one set
    // of linear predictors serves steps 1-2 and the shared part steps 1-10.
    const Predictors pr = predictors(data_, theta);

    // Step 1: memberships.
    if (!freeze_membership) draw_memberships(theta, pr, state, rng);

    // Step 2: mixing latents, then alpha- on all units and alpha+ on U+ and U0.
    draw_mixing_latents(pr, state, rng);
    const BlockSums sums = block_sums(state);
    RngStream r = rng.substream(kStepBlocks);
    theta.alpha_minus = alpha_minus_posterior(state).draw(r);
    theta.alpha_plus = alpha_plus_posterior(sums).draw(r);

    // Steps 3-8: forcing regressions and their variances.
    for (Subpop g : {Subpop::minus, Subpop::plus, Subpop::zero}) {
        if (sums.count[static_cast<std::size_t>(g)] == 0) ++diag_.empty_blocks[static_cast<std::size_t>(g)];
        Eigen::VectorXd &beta = g == Subpop::minus ? theta.beta_minus
                                : g == Subpop::plus ? theta.beta_plus
                                                    : theta.beta;
        double &sigma2 = g == Subpop::minus ? theta.sigma2_minus
                         : g == Subpop::plus ? theta.sigma2_plus
                                             : theta.sigma2;
        beta = forcing_coefficient_posterior(g, sums, sigma2).draw(r);
        const auto post = forcing_variance_posterior(g, state, beta);
        sigma2 = sample_inv_chi_squared(post.df, post.scale, r);
    }

    // Step 9: outcome latents, then the component-specific outcome coefficients.
    draw_outcome_latents(theta, pr.xg, state, rng, kStepOutcomeLatents);
    const Eigen::VectorXd gm = outcome_slope_posterior(Subpop::minus, state, pr.xg).draw(r);
    const Eigen::VectorXd gp = outcome_slope_posterior(Subpop::plus, state, pr.xg).draw(r);
    theta.gamma_minus = {gm[0], gm[1]};
    theta.gamma_plus = {gp[0], gp[1]};
    theta.gamma00 = outcome_intercept_posterior(0, state, pr.xg).draw(r)[0];
    theta.gamma01 = outcome_intercept_posterior(1, state, pr.xg).draw(r)[0];

    // Step 10: fresh outcome latents, then the shared covariate slopes.
    if (data_.p() > 0) {
        draw_outcome_latents(theta, pr.xg, state, rng, kStepSharedLatents);
        theta.gamma_x = shared_slope_posterior(theta, state).draw(r);
    }
}

ScoreRecord MixtureGibbs::impute_and_score(const ParameterState &theta, MembershipState &state,
                                           const RngStream &rng, double rr_guard) const {
    check_state(data_, state);
    const Eigen::VectorXd xg = shared_part(data_, theta.gamma_x);
    const std::size_t shards = (data_.n() + shard_size_ - 1) / shard_size_;
    struct Partial {
        std::size_t num = 0, den = 0, minus = 0, zero = 0, plus = 0, zero_z1 = 0;
    };
    std::vector<Partial> parts(shards);
    state.y_missing.assign(data_.n(), -1);
    for_shards([&](std::size_t s, std::size_t lo, std::size_t hi) {
        RngStream r = rng.substream(kStepImpute, s);
        Partial &p = parts[s];
        for (std::size_t i = lo; i < hi; ++i) {
            const Subpop g = state.g[i];
            if (g == Subpop::minus) { ++p.minus; continue; }
            if (g == Subpop::plus) { ++p.plus; continue; }
            ++p.zero;
            const auto k = static_cast<Eigen::Index>(i);
            const std::uint8_t z = data_.z()[i];
            // Counterfactual arm: intercept of the opposite eligibility status.
            const double eta = (z ? theta.gamma00 : theta.gamma01) + xg[k];
            const std::int8_t missing = r.uniform() < std_normal_cdf(eta) ? 1 : 0;
            state.y_missing[i] = missing;
            if (z) {
                ++p.zero_z1;
                p.num += data_.y()[i];
                p.den += static_cast<std::size_t>(missing);
            } else {
                p.num += static_cast<std::size_t>(missing);
                p.den += data_.y()[i];
            }
        }
    });
    ScoreRecord out;
    std::size_t num = 0, den = 0;
    for (const auto &p : parts) {
        num += p.num;
        den += p.den;
        out.n_minus += p.minus;
        out.n_zero += p.zero;
        out.n_plus += p.plus;
        out.n_zero_eligible += p.zero_z1;
    }
    out.n_zero_ineligible = out.n_zero - out.n_zero_eligible;
    out.numerator = static_cast<double>(num);
    out.denominator = static_cast<double>(den);
    if (den == 0) {
        out.degenerate = true;
        out.rr = (out.numerator + rr_guard) / (out.denominator + rr_guard);
    } else {
        out.rr = out.numerator / out.denominator;
    }
    return out;
}

void gibbs_iteration(ParameterState &theta, MembershipState &state, const ObservedDataset &data,
                     const Priors &priors, const RngStream &rng) {
    MixtureGibbs sampler(data, priors);
    sampler.iterate(theta, state, rng);
}

std::vector<double> PosteriorDraws::rr() const {
    std::vector<double> out;
    out.reserve(draws.size());
    for (const auto &d : draws) out.push_back(d.score.rr);
    return out;
}

std::vector<double> PosteriorDraws::theta_series(std::size_t index) const {
    std::vector<double> out;
    out.reserve(draws.size());
    for (const auto &d : draws) out.push_back(d.theta.at(index));
    return out;
}

void PosteriorDraws::append(PosteriorDraws &&other) {
    if (draws.empty() && unit_counts.empty()) {
        *this = std::move(other);
        return;
    }
    if (other.n != n || other.p != p || other.bin_edges != bin_edges)
        throw std::invalid_argument("cannot append draws from a different dataset");
    for (auto &d : other.draws) draws.push_back(std::move(d));
    for (std::size_t i = 0; i < unit_counts.size(); ++i)
        for (std::size_t k = 0; k < 3; ++k) unit_counts[i][k] += other.unit_counts[i][k];
    for (auto &b : other.bin_means) bin_means.push_back(std::move(b));
    for (auto &s : other.snapshots) snapshots.push_back(std::move(s));
    diagnostics += other.diagnostics;
    structural_violations += other.structural_violations;
    nonfinite_loglik += other.nonfinite_loglik;
    if (other.partial) {
        partial = true;
        if (!failure.empty()) failure += "; ";
        failure += other.failure;
    }
}

std::size_t membership_bin(double s, double first_edge, double width, std::size_t bins) {
    const double pos = std::ceil((s - first_edge) / width) - 1.0;
    if (!(pos > 0.0)) return 0;
    return std::min(bins - 1, static_cast<std::size_t>(pos));
}

PosteriorDraws run_chain(const ObservedDataset &data, const Priors &priors, const SamplerConfig &config,
                         int chain, const std::vector<Subpop> *init_labels, WorkerPool *pool) {
    config.validate();
    priors.validate();
    const std::size_t n = data.n();
    const RngStream chain_rng(config.seed, static_cast<std::uint64_t>(chain));

    PosteriorDraws out;
    out.n = n;
    out.p = data.p();
    out.unit_counts.assign(n, {0, 0, 0});
    out.bin_width = config.bin_width;
    const auto [s_min, s_max] = std::minmax_element(data.s().begin(), data.s().end());
    const double first = std::floor(*s_min / config.bin_width) * config.bin_width;
    const auto bins = static_cast<std::size_t>(
        std::max(1.0, std::ceil((*s_max - first) / config.bin_width)));
    std::vector<std::size_t> bin_of(n);
    out.bin_sizes.assign(bins, 0);
    for (std::size_t b = 0; b < bins; ++b) out.bin_edges.push_back(first + static_cast<double>(b) * config.bin_width);
    for (std::size_t i = 0; i < n; ++i) {
        bin_of[i] = membership_bin(data.s()[i], first, config.bin_width, bins);
        ++out.bin_sizes[bin_of[i]];
    }

    MembershipState state;
    if (config.init == InitStrategy::provided) {
        if (!init_labels) throw ConfigError("mixture_gibbs", "provided initialization requires initial labels");
        state = membership_from_labels(data, *init_labels);
    } else {
        RngStream init_rng = chain_rng.substream(0, 0, 1);
        state = initial_membership(data, config.init, init_rng);
    }
    ParameterState theta = ParameterState::initial(data.p(), priors);
    MixtureGibbs sampler(data, priors, config.shard_size, pool);

    int retained = 0;
    try {
        for (int it = 1; it <= config.iterations; ++it) {
            const RngStream it_rng = chain_rng.substream(1, static_cast<std::uint64_t>(it));
            sampler.iterate(theta, state, it_rng, config.freeze_membership);
            if (it <= config.burn_in || (it - config.burn_in) % config.thinning != 0) continue;

            DrawRecord rec;
            rec.chain = chain;
            rec.iteration = it;
            rec.score = sampler.impute_and_score(theta, state, it_rng, config.rr_guard);
            rec.theta = theta.flatten();
            const double dn = static_cast<double>(n);
            rec.pi_bar = {static_cast<double>(rec.score.n_minus) / dn,
                          static_cast<double>(rec.score.n_zero) / dn,
                          static_cast<double>(rec.score.n_plus) / dn};
            if (rec.score.degenerate) ++out.diagnostics.degenerate_rr;

            std::vector<double> zero_in_bin(bins, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const Subpop g = state.g[i];
                ++out.unit_counts[i][static_cast<std::size_t>(g)];
                if (!admissible(g, data.z()[i])) ++out.structural_violations;
                if (g == Subpop::zero) zero_in_bin[bin_of[i]] += 1.0;
            }
            for (std::size_t b = 0; b < bins; ++b)
                zero_in_bin[b] = out.bin_sizes[b] ? zero_in_bin[b] / static_cast<double>(out.bin_sizes[b])
                                                  : std::numeric_limits<double>::quiet_NaN();
            out.bin_means.push_back(std::move(zero_in_bin));
            if (config.membership_stride > 0 && retained % config.membership_stride == 0)
                out.snapshots.push_back({chain, it, state.g});
            if (config.loglik_check_stride > 0 && retained % config.loglik_check_stride == 0 &&
                !std::isfinite(complete_data_log_likelihood(theta, state, data)))
                ++out.nonfinite_loglik;
            out.draws.push_back(std::move(rec));
            ++retained;
        }
    } catch (const NumericError &e) {
        out.partial = true;
        out.failure = "chain " + std::to_string(chain) + ": " + e.what();
    }
    auto diag = sampler.diagnostics();
    diag.degenerate_rr = 0;
    out.diagnostics += diag;
    return out;
}

PosteriorDraws run_chains(const ObservedDataset &data, const Priors &priors, const SamplerConfig &config,
                          const std::vector<Subpop> *init_labels) {
    config.validate();
    const int chains = config.chains;
    std::vector<PosteriorDraws> results(static_cast<std::size_t>(chains));
    if (chains > 1 && config.threads >= chains) {
        const int per_chain = config.threads / chains;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));
        std::vector<std::thread> workers;
        for (int c = 0; c < chains; ++c) {
            workers.emplace_back([&, c] {
                try {
                    WorkerPool pool(per_chain);
                    results[static_cast<std::size_t>(c)] = run_chain(data, priors, config, c, init_labels, &pool);
                } catch (...) {
                    errors[static_cast<std::size_t>(c)] = std::current_exception();
                }
            });
        }
        for (auto &w : workers) w.join();
        for (auto &e : errors)
            if (e) std::rethrow_exception(e);
    } else {
        WorkerPool pool(config.threads);
        for (int c = 0; c < chains; ++c)
            results[static_cast<std::size_t>(c)] = run_chain(data, priors, config, c, init_labels, &pool);
    }
    PosteriorDraws out;
    for (auto &r : results) out.append(std::move(r));
    return out;
}

} // namespace rdmix
