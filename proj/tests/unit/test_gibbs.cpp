#include "fixtures.hpp"
#include "rdmix/error.hpp"
#include "rdmix/gibbs.hpp"
#include "rdmix/stats.hpp"
#include "rdmix/synth.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <cmath>

using namespace rdmix;

namespace {

SamplerConfig small_config(int iterations, int burn_in) {
    SamplerConfig c;
    c.iterations = iterations;
    c.burn_in = burn_in;
    c.seed = 77;
    return c;
}

// Units with hand-set outcomes, all in U_zero.
struct ImputeFixture {
    ObservedDataset data;
    MembershipState state;
};

ImputeFixture impute_fixture(std::vector<double> s, std::vector<std::uint8_t> y, Eigen::MatrixXd x) {
    ImputeFixture f{fx::dataset(std::move(s), std::move(y), std::move(x)), {}};
    f.state = membership_from_labels(f.data, std::vector<Subpop>(f.data.n(), Subpop::zero));
    return f;
}

} // namespace

TEST_SUITE("gibbs") {

TEST_CASE("an iteration is a deterministic function of seed and state") {
    const auto d = fx::random_dataset(300, 2, 1);
    const MixtureGibbs g(d, Priors{});
    RngStream init(5, 0);
    const auto state0 = initial_membership(d, InitStrategy::random, init);
    auto run = [&] {
        MixtureGibbs s(d, Priors{});
        auto theta = ParameterState::initial(2, Priors{});
        auto state = state0;
        const RngStream root(9, 0);
        s.iterate(theta, state, root.substream(1, 1));
        s.iterate(theta, state, root.substream(1, 2));
        return std::pair{theta.flatten(), state.g};
    };
    CHECK(run() == run());
}

TEST_CASE("draws do not depend on the worker count") {
    const auto d = fx::random_dataset(1000, 2, 4);
    auto c = small_config(40, 10);
    c.shard_size = 64;
    c.chains = 2;
    c.threads = 1;
    const auto a = run_chains(d, Priors{}, c);
    c.threads = 3;
    const auto b = run_chains(d, Priors{}, c);
    c.threads = 2; // one worker per chain
    const auto e = run_chains(d, Priors{}, c);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a.draws[k].theta == b.draws[k].theta);
        CHECK(a.draws[k].theta == e.draws[k].theta);
        CHECK(a.draws[k].score.rr == b.draws[k].score.rr);
    }
    CHECK(a.unit_counts == b.unit_counts);
}

TEST_CASE("bookkeeping of retained draws") {
    const auto d = fx::random_dataset(100, 1, 2);
    const auto one = run_chain(d, Priors{}, small_config(11, 10), 0);
    CHECK(one.size() == 1);
    auto c = small_config(30, 10);
    c.thinning = 4;
    c.membership_stride = 2;
    const auto thin = run_chain(d, Priors{}, c, 0);
    CHECK(thin.size() == 5);
    CHECK(thin.snapshots.size() == 3);
    CHECK(thin.draws.front().iteration == 14);
    for (const auto &u : thin.unit_counts) CHECK(u[0] + u[1] + u[2] == 5);
    CHECK_THROWS_AS(run_chain(d, Priors{}, small_config(10, 10), 0), ConfigError);
}

TEST_CASE("retained draws respect structural zeros and proportions sum to one") {
    const auto d = fx::random_dataset(500, 2, 6);
    const auto post = run_chain(d, Priors{}, small_config(120, 20), 0);
    CHECK(post.structural_violations == 0);
    CHECK(post.nonfinite_loglik == 0);
    for (std::size_t i = 0; i < d.n(); ++i) {
        if (d.z()[i]) CHECK(post.unit_counts[i][2] == 0);
        else CHECK(post.unit_counts[i][0] == 0);
    }
    for (const auto &r : post.draws)
        CHECK(std::abs(r.pi_bar.minus + r.pi_bar.zero + r.pi_bar.plus - 1.0) <= 1e-12);
    for (const auto &snap : post.snapshots)
        for (std::size_t i = 0; i < d.n(); ++i) CHECK(admissible(snap.labels[i], d.z()[i]));
}

TEST_CASE("frozen memberships at the truth recover the forcing regression") {
    const Scenario &sc = scenario("separated");
    const auto syn = generate(sc.theta, sc.covariates, 3000, sc.s0, RngStream(3, 0xDA7A));
    auto c = small_config(2000, 500);
    c.init = InitStrategy::provided;
    c.freeze_membership = true;
    c.membership_stride = 0;
    // The default variance prior is informative next to the preset's small forcing variances; use a weak one.
    Priors weak;
    weak.scale = 1e-4;
    const auto post = run_chain(syn.data, weak, c, 0, &syn.truth.labels);
    const auto names = ParameterState::flat_names(3);
    const auto truth = sc.theta.flatten();
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k].rfind("beta", 0) != 0 && names[k].rfind("sigma2", 0) != 0) continue;
        const auto series = post.theta_series(k);
        const double m = mean(series), sd = std::sqrt(sample_variance(series));
        INFO(names[k], " mean ", m, " sd ", sd, " truth ", truth[k]);
        CHECK(std::abs(m - truth[k]) < 3.0 * sd);
    }
    // Labels never move when frozen.
    for (std::size_t i = 0; i < syn.data.n(); ++i)
        CHECK(post.unit_counts[i][static_cast<std::size_t>(syn.truth.labels[i])] == post.size());
}

TEST_CASE("an empty component falls back to its prior") {
    const auto d = fx::random_dataset(200, 1, 8);
    std::vector<Subpop> labels(d.n());
    for (std::size_t i = 0; i < d.n(); ++i) labels[i] = d.z()[i] ? Subpop::minus : Subpop::zero;
    const auto state = membership_from_labels(d, labels);
    MixtureGibbs g(d, Priors{});
    const auto post = g.forcing_variance_posterior(Subpop::plus, state, Eigen::VectorXd::Zero(2));
    CHECK(post.df == 3.0);
    CHECK(post.scale == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const auto beta = g.forcing_coefficient_posterior(Subpop::plus, state, 0.5);
    CHECK(beta.mean.norm() == 0.0);
    CHECK((beta.cov() - 100.0 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-10);

    auto theta = ParameterState::initial(1, Priors{});
    auto st = state;
    g.iterate(theta, st, RngStream(1, 1), true);
    CHECK(g.diagnostics().empty_blocks[static_cast<int>(Subpop::plus)] == 1);
}

TEST_CASE("relative risk from completed outcomes") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 0);
    // Units 1-2 eligible observe Y(1) = (1, 0); units 3-4 observe Y(0) = (1, 1).
    auto f = impute_fixture({50.0, 60.0, 150.0, 160.0}, {1, 0, 1, 1}, x);
    auto theta = ParameterState::initial(0, Priors{});
    theta.gamma00 = -40.0; // imputed Y(0) = 0 for units 1-2
    theta.gamma01 = -40.0; // imputed Y(1) = 0 for units 3-4
    const MixtureGibbs g(f.data, Priors{});
    const auto score = g.impute_and_score(theta, f.state, RngStream(1, 0), 0.5);
    CHECK(score.numerator == 1.0);
    CHECK(score.denominator == 2.0);
    CHECK(score.rr == 0.5);
    CHECK_FALSE(score.degenerate);
    CHECK(score.n_zero == 4);
    CHECK(score.n_zero_eligible == 2);
    CHECK(f.state.y_missing == std::vector<std::int8_t>{0, 0, 0, 0});
}

TEST_CASE("identical potential outcomes give a ratio of one") {
    Eigen::MatrixXd x(4, 1);
    x << 40.0, -40.0, 40.0, -40.0; // shared slope pins each unit's outcome
    auto f = impute_fixture({50.0, 60.0, 150.0, 160.0}, {1, 0, 1, 0}, x);
    auto theta = ParameterState::initial(1, Priors{});
    theta.gamma_x[0] = 1.0;
    const MixtureGibbs g(f.data, Priors{});
    const auto score = g.impute_and_score(theta, f.state, RngStream(2, 0), 0.5);
    CHECK(score.rr == 1.0);
    CHECK(score.numerator == 2.0);
}

TEST_CASE("a zero denominator is guarded and flagged") {
    auto f = impute_fixture({50.0, 150.0}, {1, 0}, Eigen::MatrixXd::Zero(2, 0));
    auto theta = ParameterState::initial(0, Priors{});
    theta.gamma00 = -40.0;
    theta.gamma01 = -40.0;
    const MixtureGibbs g(f.data, Priors{});
    const auto score = g.impute_and_score(theta, f.state, RngStream(3, 0), 0.5);
    CHECK(score.degenerate);
    CHECK(score.rr == doctest::Approx((1.0 + 0.5) / (0.0 + 0.5)));
}

TEST_CASE("exchangeable arms give a ratio near one") {
    const Scenario &sc = scenario("null-effect");
    const auto syn = generate(sc.theta, sc.covariates, 20000, sc.s0, RngStream(5, 0xDA7A));
    auto state = membership_from_labels(syn.data, syn.truth.labels);
    const MixtureGibbs g(syn.data, Priors{});
    std::vector<double> rr;
    for (int k = 0; k < 200; ++k) rr.push_back(g.impute_and_score(sc.theta, state, RngStream(6, k), 0.5).rr);
    CHECK(std::abs(quantile(rr, 0.5) - 1.0) < 0.1);
}

TEST_CASE("label recovery on well-separated synthetic data") {
    const Scenario &sc = scenario("separated");
    const auto syn = generate(sc.theta, sc.covariates, 20000, sc.s0, RngStream(12, 0xDA7A));
    auto c = small_config(300, 100);
    c.membership_stride = 0;
    const auto post = run_chain(syn.data, Priors{}, c, 0);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < syn.data.n(); ++i) {
        const auto &u = post.unit_counts[i];
        const auto mode = static_cast<Subpop>(std::max_element(u.begin(), u.end()) - u.begin());
        agree += mode == syn.truth.labels[i];
    }
    CHECK(static_cast<double>(agree) / static_cast<double>(syn.data.n()) >= 0.9);
}

} // TEST_SUITE
