#include "fixtures.hpp"
#include "rdmix/error.hpp"
#include "rdmix/estimands.hpp"
#include "rdmix/gibbs.hpp"

#include <doctest.h>

#include <cmath>

using namespace rdmix;

TEST_SUITE("estimands") {

TEST_CASE("series summaries use interpolated order statistics") {
    const std::vector<double> v{0.5, 1.5, 2.5, 3.5};
    const auto s = summarize_series(v);
    CHECK(s.median == 2.0);
    CHECK(s.prob_below_1 == 0.25);
    CHECK(s.draws == 4);
    const std::vector<double> ones(50, 1.0);
    const auto o = summarize_series(ones);
    CHECK(o.median == 1.0);
    CHECK(o.interval_width == 0.0);
    CHECK(o.prob_below_1 == 0.0); // strict inequality
    CHECK_THROWS_AS(summarize_series(std::vector<double>{}), DataError);
    CHECK(summarize_counts(std::vector<double>{10.0, 20.0, 30.0}).median == 20.0);
}

TEST_CASE("quantiles are ordered and Pr(RR<1) mirrors the reciprocal series") {
    RngStream rng(4, 0);
    for (int f = 0; f < 200; ++f) {
        std::vector<double> v(3 + static_cast<std::size_t>(f)), inv;
        for (auto &x : v) {
            x = std::exp(rng.normal() * 0.7 + 0.1);
            inv.push_back(1.0 / x);
        }
        const auto s = summarize_series(v);
        CHECK(s.pct_2_5 <= s.median);
        CHECK(s.median <= s.pct_97_5);
        CHECK(s.prob_below_1 >= 0.0);
        CHECK(s.prob_below_1 <= 1.0);
        CHECK(s.prob_below_1 == doctest::Approx(1.0 - summarize_series(inv).prob_below_1).epsilon(1e-12));
    }
}

TEST_CASE("membership table from explicit draws") {
    // Two units in one bin with frequencies 0.2 and 0.4 across five draws.
    const std::vector<double> s{41.0, 45.0};
    std::vector<std::vector<double>> draws(5, std::vector<double>(2, 0.0));
    draws[0][0] = 1.0;
    draws[0][1] = 1.0;
    draws[1][1] = 1.0;
    const auto t = membership_table(s, draws, 10.0);
    REQUIRE(t.size() == 1);
    double avg = 0.0;
    for (const auto &d : draws) avg += (d[0] + d[1]) / 2.0;
    CHECK(avg / 5.0 == doctest::Approx(0.3));
    CHECK(t[0].lower == 40.0);
    CHECK(t[0].upper == 50.0);
    CHECK(t[0].units == 2);

    // Always U_zero: median 1 and SD 0 in every bin.
    const std::vector<double> s2{5.0, 15.0, 37.0, 120.0};
    const std::vector<std::vector<double>> always(4, std::vector<double>(4, 1.0));
    for (const auto &row : membership_table(s2, always, 10.0)) {
        if (row.units == 0) {
            CHECK_FALSE(row.median.has_value());
            continue;
        }
        CHECK(*row.median == 1.0);
        CHECK(*row.sd == 0.0);
    }
}

TEST_CASE("membership table bins partition the forcing range") {
    RngStream rng(8, 0);
    std::vector<double> s(400);
    for (auto &v : s) v = 300.0 * rng.uniform();
    std::vector<std::vector<double>> draws(3, std::vector<double>(s.size()));
    for (auto &d : draws)
        for (auto &v : d) v = rng.uniform();
    const auto t = membership_table(s, draws, 10.0);
    std::size_t total = 0;
    for (std::size_t b = 0; b < t.size(); ++b) {
        total += t[b].units;
        if (b) CHECK(t[b].lower == t[b - 1].upper);
        if (t[b].median) {
            CHECK(*t[b].median >= 0.0);
            CHECK(*t[b].median <= 1.0);
        }
    }
    CHECK(total == s.size());
    for (double v : s) CHECK((v >= t.front().lower && v <= t.back().upper));
}

TEST_CASE("bin boundaries are right-closed") {
    CHECK(membership_bin(40.0, 0.0, 10.0, 30) == 3); // (30, 40]
    CHECK(membership_bin(40.5, 0.0, 10.0, 30) == 4);
    CHECK(membership_bin(0.0, 0.0, 10.0, 30) == 0); // first bin includes its lower edge
}

TEST_CASE("stratified estimator fixtures") {
    // Stratum A (x=0): z=1 {1,0}, z=0 {1,0,0,0}; stratum B (x=1): z=1 {0}, z=0 {1,0}.
    Eigen::MatrixXd x(9, 1);
    x << 0, 0, 0, 0, 0, 0, 1, 1, 1;
    const auto d = fx::dataset({10, 20, 130, 140, 150, 160, 30, 170, 180}, {1, 0, 1, 0, 0, 0, 0, 1, 0}, x);
    const auto e = stratified_estimator(d);
    CHECK(e.strata == 2);
    CHECK(e.mean_treated == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(e.mean_control == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(e.rr == doctest::Approx(0.25 / 0.375));

    const auto pop = stratified_estimator(d, {}, StratumWeighting::population);
    CHECK(pop.mean_treated == doctest::Approx((6.0 * 0.5 + 3.0 * 0.0) / 9.0));

    // One constant covariate: the plain arm-mean ratio.
    const auto flat = fx::dataset({10, 20, 130, 140, 150}, {1, 1, 1, 0, 0}, Eigen::MatrixXd::Ones(5, 1));
    const auto f = stratified_estimator(flat);
    CHECK(f.strata == 1);
    CHECK(f.rr == (2.0 / 2.0) / (1.0 / 3.0));

    const auto none = stratified_estimator(fx::dataset({10, 20, 130}, {0, 0, 0}, Eigen::MatrixXd::Ones(3, 1)));
    CHECK(none.mean_treated == 0.0);
    CHECK(none.mean_control == 0.0);
    CHECK(none.degenerate);

    Eigen::MatrixXd gap(3, 1);
    gap << 0, 0, 1;
    CHECK_THROWS_AS(stratified_estimator(fx::dataset({10, 130, 20}, {0, 1, 0}, gap)), DataError);
}

TEST_CASE("deterministic membership gives zero-width count intervals") {
    PosteriorDraws post;
    for (int k = 0; k < 10; ++k) {
        DrawRecord r;
        r.score.n_zero = 40;
        r.score.n_minus = 35;
        r.score.n_plus = 25;
        r.pi_bar = {0.35, 0.4, 0.25};
        r.score.rr = 0.8 + 0.01 * k;
        post.draws.push_back(r);
    }
    const auto c = summarize_membership_counts(post);
    CHECK(c.n_zero.median == 40.0);
    CHECK(c.n_zero.pct_97_5 - c.n_zero.pct_2_5 == 0.0);
    CHECK(c.pi_zero.median == 0.4);
    const auto rr = summarize_rr(post);
    CHECK(rr.median == doctest::Approx(0.845));
    CHECK(rr.prob_below_1 == 1.0);
}

} // TEST_SUITE
