#include "fixtures.hpp"
#include "rdmix/error.hpp"
#include "rdmix/window.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

using namespace rdmix;

namespace {

// Ordinary least squares intercept via the normal equations.
double ols_intercept(const std::vector<double> &u, const std::vector<double> &y, int order) {
    const auto n = static_cast<Eigen::Index>(u.size());
    Eigen::MatrixXd a(n, order + 1);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j <= order; ++j) a(i, j) = std::pow(u[static_cast<std::size_t>(i)], j);
        b[i] = y[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd coef = (a.transpose() * a).ldlt().solve(a.transpose() * b);
    return coef[0];
}

WindowSpec window(double hl, double hr, Kernel k = Kernel::uniform, int order = 1) {
    WindowSpec w;
    w.label = "w";
    w.kernel = k;
    w.order = order;
    w.bandwidth_left = hl;
    w.bandwidth_right = hr;
    return w;
}

} // namespace

TEST_SUITE("window") {

TEST_CASE("uniform local fits equal two-sided least squares") {
    const auto d = fx::random_dataset(800, 0, 21);
    for (int order : {1, 2}) {
        const auto spec = window(76.5, 43.9, Kernel::uniform, order);
        const auto r = local_polynomial_rd(d, spec);
        std::vector<double> ul, yl, ur, yr;
        for (std::size_t i = 0; i < d.n(); ++i) {
            const double u = d.s()[i] - 120.0;
            if (d.z()[i] && -u <= 76.5) {
                ul.push_back(u);
                yl.push_back(d.y()[i]);
            } else if (!d.z()[i] && u <= 43.9) {
                ur.push_back(u);
                yr.push_back(d.y()[i]);
            }
        }
        CHECK(r.n_left == ul.size());
        CHECK(r.n_right == ur.size());
        CHECK(std::abs(r.p1_hat - ols_intercept(ul, yl, order)) <= 1e-8);
        CHECK(std::abs(r.p0_hat - ols_intercept(ur, yr, order)) <= 1e-8);
        CHECK(std::abs(r.ate - (r.p1_hat - r.p0_hat)) <= 1e-12);
        REQUIRE(r.rr.has_value());
        CHECK(std::abs(*r.rr * r.p0_hat - r.p1_hat) <= 1e-12);
    }
}

TEST_CASE("constant outcome gives zero effect and unit ratio") {
    std::vector<double> s;
    for (int k = 0; k < 40; ++k) s.push_back(60.0 + 3.0 * k);
    const auto d = fx::dataset(s, std::vector<std::uint8_t>(s.size(), 1));
    for (Kernel k : {Kernel::uniform, Kernel::triangular})
        for (int order : {1, 2}) {
            const auto r = local_polynomial_rd(d, window(50.0, 50.0, k, order));
            CHECK(r.ate == 0.0);
            CHECK(*r.rr == 1.0);
            CHECK_FALSE(r.out_of_range);
        }
}

TEST_CASE("kernel choice does not matter for exactly polynomial data") {
    // Weighted and unweighted fits coincide when the fit is exact.
    std::vector<double> u, y;
    for (int k = 0; k < 12; ++k) {
        u.push_back(-3.0 * k);
        y.push_back(0.3 - 0.01 * u.back() + 0.002 * u.back() * u.back());
    }
    std::vector<double> ones(u.size(), 1.0), tri;
    for (double v : u) tri.push_back(1.0 - std::abs(v) / 40.0);
    const auto a = weighted_polyfit(u, y, ones, 2), b = weighted_polyfit(u, y, tri, 2);
    for (std::size_t j = 0; j < 3; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-10));
    CHECK(a[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK_THROWS_AS(weighted_polyfit(std::vector<double>{1.0, 1.0}, std::vector<double>{0.0, 1.0},
                                     std::vector<double>{1.0, 1.0}, 1),
                    DataError);
}

TEST_CASE("triangular kernel downweights distant points") {
    // Left-side outcome only at the far edge: triangular pulls the intercept toward the near points.
    std::vector<double> s{40.0, 60.0, 80.0, 100.0, 110.0, 119.0, 130.0, 140.0, 150.0};
    std::vector<std::uint8_t> y{1, 0, 0, 0, 0, 0, 0, 1, 0};
    const auto d = fx::dataset(s, y);
    const auto u = local_polynomial_rd(d, window(100.0, 40.0, Kernel::uniform));
    const auto t = local_polynomial_rd(d, window(100.0, 40.0, Kernel::triangular));
    CHECK(u.n_left == t.n_left);
    CHECK(t.p1_hat != doctest::Approx(u.p1_hat));
}

TEST_CASE("Rubin's rules on a hand fixture") {
    const std::vector<double> est{1.0, 1.2, 1.4}, var{0.04, 0.04, 0.04};
    const auto r = rubin_combine(est, var);
    CHECK(r.m == 3);
    CHECK(std::abs(r.point - 1.2) <= 1e-12);
    CHECK(std::abs(r.within - 0.04) <= 1e-12);
    CHECK(std::abs(r.between - 0.04) <= 1e-12);
    CHECK(std::abs(r.total_variance - (0.04 + 4.0 / 3.0 * 0.04)) <= 1e-12);
    CHECK(std::abs(r.total_variance - 0.0933333333333333) <= 1e-12);

    CHECK_THROWS_AS(rubin_combine(std::vector<double>{1.0}, std::vector<double>{0.1}), ConfigError);
    CHECK_THROWS_AS(rubin_combine(std::vector<double>{1.0, 2.0}, std::vector<double>{0.1, -0.1}), ConfigError);
}

TEST_CASE("Rubin's rules are order and shift invariant") {
    RngStream rng(31, 0);
    for (int f = 0; f < 50; ++f) {
        std::vector<double> est(2 + static_cast<std::size_t>(f % 9)), var(est.size());
        for (std::size_t k = 0; k < est.size(); ++k) {
            est[k] = rng.normal();
            var[k] = rng.uniform();
        }
        const auto base = rubin_combine(est, var);
        auto pe = est, pv = var;
        std::reverse(pe.begin(), pe.end());
        std::reverse(pv.begin(), pv.end());
        const auto perm = rubin_combine(pe, pv);
        CHECK(perm.point == base.point);
        CHECK(perm.total_variance == base.total_variance);
        for (auto &e : est) e += 5.0;
        const auto shifted = rubin_combine(est, var);
        CHECK(shifted.between == doctest::Approx(base.between).epsilon(1e-10));
        CHECK(shifted.point == doctest::Approx(base.point + 5.0).epsilon(1e-12));
        CHECK(base.total_variance >= base.within);
    }
}

TEST_CASE("fixed-window sampler") {
    const auto d = fx::random_dataset(400, 1, 23);
    SamplerConfig c;
    c.iterations = 150;
    c.burn_in = 50;
    c.seed = 4;
    const auto spec = window(40.0, 40.0);
    const auto w = fixed_window_sampler(d, spec, Priors{}, c);
    CHECK(w.n == window_rows(d, spec).size());
    CHECK(w.n_eligible + w.n_ineligible == w.n);
    CHECK(w.scores.size() == 100);
    CHECK(w.theta_names == std::vector<std::string>{"gamma00", "gamma01", "gamma_x_1"});
    for (const auto &s : w.scores) {
        CHECK(s.n_zero == w.n);
        if (!s.degenerate) CHECK(s.rr == s.numerator / s.denominator);
    }
    const auto again = fixed_window_sampler(d, spec, Priors{}, c);
    CHECK(again.rr() == w.rr());

    // No positive outcomes: the guard fires whenever no Y(0) is imputed.
    std::vector<double> s;
    for (int k = 0; k < 30; ++k) s.push_back(100.0 + 1.5 * k);
    const auto zeros = fx::dataset(s, std::vector<std::uint8_t>(s.size(), 0));
    const auto allzero = fixed_window_sampler(zeros, window(30.0, 30.0), Priors{}, c);
    std::size_t degenerate = 0;
    for (const auto &sc : allzero.scores) degenerate += sc.degenerate;
    CHECK(allzero.summary.degenerate == degenerate);
    CHECK(degenerate > 0);
}

TEST_CASE("window validation") {
    const auto d = fx::random_dataset(100, 0, 3);
    CHECK_THROWS_AS(fixed_window_sampler(d, window(0.0, 10.0), Priors{}, SamplerConfig{}), ConfigError);
    auto bad = window(10.0, 10.0);
    bad.order = 3;
    CHECK_THROWS_AS(bad.validate(120.0), ConfigError);
    WindowSpec bounds;
    bounds.lower = 130.0;
    bounds.upper = 150.0;
    CHECK_THROWS_AS(bounds.validate(120.0), ConfigError);
    bounds.lower = 100.0;
    CHECK_NOTHROW(bounds.validate(120.0));
    CHECK(kernel_from_name("triangular") == Kernel::triangular);
    CHECK_THROWS_AS(kernel_from_name("epanechnikov"), ConfigError);
    // One-sided window.
    WindowSpec left;
    left.lower = 10.0;
    left.upper = 119.0;
    auto few = fx::dataset({50.0, 60.0, 200.0}, {0, 1, 0});
    CHECK_THROWS_AS(fixed_window_sampler(few, left, Priors{}, SamplerConfig{}), ConfigError);
}

TEST_CASE("membership imputations are taken at the stride") {
    PosteriorDraws post;
    for (int k = 0; k < 6; ++k) {
        MembershipSnapshot s;
        s.iteration = 100 + k;
        s.labels = {k >= 2 ? Subpop::minus : Subpop::zero, Subpop::zero};
        post.snapshots.push_back(s);
    }
    const auto one = export_membership_imputations(post, 1, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].iteration == 100);
    const auto three = export_membership_imputations(post, 3, 2);
    CHECK(three[2].iteration == 104);
    CHECK_THROWS_AS(export_membership_imputations(post, 4, 2), DataError);
    CHECK_THROWS_AS(export_membership_imputations(post, 0, 1), ConfigError);

    const auto d = fx::dataset({60.0, 250.0}, {0, 1}, 200.0);
    const auto dir = fx::fresh_dir(RDMIX_TEST_TMP, "imputations");
    const auto paths = write_membership_imputations(dir, d, three);
    REQUIRE(paths.size() == 3);
    CHECK(fx::slurp(paths[1]).find("U_minus") != std::string::npos);
}

} // TEST_SUITE
