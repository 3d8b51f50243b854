#include "fixtures.hpp"
#include "rdmix/error.hpp"
#include "rdmix/gibbs.hpp"

#include <boost/math/distributions/normal.hpp>
#include <doctest.h>

#include <cmath>

using namespace rdmix;

namespace {

const boost::math::normal_distribution<> kStd;
double Phi(double x) { return boost::math::cdf(kStd, x); }
double normal_pdf(double v, double m, double var) { return boost::math::pdf(kStd, (v - m) / std::sqrt(var)) / std::sqrt(var); }
double bern(std::uint8_t y, double eta) { return y ? Phi(eta) : 1.0 - Phi(eta); }

ParameterState hand_params(std::size_t p) {
    ParameterState t = ParameterState::initial(p, Priors{});
    const auto k = static_cast<Eigen::Index>(p + 1);
    t.alpha_minus = Eigen::VectorXd::LinSpaced(k, 0.3, -0.2);
    t.alpha_plus = Eigen::VectorXd::LinSpaced(k, -0.4, 0.1);
    t.beta = Eigen::VectorXd::LinSpaced(k, 0.02, 0.05);
    t.beta_minus = Eigen::VectorXd::LinSpaced(k, -0.1, 0.01);
    t.beta_plus = Eigen::VectorXd::LinSpaced(k, 0.08, -0.02);
    t.sigma2 = 0.01;
    t.sigma2_minus = 0.02;
    t.sigma2_plus = 0.015;
    t.gamma00 = -1.0;
    t.gamma01 = -0.7;
    t.gamma_minus = {-1.2, 0.5};
    t.gamma_plus = {-0.9, -0.3};
    t.gamma_x = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), 0.2);
    return t;
}

// Two-point conditional evaluated straight from the densities.
double oracle_zero_probability(std::size_t i, const ParameterState &t, const ObservedDataset &d) {
    const Eigen::VectorXd row = d.design().row(static_cast<Eigen::Index>(i)).transpose();
    const double ls = d.log_s()[static_cast<Eigen::Index>(i)];
    const double xg = d.p() ? d.x().row(static_cast<Eigen::Index>(i)).dot(t.gamma_x) : 0.0;
    const auto pi = mixing_probabilities(d.x().row(static_cast<Eigen::Index>(i)).transpose(), t.alpha_minus, t.alpha_plus);
    const std::uint8_t y = d.y()[i];
    double w0, w1;
    if (d.z()[i]) {
        w0 = pi.zero * normal_pdf(ls, row.dot(t.beta), t.sigma2) * bern(y, t.gamma01 + xg);
        w1 = pi.minus * normal_pdf(ls, row.dot(t.beta_minus), t.sigma2_minus) *
             bern(y, t.gamma_minus[0] + t.gamma_minus[1] * ls + xg);
    } else {
        w0 = pi.zero * normal_pdf(ls, row.dot(t.beta), t.sigma2) * bern(y, t.gamma00 + xg);
        w1 = pi.plus * normal_pdf(ls, row.dot(t.beta_plus), t.sigma2_plus) *
             bern(y, t.gamma_plus[0] + t.gamma_plus[1] * ls + xg);
    }
    return w0 / (w0 + w1);
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("mixing probabilities reference values") {
    const Eigen::VectorXd x = Eigen::VectorXd::Ones(2);
    const auto zero = mixing_probabilities(x, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3));
    CHECK(zero.minus == 0.5);
    CHECK(zero.zero == 0.25);
    CHECK(zero.plus == 0.25);
    const auto m = mixing_from_predictors(8.0, 0.0);
    CHECK(m.minus == doctest::Approx(Phi(-8.0)).epsilon(1e-9));
    CHECK(m.zero == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("mixing probabilities sum to one") {
    std::mt19937_64 gen(1);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int k = 0; k < 1000; ++k) {
        const auto m = mixing_from_predictors(nd(gen), nd(gen));
        CHECK(m.minus >= 0.0);
        CHECK(m.zero >= 0.0);
        CHECK(m.plus >= 0.0);
        CHECK(std::abs(m.minus + m.zero + m.plus - 1.0) <= 1e-12);
    }
}

TEST_CASE("labels, codes and admissibility") {
    for (Subpop g : {Subpop::minus, Subpop::zero, Subpop::plus}) CHECK(subpop_from_code(subpop_code(g)) == g);
    CHECK(subpop_name(Subpop::zero) == "U_zero");
    CHECK_FALSE(admissible(Subpop::minus, 0));
    CHECK_FALSE(admissible(Subpop::plus, 1));
    CHECK(admissible(Subpop::zero, 0));
    CHECK(admissible(Subpop::zero, 1));
    CHECK_THROWS(subpop_from_code('x'));
}

TEST_CASE("parameter vector flattening round-trips") {
    const auto t = hand_params(3);
    const auto flat = t.flatten();
    CHECK(flat.size() == 6 * 3 + 14);
    CHECK(ParameterState::flat_names(3).size() == flat.size());
    CHECK(ParameterState::unflatten(3, flat).flatten() == flat);
}

TEST_CASE("priors are validated") {
    Priors p;
    p.df = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    Priors q;
    q.beta_intercept_mean[1] = std::nan("");
    CHECK_THROWS_AS(q.validate(), ConfigError);
}

TEST_CASE("structural zeros in the membership conditional") {
    const auto d = fx::random_dataset(200, 2, 5);
    const auto t = hand_params(2);
    for (std::size_t i = 0; i < d.n(); ++i) {
        const auto c = membership_probabilities(i, t, d);
        if (d.z()[i]) CHECK(c.prob[static_cast<int>(Subpop::plus)] == 0.0);
        else CHECK(c.prob[static_cast<int>(Subpop::minus)] == 0.0);
        CHECK(c.prob[0] + c.prob[1] + c.prob[2] == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(c.prob[1] == doctest::Approx(oracle_zero_probability(i, t, d)).epsilon(1e-10));
    }
}

TEST_CASE("membership draws follow the hand-evaluated conditional") {
    for (double s : {80.0, 180.0}) {
        Eigen::MatrixXd x(2, 1);
        x << 0.4, -0.3;
        const auto d = fx::dataset({s, s < 120 ? 200.0 : 60.0}, {1, 0}, x);
        const auto t = hand_params(1);
        const double oracle = oracle_zero_probability(0, t, d);
        RngStream rng(17, 0);
        const int n = 100000;
        int zero = 0;
        for (int k = 0; k < n; ++k) {
            const Subpop g = draw_membership(0, t, d, rng);
            CHECK(admissible(g, d.z()[0]));
            zero += g == Subpop::zero;
        }
        CHECK(std::abs(static_cast<double>(zero) / n - oracle) < 0.005);
    }
}

TEST_CASE("complete-data likelihood rejects structural zeros") {
    const auto d = fx::random_dataset(50, 1, 9);
    const auto t = hand_params(1);
    auto labels = fx::random_labels(d, 2);
    auto state = membership_from_labels(d, labels);
    CHECK(std::isfinite(complete_data_log_likelihood(t, state, d)));
    const std::size_t j = d.z()[0] ? 0 : 1; // s[0] = 60 is eligible
    state.g[j] = Subpop::plus;
    CHECK(complete_data_log_likelihood(t, state, d) == -kInf);
    labels[j] = Subpop::plus;
    CHECK_THROWS_AS(membership_from_labels(d, labels), DataError);
}

} // TEST_SUITE
