#include "rdmix/model.hpp"

#include "rdmix/error.hpp"
#include "rdmix/random.hpp"

#include <cmath>
#include <stdexcept>

namespace rdmix {

char subpop_code(Subpop g) noexcept {
    switch (g) {
    case Subpop::minus: return '-';
    case Subpop::zero: return '0';
    case Subpop::plus: return '+';
    }
    return '?';
}

std::string_view subpop_name(Subpop g) noexcept {
    switch (g) {
    case Subpop::minus: return "U_minus";
    case Subpop::zero: return "U_zero";
    case Subpop::plus: return "U_plus";
    }
    return "unknown";
}

Subpop subpop_from_code(char c) {
    switch (c) {
    case '-': return Subpop::minus;
    case '0': return Subpop::zero;
    case '+': return Subpop::plus;
    default: throw DataError("mixture_gibbs", std::string("unknown membership code '") + c + "'");
    }
}

void Priors::validate() const {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!positive(sd_alpha) || !positive(sd_gamma) || !positive(var_beta) || !positive(df) ||
        !positive(scale))
        throw ConfigError("mixture_gibbs", "prior hyperparameters must be positive and finite");
    for (double m : beta_intercept_mean)
        if (!std::isfinite(m)) throw ConfigError("mixture_gibbs", "prior means must be finite");
}

ParameterState ParameterState::initial(std::size_t p, const Priors &priors) {
    const auto k = static_cast<Eigen::Index>(p + 1);
    ParameterState s;
    s.alpha_minus = Eigen::VectorXd::Zero(k);
    s.alpha_plus = Eigen::VectorXd::Zero(k);
    s.beta = Eigen::VectorXd::Zero(k);
    s.beta_minus = Eigen::VectorXd::Zero(k);
    s.beta_plus = Eigen::VectorXd::Zero(k);
    s.beta_minus[0] = priors.beta_intercept_mean[0];
    s.beta[0] = priors.beta_intercept_mean[1];
    s.beta_plus[0] = priors.beta_intercept_mean[2];
    s.sigma2 = s.sigma2_minus = s.sigma2_plus = priors.scale;
    s.gamma_x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    return s;
}

std::vector<std::string> ParameterState::flat_names(std::size_t p) {
    std::vector<std::string> names;
    auto vec = [&](const std::string &stem, std::size_t len, std::size_t first) {
        for (std::size_t j = 0; j < len; ++j) names.push_back(stem + "_" + std::to_string(j + first));
    };
    vec("alpha_minus", p + 1, 0);
    vec("alpha_plus", p + 1, 0);
    vec("beta", p + 1, 0);
    names.push_back("sigma2");
    vec("beta_minus", p + 1, 0);
    names.push_back("sigma2_minus");
    vec("beta_plus", p + 1, 0);
    names.push_back("sigma2_plus");
    names.push_back("gamma00");
    names.push_back("gamma01");
    names.push_back("gamma_minus_0");
    names.push_back("gamma_minus_1");
    names.push_back("gamma_plus_0");
    names.push_back("gamma_plus_1");
    vec("gamma_x", p, 1);
    return names;
}

std::vector<double> ParameterState::flatten() const {
    std::vector<double> out;
    out.reserve(6 * p() + 14);
    auto vec = [&](const Eigen::VectorXd &v) { out.insert(out.end(), v.data(), v.data() + v.size()); };
    vec(alpha_minus);
    vec(alpha_plus);
    vec(beta);
    out.push_back(sigma2);
    vec(beta_minus);
    out.push_back(sigma2_minus);
    vec(beta_plus);
    out.push_back(sigma2_plus);
    out.push_back(gamma00);
    out.push_back(gamma01);
    out.push_back(gamma_minus[0]);
    out.push_back(gamma_minus[1]);
    out.push_back(gamma_plus[0]);
    out.push_back(gamma_plus[1]);
    vec(gamma_x);
    return out;
}

ParameterState ParameterState::unflatten(std::size_t p, const std::vector<double> &flat) {
    if (flat.size() != 6 * p + 14) throw std::invalid_argument("parameter vector has the wrong length");
    const auto k = static_cast<Eigen::Index>(p + 1);
    std::size_t pos = 0;
    auto vec = [&](Eigen::Index len) {
        Eigen::VectorXd v(len);
        for (Eigen::Index j = 0; j < len; ++j) v[j] = flat[pos++];
        return v;
    };
    ParameterState s;
    s.alpha_minus = vec(k);
    s.alpha_plus = vec(k);
    s.beta = vec(k);
    s.sigma2 = flat[pos++];
    s.beta_minus = vec(k);
    s.sigma2_minus = flat[pos++];
    s.beta_plus = vec(k);
    s.sigma2_plus = flat[pos++];
    s.gamma00 = flat[pos++];
    s.gamma01 = flat[pos++];
    s.gamma_minus = {flat[pos], flat[pos + 1]};
    pos += 2;
    s.gamma_plus = {flat[pos], flat[pos + 1]};
    pos += 2;
    s.gamma_x = vec(static_cast<Eigen::Index>(p));
    return s;
}

const Eigen::VectorXd &ParameterState::forcing_coefficients(Subpop g) const {
    switch (g) {
    case Subpop::minus: return beta_minus;
    case Subpop::plus: return beta_plus;
    default: return beta;
    }
}

double ParameterState::forcing_variance(Subpop g) const {
    switch (g) {
    case Subpop::minus: return sigma2_minus;
    case Subpop::plus: return sigma2_plus;
    default: return sigma2;
    }
}

MixingProbabilities mixing_from_predictors(double a_minus, double a_plus) {
    MixingProbabilities m;
    m.minus = std_normal_cdf(-a_minus);
    m.plus = (1.0 - m.minus) * std_normal_cdf(-a_plus);
    m.zero = 1.0 - m.minus - m.plus;
    if (m.zero < 0.0) m.zero = 0.0;
    return m;
}

MixingProbabilities mixing_probabilities(const Eigen::Ref<const Eigen::VectorXd> &x,
                                         const Eigen::VectorXd &alpha_minus,
                                         const Eigen::VectorXd &alpha_plus) {
    if (alpha_minus.size() != x.size() + 1 || alpha_plus.size() != x.size() + 1)
        throw std::invalid_argument("mixing coefficients must have length p + 1");
    const double a_minus = alpha_minus[0] + x.dot(alpha_minus.tail(x.size()));
    const double a_plus = alpha_plus[0] + x.dot(alpha_plus.tail(x.size()));
    return mixing_from_predictors(a_minus, a_plus);
}

} // namespace rdmix
