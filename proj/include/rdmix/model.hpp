#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rdmix {

/// Latent subpopulation: below-threshold violators, the RD subpopulation,
/// above-threshold violators.
enum class Subpop : std::uint8_t { minus = 0, zero = 1, plus = 2 };

char subpop_code(Subpop g) noexcept;       // '-', '0', '+'
std::string_view subpop_name(Subpop g) noexcept; // "U_minus", "U_zero", "U_plus"
Subpop subpop_from_code(char c);

/// A label is admissible for an eligibility status unless it is a
/// structural zero (z=0 with U_minus, or z=1 with U_plus).
constexpr bool admissible(Subpop g, std::uint8_t z) noexcept {
    return !((z == 0 && g == Subpop::minus) || (z == 1 && g == Subpop::plus));
}

struct Priors {
    double sd_alpha = 1.0;       // mixing probit coefficients
    double sd_gamma = 1.0;       // outcome probit coefficients
    double var_beta = 100.0;     // forcing regression coefficients
    double df = 3.0;             // forcing variances, inv-chi2 degrees of freedom
    double scale = 1.0 / 3.0;    // forcing variances, inv-chi2 scale
    /// Prior means of the forcing-regression intercepts, indexed by Subpop.
    std::array<double, 3> beta_intercept_mean{0.0, 0.0, 0.0};

    void validate() const;
};

/// Full parameter vector of the three-component mixture.
struct ParameterState {
    Eigen::VectorXd alpha_minus; // (p+1), probit for U_minus membership
    Eigen::VectorXd alpha_plus;  // (p+1), probit for U_plus given not U_minus
    Eigen::VectorXd beta;        // (p+1), forcing regression in U_zero
    Eigen::VectorXd beta_minus;
    Eigen::VectorXd beta_plus;
    double sigma2 = 1.0;
    double sigma2_minus = 1.0;
    double sigma2_plus = 1.0;
    double gamma00 = 0.0; // U_zero outcome intercept, z = 0
    double gamma01 = 0.0; // U_zero outcome intercept, z = 1
    std::array<double, 2> gamma_minus{0.0, 0.0}; // intercept, forcing slope
    std::array<double, 2> gamma_plus{0.0, 0.0};
    Eigen::VectorXd gamma_x; // p, shared by all outcome models

    std::size_t p() const noexcept { return static_cast<std::size_t>(gamma_x.size()); }

    /// Prior means for coefficients, prior scale for the variances.
    static ParameterState initial(std::size_t p, const Priors &priors);

    /// 6p + 14 entries in a stable order matching flat_names(p).
    std::vector<double> flatten() const;
    static std::vector<std::string> flat_names(std::size_t p);
    static ParameterState unflatten(std::size_t p, const std::vector<double> &flat);

    const Eigen::VectorXd &forcing_coefficients(Subpop g) const;
    double forcing_variance(Subpop g) const;
};

struct MembershipState {
    std::vector<Subpop> g;
    Eigen::VectorXd g_star_minus;
    Eigen::VectorXd g_star_plus;
    Eigen::VectorXd y_star;
    /// Imputed counterfactual outcome for U_zero units, -1 elsewhere.
    std::vector<std::int8_t> y_missing;

    std::size_t n() const noexcept { return g.size(); }
};

struct MixingProbabilities {
    double minus = 0.0;
    double zero = 0.0;
    double plus = 0.0;
};

/// Sequential probit mixing: pi_minus = Phi(-a_minus),
/// pi_plus = (1 - pi_minus) Phi(-a_plus), pi_zero = 1 - pi_minus - pi_plus.
MixingProbabilities mixing_probabilities(const Eigen::Ref<const Eigen::VectorXd> &x,
                                         const Eigen::VectorXd &alpha_minus,
                                         const Eigen::VectorXd &alpha_plus);

MixingProbabilities mixing_from_predictors(double a_minus, double a_plus);

} // namespace rdmix
