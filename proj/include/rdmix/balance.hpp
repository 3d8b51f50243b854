#pragma once

#include "rdmix/data.hpp"
#include "rdmix/model.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rdmix {

/// A balance statistic that may be undefined; `reason` says why when it is.
struct Metric {
    std::optional<double> value;
    std::string reason;

    static Metric of(double v) { return {v, {}}; }
    static Metric undefined(std::string why) { return {std::nullopt, std::move(why)}; }
};

/// (mean1 - mean0) / sqrt((s0^2 + s1^2) / 2), sample (n-1) variances.
Metric normalized_difference(std::span<const double> x0, std::span<const double> x1);

/// (log s1^2 - log s0^2) / 2; +-inf when exactly one variance is zero.
Metric log_sd_ratio(std::span<const double> x0, std::span<const double> x1);

struct MahalanobisResult {
    double distance = 0.0;
    std::vector<std::size_t> dropped; // zero-variance columns left out
};

/// sqrt(d' ((S0 + S1) / 2)^{-1} d) with d the difference of group means.
/// Columns with zero pooled variance are dropped; a singular remainder
/// throws DataError listing the collinear columns.
MahalanobisResult mahalanobis_balance(const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1,
                                      const std::vector<std::string> &names = {});

enum class WeightConvention {
    reliability, // denominator sum(w) - sum(w^2)/sum(w), the effective-sample-size correction
    frequency,   // denominator sum(w) - 1
};

struct CovariateBalance {
    std::string name;
    double mean0 = 0.0, mean1 = 0.0;
    double sd0 = 0.0, sd1 = 0.0;
    Metric delta; // normalized difference
    Metric gamma; // log SD ratio
};

struct BalanceReport {
    std::vector<CovariateBalance> covariates;
    Metric mahalanobis;
    std::vector<std::string> dropped;
    std::size_t n0 = 0, n1 = 0;
    std::size_t draws_used = 0;    // posterior mode only
    std::size_t draws_skipped = 0; // posterior mode only
};

/// Unweighted report for two groups (rows are units). Means and SDs are
/// mapped back to the raw scale when a scaling is given.
BalanceReport balance_report(const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1,
                             const CovariateScaling *scaling = nullptr);

/// Weighted moments throughout; weights must be nonnegative with positive
/// sums. Throws DataError otherwise.
BalanceReport weighted_balance(const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1,
                               const Eigen::VectorXd &w0, const Eigen::VectorXd &w1,
                               WeightConvention convention = WeightConvention::reliability,
                               const CovariateScaling *scaling = nullptr);

/// Balance between z=0 and z=1 units of U_zero, computed per membership
/// draw and summarized by the posterior median of each entry. Draws where
/// either group has fewer than two units are skipped and counted.
BalanceReport posterior_balance(const ObservedDataset &data,
                                const std::vector<std::vector<Subpop>> &memberships);

/// Triangular kernel weights 1 - |s - s0| / h on each side (0 outside).
Eigen::VectorXd triangular_weights(std::span<const double> s, double s0, double h_left, double h_right);

} // namespace rdmix
