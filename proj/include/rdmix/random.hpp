#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cstdint>
#include <utility>
#include <limits>
#include <random>
#include <span>

namespace rdmix {

/// Seeded random stream. Identical (seed, stream_id) pairs produce identical
/// draw sequences; substreams are derived deterministically so that sharded
/// work gives the same draws no matter how many workers run it.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Independent child stream keyed by up to three indices.
    RngStream substream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const;

    /// Uniform on the open interval (0, 1).
    double uniform() {
        for (;;) {
            const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
            if (u > 0.0) return u;
        }
    }
    double normal() { return normal_(engine_); }
    /// Exponential with rate 1.
    double exponential() { return exponential_(engine_); }
    /// Gamma(shape, scale = 1).
    double gamma(double shape) {
        return std::gamma_distribution<double>(shape, 1.0)(engine_);
    }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    // Ziggurat samplers: no log or sqrt on the common path.
    boost::random::normal_distribution<double> normal_;
    boost::random::exponential_distribution<double> exponential_;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Standard normal CDF.
double std_normal_cdf(double x);
/// log Phi(x), accurate in both tails.
double log_std_normal_cdf(double x);
/// (log Phi(x), log Phi(-x)) sharing one erfc evaluation.
std::pair<double, double> log_std_normal_cdf_pair(double x);
/// Inverse standard normal CDF for p in (0, 1).
double std_normal_quantile(double p);

/// Draw from N(mean, sd^2) restricted to the open interval (lower, upper).
/// Bounds may be infinite. Normal rejection when the interval holds at least
/// half the mass, exponential rejection for one-sided tails, inverse CDF for
/// the remaining two-sided intervals. Throws std::domain_error if
/// sd <= 0 or lower >= upper.
double sample_truncated_normal(double mean, double sd, double lower, double upper, RngStream &rng);

/// Scaled inverse chi-squared draw: df * scale / chi2(df).
double sample_inv_chi_squared(double df, double scale, RngStream &rng);

/// Multivariate normal in precision form: mean and the Cholesky factor of
/// the precision matrix. cov() materializes the covariance.
struct GaussianPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd precision;
    Eigen::LLT<Eigen::MatrixXd> factor;
    double jitter = 0.0;

    Eigen::MatrixXd cov() const;
    Eigen::VectorXd draw(RngStream &rng) const;
};

/// Posterior of regression coefficients under a N(prior_mean, I / prior_precision)
/// prior with known noise variance, from sufficient statistics X'X and X'y.
/// Cholesky factorization with a jitter ladder (0, 1e-10, 1e-8); a
/// NumericError carrying the condition number is thrown if all fail.
GaussianPosterior conjugate_posterior(const Eigen::MatrixXd &xtx, const Eigen::VectorXd &xty,
                                      double prior_precision, double noise_variance,
                                      const Eigen::VectorXd &prior_mean = Eigen::VectorXd());

/// A conjugate normal linear-regression update in data form.
struct ConjugateLinearUpdate {
    double prior_precision_scale = 0.0; // 1 / prior variance
    double noise_variance = 1.0;
    Eigen::MatrixXd design;             // n x k
    Eigen::VectorXd response;           // n
    Eigen::VectorXd prior_mean;         // empty means zero

    /// Exact posterior (mean, covariance).
    GaussianPosterior posterior() const;
};

Eigen::VectorXd conjugate_coefficient_draw(const ConjugateLinearUpdate &update, RngStream &rng);

struct InvChiSquared {
    double df = 0.0;
    double scale = 0.0;
    double mean() const { return df > 2 ? df * scale / (df - 2) : kInf; }
};

/// inv-chi2(prior_df + n, (sum r^2 + prior_df * prior_scale) / (prior_df + n)).
InvChiSquared residual_variance_posterior(double prior_df, double prior_scale,
                                          std::span<const double> residuals);
InvChiSquared residual_variance_posterior(double prior_df, double prior_scale, double ss,
                                          std::size_t n);

double residual_variance_draw(double prior_df, double prior_scale,
                              std::span<const double> residuals, RngStream &rng);

} // namespace rdmix
