#include "rdmix/random.hpp"

#include "rdmix/error.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rdmix {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ (stream + 0x632BE59BD9B4E019ULL)));
}

// Standardized draw from N(0,1) restricted to (a, b) with a < b and b > 0.
double truncated_std_normal(double a, double b, RngStream &rng) {
    if (a <= 0.0 && b == kInf) {
        // The mode is inside the interval: plain rejection accepts at least half.
        for (;;) {
            const double z = rng.normal();
            if (z > a) return z;
        }
    }
    if (a == -kInf) {
        // b > 0, so again at least half the mass.
        for (;;) {
            const double z = rng.normal();
            if (z < b) return z;
        }
    }
    if (a >= 5.0 || (a > 0.0 && b == kInf)) {
        if (std::isfinite(b) && b - a < 1.0 / a) {
            // Narrow far-tail interval: uniform proposal.
            for (;;) {
                const double z = a + (b - a) * rng.uniform();
                if (std::log(rng.uniform()) <= 0.5 * (a * a - z * z)) return z;
            }
        }
        // Exponential rejection with the optimal rate for the tail at a.
        const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
        for (;;) {
            const double z = a + rng.exponential() / lambda;
            if (z >= b) continue;
            const double d = z - lambda;
            if (rng.exponential() >= 0.5 * d * d) return z;
        }
    }
    // Inverse CDF on upper-tail probabilities, which keeps precision for a > 0.
    const double qa = std_normal_cdf(-a);
    const double qb = std::isfinite(b) ? std_normal_cdf(-b) : 0.0;
    const double q = qb + rng.uniform() * (qa - qb);
    if (!(q > 0.0 && q < 1.0)) return std::numeric_limits<double>::quiet_NaN();
    return -std_normal_quantile(q);
}

} // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::substream(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    std::uint64_t h = splitmix64(stream_id_ ^ 0x5851F42D4C957F2DULL);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b + 0x14057B7EF767814FULL));
    h = splitmix64(h ^ (c + 0x2545F4914F6CDD1DULL));
    return RngStream(seed_, h);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double log_std_normal_cdf(double x) {
    if (x > 5.0) return std::log1p(-0.5 * std::erfc(x / kSqrt2));
    if (x > -30.0) return std::log(0.5 * std::erfc(-x / kSqrt2));
    // Asymptotic series of Mills' ratio.
    const double x2 = x * x;
    const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * M_PI) + std::log(series);
}

std::pair<double, double> log_std_normal_cdf_pair(double x) {
    if (std::abs(x) > 30.0) return {log_std_normal_cdf(x), log_std_normal_cdf(-x)};
    // Smaller tail in full precision; the larger one from its complement.
    const double tail = 0.5 * std::erfc(std::abs(x) / kSqrt2);
    const double small = std::log(tail), large = std::log1p(-tail);
    return x < 0.0 ? std::pair{small, large} : std::pair{large, small};
}

double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -kInf;
        if (p == 1.0) return kInf;
        throw std::domain_error("normal quantile requires p in [0, 1]");
    }
    using namespace boost::math::policies;
    return -kSqrt2 * boost::math::erfc_inv(2.0 * p, policy<promote_double<false>>());
}

double sample_truncated_normal(double mean, double sd, double lower, double upper, RngStream &rng) {
    if (!(sd > 0.0) || !std::isfinite(sd)) throw std::domain_error("truncated normal: sd must be positive");
    if (std::isnan(lower) || std::isnan(upper) || !(lower < upper))
        throw std::domain_error("truncated normal: lower bound must be below upper bound");
    const double a = (lower - mean) / sd;
    const double b = (upper - mean) / sd;
    if (a == -kInf && b == kInf) {
        for (;;) {
            const double v = mean + sd * rng.normal();
            if (v > lower && v < upper) return v;
        }
    }
    const bool flip = b <= 0.0;
    const double lo = flip ? -b : a;
    const double hi = flip ? -a : b;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        double z = truncated_std_normal(lo, hi, rng);
        if (std::isnan(z)) continue;
        if (flip) z = -z;
        const double v = mean + sd * z;
        // Strict interior; also rejects an exact draw on a bound such as 0.
        if (v > lower && v < upper) return v;
    }
    // The interval is too narrow to resolve in double precision.
    const double mid = lower + 0.5 * (upper - lower);
    if (std::isfinite(mid) && mid > lower && mid < upper) return mid;
    throw NumericError("stat_kernels", "truncated normal interval is numerically empty");
}

double sample_inv_chi_squared(double df, double scale, RngStream &rng) {
    if (!(df > 0.0) || !(scale > 0.0) || !std::isfinite(df) || !std::isfinite(scale))
        throw std::domain_error("inverse chi-squared requires positive df and scale");
    for (;;) {
        const double chi2 = 2.0 * rng.gamma(0.5 * df);
        if (chi2 > 0.0) {
            const double v = df * scale / chi2;
            if (std::isfinite(v)) return v;
        }
    }
}

Eigen::MatrixXd GaussianPosterior::cov() const {
    const auto k = mean.size();
    return factor.solve(Eigen::MatrixXd::Identity(k, k));
}

Eigen::VectorXd GaussianPosterior::draw(RngStream &rng) const {
    const auto k = mean.size();
    Eigen::VectorXd z(k);
    for (Eigen::Index j = 0; j < k; ++j) z[j] = rng.normal();
    // precision = L L'; x = mean + L'^{-1} z has covariance precision^{-1}.
    return mean + factor.matrixU().solve(z);
}

GaussianPosterior conjugate_posterior(const Eigen::MatrixXd &xtx, const Eigen::VectorXd &xty,
                                      double prior_precision, double noise_variance,
                                      const Eigen::VectorXd &prior_mean) {
    if (!(prior_precision >= 0.0) || !(noise_variance > 0.0))
        throw std::domain_error("conjugate update requires prior precision >= 0 and noise variance > 0");
    const auto k = xty.size();
    if (xtx.rows() != k || xtx.cols() != k) throw std::invalid_argument("conjugate update: dimension mismatch");

    GaussianPosterior post;
    post.precision = xtx / noise_variance;
    post.precision.diagonal().array() += prior_precision;
    Eigen::VectorXd rhs = xty / noise_variance;
    if (prior_mean.size() == k) rhs += prior_precision * prior_mean;

    const double scale = std::max(1.0, post.precision.diagonal().cwiseAbs().maxCoeff());
    for (double jitter : {0.0, 1e-10, 1e-8}) {
        Eigen::MatrixXd m = post.precision;
        if (jitter > 0.0) m.diagonal().array() += jitter * scale;
        post.factor.compute(m);
        if (post.factor.info() == Eigen::Success) {
            post.jitter = jitter;
            if (jitter > 0.0) post.precision = m;
            post.mean = post.factor.solve(rhs);
            if (post.mean.allFinite()) return post;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(post.precision, Eigen::EigenvaluesOnly);
    std::ostringstream msg;
    msg << "posterior precision is not positive definite (k=" << k;
    if (eig.info() == Eigen::Success && k > 0) {
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        msg << ", min eigenvalue " << lo << ", max eigenvalue " << hi << ", condition number "
            << (lo > 0 ? hi / lo : kInf);
    }
    msg << ")";
    throw NumericError("stat_kernels", msg.str());
}

GaussianPosterior ConjugateLinearUpdate::posterior() const {
    const auto k = design.cols();
    if (response.size() != design.rows())
        throw std::invalid_argument("conjugate update: response length differs from design rows");
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(k, k);
    xtx.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose());
    xtx = xtx.selfadjointView<Eigen::Lower>();
    const Eigen::VectorXd xty = design.transpose() * response;
    return conjugate_posterior(xtx, xty, prior_precision_scale, noise_variance, prior_mean);
}

Eigen::VectorXd conjugate_coefficient_draw(const ConjugateLinearUpdate &update, RngStream &rng) {
    return update.posterior().draw(rng);
}

InvChiSquared residual_variance_posterior(double prior_df, double prior_scale, double ss,
                                          std::size_t n) {
    if (!(prior_df > 0.0) || !(prior_scale > 0.0))
        throw std::domain_error("residual variance prior requires positive df and scale");
    const double df = prior_df + static_cast<double>(n);
    return {df, (ss + prior_df * prior_scale) / df};
}

InvChiSquared residual_variance_posterior(double prior_df, double prior_scale,
                                          std::span<const double> residuals) {
    double ss = 0.0;
    for (double r : residuals) ss += r * r;
    return residual_variance_posterior(prior_df, prior_scale, ss, residuals.size());
}

double residual_variance_draw(double prior_df, double prior_scale,
                              std::span<const double> residuals, RngStream &rng) {
    const auto post = residual_variance_posterior(prior_df, prior_scale, residuals);
    return sample_inv_chi_squared(post.df, post.scale, rng);
}

} // namespace rdmix
