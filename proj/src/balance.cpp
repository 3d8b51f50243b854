#include "rdmix/balance.hpp"

#include "rdmix/error.hpp"
#include "rdmix/stats.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <sstream>

namespace rdmix {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct GroupMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double weight = 0.0;
};

GroupMoments weighted_moments(const Eigen::MatrixXd &x, const Eigen::VectorXd &w, WeightConvention conv) {
    GroupMoments m;
    m.weight = w.sum();
    m.mean = x.transpose() * w / m.weight;
    const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
    const double denom = conv == WeightConvention::frequency ? m.weight - 1.0
                                                             : m.weight - w.squaredNorm() / m.weight;
    m.cov = centered.transpose() * w.asDiagonal() * centered / denom;
    return m;
}

Metric delta_metric(double m0, double m1, double v0, double v1) {
    if (!std::isfinite(v0) || !std::isfinite(v1)) return Metric::undefined("variance not computable");
    if (v0 == 0.0 && v1 == 0.0) return Metric::undefined("both groups have zero variance");
    return Metric::of((m1 - m0) / std::sqrt((v0 + v1) / 2.0));
}

Metric gamma_metric(double v0, double v1) {
    if (!std::isfinite(v0) || !std::isfinite(v1)) return Metric::undefined("variance not computable");
    if (v0 == 0.0 && v1 == 0.0) return Metric::undefined("both groups have zero variance");
    if (v0 == 0.0) return Metric::of(kInfinity);
    if (v1 == 0.0) return Metric::of(-kInfinity);
    return Metric::of(0.5 * (std::log(v1) - std::log(v0)));
}

std::string column_name(const std::vector<std::string> &names, std::size_t j) {
    return j < names.size() ? names[j] : "x" + std::to_string(j + 1);
}

MahalanobisResult mahalanobis_from(const GroupMoments &g0, const GroupMoments &g1,
                                   const std::vector<std::string> &names) {
    const Eigen::MatrixXd pooled = (g0.cov + g1.cov) / 2.0;
    MahalanobisResult out;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < pooled.rows(); ++j) {
        if (pooled(j, j) > 0.0) keep.push_back(j);
        else out.dropped.push_back(static_cast<std::size_t>(j));
    }
    if (keep.empty()) return out;
    const Eigen::MatrixXd s = pooled(keep, keep);
    const Eigen::VectorXd d = (g1.mean - g0.mean)(keep);

    Eigen::FullPivLU<Eigen::MatrixXd> lu(s);
    lu.setThreshold(1e-12);
    if (lu.rank() < s.rows()) {
        const Eigen::MatrixXd kernel = lu.kernel();
        std::ostringstream msg;
        msg << "pooled covariance is singular; collinear covariates:";
        for (Eigen::Index r = 0; r < kernel.rows(); ++r)
            if (kernel.row(r).cwiseAbs().maxCoeff() > 1e-9)
                msg << " " << column_name(names, static_cast<std::size_t>(keep[static_cast<std::size_t>(r)]));
        throw DataError("balance", msg.str());
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
    out.distance = std::sqrt(std::max(0.0, d.dot(ldlt.solve(d))));
    return out;
}

BalanceReport report_from(const GroupMoments &g0, const GroupMoments &g1, std::size_t n0, std::size_t n1,
                          const CovariateScaling *scaling) {
    BalanceReport rep;
    rep.n0 = n0;
    rep.n1 = n1;
    const auto p = static_cast<std::size_t>(g0.mean.size());
    std::vector<std::string> names;
    for (std::size_t j = 0; j < p; ++j)
        names.push_back(scaling && j < scaling->names.size() ? scaling->names[j] : column_name({}, j));
    for (std::size_t j = 0; j < p; ++j) {
        const auto k = static_cast<Eigen::Index>(j);
        const double v0 = g0.cov(k, k), v1 = g1.cov(k, k);
        CovariateBalance c;
        c.name = names[j];
        c.mean0 = g0.mean[k];
        c.mean1 = g1.mean[k];
        c.sd0 = std::sqrt(v0);
        c.sd1 = std::sqrt(v1);
        if (scaling && j < scaling->scale.size()) {
            c.mean0 = scaling->to_raw(j, c.mean0);
            c.mean1 = scaling->to_raw(j, c.mean1);
            c.sd0 *= scaling->scale[j];
            c.sd1 *= scaling->scale[j];
        }
        c.delta = delta_metric(g0.mean[k], g1.mean[k], v0, v1);
        c.gamma = gamma_metric(v0, v1);
        rep.covariates.push_back(std::move(c));
    }
    if (p == 0) {
        rep.mahalanobis = Metric::undefined("no covariates");
    } else if (!g0.cov.allFinite() || !g1.cov.allFinite()) {
        rep.mahalanobis = Metric::undefined("covariance not computable");
    } else {
        const auto m = mahalanobis_from(g0, g1, names);
        for (auto j : m.dropped) rep.dropped.push_back(names[j]);
        rep.mahalanobis = m.dropped.size() == p ? Metric::undefined("all covariates have zero variance")
                                                : Metric::of(m.distance);
    }
    return rep;
}

void check_groups(const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1) {
    if (x0.cols() != x1.cols()) throw DataError("balance", "groups have different covariate counts");
}

} // namespace

Metric normalized_difference(std::span<const double> x0, std::span<const double> x1) {
    if (x0.size() < 2 || x1.size() < 2) return Metric::undefined("each group needs at least two units");
    return delta_metric(mean(x0), mean(x1), sample_variance(x0), sample_variance(x1));
}

Metric log_sd_ratio(std::span<const double> x0, std::span<const double> x1) {
    if (x0.size() < 2 || x1.size() < 2) return Metric::undefined("each group needs at least two units");
    return gamma_metric(sample_variance(x0), sample_variance(x1));
}

MahalanobisResult mahalanobis_balance(const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1,
                                      const std::vector<std::string> &names) {
    check_groups(x0, x1);
    if (x0.rows() < 2 || x1.rows() < 2) throw DataError("balance", "each group needs at least two units");
    const auto g0 = weighted_moments(x0, Eigen::VectorXd::Ones(x0.rows()), WeightConvention::reliability);
    const auto g1 = weighted_moments(x1, Eigen::VectorXd::Ones(x1.rows()), WeightConvention::reliability);
    return mahalanobis_from(g0, g1, names);
}

BalanceReport balance_report(const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1,
                             const CovariateScaling *scaling) {
    check_groups(x0, x1);
    if (x0.rows() < 2 || x1.rows() < 2) throw DataError("balance", "each group needs at least two units");
    const auto g0 = weighted_moments(x0, Eigen::VectorXd::Ones(x0.rows()), WeightConvention::reliability);
    const auto g1 = weighted_moments(x1, Eigen::VectorXd::Ones(x1.rows()), WeightConvention::reliability);
    return report_from(g0, g1, static_cast<std::size_t>(x0.rows()), static_cast<std::size_t>(x1.rows()), scaling);
}

BalanceReport weighted_balance(const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1, const Eigen::VectorXd &w0,
                               const Eigen::VectorXd &w1, WeightConvention convention,
                               const CovariateScaling *scaling) {
    check_groups(x0, x1);
    if (w0.size() != x0.rows() || w1.size() != x1.rows())
        throw DataError("balance", "weight vector length differs from group size");
    if ((w0.array() < 0.0).any() || (w1.array() < 0.0).any() || !w0.allFinite() || !w1.allFinite())
        throw DataError("balance", "weights must be finite and nonnegative");
    if (!(w0.sum() > 0.0) || !(w1.sum() > 0.0)) throw DataError("balance", "a group has zero total weight");
    const auto g0 = weighted_moments(x0, w0, convention);
    const auto g1 = weighted_moments(x1, w1, convention);
    return report_from(g0, g1, static_cast<std::size_t>((w0.array() > 0).count()),
                       static_cast<std::size_t>((w1.array() > 0).count()), scaling);
}

BalanceReport posterior_balance(const ObservedDataset &data, const std::vector<std::vector<Subpop>> &memberships) {
    const std::size_t p = data.p();
    std::vector<BalanceReport> per_draw;
    std::size_t skipped = 0;
    for (const auto &labels : memberships) {
        if (labels.size() != data.n()) throw DataError("balance", "membership draw length differs from unit count");
        std::vector<Eigen::Index> rows[2];
        for (std::size_t i = 0; i < data.n(); ++i)
            if (labels[i] == Subpop::zero) rows[data.z()[i]].push_back(static_cast<Eigen::Index>(i));
        if (rows[0].size() < 2 || rows[1].size() < 2) {
            ++skipped;
            continue;
        }
        try {
            per_draw.push_back(balance_report(data.x()(rows[0], Eigen::all),
                                              data.x()(rows[1], Eigen::all), &data.scaling()));
        } catch (const DataError &) {
            ++skipped;
        }
    }
    if (per_draw.empty()) throw DataError("balance", "no membership draw has two or more U_zero units per arm");

    auto median_of = [](const std::vector<double> &v) { return quantile(v, 0.5); };
    auto median_metric = [&](auto &&get) {
        std::vector<double> vals;
        std::string reason;
        for (const auto &r : per_draw) {
            const Metric &m = get(r);
            if (m.value) vals.push_back(*m.value);
            else if (reason.empty()) reason = m.reason;
        }
        if (vals.empty()) return Metric::undefined(reason.empty() ? "undefined in every draw" : reason);
        return Metric::of(median_of(vals));
    };

    BalanceReport out;
    out.draws_used = per_draw.size();
    out.draws_skipped = skipped;
    std::vector<double> n0, n1;
    for (const auto &r : per_draw) {
        n0.push_back(static_cast<double>(r.n0));
        n1.push_back(static_cast<double>(r.n1));
    }
    out.n0 = static_cast<std::size_t>(std::llround(median_of(n0)));
    out.n1 = static_cast<std::size_t>(std::llround(median_of(n1)));
    for (std::size_t j = 0; j < p; ++j) {
        CovariateBalance c;
        c.name = per_draw.front().covariates[j].name;
        std::vector<double> m0, m1, s0, s1;
        for (const auto &r : per_draw) {
            m0.push_back(r.covariates[j].mean0);
            m1.push_back(r.covariates[j].mean1);
            s0.push_back(r.covariates[j].sd0);
            s1.push_back(r.covariates[j].sd1);
        }
        c.mean0 = median_of(m0);
        c.mean1 = median_of(m1);
        c.sd0 = median_of(s0);
        c.sd1 = median_of(s1);
        c.delta = median_metric([j](const BalanceReport &r) -> const Metric & { return r.covariates[j].delta; });
        c.gamma = median_metric([j](const BalanceReport &r) -> const Metric & { return r.covariates[j].gamma; });
        out.covariates.push_back(std::move(c));
    }
    out.mahalanobis = median_metric([](const BalanceReport &r) -> const Metric & { return r.mahalanobis; });
    out.dropped = per_draw.front().dropped;
    return out;
}

Eigen::VectorXd triangular_weights(std::span<const double> s, double s0, double h_left, double h_right) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double h = s[i] <= s0 ? h_left : h_right;
        const double u = std::abs(s[i] - s0) / h;
        w[static_cast<Eigen::Index>(i)] = u < 1.0 ? 1.0 - u : 0.0;
    }
    return w;
}

} // namespace rdmix
