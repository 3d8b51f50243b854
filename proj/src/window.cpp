#include "rdmix/window.hpp"

#include "rdmix/error.hpp"
#include "rdmix/stats.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <utility>

namespace rdmix {

Kernel kernel_from_name(const std::string &name) {
    if (name == "uniform") return Kernel::uniform;
    if (name == "triangular") return Kernel::triangular;
    throw ConfigError("fixed_window", "unknown kernel '" + name + "' (expected uniform or triangular)");
}

std::string kernel_name(Kernel k) { return k == Kernel::uniform ? "uniform" : "triangular"; }

void WindowSpec::validate(double s0) const {
    if (order != 1 && order != 2) throw ConfigError("fixed_window", "polynomial order must be 1 or 2");
    const bool explicit_bounds = lower.has_value() || upper.has_value();
    if (!explicit_bounds && (!(bandwidth_left > 0.0) || !(bandwidth_right > 0.0)))
        throw ConfigError("fixed_window", "window '" + label + "' needs positive bandwidths or explicit bounds");
    if (bandwidth_left < 0.0 || bandwidth_right < 0.0)
        throw ConfigError("fixed_window", "bandwidths must be nonnegative");
    const double lo = lower_bound(s0), hi = upper_bound(s0);
    if (std::isfinite(lo) && std::isfinite(hi) && !(lo < s0 && s0 < hi))
        throw ConfigError("fixed_window", "window '" + label + "' must contain the threshold strictly inside");
}

std::vector<std::size_t> window_rows(const ObservedDataset &data, const WindowSpec &spec) {
    const double lo = spec.lower_bound(data.s0()), hi = spec.upper_bound(data.s0());
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.n(); ++i)
        if (data.s()[i] >= lo && data.s()[i] <= hi) rows.push_back(i);
    return rows;
}

std::vector<double> WindowDraws::rr() const {
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto &s : scores) out.push_back(s.rr);
    return out;
}

namespace {

double truncated_latent(double eta, bool positive, RngStream &rng) {
    return positive ? sample_truncated_normal(eta, 1.0, 0.0, kInf, rng)
                    : sample_truncated_normal(eta, 1.0, -kInf, 0.0, rng);
}

} // namespace

WindowDraws fixed_window_sampler(const ObservedDataset &data, const WindowSpec &spec, const Priors &priors,
                                 const SamplerConfig &config) {
    spec.validate(data.s0());
    priors.validate();
    config.validate();
    const auto rows = window_rows(data, spec);
    WindowDraws out;
    out.spec = spec;
    out.n = rows.size();
    for (auto r : rows) (data.z()[r] ? out.n_eligible : out.n_ineligible) += 1;
    if (out.n_eligible == 0 || out.n_ineligible == 0)
        throw DataError("fixed_window", "window '" + spec.label + "' has no units on one side of the threshold");

    const ObservedDataset w = data.subset(rows);
    const auto n = static_cast<Eigen::Index>(w.n());
    const std::size_t p = w.p();
    const double prior_prec = 1.0 / (priors.sd_gamma * priors.sd_gamma);
    const Eigen::MatrixXd xtx = w.x().transpose() * w.x();
    out.theta_names = {"gamma00", "gamma01"};
    for (std::size_t j = 0; j < p; ++j) out.theta_names.push_back("gamma_x_" + std::to_string(j + 1));

    for (int c = 0; c < config.chains; ++c) {
        const RngStream chain_rng(config.seed, static_cast<std::uint64_t>(c));
        double gamma[2] = {0.0, 0.0};
        Eigen::VectorXd gamma_x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
        Eigen::VectorXd y_star(n);

        auto draw_latents = [&](RngStream &r) {
            const Eigen::VectorXd xg = p ? Eigen::VectorXd(w.x() * gamma_x) : Eigen::VectorXd::Zero(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto k = static_cast<std::size_t>(i);
                y_star[i] = truncated_latent(gamma[w.z()[k]] + xg[i], w.y()[k] == 1, r);
            }
            return xg;
        };

        for (int it = 1; it <= config.iterations; ++it) {
            const RngStream it_rng = chain_rng.substream(2, static_cast<std::uint64_t>(it));
            RngStream r1 = it_rng.substream(1);
            const Eigen::VectorXd xg = draw_latents(r1);
            for (int z = 0; z < 2; ++z) {
                Eigen::MatrixXd a = Eigen::MatrixXd::Zero(1, 1);
                Eigen::VectorXd b = Eigen::VectorXd::Zero(1);
                for (Eigen::Index i = 0; i < n; ++i) {
                    if (w.z()[static_cast<std::size_t>(i)] != z) continue;
                    a(0, 0) += 1.0;
                    b[0] += y_star[i] - xg[i];
                }
                gamma[z] = conjugate_posterior(a, b, prior_prec, 1.0).draw(r1)[0];
            }
            if (p > 0) {
                RngStream r2 = it_rng.substream(2);
                draw_latents(r2);
                Eigen::VectorXd resid(n);
                for (Eigen::Index i = 0; i < n; ++i) resid[i] = y_star[i] - gamma[w.z()[static_cast<std::size_t>(i)]];
                gamma_x = conjugate_posterior(xtx, w.x().transpose() * resid, prior_prec, 1.0).draw(r2);
            }
            if (it <= config.burn_in || (it - config.burn_in) % config.thinning != 0) continue;

            // Impute the counterfactual arm of every window unit.
            RngStream r3 = it_rng.substream(3);
            const Eigen::VectorXd xg_new = p ? Eigen::VectorXd(w.x() * gamma_x) : Eigen::VectorXd::Zero(n);
            std::size_t num = 0, den = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto k = static_cast<std::size_t>(i);
                const int z = w.z()[k];
                const int missing = r3.uniform() < std_normal_cdf(gamma[1 - z] + xg_new[i]) ? 1 : 0;
                if (z) {
                    num += w.y()[k];
                    den += static_cast<std::size_t>(missing);
                } else {
                    num += static_cast<std::size_t>(missing);
                    den += w.y()[k];
                }
            }
            ScoreRecord s;
            s.numerator = static_cast<double>(num);
            s.denominator = static_cast<double>(den);
            s.n_zero = w.n();
            s.n_zero_eligible = out.n_eligible;
            s.n_zero_ineligible = out.n_ineligible;
            if (den == 0) {
                s.degenerate = true;
                s.rr = (s.numerator + config.rr_guard) / (s.denominator + config.rr_guard);
            } else {
                s.rr = s.numerator / s.denominator;
            }
            std::vector<double> theta{gamma[0], gamma[1]};
            theta.insert(theta.end(), gamma_x.data(), gamma_x.data() + gamma_x.size());
            out.chain.push_back(c);
            out.iteration.push_back(it);
            out.theta.push_back(std::move(theta));
            out.scores.push_back(s);
        }
    }
    std::size_t degenerate = 0;
    for (const auto &s : out.scores) degenerate += s.degenerate;
    const auto rr = out.rr();
    out.summary = summarize_series(rr, degenerate);
    return out;
}

std::vector<double> weighted_polyfit(std::span<const double> u, std::span<const double> y,
                                     std::span<const double> w, int order) {
    if (u.size() != y.size() || u.size() != w.size())
        throw std::invalid_argument("weighted_polyfit: input lengths differ");
    std::vector<std::size_t> used;
    std::set<double> distinct;
    for (std::size_t i = 0; i < u.size(); ++i)
        if (w[i] > 0.0) {
            used.push_back(i);
            distinct.insert(u[i]);
        }
    const auto k = static_cast<Eigen::Index>(order + 1);
    if (distinct.size() < static_cast<std::size_t>(k))
        throw DataError("fixed_window", "rank-deficient local polynomial fit: " + std::to_string(distinct.size()) +
                                            " distinct forcing values for order " + std::to_string(order));
    // Fit y - y_ref so that a constant outcome gives an exactly constant fit.
    const double y_ref = y[used.front()];
    Eigen::MatrixXd a(static_cast<Eigen::Index>(used.size()), k);
    Eigen::VectorXd b(static_cast<Eigen::Index>(used.size()));
    for (std::size_t r = 0; r < used.size(); ++r) {
        const std::size_t i = used[r];
        const double sw = std::sqrt(w[i]);
        double pw = 1.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            a(static_cast<Eigen::Index>(r), j) = sw * pw;
            pw *= u[i];
        }
        b[static_cast<Eigen::Index>(r)] = sw * (y[i] - y_ref);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < k) throw DataError("fixed_window", "rank-deficient local polynomial fit");
    const Eigen::VectorXd coef = qr.solve(b);
    std::vector<double> out(coef.data(), coef.data() + coef.size());
    out[0] += y_ref;
    return out;
}

LocalPolynomialResult local_polynomial_rd(const ObservedDataset &data, const WindowSpec &spec) {
    if (!(spec.bandwidth_left > 0.0) || !(spec.bandwidth_right > 0.0))
        throw ConfigError("fixed_window", "local polynomial fits need positive bandwidths");
    if (spec.order != 1 && spec.order != 2) throw ConfigError("fixed_window", "polynomial order must be 1 or 2");
    const double s0 = data.s0();
    std::vector<double> u[2], y[2], w[2]; // 0: right (z=0), 1: left (z=1)
    for (std::size_t i = 0; i < data.n(); ++i) {
        const int side = data.z()[i];
        const double d = data.s()[i] - s0;
        const double h = side ? spec.bandwidth_left : spec.bandwidth_right;
        const double dist = std::abs(d) / h;
        if (dist > 1.0) continue;
        const double weight = spec.kernel == Kernel::uniform ? 1.0 : 1.0 - dist;
        u[side].push_back(d);
        y[side].push_back(static_cast<double>(data.y()[i]));
        w[side].push_back(weight);
    }
    LocalPolynomialResult out;
    out.spec = spec;
    for (int side = 0; side < 2; ++side) {
        const auto positive = static_cast<std::size_t>(std::count_if(w[side].begin(), w[side].end(),
                                                                     [](double v) { return v > 0.0; }));
        (side ? out.n_left : out.n_right) = positive;
    }
    out.coef_right = weighted_polyfit(u[0], y[0], w[0], spec.order);
    out.coef_left = weighted_polyfit(u[1], y[1], w[1], spec.order);
    out.p0_hat = out.coef_right[0];
    out.p1_hat = out.coef_left[0];
    out.ate = out.p1_hat - out.p0_hat;
    if (out.p0_hat != 0.0) out.rr = out.p1_hat / out.p0_hat;
    out.out_of_range = out.p0_hat < 0.0 || out.p0_hat > 1.0 || out.p1_hat < 0.0 || out.p1_hat > 1.0;
    return out;
}

MICombined rubin_combine(std::span<const double> estimates, std::span<const double> variances) {
    if (estimates.size() != variances.size())
        throw ConfigError("fixed_window", "estimate and variance counts differ");
    if (estimates.size() < 2) throw ConfigError("fixed_window", "Rubin's rules need at least two imputations");
    std::vector<std::pair<double, double>> pairs;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (!(variances[i] >= 0.0)) throw ConfigError("fixed_window", "variances must be nonnegative");
        if (!std::isfinite(estimates[i]) || !std::isfinite(variances[i]))
            throw ConfigError("fixed_window", "estimates and variances must be finite");
        pairs.emplace_back(estimates[i], variances[i]);
    }
    std::sort(pairs.begin(), pairs.end());
    MICombined out;
    out.m = pairs.size();
    const double m = static_cast<double>(out.m);
    for (const auto &[e, v] : pairs) {
        out.point += e;
        out.within += v;
    }
    out.point /= m;
    out.within /= m;
    for (const auto &[e, v] : pairs) out.between += (e - out.point) * (e - out.point);
    out.between /= m - 1.0;
    out.total_variance = out.within + (1.0 + 1.0 / m) * out.between;
    return out;
}

std::vector<MembershipSnapshot> export_membership_imputations(const PosteriorDraws &draws, int m, int stride) {
    if (m < 1 || stride < 1) throw ConfigError("fixed_window", "imputation count and stride must be positive");
    const auto need = static_cast<std::size_t>(m) * static_cast<std::size_t>(stride);
    if (need > draws.snapshots.size())
        throw DataError("fixed_window", "only " + std::to_string(draws.snapshots.size()) +
                                            " stored membership draws; " + std::to_string(m) + " imputations at stride " +
                                            std::to_string(stride) + " need " + std::to_string(need));
    std::vector<MembershipSnapshot> out;
    for (int k = 0; k < m; ++k) out.push_back(draws.snapshots[static_cast<std::size_t>(k * stride)]);
    return out;
}

std::vector<std::filesystem::path> write_membership_imputations(const std::filesystem::path &dir,
                                                                const ObservedDataset &data,
                                                                const std::vector<MembershipSnapshot> &imputations) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (std::size_t k = 0; k < imputations.size(); ++k) {
        const auto &snap = imputations[k];
        if (snap.labels.size() != data.n()) throw DataError("fixed_window", "membership draw length differs from unit count");
        auto path = dir / ("membership_imputation_" + std::to_string(k + 1) + ".csv");
        std::ofstream f(path);
        if (!f) throw DataError("fixed_window", "cannot write " + path.string());
        f << "unit_id,label\n";
        for (std::size_t i = 0; i < data.n(); ++i) f << data.unit_ids()[i] << ',' << subpop_name(snap.labels[i]) << '\n';
        paths.push_back(std::move(path));
    }
    return paths;
}

} // namespace rdmix
