#include "rdmix/diagnostics.hpp"

#include "rdmix/gibbs.hpp"
#include "rdmix/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace rdmix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::vector<double>> split(const std::vector<std::vector<double>> &chains) {
    std::size_t len = std::numeric_limits<std::size_t>::max();
    for (const auto &c : chains) len = std::min(len, c.size());
    const std::size_t half = len / 2;
    std::vector<std::vector<double>> out;
    if (half == 0) return out;
    for (const auto &c : chains) {
        out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    return out;
}

struct Moments {
    std::vector<double> means;
    double within = 0.0;   // W
    double var_plus = 0.0; // pooled marginal variance estimate
    std::size_t n = 0;
};

Moments moments(const std::vector<std::vector<double>> &halves) {
    Moments m;
    m.n = halves.front().size();
    const double n = static_cast<double>(m.n);
    const double k = static_cast<double>(halves.size());
    double grand = 0.0;
    for (const auto &h : halves) {
        double s = 0.0;
        for (double v : h) s += v;
        m.means.push_back(s / n);
        grand += s / n;
    }
    grand /= k;
    double between = 0.0;
    for (std::size_t j = 0; j < halves.size(); ++j) {
        double ss = 0.0;
        for (double v : halves[j]) ss += (v - m.means[j]) * (v - m.means[j]);
        m.within += ss / (n - 1.0);
        between += (m.means[j] - grand) * (m.means[j] - grand);
    }
    m.within /= k;
    between *= n / (k - 1.0);
    m.var_plus = (n - 1.0) / n * m.within + between / n;
    return m;
}

} // namespace

double split_rhat(const std::vector<std::vector<double>> &chains) {
    const auto halves = split(chains);
    if (halves.empty() || halves.front().size() < 2) return kNaN;
    const auto m = moments(halves);
    if (m.within <= 0.0) return m.var_plus <= 0.0 ? 1.0 : kInf;
    return std::sqrt(m.var_plus / m.within);
}

double effective_sample_size(const std::vector<std::vector<double>> &chains) {
    const auto halves = split(chains);
    if (halves.empty() || halves.front().size() < 2) return kNaN;
    const auto m = moments(halves);
    const std::size_t n = m.n;
    const double total = static_cast<double>(n * halves.size());
    if (m.var_plus <= 0.0) return total;

    // rho_t = 1 - (W - mean_j autocov_j(t)) / var_plus
    auto rho = [&](std::size_t t) {
        double acov = 0.0;
        for (std::size_t j = 0; j < halves.size(); ++j) {
            const auto &h = halves[j];
            double s = 0.0;
            for (std::size_t i = 0; i + t < n; ++i) s += (h[i] - m.means[j]) * (h[i + t] - m.means[j]);
            acov += s / static_cast<double>(n);
        }
        acov /= static_cast<double>(halves.size());
        return 1.0 - (m.within - acov) / m.var_plus;
    };

    double tau = -1.0;
    double prev_pair = kInf;
    for (std::size_t t = 0; t + 1 < n; t += 2) {
        double pair = rho(t) + rho(t + 1);
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair); // initial monotone sequence
        tau += 2.0 * pair;
        prev_pair = pair;
    }
    if (tau <= 0.0) return total;
    return total / tau;
}

std::vector<ConvergenceEntry> convergence_report(const PosteriorDraws &draws) {
    std::map<int, std::vector<const DrawRecord *>> by_chain;
    for (const auto &d : draws.draws) by_chain[d.chain].push_back(&d);
    std::vector<ConvergenceEntry> out;
    if (draws.draws.empty()) return out;

    auto series = [&](auto &&get) {
        std::vector<std::vector<double>> chains;
        for (const auto &[c, recs] : by_chain) {
            std::vector<double> v;
            v.reserve(recs.size());
            for (const auto *r : recs) v.push_back(get(*r));
            chains.push_back(std::move(v));
        }
        return chains;
    };
    auto add = [&](std::string name, const std::vector<std::vector<double>> &chains) {
        out.push_back({std::move(name), split_rhat(chains), effective_sample_size(chains)});
    };
    add("rr", series([](const DrawRecord &r) { return r.score.rr; }));
    const auto names = ParameterState::flat_names(draws.p);
    for (std::size_t k = 0; k < names.size(); ++k)
        add(names[k], series([k](const DrawRecord &r) { return r.theta[k]; }));
    return out;
}

} // namespace rdmix
