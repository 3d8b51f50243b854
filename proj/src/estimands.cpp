#include "rdmix/estimands.hpp"

#include "rdmix/error.hpp"
#include "rdmix/gibbs.hpp"
#include "rdmix/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace rdmix {

PosteriorSummary summarize_series(std::span<const double> values, std::size_t degenerate) {
    if (values.empty()) throw DataError("estimands", "cannot summarize an empty draw set");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    PosteriorSummary out;
    out.draws = sorted.size();
    out.median = quantile_sorted(sorted, 0.5);
    out.pct_2_5 = quantile_sorted(sorted, 0.025);
    out.pct_97_5 = quantile_sorted(sorted, 0.975);
    out.interval_width = out.pct_97_5 - out.pct_2_5;
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), 1.0) - sorted.begin();
    out.prob_below_1 = static_cast<double>(below) / static_cast<double>(sorted.size());
    out.degenerate = degenerate;
    return out;
}

PosteriorSummary summarize_rr(const PosteriorDraws &draws) {
    if (draws.draws.size() < 2) throw DataError("estimands", "RR summary needs at least two retained draws");
    std::size_t degenerate = 0;
    for (const auto &d : draws.draws) degenerate += d.score.degenerate;
    const auto rr = draws.rr();
    return summarize_series(rr, degenerate);
}

namespace {

MembershipTable table_from_bins(const std::vector<double> &edges, double width,
                                const std::vector<std::size_t> &sizes,
                                const std::vector<std::vector<double>> &bin_means) {
    MembershipTable table;
    for (std::size_t b = 0; b < edges.size(); ++b) {
        MembershipTableRow row;
        row.lower = edges[b];
        row.upper = edges[b] + width;
        row.closed_lower = b == 0;
        row.units = sizes[b];
        if (row.units > 0 && !bin_means.empty()) {
            std::vector<double> series;
            series.reserve(bin_means.size());
            for (const auto &draw : bin_means) series.push_back(draw[b]);
            row.median = quantile(series, 0.5);
            if (series.size() >= 2) row.sd = std::sqrt(sample_variance(series));
        }
        table.push_back(row);
    }
    return table;
}

} // namespace

MembershipTable membership_table(const PosteriorDraws &draws) {
    return table_from_bins(draws.bin_edges, draws.bin_width, draws.bin_sizes, draws.bin_means);
}

MembershipTable membership_table(const std::vector<double> &s,
                                 const std::vector<std::vector<double>> &unit_values_per_draw,
                                 double bin_width) {
    if (!(bin_width > 0.0)) throw ConfigError("estimands", "bin width must be positive");
    if (s.empty()) throw DataError("estimands", "membership table needs at least one unit");
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    const double first = std::floor(*lo / bin_width) * bin_width;
    const auto bins = static_cast<std::size_t>(std::max(1.0, std::ceil((*hi - first) / bin_width)));
    std::vector<double> edges;
    for (std::size_t b = 0; b < bins; ++b) edges.push_back(first + static_cast<double>(b) * bin_width);
    std::vector<std::size_t> bin_of(s.size()), sizes(bins, 0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        bin_of[i] = membership_bin(s[i], first, bin_width, bins);
        ++sizes[bin_of[i]];
    }
    std::vector<std::vector<double>> means;
    for (const auto &draw : unit_values_per_draw) {
        if (draw.size() != s.size()) throw DataError("estimands", "membership draw length differs from unit count");
        std::vector<double> m(bins, 0.0);
        for (std::size_t i = 0; i < s.size(); ++i) m[bin_of[i]] += draw[i];
        for (std::size_t b = 0; b < bins; ++b)
            m[b] = sizes[b] ? m[b] / static_cast<double>(sizes[b]) : std::nan("");
        means.push_back(std::move(m));
    }
    return table_from_bins(edges, bin_width, sizes, means);
}

std::vector<double> membership_frequencies(const PosteriorDraws &draws) {
    std::vector<double> out;
    out.reserve(draws.unit_counts.size());
    for (const auto &c : draws.unit_counts) {
        const double total = static_cast<double>(c[0]) + c[1] + c[2];
        out.push_back(total > 0 ? c[1] / total : std::nan(""));
    }
    return out;
}

CountSummary summarize_counts(std::span<const double> values) {
    if (values.empty()) throw DataError("estimands", "cannot summarize an empty count series");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    return {quantile_sorted(sorted, 0.5), quantile_sorted(sorted, 0.025), quantile_sorted(sorted, 0.975)};
}

MembershipCountSummary summarize_membership_counts(const PosteriorDraws &draws) {
    std::vector<double> nz, nze, nzi, nm, np, pm, pz, pp;
    for (const auto &d : draws.draws) {
        nz.push_back(static_cast<double>(d.score.n_zero));
        nze.push_back(static_cast<double>(d.score.n_zero_eligible));
        nzi.push_back(static_cast<double>(d.score.n_zero_ineligible));
        nm.push_back(static_cast<double>(d.score.n_minus));
        np.push_back(static_cast<double>(d.score.n_plus));
        pm.push_back(d.pi_bar.minus);
        pz.push_back(d.pi_bar.zero);
        pp.push_back(d.pi_bar.plus);
    }
    return {summarize_counts(nz), summarize_counts(nze), summarize_counts(nzi), summarize_counts(nm),
            summarize_counts(np),  summarize_counts(pm),  summarize_counts(pz),  summarize_counts(pp)};
}

StratifiedEstimate stratified_estimator(const ObservedDataset &data, const std::vector<std::size_t> &columns,
                                        StratumWeighting weighting) {
    std::vector<std::size_t> cols = columns;
    if (cols.empty())
        for (std::size_t j = 0; j < data.p(); ++j) cols.push_back(j);
    for (auto j : cols)
        if (j >= data.p()) throw ConfigError("estimands", "stratification column out of range");

    struct Cell {
        std::size_t n[2] = {0, 0};
        double sum[2] = {0.0, 0.0};
    };
    std::map<std::vector<double>, Cell> strata;
    for (std::size_t i = 0; i < data.n(); ++i) {
        std::vector<double> key;
        key.reserve(cols.size());
        for (auto j : cols) key.push_back(data.x()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        Cell &c = strata[key];
        const int z = data.z()[i];
        ++c.n[z];
        c.sum[z] += data.y()[i];
    }

    StratifiedEstimate out;
    out.strata = strata.size();
    double weight_total = 0.0;
    for (const auto &[key, c] : strata) {
        for (int z = 0; z < 2; ++z) {
            if (c.n[z] == 0) {
                std::ostringstream msg;
                msg << "stratum (";
                for (std::size_t k = 0; k < cols.size(); ++k) {
                    if (k) msg << ", ";
                    msg << data.scaling().names[cols[k]] << "=" << data.scaling().to_raw(cols[k], key[k]);
                }
                msg << ") has no units with z=" << z;
                throw DataError("estimands", msg.str());
            }
        }
        const double w = weighting == StratumWeighting::equal ? 1.0 : static_cast<double>(c.n[0] + c.n[1]);
        out.mean_treated += w * c.sum[1] / static_cast<double>(c.n[1]);
        out.mean_control += w * c.sum[0] / static_cast<double>(c.n[0]);
        weight_total += w;
    }
    out.mean_treated /= weight_total;
    out.mean_control /= weight_total;
    if (out.mean_control == 0.0) {
        out.degenerate = true;
        out.rr = std::nan("");
    } else {
        out.rr = out.mean_treated / out.mean_control;
    }
    return out;
}

} // namespace rdmix
