#pragma once

#include "rdmix/balance.hpp"
#include "rdmix/data.hpp"
#include "rdmix/diagnostics.hpp"
#include "rdmix/estimands.hpp"
#include "rdmix/gibbs.hpp"
#include "rdmix/window.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rdmix {

/// Rectangular numeric table, the in-memory form of a draw file.
struct DrawTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string &name) const; // throws DataError when absent
};

/// One row per retained draw: chain, iteration, parameters, pi_bar, counts
/// and the RR numerator / denominator.
DrawTable draw_table(const PosteriorDraws &draws);
DrawTable window_draw_table(const WindowDraws &draws);

/// Delimited text with values printed to round-trip exactly.
void write_table_csv(const std::filesystem::path &path, const DrawTable &table);
/// "RDMXDRW1", column count, names, row count, then row-major doubles
/// (little-endian).
void write_table_binary(const std::filesystem::path &path, const DrawTable &table);
/// Reads either format, detected from the leading bytes.
DrawTable read_table(const std::filesystem::path &path);
bool is_binary_table(const std::filesystem::path &path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string &bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t file_hash(const std::filesystem::path &path);
std::string hex64(std::uint64_t v);

/// Writes draws.(csv|bin), unit_membership.csv, membership_bins.csv and
/// membership_draws.csv. Returns the written files.
std::vector<std::filesystem::path> write_posterior(const std::filesystem::path &dir, const ObservedDataset &data,
                                                   const PosteriorDraws &draws, bool binary);
/// Rebuilds the posterior written by write_posterior.
PosteriorDraws load_posterior(const std::filesystem::path &dir);

nlohmann::ordered_json to_json(const PosteriorSummary &s);
nlohmann::ordered_json to_json(const MembershipCountSummary &s);
nlohmann::ordered_json to_json(const MembershipTable &t);
nlohmann::ordered_json to_json(const std::vector<ConvergenceEntry> &c);
nlohmann::ordered_json to_json(const IterationDiagnostics &d);
nlohmann::ordered_json to_json(const BalanceReport &r);
nlohmann::ordered_json to_json(const LocalPolynomialResult &r);
nlohmann::ordered_json to_json(const MICombined &m);
nlohmann::ordered_json to_json(const StratifiedEstimate &e);
nlohmann::ordered_json to_json(const DescriptiveSummary &s);
nlohmann::ordered_json to_json(const IngestReport &r);

/// Mixture posterior summary: RR, membership counts and proportions, the
/// membership-by-forcing table, convergence and sampler diagnostics.
nlohmann::ordered_json mixture_summary(const PosteriorDraws &draws);
/// Plain-text rendering of mixture_summary.
std::string mixture_summary_text(const nlohmann::ordered_json &summary);

/// Balance table as text: means, SDs, normalized difference, log SD ratio
/// per covariate and the multivariate row.
std::string balance_table_text(const BalanceReport &r, const std::string &title);
/// covariate,analysis,delta,gamma rows for a love plot.
void write_love_plot(const std::filesystem::path &path,
                     const std::vector<std::pair<std::string, BalanceReport>> &reports);

/// Gaussian kernel density of the RR draws on a regular grid (Silverman
/// bandwidth), as x,density rows.
void write_density(const std::filesystem::path &path, const std::vector<double> &values, std::size_t points = 512);

/// Writes JSON with a trailing newline.
void write_json(const std::filesystem::path &path, const nlohmann::ordered_json &j);
void write_text(const std::filesystem::path &path, const std::string &text);
/// %.17g formatting; "nan" / "inf" / "-inf" for non-finite values.
std::string format_double(double v);

} // namespace rdmix
