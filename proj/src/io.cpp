#include "rdmix/io.hpp"

#include "rdmix/error.hpp"
#include "rdmix/stats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace rdmix {

namespace {

using ojson = nlohmann::ordered_json;

constexpr char kMagic[8] = {'R', 'D', 'M', 'X', 'D', 'R', 'W', '1'};

std::ofstream open_out(const std::filesystem::path &path, bool binary = false) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    if (!f) throw DataError("cli", "cannot write " + path.string());
    return f;
}

std::ifstream open_in(const std::filesystem::path &path, bool binary = false) {
    std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
    if (!f) throw DataError("cli", "cannot read " + path.string());
    return f;
}

std::vector<std::string> split(const std::string &line, char delim = ',') {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, delim)) out.push_back(cell);
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

double parse_double(const std::string &s, const std::filesystem::path &path) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    char *end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw DataError("cli", path.string() + ": '" + s + "' is not a number");
    return v;
}

template <class T> void put(std::ostream &os, T v) {
    static_assert(std::endian::native == std::endian::little, "binary draw files are little-endian");
    os.write(reinterpret_cast<const char *>(&v), sizeof v);
}

template <class T> T get(std::istream &is, const std::filesystem::path &path) {
    T v;
    if (!is.read(reinterpret_cast<char *>(&v), sizeof v)) throw DataError("cli", path.string() + ": truncated file");
    return v;
}

ojson optional_number(const std::optional<double> &v) { return v ? ojson(*v) : ojson(nullptr); }

ojson metric_json(const Metric &m) {
    if (m.value) {
        if (std::isinf(*m.value)) return *m.value > 0 ? "inf" : "-inf";
        return *m.value;
    }
    return {{"value", nullptr}, {"reason", m.reason}};
}

std::string metric_text(const Metric &m) {
    if (!m.value) return "NA";
    if (std::isinf(*m.value)) return *m.value > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << *m.value;
    return os.str();
}

ojson count_json(const CountSummary &c) {
    return {{"median", c.median}, {"pct_2_5", c.pct_2_5}, {"pct_97_5", c.pct_97_5}};
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

} // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::size_t DrawTable::column(const std::string &name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw DataError("cli", "draw table has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

DrawTable draw_table(const PosteriorDraws &draws) {
    DrawTable t;
    t.columns = {"chain", "iteration"};
    for (auto &name : ParameterState::flat_names(draws.p)) t.columns.push_back(name);
    for (const char *c : {"pi_minus", "pi_zero", "pi_plus", "n_minus", "n_zero", "n_zero_eligible",
                          "n_zero_ineligible", "n_plus", "rr_numerator", "rr_denominator", "rr", "degenerate"})
        t.columns.emplace_back(c);
    for (const auto &d : draws.draws) {
        std::vector<double> row{static_cast<double>(d.chain), static_cast<double>(d.iteration)};
        row.insert(row.end(), d.theta.begin(), d.theta.end());
        const auto &s = d.score;
        for (double v : {d.pi_bar.minus, d.pi_bar.zero, d.pi_bar.plus, static_cast<double>(s.n_minus),
                         static_cast<double>(s.n_zero), static_cast<double>(s.n_zero_eligible),
                         static_cast<double>(s.n_zero_ineligible), static_cast<double>(s.n_plus), s.numerator,
                         s.denominator, s.rr, s.degenerate ? 1.0 : 0.0})
            row.push_back(v);
        t.rows.push_back(std::move(row));
    }
    return t;
}

DrawTable window_draw_table(const WindowDraws &draws) {
    DrawTable t;
    t.columns = {"chain", "iteration"};
    for (const auto &name : draws.theta_names) t.columns.push_back(name);
    for (const char *c : {"rr_numerator", "rr_denominator", "rr", "degenerate"}) t.columns.emplace_back(c);
    for (std::size_t k = 0; k < draws.scores.size(); ++k) {
        std::vector<double> row{static_cast<double>(draws.chain[k]), static_cast<double>(draws.iteration[k])};
        row.insert(row.end(), draws.theta[k].begin(), draws.theta[k].end());
        const auto &s = draws.scores[k];
        for (double v : {s.numerator, s.denominator, s.rr, s.degenerate ? 1.0 : 0.0}) row.push_back(v);
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_table_csv(const std::filesystem::path &path, const DrawTable &table) {
    auto f = open_out(path);
    for (std::size_t j = 0; j < table.columns.size(); ++j) f << (j ? "," : "") << table.columns[j];
    f << '\n';
    for (const auto &row : table.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) f << (j ? "," : "") << format_double(row[j]);
        f << '\n';
    }
    if (!f) throw DataError("cli", "failed writing " + path.string());
}

void write_table_binary(const std::filesystem::path &path, const DrawTable &table) {
    auto f = open_out(path, true);
    f.write(kMagic, sizeof kMagic);
    put<std::uint64_t>(f, table.columns.size());
    for (const auto &c : table.columns) {
        put<std::uint32_t>(f, static_cast<std::uint32_t>(c.size()));
        f.write(c.data(), static_cast<std::streamsize>(c.size()));
    }
    put<std::uint64_t>(f, table.rows.size());
    for (const auto &row : table.rows) {
        if (row.size() != table.columns.size()) throw std::invalid_argument("draw table row has the wrong width");
        for (double v : row) put<double>(f, v);
    }
    if (!f) throw DataError("cli", "failed writing " + path.string());
}

bool is_binary_table(const std::filesystem::path &path) {
    auto f = open_in(path, true);
    char head[sizeof kMagic] = {};
    f.read(head, sizeof head);
    return f.gcount() == sizeof head && std::memcmp(head, kMagic, sizeof kMagic) == 0;
}

DrawTable read_table(const std::filesystem::path &path) {
    DrawTable t;
    if (is_binary_table(path)) {
        auto f = open_in(path, true);
        f.ignore(sizeof kMagic);
        const auto cols = get<std::uint64_t>(f, path);
        for (std::uint64_t j = 0; j < cols; ++j) {
            const auto len = get<std::uint32_t>(f, path);
            std::string name(len, '\0');
            if (!f.read(name.data(), len)) throw DataError("cli", path.string() + ": truncated file");
            t.columns.push_back(std::move(name));
        }
        const auto rows = get<std::uint64_t>(f, path);
        t.rows.reserve(rows);
        for (std::uint64_t r = 0; r < rows; ++r) {
            std::vector<double> row(cols);
            for (auto &v : row) v = get<double>(f, path);
            t.rows.push_back(std::move(row));
        }
        return t;
    }
    auto f = open_in(path);
    std::string line;
    if (!std::getline(f, line)) throw DataError("cli", path.string() + ": empty draw file");
    t.columns = split(line);
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != t.columns.size())
            throw DataError("cli", path.string() + " line " + std::to_string(lineno) + ": expected " +
                                       std::to_string(t.columns.size()) + " fields");
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto &c : cells) row.push_back(parse_double(c, path));
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::uint64_t fnv1a64(const std::string &bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t file_hash(const std::filesystem::path &path) {
    auto f = open_in(path, true);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::string buf(1 << 16, '\0');
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h = fnv1a64(buf.substr(0, static_cast<std::size_t>(f.gcount())), h);
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::vector<std::filesystem::path> write_posterior(const std::filesystem::path &dir, const ObservedDataset &data,
                                                   const PosteriorDraws &draws, bool binary) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    const auto table = draw_table(draws);
    const auto draw_path = dir / (binary ? "draws.bin" : "draws.csv");
    if (binary) write_table_binary(draw_path, table);
    else write_table_csv(draw_path, table);
    written.push_back(draw_path);

    {
        const auto path = dir / "unit_membership.csv";
        auto f = open_out(path);
        f << "unit_id,s,z,n_minus,n_zero,n_plus,prob_zero\n";
        const double total = static_cast<double>(draws.size());
        for (std::size_t i = 0; i < draws.unit_counts.size(); ++i) {
            const auto &c = draws.unit_counts[i];
            f << data.unit_ids()[i] << ',' << format_double(data.s()[i]) << ',' << int(data.z()[i]) << ',' << c[0]
              << ',' << c[1] << ',' << c[2] << ','
              << format_double(total > 0 ? static_cast<double>(c[1]) / total : std::nan("")) << '\n';
        }
        written.push_back(path);
    }
    {
        const auto path = dir / "membership_bins.csv";
        auto f = open_out(path);
        f << "chain,iteration";
        for (double e : draws.bin_edges) f << ",bin_" << format_double(e);
        f << '\n';
        for (std::size_t k = 0; k < draws.bin_means.size(); ++k) {
            f << draws.draws[k].chain << ',' << draws.draws[k].iteration;
            for (double v : draws.bin_means[k]) f << ',' << format_double(v);
            f << '\n';
        }
        written.push_back(path);
    }
    {
        const auto path = dir / "membership_draws.csv";
        auto f = open_out(path);
        f << "chain,iteration,labels\n";
        for (const auto &s : draws.snapshots) {
            std::string codes(s.labels.size(), '0');
            for (std::size_t i = 0; i < s.labels.size(); ++i) codes[i] = subpop_code(s.labels[i]);
            f << s.chain << ',' << s.iteration << ',' << codes << '\n';
        }
        written.push_back(path);
    }
    {
        ojson meta;
        meta["n"] = draws.n;
        meta["p"] = draws.p;
        meta["draw_file"] = draw_path.filename().string();
        meta["bin_width"] = draws.bin_width;
        meta["bin_edges"] = draws.bin_edges;
        meta["bin_sizes"] = draws.bin_sizes;
        meta["diagnostics"] = to_json(draws.diagnostics);
        meta["structural_violations"] = draws.structural_violations;
        meta["nonfinite_loglik"] = draws.nonfinite_loglik;
        meta["partial"] = draws.partial;
        meta["failure"] = draws.failure;
        write_json(dir / "posterior.json", meta);
        written.push_back(dir / "posterior.json");
    }
    return written;
}

PosteriorDraws load_posterior(const std::filesystem::path &dir) {
    const auto meta_path = dir / "posterior.json";
    nlohmann::json meta;
    try {
        auto f = open_in(meta_path);
        meta = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception &e) {
        throw DataError("cli", meta_path.string() + ": " + e.what());
    }
    PosteriorDraws out;
    try {
        out.n = meta.at("n").get<std::size_t>();
        out.p = meta.at("p").get<std::size_t>();
        out.bin_width = meta.at("bin_width").get<double>();
        out.bin_edges = meta.at("bin_edges").get<std::vector<double>>();
        out.bin_sizes = meta.at("bin_sizes").get<std::vector<std::size_t>>();
        const auto &d = meta.at("diagnostics");
        out.diagnostics.membership_fallbacks = d.at("membership_fallbacks").get<std::uint64_t>();
        out.diagnostics.empty_blocks = {d.at("empty_blocks").at("U_minus").get<std::uint64_t>(),
                                        d.at("empty_blocks").at("U_zero").get<std::uint64_t>(),
                                        d.at("empty_blocks").at("U_plus").get<std::uint64_t>()};
        out.diagnostics.degenerate_rr = d.at("degenerate_rr").get<std::uint64_t>();
        out.structural_violations = meta.at("structural_violations").get<std::uint64_t>();
        out.nonfinite_loglik = meta.at("nonfinite_loglik").get<std::uint64_t>();
        out.partial = meta.at("partial").get<bool>();
        out.failure = meta.at("failure").get<std::string>();
    } catch (const nlohmann::json::exception &e) {
        throw DataError("cli", meta_path.string() + ": " + e.what());
    }

    std::string draw_file = meta.value("draw_file", std::string("draws.csv"));
    const DrawTable t = read_table(dir / draw_file);
    const auto names = ParameterState::flat_names(out.p);
    const std::size_t first = t.column(names.front());
    for (std::size_t k = 0; k < names.size(); ++k)
        if (t.columns.at(first + k) != names[k]) throw DataError("cli", "draw file parameter columns are out of order");
    const std::size_t c_chain = t.column("chain"), c_it = t.column("iteration");
    const std::size_t c_pm = t.column("pi_minus"), c_pz = t.column("pi_zero"), c_pp = t.column("pi_plus");
    const std::size_t c_nm = t.column("n_minus"), c_nz = t.column("n_zero"), c_nze = t.column("n_zero_eligible");
    const std::size_t c_nzi = t.column("n_zero_ineligible"), c_np = t.column("n_plus");
    const std::size_t c_num = t.column("rr_numerator"), c_den = t.column("rr_denominator");
    const std::size_t c_rr = t.column("rr"), c_deg = t.column("degenerate");
    for (const auto &row : t.rows) {
        DrawRecord r;
        r.chain = static_cast<int>(row[c_chain]);
        r.iteration = static_cast<int>(row[c_it]);
        r.theta.assign(row.begin() + static_cast<std::ptrdiff_t>(first),
                       row.begin() + static_cast<std::ptrdiff_t>(first + names.size()));
        r.pi_bar = {row[c_pm], row[c_pz], row[c_pp]};
        auto count = [&](std::size_t c) { return static_cast<std::size_t>(row[c]); };
        r.score.n_minus = count(c_nm);
        r.score.n_zero = count(c_nz);
        r.score.n_zero_eligible = count(c_nze);
        r.score.n_zero_ineligible = count(c_nzi);
        r.score.n_plus = count(c_np);
        r.score.numerator = row[c_num];
        r.score.denominator = row[c_den];
        r.score.rr = row[c_rr];
        r.score.degenerate = row[c_deg] != 0.0;
        out.draws.push_back(std::move(r));
    }

    {
        auto f = open_in(dir / "unit_membership.csv");
        std::string line;
        std::getline(f, line);
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto cells = split(line);
            if (cells.size() != 7) throw DataError("cli", "unit_membership.csv: malformed row");
            out.unit_counts.push_back({static_cast<std::uint32_t>(std::stoul(cells[3])),
                                       static_cast<std::uint32_t>(std::stoul(cells[4])),
                                       static_cast<std::uint32_t>(std::stoul(cells[5]))});
        }
        if (out.unit_counts.size() != out.n) throw DataError("cli", "unit_membership.csv: unit count mismatch");
    }
    {
        auto f = open_in(dir / "membership_bins.csv");
        std::string line;
        std::getline(f, line);
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto cells = split(line);
            std::vector<double> means;
            for (std::size_t j = 2; j < cells.size(); ++j) means.push_back(parse_double(cells[j], "membership_bins.csv"));
            if (means.size() != out.bin_edges.size()) throw DataError("cli", "membership_bins.csv: bin count mismatch");
            out.bin_means.push_back(std::move(means));
        }
    }
    {
        auto f = open_in(dir / "membership_draws.csv");
        std::string line;
        std::getline(f, line);
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto cells = split(line);
            if (cells.size() != 3) throw DataError("cli", "membership_draws.csv: malformed row");
            MembershipSnapshot s;
            s.chain = std::stoi(cells[0]);
            s.iteration = std::stoi(cells[1]);
            s.labels.reserve(cells[2].size());
            for (char c : cells[2]) s.labels.push_back(subpop_from_code(c));
            if (s.labels.size() != out.n) throw DataError("cli", "membership_draws.csv: label count mismatch");
            out.snapshots.push_back(std::move(s));
        }
    }
    return out;
}

ojson to_json(const PosteriorSummary &s) {
    return {{"draws", s.draws},         {"median", s.median},
            {"pct_2_5", s.pct_2_5},     {"pct_97_5", s.pct_97_5},
            {"interval_width", s.interval_width}, {"prob_below_1", s.prob_below_1},
            {"degenerate_draws", s.degenerate}};
}

ojson to_json(const MembershipCountSummary &s) {
    return {{"n_zero", count_json(s.n_zero)},
            {"n_zero_eligible", count_json(s.n_zero_eligible)},
            {"n_zero_ineligible", count_json(s.n_zero_ineligible)},
            {"n_minus", count_json(s.n_minus)},
            {"n_plus", count_json(s.n_plus)},
            {"pi_minus", count_json(s.pi_minus)},
            {"pi_zero", count_json(s.pi_zero)},
            {"pi_plus", count_json(s.pi_plus)}};
}

ojson to_json(const MembershipTable &t) {
    ojson rows = ojson::array();
    for (const auto &r : t)
        rows.push_back({{"lower", r.lower},
                        {"upper", r.upper},
                        {"closed_lower", r.closed_lower},
                        {"units", r.units},
                        {"median", optional_number(r.median)},
                        {"sd", optional_number(r.sd)}});
    return rows;
}

ojson to_json(const std::vector<ConvergenceEntry> &c) {
    ojson rows = ojson::array();
    for (const auto &e : c) rows.push_back({{"name", e.name}, {"rhat", e.rhat}, {"ess", e.ess}});
    return rows;
}

ojson to_json(const IterationDiagnostics &d) {
    return {{"membership_fallbacks", d.membership_fallbacks},
            {"empty_blocks", {{"U_minus", d.empty_blocks[0]}, {"U_zero", d.empty_blocks[1]}, {"U_plus", d.empty_blocks[2]}}},
            {"degenerate_rr", d.degenerate_rr}};
}

ojson to_json(const BalanceReport &r) {
    ojson covs = ojson::array();
    for (const auto &c : r.covariates)
        covs.push_back({{"name", c.name},
                        {"mean0", c.mean0},
                        {"sd0", c.sd0},
                        {"mean1", c.mean1},
                        {"sd1", c.sd1},
                        {"delta", metric_json(c.delta)},
                        {"gamma", metric_json(c.gamma)}});
    ojson j = {{"n0", r.n0}, {"n1", r.n1}, {"covariates", covs}, {"mahalanobis", metric_json(r.mahalanobis)},
               {"dropped", r.dropped}};
    if (r.draws_used || r.draws_skipped) {
        j["draws_used"] = r.draws_used;
        j["draws_skipped"] = r.draws_skipped;
    }
    return j;
}

ojson to_json(const LocalPolynomialResult &r) {
    return {{"label", r.spec.label},
            {"kernel", kernel_name(r.spec.kernel)},
            {"order", r.spec.order},
            {"bandwidth_left", r.spec.bandwidth_left},
            {"bandwidth_right", r.spec.bandwidth_right},
            {"n_left", r.n_left},
            {"n_right", r.n_right},
            {"p1_hat", r.p1_hat},
            {"p0_hat", r.p0_hat},
            {"rr", optional_number(r.rr)},
            {"ate", r.ate},
            {"out_of_range", r.out_of_range},
            {"coef_left", r.coef_left},
            {"coef_right", r.coef_right}};
}

ojson to_json(const MICombined &m) {
    return {{"m", m.m}, {"point", m.point}, {"within", m.within}, {"between", m.between},
            {"total_variance", m.total_variance}};
}

ojson to_json(const StratifiedEstimate &e) {
    return {{"strata", e.strata},
            {"mean_treated", e.mean_treated},
            {"mean_control", e.mean_control},
            {"rr", e.degenerate ? ojson(nullptr) : ojson(e.rr)},
            {"degenerate", e.degenerate}};
}

ojson to_json(const DescriptiveSummary &s) {
    auto group = [&](const GroupSummary &g) {
        ojson cov;
        for (std::size_t j = 0; j < s.covariate_names.size() && j < g.covariate_means.size(); ++j)
            cov[s.covariate_names[j]] = g.covariate_means[j];
        const auto &f = g.forcing;
        return ojson{{"label", g.label},
                     {"n", f.n},
                     {"forcing",
                      {{"min", f.min}, {"q1", f.q1}, {"median", f.median}, {"mean", f.mean}, {"q3", f.q3},
                       {"max", f.max}, {"sd", f.sd}}},
                     {"covariate_means", cov},
                     {"outcome_rate_per_mil", g.outcome_rate_per_mil}};
    };
    return {{"overall", group(s.overall)}, {"eligible", group(s.eligible)}, {"ineligible", group(s.ineligible)}};
}

ojson to_json(const IngestReport &r) {
    return {{"rows_read", r.rows_read},
            {"rows_accepted", r.rows_accepted},
            {"rows_rejected", r.rows_rejected},
            {"rows_filtered", r.rows_filtered},
            {"rejections", r.rejections}};
}

ojson mixture_summary(const PosteriorDraws &draws) {
    ojson j;
    j["draws"] = draws.size();
    j["rr"] = to_json(summarize_rr(draws));
    j["membership"] = to_json(summarize_membership_counts(draws));
    j["membership_by_forcing"] = to_json(membership_table(draws));
    j["convergence"] = to_json(convergence_report(draws));
    j["diagnostics"] = to_json(draws.diagnostics);
    j["diagnostics"]["structural_violations"] = draws.structural_violations;
    j["diagnostics"]["nonfinite_loglik"] = draws.nonfinite_loglik;
    j["partial"] = draws.partial;
    if (draws.partial) j["failure"] = draws.failure;
    return j;
}

std::string mixture_summary_text(const ojson &s) {
    std::ostringstream os;
    const auto &rr = s.at("rr");
    os << "Posterior draws: " << s.at("draws").get<std::size_t>() << "\n\n";
    os << "Membership (posterior median and 95% interval)\n";
    const auto &m = s.at("membership");
    auto count_row = [&](const char *label, const char *key, int digits) {
        const auto &c = m.at(key);
        os << "  " << std::left << std::setw(22) << label << std::right << std::setw(12)
           << fixed(c.at("median").get<double>(), digits) << "  [" << fixed(c.at("pct_2_5").get<double>(), digits)
           << ", " << fixed(c.at("pct_97_5").get<double>(), digits) << "]\n";
    };
    count_row("N U_zero", "n_zero", 0);
    count_row("  eligible (z=1)", "n_zero_eligible", 0);
    count_row("  ineligible (z=0)", "n_zero_ineligible", 0);
    count_row("N U_minus", "n_minus", 0);
    count_row("N U_plus", "n_plus", 0);
    count_row("pi U_minus", "pi_minus", 3);
    count_row("pi U_zero", "pi_zero", 3);
    count_row("pi U_plus", "pi_plus", 3);
    os << "\nCausal relative risk on U_zero\n";
    os << "  median " << fixed(rr.at("median").get<double>(), 3) << "  95% PCI ["
       << fixed(rr.at("pct_2_5").get<double>(), 3) << ", " << fixed(rr.at("pct_97_5").get<double>(), 3)
       << "]  width " << fixed(rr.at("interval_width").get<double>(), 3) << "  Pr(RR < 1) "
       << fixed(rr.at("prob_below_1").get<double>(), 3) << "\n";
    if (rr.at("degenerate_draws").get<std::size_t>() > 0)
        os << "  " << rr.at("degenerate_draws").get<std::size_t>() << " draws had no Y(0) events (guarded ratio)\n";
    os << "\nPr(U_zero) by forcing variable\n";
    for (const auto &r : s.at("membership_by_forcing")) {
        os << "  " << (r.at("closed_lower").get<bool>() ? "[" : "(") << fixed(r.at("lower").get<double>(), 1) << ", "
           << fixed(r.at("upper").get<double>(), 1) << "]  n=" << std::setw(7) << r.at("units").get<std::size_t>();
        if (r.at("median").is_null()) os << "  -\n";
        else {
            os << "  " << fixed(r.at("median").get<double>(), 3);
            if (!r.at("sd").is_null()) os << " (" << fixed(r.at("sd").get<double>(), 3) << ")";
            os << "\n";
        }
    }
    os << "\nConvergence (split R-hat, ESS)\n";
    for (const auto &c : s.at("convergence")) {
        os << "  " << std::left << std::setw(24) << c.at("name").get<std::string>() << std::right;
        os << std::setw(10) << (c.at("rhat").is_null() ? std::string("NA") : fixed(c.at("rhat").get<double>(), 3));
        os << std::setw(10) << (c.at("ess").is_null() ? std::string("NA") : fixed(c.at("ess").get<double>(), 0)) << "\n";
    }
    const auto &d = s.at("diagnostics");
    os << "\nSampler: " << d.at("membership_fallbacks").get<std::uint64_t>() << " membership fallbacks, "
       << d.at("structural_violations").get<std::uint64_t>() << " structural violations, "
       << d.at("nonfinite_loglik").get<std::uint64_t>() << " non-finite log likelihoods\n";
    if (s.value("partial", false)) os << "\nPARTIAL RUN: " << s.value("failure", std::string()) << "\n";
    return os.str();
}

std::string balance_table_text(const BalanceReport &r, const std::string &title) {
    std::ostringstream os;
    os << title << "\n";
    os << "  n(z=0) = " << r.n0 << ", n(z=1) = " << r.n1;
    if (r.draws_used) os << ", draws used " << r.draws_used << " (skipped " << r.draws_skipped << ")";
    os << "\n";
    os << "  " << std::left << std::setw(24) << "covariate" << std::right << std::setw(10) << "mean z=0" << std::setw(10)
       << "sd z=0" << std::setw(10) << "mean z=1" << std::setw(10) << "sd z=1" << std::setw(9) << "delta" << std::setw(9)
       << "gamma" << "\n";
    for (const auto &c : r.covariates)
        os << "  " << std::left << std::setw(24) << c.name << std::right << std::setw(10) << fixed(c.mean0, 2)
           << std::setw(10) << fixed(c.sd0, 2) << std::setw(10) << fixed(c.mean1, 2) << std::setw(10) << fixed(c.sd1, 2)
           << std::setw(9) << metric_text(c.delta) << std::setw(9) << metric_text(c.gamma) << "\n";
    os << "  " << std::left << std::setw(64) << "multivariate measure" << std::right << std::setw(9)
       << metric_text(r.mahalanobis) << "\n";
    if (!r.dropped.empty()) {
        os << "  dropped (zero variance):";
        for (const auto &d : r.dropped) os << " " << d;
        os << "\n";
    }
    return os.str();
}

void write_love_plot(const std::filesystem::path &path,
                     const std::vector<std::pair<std::string, BalanceReport>> &reports) {
    auto f = open_out(path);
    f << "analysis,covariate,delta,gamma\n";
    auto cell = [](const Metric &m) { return m.value ? format_double(*m.value) : std::string(); };
    for (const auto &[name, r] : reports)
        for (const auto &c : r.covariates) f << name << ',' << c.name << ',' << cell(c.delta) << ',' << cell(c.gamma) << '\n';
}

void write_density(const std::filesystem::path &path, const std::vector<double> &values, std::size_t points) {
    auto f = open_out(path);
    f << "x,density\n";
    std::vector<double> v;
    for (double x : values)
        if (std::isfinite(x)) v.push_back(x);
    if (v.size() < 2 || points < 2) return;
    std::sort(v.begin(), v.end());
    const double sd = std::sqrt(sample_variance(v));
    const double iqr = quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) spread = sd > 0.0 ? sd : std::max(std::abs(v.front()), 1.0) * 1e-3;
    const double h = 0.9 * spread * std::pow(static_cast<double>(v.size()), -0.2);
    const double lo = v.front() - 3.0 * h, hi = v.back() + 3.0 * h;
    const double norm = 1.0 / (static_cast<double>(v.size()) * h * std::sqrt(2.0 * M_PI));
    for (std::size_t k = 0; k < points; ++k) {
        const double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
        // Only draws within 8 bandwidths contribute measurably.
        const auto first = std::lower_bound(v.begin(), v.end(), x - 8.0 * h);
        const auto last = std::upper_bound(v.begin(), v.end(), x + 8.0 * h);
        double dens = 0.0;
        for (auto it = first; it != last; ++it) {
            const double u = (x - *it) / h;
            dens += std::exp(-0.5 * u * u);
        }
        f << format_double(x) << ',' << format_double(dens * norm) << '\n';
    }
}

void write_json(const std::filesystem::path &path, const ojson &j) {
    auto f = open_out(path);
    f << j.dump(2) << '\n';
}

void write_text(const std::filesystem::path &path, const std::string &text) {
    auto f = open_out(path);
    f << text;
}

} // namespace rdmix
