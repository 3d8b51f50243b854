#include "rdmix/data.hpp"

#include "rdmix/error.hpp"
#include "rdmix/stats.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace rdmix {

double transform_forcing(double s, double s0, double eps0) {
    if (!(s0 > 0.0)) throw std::domain_error("threshold s0 must be positive");
    const double shifted = s + eps0;
    if (!(shifted > 0.0))
        throw std::domain_error("forcing value plus zero-income shift must be positive");
    return (std::log(shifted) - std::log(s0)) / 10.0;
}

double inverse_transform_forcing(double log_s_tilde, double s0, double eps0) {
    return s0 * std::exp(10.0 * log_s_tilde) - eps0;
}

CovariateScaling CovariateScaling::identity(std::vector<std::string> names) {
    CovariateScaling out;
    const auto p = names.size();
    out.names = std::move(names);
    out.center.assign(p, 0.0);
    out.scale.assign(p, 1.0);
    out.binary.assign(p, false);
    return out;
}

ObservedDataset::ObservedDataset(std::vector<std::string> unit_ids, std::vector<double> s,
                                 std::vector<std::uint8_t> y, Eigen::MatrixXd x, double s0,
                                 double eps0, CovariateScaling scaling)
    : ids_(std::move(unit_ids)), s_(std::move(s)), y_(std::move(y)), x_(std::move(x)), s0_(s0),
      eps0_(eps0), scaling_(std::move(scaling)) {
    const std::size_t n = s_.size();
    if (!(s0_ > 0.0)) throw DataError("data_model", "threshold s0 must be positive");
    if (!(eps0_ >= 0.0)) throw DataError("data_model", "zero-income shift eps0 must be nonnegative");
    if (y_.size() != n || static_cast<std::size_t>(x_.rows()) != n)
        throw DataError("data_model", "column lengths disagree");
    if (ids_.empty()) {
        ids_.reserve(n);
        for (std::size_t i = 0; i < n; ++i) ids_.push_back(std::to_string(i + 1));
    } else if (ids_.size() != n) {
        throw DataError("data_model", "unit id column length disagrees with data");
    }
    if (n == 0) throw DataError("data_model", "empty dataset");
    if (scaling_.names.size() != p()) {
        std::vector<std::string> names;
        for (std::size_t j = 0; j < p(); ++j) names.push_back("x" + std::to_string(j + 1));
        scaling_ = CovariateScaling::identity(std::move(names));
    }

    z_.resize(n);
    log_s_.resize(static_cast<Eigen::Index>(n));
    std::size_t eligible = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(s_[i] >= 0.0)) throw DataError("data_model", "forcing variable must be nonnegative");
        if (y_[i] > 1) throw DataError("data_model", "outcome must be 0 or 1");
        z_[i] = s_[i] <= s0_ ? 1 : 0;
        eligible += z_[i];
        try {
            log_s_[static_cast<Eigen::Index>(i)] = transform_forcing(s_[i], s0_, eps0_);
        } catch (const std::domain_error &e) {
            throw DataError("data_model", std::string("unit ") + ids_[i] + ": " + e.what());
        }
    }
    if (!x_.allFinite()) throw DataError("data_model", "covariates must be finite");
    if (eligible == 0 || eligible == n)
        throw DataError("data_model",
                        "degenerate design: need at least one unit on each side of the threshold");

    design_.resize(static_cast<Eigen::Index>(n), x_.cols() + 1);
    design_.col(0).setOnes();
    design_.rightCols(x_.cols()) = x_;
}

std::size_t ObservedDataset::count_eligible() const noexcept {
    std::size_t c = 0;
    for (auto v : z_) c += v;
    return c;
}

ObservedDataset ObservedDataset::subset(const std::vector<std::size_t> &rows) const {
    std::vector<std::string> ids;
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), x_.cols());
    ids.reserve(rows.size());
    s.reserve(rows.size());
    y.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto i = rows[k];
        ids.push_back(ids_.at(i));
        s.push_back(s_[i]);
        y.push_back(y_[i]);
        x.row(static_cast<Eigen::Index>(k)) = x_.row(static_cast<Eigen::Index>(i));
    }
    return ObservedDataset(std::move(ids), std::move(s), std::move(y), std::move(x), s0_, eps0_,
                           scaling_);
}

namespace {

std::vector<std::string> split_line(const std::string &line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string trim(const std::string &v) {
    const auto b = v.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = v.find_last_not_of(" \t");
    return v.substr(b, e - b + 1);
}

bool parse_double(const std::string &cell, double &out) {
    const std::string t = trim(cell);
    if (t.empty()) return false;
    const char *first = t.data();
    const char *last = t.data() + t.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

IngestResult ingest_stream(std::istream &in, const ColumnSchema &schema,
                           const IngestOptions &options) {
    if (!(options.s0 > 0.0)) throw ConfigError("data_model", "threshold s0 must be positive");
    if (!(options.eps0 >= 0.0)) throw ConfigError("data_model", "eps0 must be nonnegative");

    std::string line;
    if (!std::getline(in, line)) throw DataError("data_model", "input has no header row");
    const auto header = split_line(line, options.delimiter);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < header.size(); ++j) index.emplace(trim(header[j]), j);
    auto column = [&](const std::string &name) -> std::size_t {
        auto it = index.find(name);
        if (it == index.end()) throw DataError("data_model", "schema error: missing column '" + name + "'");
        return it->second;
    };
    const bool has_id = !schema.id.empty();
    const std::size_t id_col = has_id ? column(schema.id) : 0;
    const std::size_t s_col = column(schema.s);
    const std::size_t y_col = column(schema.y);
    std::vector<std::size_t> x_cols;
    for (const auto &name : schema.x) x_cols.push_back(column(name));

    IngestReport report;
    std::vector<std::string> ids;
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    std::vector<double> xs; // row-major
    const std::size_t p = x_cols.size();
    constexpr std::size_t kMaxMessages = 20;
    auto reject = [&](std::size_t lineno, const std::string &why) {
        ++report.rows_rejected;
        if (report.rejections.size() < kMaxMessages)
            report.rejections.push_back("line " + std::to_string(lineno) + ": " + why);
    };

    std::size_t lineno = 1;
    std::vector<double> xrow(p);
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        ++report.rows_read;
        const auto cells = split_line(line, options.delimiter);
        if (cells.size() != header.size()) {
            reject(lineno, "expected " + std::to_string(header.size()) + " fields, found " +
                               std::to_string(cells.size()));
            continue;
        }
        double sv = 0, yv = 0;
        if (!parse_double(cells[s_col], sv) || sv < 0.0) {
            reject(lineno, "invalid forcing value '" + cells[s_col] + "'");
            continue;
        }
        if (!(sv + options.eps0 > 0.0)) {
            reject(lineno, "zero forcing value with eps0 = 0");
            continue;
        }
        if (!parse_double(cells[y_col], yv) || (yv != 0.0 && yv != 1.0)) {
            reject(lineno, "invalid outcome '" + cells[y_col] + "'");
            continue;
        }
        bool ok = true;
        for (std::size_t j = 0; j < p; ++j) {
            if (!parse_double(cells[x_cols[j]], xrow[j])) {
                reject(lineno, "invalid covariate '" + schema.x[j] + "' value '" + cells[x_cols[j]] + "'");
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        if (options.max_s && sv > *options.max_s) {
            ++report.rows_filtered;
            continue;
        }
        ids.push_back(has_id ? trim(cells[id_col]) : std::to_string(lineno - 1));
        s.push_back(sv);
        y.push_back(static_cast<std::uint8_t>(yv));
        xs.insert(xs.end(), xrow.begin(), xrow.end());
    }
    report.rows_accepted = s.size();
    if (s.empty()) throw DataError("data_model", "empty dataset: every row was rejected or filtered");

    const std::size_t n = s.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i * p + j];

    CovariateScaling scaling = CovariateScaling::identity(schema.x);
    for (std::size_t j = 0; j < p; ++j) {
        auto col = x.col(static_cast<Eigen::Index>(j));
        const bool binary = (col.array() == 0.0 || col.array() == 1.0).all();
        scaling.binary[j] = binary;
        if (!options.standardize || binary) continue;
        const double m = col.mean();
        double sd = 0.0;
        if (n > 1) sd = std::sqrt((col.array() - m).square().sum() / static_cast<double>(n - 1));
        if (!(sd > 0.0)) sd = 1.0; // constant column: center only
        col = (col.array() - m) / sd;
        scaling.center[j] = m;
        scaling.scale[j] = sd;
    }

    IngestResult result{ObservedDataset(std::move(ids), std::move(s), std::move(y), std::move(x),
                                        options.s0, options.eps0, std::move(scaling)),
                        std::move(report)};
    return result;
}

GroupSummary summarize_group(const ObservedDataset &data, const std::string &label, int which) {
    GroupSummary g;
    g.label = label;
    std::vector<double> s;
    std::vector<double> sums(data.p(), 0.0);
    std::size_t cases = 0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (which >= 0 && data.z()[i] != which) continue;
        s.push_back(data.s()[i]);
        cases += data.y()[i];
        for (std::size_t j = 0; j < data.p(); ++j)
            sums[j] += data.scaling().to_raw(
                j, data.x()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    const auto count = s.size();
    g.forcing = summarize_values(std::move(s));
    g.covariate_means.resize(data.p());
    for (std::size_t j = 0; j < data.p(); ++j)
        g.covariate_means[j] = count ? sums[j] / static_cast<double>(count) : 0.0;
    g.outcome_rate_per_mil = count ? 1000.0 * static_cast<double>(cases) / static_cast<double>(count) : 0.0;
    return g;
}

} // namespace

IngestResult ingest(const std::filesystem::path &path, const ColumnSchema &schema,
                    const IngestOptions &options) {
    std::ifstream in(path);
    if (!in) throw DataError("data_model", "cannot open data file '" + path.string() + "'");
    return ingest_stream(in, schema, options);
}

IngestResult ingest_text(const std::string &text, const ColumnSchema &schema,
                         const IngestOptions &options) {
    std::istringstream in(text);
    return ingest_stream(in, schema, options);
}

ForcingSummary summarize_values(std::vector<double> values) {
    ForcingSummary f;
    f.n = values.size();
    if (values.empty()) return f;
    std::sort(values.begin(), values.end());
    f.min = values.front();
    f.max = values.back();
    f.q1 = quantile_sorted(values, 0.25);
    f.median = quantile_sorted(values, 0.5);
    f.q3 = quantile_sorted(values, 0.75);
    f.mean = mean(values);
    f.sd = (values.size() > 1 && f.min != f.max) ? std::sqrt(sample_variance(values)) : 0.0;
    return f;
}

DescriptiveSummary summarize(const ObservedDataset &data) {
    DescriptiveSummary out;
    out.covariate_names = data.scaling().names;
    out.overall = summarize_group(data, "overall", -1);
    out.eligible = summarize_group(data, "eligible", 1);
    out.ineligible = summarize_group(data, "ineligible", 0);
    return out;
}

} // namespace rdmix
