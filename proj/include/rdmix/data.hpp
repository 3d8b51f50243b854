#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rdmix {

/// log of the rescaled forcing variable: [log(s + eps0) - log(s0)] / 10.
/// Throws std::domain_error when s + eps0 <= 0 or s0 <= 0.
double transform_forcing(double s, double s0, double eps0);

/// Inverse of transform_forcing: s0 * exp(10 * log_s_tilde) - eps0.
double inverse_transform_forcing(double log_s_tilde, double s0, double eps0);

/// Affine map applied to covariates at ingestion. Binary (0/1) columns are
/// left untouched (center 0, scale 1).
struct CovariateScaling {
    std::vector<std::string> names;
    std::vector<double> center;
    std::vector<double> scale;
    std::vector<bool> binary;

    double to_raw(std::size_t column, double standardized) const {
        return standardized * scale[column] + center[column];
    }
    static CovariateScaling identity(std::vector<std::string> names);
};

/// Units observed in an RD design. Eligibility z is always recomputed from
/// s and s0 (z = 1 iff s <= s0); it is never read from input.
class ObservedDataset {
  public:
    ObservedDataset() = default;
    ObservedDataset(std::vector<std::string> unit_ids, std::vector<double> s,
                    std::vector<std::uint8_t> y, Eigen::MatrixXd x, double s0, double eps0,
                    CovariateScaling scaling = {});

    std::size_t n() const noexcept { return s_.size(); }
    std::size_t p() const noexcept { return static_cast<std::size_t>(x_.cols()); }
    double s0() const noexcept { return s0_; }
    double eps0() const noexcept { return eps0_; }

    const std::vector<std::string> &unit_ids() const noexcept { return ids_; }
    const std::vector<double> &s() const noexcept { return s_; }
    const std::vector<std::uint8_t> &z() const noexcept { return z_; }
    const std::vector<std::uint8_t> &y() const noexcept { return y_; }
    /// Transformed forcing variable per unit.
    const Eigen::VectorXd &log_s() const noexcept { return log_s_; }
    /// n x p covariates on the model scale.
    const Eigen::MatrixXd &x() const noexcept { return x_; }
    /// n x (p+1) design [1, X].
    const Eigen::MatrixXd &design() const noexcept { return design_; }
    const CovariateScaling &scaling() const noexcept { return scaling_; }

    std::size_t count_eligible() const noexcept;

    /// Subset of units, preserving order.
    ObservedDataset subset(const std::vector<std::size_t> &rows) const;

  private:
    std::vector<std::string> ids_;
    std::vector<double> s_;
    std::vector<std::uint8_t> z_;
    std::vector<std::uint8_t> y_;
    Eigen::VectorXd log_s_;
    Eigen::MatrixXd x_;
    Eigen::MatrixXd design_;
    double s0_ = 1.0;
    double eps0_ = 0.0;
    CovariateScaling scaling_;
};

struct ColumnSchema {
    std::string id; // optional; row numbers are used when empty
    std::string s;
    std::string y;
    std::vector<std::string> x;
};

struct IngestOptions {
    double s0 = 0.0;
    double eps0 = 0.5;
    std::optional<double> max_s; // pre-filter: keep units with s <= max_s
    bool standardize = true;
    char delimiter = ',';
};

struct IngestReport {
    std::size_t rows_read = 0;
    std::size_t rows_accepted = 0;
    std::size_t rows_rejected = 0;
    std::size_t rows_filtered = 0;
    /// First few rejection messages, "line N: reason".
    std::vector<std::string> rejections;
};

struct IngestResult {
    ObservedDataset data;
    IngestReport report;
};

IngestResult ingest(const std::filesystem::path &path, const ColumnSchema &schema,
                    const IngestOptions &options);

/// Same as ingest, reading from an in-memory CSV text.
IngestResult ingest_text(const std::string &text, const ColumnSchema &schema,
                         const IngestOptions &options);

struct ForcingSummary {
    std::size_t n = 0;
    double min = 0, q1 = 0, median = 0, mean = 0, q3 = 0, max = 0, sd = 0;
};

struct GroupSummary {
    std::string label;
    ForcingSummary forcing;
    std::vector<double> covariate_means; // raw scale
    double outcome_rate_per_mil = 0;
};

struct DescriptiveSummary {
    std::vector<std::string> covariate_names;
    GroupSummary overall;
    GroupSummary eligible;
    GroupSummary ineligible;
};

ForcingSummary summarize_values(std::vector<double> values);
DescriptiveSummary summarize(const ObservedDataset &data);

} // namespace rdmix
