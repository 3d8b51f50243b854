#include "rdmix/synth.hpp"

#include "rdmix/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace rdmix {

namespace {

bool bernoulli_probit(double eta, RngStream &rng) { return rng.uniform() < std_normal_cdf(eta); }

ParameterState preset_theta(double gamma00, double gamma01, std::array<double, 2> gamma_minus,
                            std::array<double, 2> gamma_plus, Eigen::Vector3d gamma_x) {
    ParameterState t = ParameterState::initial(3, Priors{});
    t.alpha_minus = Eigen::Vector4d(0.52, 0.15, -0.10, 0.10);
    t.alpha_plus = Eigen::Vector4d(0.57, -0.10, 0.10, 0.0);
    t.beta_minus = Eigen::Vector4d(-0.12, 0.010, -0.005, 0.0);
    t.beta = Eigen::Vector4d(0.0, 0.005, 0.005, -0.005);
    t.beta_plus = Eigen::Vector4d(0.12, 0.010, 0.0, 0.005);
    t.sigma2_minus = t.sigma2 = t.sigma2_plus = 0.03 * 0.03;
    t.gamma00 = gamma00;
    t.gamma01 = gamma01;
    t.gamma_minus = gamma_minus;
    t.gamma_plus = gamma_plus;
    t.gamma_x = gamma_x;
    return t;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

} // namespace

SynthResult generate(const ParameterState &theta, const CovariateSpec &covariates, std::size_t n, double s0,
                     const RngStream &rng, const GenerateOptions &options) {
    if (n < 1) throw ConfigError("synth", "n must be at least 1");
    if (covariates.normal < 0 || covariates.bernoulli < 0)
        throw ConfigError("synth", "covariate counts must be nonnegative");
    const std::size_t p = covariates.p();
    if (theta.p() != p || static_cast<std::size_t>(theta.alpha_minus.size()) != p + 1)
        throw ConfigError("synth", "parameter dimensions do not match the covariate recipe");
    if (!(s0 > 0.0)) throw ConfigError("synth", "s0 must be positive");

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    GroundTruth truth;
    truth.theta = theta;
    truth.labels.resize(n);
    truth.y0.assign(n, -1);
    truth.y1.assign(n, -1);
    double mix[3] = {0.0, 0.0, 0.0};
    std::size_t sum_y0 = 0, sum_y1 = 0;

    const std::size_t shard = std::max<std::size_t>(1, options.shard_size);
    for (std::size_t lo = 0; lo < n; lo += shard) {
        RngStream r = rng.substream(lo / shard);
        for (std::size_t i = lo; i < std::min(n, lo + shard); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            for (int j = 0; j < covariates.normal; ++j) x(k, j) = r.normal();
            for (int j = 0; j < covariates.bernoulli; ++j)
                x(k, covariates.normal + j) = r.uniform() < covariates.bernoulli_p ? 1.0 : 0.0;
            const Eigen::VectorXd xi = x.row(k).transpose();
            const auto pi = mixing_probabilities(xi, theta.alpha_minus, theta.alpha_plus);
            mix[0] += pi.minus;
            mix[1] += pi.zero;
            mix[2] += pi.plus;

            Subpop g = Subpop::zero;
            double ls = 0.0;
            std::size_t attempts = 0;
            for (;;) {
                if (++attempts > options.max_attempts_per_unit)
                    throw DataError("synth", "could not place unit " + std::to_string(i + 1) + " on the side of s0 "
                                             "required by its label after " +
                                                 std::to_string(options.max_attempts_per_unit) +
                                                 " draws; the mixing and forcing parameters are inconsistent "
                                                 "with the structural zeros, adjust them");
                const double u = r.uniform();
                g = u < pi.minus ? Subpop::minus : u < pi.minus + pi.plus ? Subpop::plus : Subpop::zero;
                const Eigen::VectorXd &beta = theta.forcing_coefficients(g);
                const double mean = beta[0] + xi.dot(beta.tail(static_cast<Eigen::Index>(p)));
                ls = mean + std::sqrt(theta.forcing_variance(g)) * r.normal();
                const double si = inverse_transform_forcing(ls, s0, options.eps0);
                if (si >= 0.0 && std::isfinite(si) && admissible(g, si <= s0 ? 1 : 0)) {
                    s[i] = si;
                    break;
                }
            }
            truth.attempts += attempts;
            truth.rejections += attempts - 1;
            truth.labels[i] = g;
            ++truth.label_counts[static_cast<std::size_t>(g)];

            const double xg = p ? xi.dot(theta.gamma_x) : 0.0;
            const bool z = s[i] <= s0;
            if (g == Subpop::zero) {
                const bool y0 = bernoulli_probit(theta.gamma00 + xg, r);
                const bool y1 = bernoulli_probit(theta.gamma01 + xg, r);
                truth.y0[i] = y0;
                truth.y1[i] = y1;
                sum_y0 += y0;
                sum_y1 += y1;
                y[i] = z ? y1 : y0;
            } else {
                const auto &gm = g == Subpop::minus ? theta.gamma_minus : theta.gamma_plus;
                y[i] = bernoulli_probit(gm[0] + gm[1] * ls + xg, r);
            }
        }
    }
    const double dn = static_cast<double>(n);
    truth.average_mixing = {mix[0] / dn, mix[1] / dn, mix[2] / dn};
    truth.rr_defined = sum_y0 > 0;
    truth.rr = truth.rr_defined ? static_cast<double>(sum_y1) / static_cast<double>(sum_y0) : std::nan("");

    std::vector<std::string> names;
    for (int j = 0; j < covariates.normal; ++j) names.push_back("x" + std::to_string(j + 1));
    for (int j = 0; j < covariates.bernoulli; ++j) names.push_back("x" + std::to_string(covariates.normal + j + 1));
    auto scaling = CovariateScaling::identity(names);
    for (int j = 0; j < covariates.bernoulli; ++j) scaling.binary[static_cast<std::size_t>(covariates.normal + j)] = true;
    ObservedDataset data({}, std::move(s), std::move(y), std::move(x), s0, options.eps0, std::move(scaling));
    return {std::move(data), std::move(truth)};
}

const std::vector<Scenario> &scenario_library() {
    static const std::vector<Scenario> presets = [] {
        std::vector<Scenario> v;
        v.push_back({"separated",
                     "well-separated forcing distributions, moderate outcome rates, RR about 0.6",
                     preset_theta(-1.0, -1.3, {-1.0, 0.5}, {-1.2, -0.5}, Eigen::Vector3d(0.3, -0.2, 0.2)),
                     CovariateSpec{}, 120.0, 20000});
        v.push_back({"null-effect", "as 'separated' but with equal arm intercepts, so RR = 1",
                     preset_theta(-1.0, -1.0, {-1.0, 0.5}, {-1.2, -0.5}, Eigen::Vector3d(0.3, -0.2, 0.2)),
                     CovariateSpec{}, 120.0, 50000});
        v.push_back({"rare-outcome", "outcome probabilities near 3 per mil in every component",
                     preset_theta(-2.75, -2.85, {-2.75, 0.0}, {-2.75, 0.0}, Eigen::Vector3d(0.05, -0.05, 0.0)),
                     CovariateSpec{}, 120.0, 100000});
        return v;
    }();
    return presets;
}

const Scenario &scenario(const std::string &name) {
    for (const auto &s : scenario_library())
        if (s.name == name) return s;
    std::string known;
    for (const auto &s : scenario_library()) known += (known.empty() ? "" : ", ") + s.name;
    throw ConfigError("synth", "unknown scenario '" + name + "' (known: " + known + ")");
}

void write_synth(const std::filesystem::path &dir, const std::string &stem, const SynthResult &result) {
    std::filesystem::create_directories(dir);
    const auto &d = result.data;
    const auto &t = result.truth;
    {
        std::ofstream f(dir / (stem + ".csv"));
        if (!f) throw DataError("synth", "cannot write " + (dir / (stem + ".csv")).string());
        f << "unit_id,s,y";
        for (const auto &name : d.scaling().names) f << ',' << name;
        f << '\n';
        for (std::size_t i = 0; i < d.n(); ++i) {
            f << d.unit_ids()[i] << ',' << fmt(d.s()[i]) << ',' << int(d.y()[i]);
            for (Eigen::Index j = 0; j < d.x().cols(); ++j) f << ',' << fmt(d.x()(static_cast<Eigen::Index>(i), j));
            f << '\n';
        }
    }
    {
        std::ofstream f(dir / (stem + "_truth.csv"));
        f << "unit_id,label,y0,y1\n";
        auto cell = [](std::int8_t v) { return v < 0 ? std::string() : std::to_string(v); };
        for (std::size_t i = 0; i < d.n(); ++i)
            f << d.unit_ids()[i] << ',' << subpop_name(t.labels[i]) << ',' << cell(t.y0[i]) << ',' << cell(t.y1[i])
              << '\n';
    }
    nlohmann::ordered_json j;
    const auto names = ParameterState::flat_names(t.theta.p());
    const auto values = t.theta.flatten();
    nlohmann::ordered_json params;
    for (std::size_t k = 0; k < names.size(); ++k) params[names[k]] = values[k];
    j["parameters"] = params;
    j["n"] = d.n();
    j["s0"] = d.s0();
    j["eps0"] = d.eps0();
    j["true_rr"] = t.rr_defined ? nlohmann::ordered_json(t.rr) : nlohmann::ordered_json(nullptr);
    j["label_counts"] = {{"U_minus", t.label_counts[0]}, {"U_zero", t.label_counts[1]}, {"U_plus", t.label_counts[2]}};
    j["average_mixing"] = {{"U_minus", t.average_mixing.minus},
                           {"U_zero", t.average_mixing.zero},
                           {"U_plus", t.average_mixing.plus}};
    j["rejections"] = t.rejections;
    j["rejection_rate"] = t.attempts ? static_cast<double>(t.rejections) / static_cast<double>(t.attempts) : 0.0;
    std::ofstream(dir / (stem + "_truth.json")) << j.dump(2) << '\n';
}

} // namespace rdmix
