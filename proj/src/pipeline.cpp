#include "rdmix/pipeline.hpp"

#include "rdmix/error.hpp"
#include "rdmix/io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rdmix {

namespace {

using ojson = nlohmann::ordered_json;

std::filesystem::path out_dir(const RunConfig &c) {
    std::filesystem::create_directories(c.output_dir);
    return c.output_dir;
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd &x, const std::vector<Eigen::Index> &rows) {
    return x(rows, Eigen::all);
}

// Balance between arms of a fixed window; triangular windows use kernel
// weights around s0.
BalanceReport window_balance(const ObservedDataset &data, const WindowSpec &spec, WeightConvention conv) {
    const auto rows = window_rows(data, spec);
    std::vector<Eigen::Index> arm[2];
    for (auto i : rows) arm[data.z()[i]].push_back(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd x0 = rows_of(data.x(), arm[0]), x1 = rows_of(data.x(), arm[1]);
    if (spec.kernel == Kernel::uniform) return balance_report(x0, x1, &data.scaling());
    const double s0 = data.s0();
    const double hl = spec.bandwidth_left > 0.0 ? spec.bandwidth_left : s0 - spec.lower_bound(s0);
    const double hr = spec.bandwidth_right > 0.0 ? spec.bandwidth_right : spec.upper_bound(s0) - s0;
    auto weights = [&](const std::vector<Eigen::Index> &idx) {
        std::vector<double> s;
        for (auto i : idx) s.push_back(data.s()[static_cast<std::size_t>(i)]);
        return triangular_weights(s, s0, hl, hr);
    };
    return weighted_balance(x0, x1, weights(arm[0]), weights(arm[1]), conv, &data.scaling());
}

std::vector<std::size_t> stratum_columns(const ObservedDataset &data, const std::vector<std::string> &names) {
    std::vector<std::size_t> cols;
    for (const auto &name : names) {
        const auto &all = data.scaling().names;
        const auto it = std::find(all.begin(), all.end(), name);
        if (it == all.end()) throw ConfigError("cli", "stratified: unknown covariate '" + name + "'");
        cols.push_back(static_cast<std::size_t>(it - all.begin()));
    }
    return cols;
}

std::string window_row_text(const ojson &w) {
    std::ostringstream os;
    auto num = [](const ojson &v, int digits) {
        if (v.is_null()) return std::string("NA");
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(digits);
        s << v.get<double>();
        return s.str();
    };
    os << w.at("label").get<std::string>() << " (" << w.at("kernel").get<std::string>() << ", p=" << w.at("order")
       << ", " << num(w.at("lower"), 1) << " <= S <= " << num(w.at("upper"), 1) << ")\n";
    os << "  N " << w.at("n") << ", z=0 " << w.at("n_ineligible") << ", z=1 " << w.at("n_eligible") << "\n";
    if (w.contains("bayes")) {
        const auto &b = w.at("bayes");
        os << "  Bayesian RR median " << num(b.at("median"), 3) << "  95% PCI [" << num(b.at("pct_2_5"), 3) << ", "
           << num(b.at("pct_97_5"), 3) << "]  width " << num(b.at("interval_width"), 3) << "  Pr(RR<1) "
           << num(b.at("prob_below_1"), 3) << "\n";
    }
    if (w.contains("local_polynomial")) {
        const auto &l = w.at("local_polynomial");
        if (l.contains("error")) os << "  local polynomial: " << l.at("error").get<std::string>() << "\n";
        else
            os << "  local polynomial p0 " << num(l.at("p0_hat"), 5) << "  p1 " << num(l.at("p1_hat"), 5) << "  RR "
               << num(l.at("rr"), 5) << "  ATE " << num(l.at("ate"), 5)
               << (l.at("out_of_range").get<bool>() ? "  (outside [0,1])" : "") << "\n";
    }
    if (w.contains("stratified")) {
        const auto &s = w.at("stratified");
        if (s.contains("error")) os << "  stratified: " << s.at("error").get<std::string>() << "\n";
        else os << "  stratified RR " << num(s.at("rr"), 4) << " over " << s.at("strata") << " strata\n";
    }
    return os.str();
}

} // namespace

LoadedData load_dataset(const RunConfig &config) {
    LoadedData out;
    if (config.data) {
        auto res = ingest(config.data->path, config.data->columns, config.data->options);
        out.data = std::move(res.data);
        out.report = std::move(res.report);
        out.source = config.data->path.string();
        return out;
    }
    const Scenario &sc = scenario(config.synth->scenario);
    const std::size_t n = config.synth->n.value_or(sc.n);
    // Stream 0xDA7A keeps the dataset independent of the chain streams.
    auto res = generate(sc.theta, sc.covariates, n, sc.s0, RngStream(config.sampler.seed, 0xDA7A));
    out.data = std::move(res.data);
    out.truth = std::move(res.truth);
    out.source = "synth:" + sc.name;
    return out;
}

std::vector<std::filesystem::path> stage_ingest_check(const RunConfig &config, const LoadedData &loaded) {
    const auto dir = out_dir(config);
    ojson j;
    j["source"] = loaded.source;
    j["n"] = loaded.data.n();
    j["p"] = loaded.data.p();
    j["s0"] = loaded.data.s0();
    j["eps0"] = loaded.data.eps0();
    if (loaded.report) j["ingest"] = to_json(*loaded.report);
    j["descriptive"] = to_json(summarize(loaded.data));
    const auto &sc = loaded.data.scaling();
    ojson scaling = ojson::array();
    for (std::size_t k = 0; k < sc.names.size(); ++k)
        scaling.push_back({{"name", sc.names[k]}, {"center", sc.center[k]}, {"scale", sc.scale[k]}, {"binary", bool(sc.binary[k])}});
    j["covariate_scaling"] = scaling;
    write_json(dir / "ingest_report.json", j);
    return {dir / "ingest_report.json"};
}

std::vector<std::filesystem::path> stage_synth(const RunConfig &config, const LoadedData &loaded) {
    if (!loaded.truth) throw ConfigError("cli", "synth needs a 'synth' section in the config");
    const auto dir = out_dir(config);
    write_synth(dir, "synth", SynthResult{loaded.data, *loaded.truth});
    return {dir / "synth.csv", dir / "synth_truth.csv", dir / "synth_truth.json"};
}

std::vector<std::filesystem::path> stage_sample(const RunConfig &config, const LoadedData &loaded) {
    const auto dir = out_dir(config);
    std::filesystem::remove(dir / "PARTIAL");
    const PosteriorDraws draws = run_chains(loaded.data, config.priors, config.sampler);
    auto written = write_posterior(dir, loaded.data, draws, config.draw_format == DrawFormat::binary);
    if (draws.partial) {
        write_text(dir / "PARTIAL", draws.failure + "\n");
        throw NumericError("mixture_gibbs", "sampling stopped early (" + draws.failure +
                                                "); draws up to the failure are in " + dir.string());
    }
    return written;
}

std::vector<std::filesystem::path> stage_summarize(const std::filesystem::path &dir) {
    const PosteriorDraws draws = load_posterior(dir);
    const ojson summary = mixture_summary(draws);
    write_json(dir / "summary.json", summary);
    write_text(dir / "summary.txt", mixture_summary_text(summary));
    write_density(dir / "rr_density.csv", draws.rr());
    {
        std::ostringstream os;
        os << "lower,upper,units,median,sd\n";
        for (const auto &r : membership_table(draws))
            os << format_double(r.lower) << ',' << format_double(r.upper) << ',' << r.units << ','
               << (r.median ? format_double(*r.median) : "") << ',' << (r.sd ? format_double(*r.sd) : "") << '\n';
        write_text(dir / "membership_by_forcing.csv", os.str());
    }
    return {dir / "summary.json", dir / "summary.txt", dir / "rr_density.csv", dir / "membership_by_forcing.csv"};
}

std::vector<std::filesystem::path> stage_balance(const RunConfig &config, const LoadedData &loaded) {
    const auto dir = out_dir(config);
    std::vector<std::pair<std::string, BalanceReport>> reports;
    if (loaded.data.p() == 0) throw ConfigError("balance", "balance diagnostics need at least one covariate");

    // Everyone: eligible vs ineligible without any subpopulation selection.
    {
        std::vector<Eigen::Index> arm[2];
        for (std::size_t i = 0; i < loaded.data.n(); ++i) arm[loaded.data.z()[i]].push_back(static_cast<Eigen::Index>(i));
        reports.emplace_back("all_units", balance_report(rows_of(loaded.data.x(), arm[0]),
                                                         rows_of(loaded.data.x(), arm[1]), &loaded.data.scaling()));
    }
    if (config.analysis.mixture && std::filesystem::exists(dir / "posterior.json")) {
        const PosteriorDraws draws = load_posterior(dir);
        if (draws.n != loaded.data.n())
            throw DataError("balance", "persisted membership draws do not match the dataset size");
        std::vector<std::vector<Subpop>> memberships;
        for (const auto &s : draws.snapshots) memberships.push_back(s.labels);
        if (memberships.empty()) throw DataError("balance", "no membership draws were stored (membership_stride = 0?)");
        reports.emplace_back("U_zero_posterior", posterior_balance(loaded.data, memberships));
    }
    for (const auto &w : config.analysis.windows)
        reports.emplace_back(w.label, window_balance(loaded.data, w, config.analysis.balance.weights));

    ojson j = ojson::object();
    std::string text;
    for (const auto &[name, r] : reports) {
        j[name] = to_json(r);
        text += balance_table_text(r, name) + "\n";
    }
    write_json(dir / "balance.json", j);
    write_text(dir / "balance.txt", text);
    write_love_plot(dir / "love_plot.csv", reports);
    return {dir / "balance.json", dir / "balance.txt", dir / "love_plot.csv"};
}

std::vector<std::filesystem::path> stage_windows(const RunConfig &config, const LoadedData &loaded) {
    const auto dir = out_dir(config);
    std::vector<std::filesystem::path> written;
    ojson rows = ojson::array();
    std::string text;
    const auto &data = loaded.data;
    for (const auto &spec : config.analysis.windows) {
        ojson w;
        w["label"] = spec.label;
        w["kernel"] = kernel_name(spec.kernel);
        w["order"] = spec.order;
        w["bandwidth_left"] = spec.bandwidth_left;
        w["bandwidth_right"] = spec.bandwidth_right;
        w["lower"] = spec.lower_bound(data.s0());
        w["upper"] = spec.upper_bound(data.s0());
        const auto idx = window_rows(data, spec);
        std::size_t elig = 0;
        for (auto i : idx) elig += data.z()[i];
        w["n"] = idx.size();
        w["n_ineligible"] = idx.size() - elig;
        w["n_eligible"] = elig;

        const WindowDraws wd = fixed_window_sampler(data, spec, config.priors, config.sampler);
        w["bayes"] = to_json(wd.summary);
        const auto path = dir / ("window_" + spec.label + (config.draw_format == DrawFormat::binary ? ".bin" : ".csv"));
        if (config.draw_format == DrawFormat::binary) write_table_binary(path, window_draw_table(wd));
        else write_table_csv(path, window_draw_table(wd));
        written.push_back(path);

        if (config.analysis.local_polynomial) {
            try {
                w["local_polynomial"] = to_json(local_polynomial_rd(data, spec));
            } catch (const DataError &e) {
                w["local_polynomial"] = {{"error", e.what()}};
            }
        }
        if (config.analysis.stratified.enabled) {
            std::vector<std::size_t> rows(idx.begin(), idx.end());
            try {
                w["stratified"] = to_json(stratified_estimator(data.subset(rows),
                                                               stratum_columns(data, config.analysis.stratified.columns),
                                                               config.analysis.stratified.weighting));
            } catch (const DataError &e) {
                w["stratified"] = {{"error", e.what()}};
            }
        }
        text += window_row_text(w) + "\n";
        rows.push_back(std::move(w));
    }
    write_json(dir / "windows.json", rows);
    write_text(dir / "windows.txt", text);
    written.push_back(dir / "windows.json");
    written.push_back(dir / "windows.txt");
    return written;
}

std::vector<std::filesystem::path> stage_imputation(const RunConfig &config, const LoadedData &loaded) {
    const auto dir = out_dir(config);
    const PosteriorDraws draws = load_posterior(dir);
    const auto &mi = config.analysis.imputation;
    const auto imps = export_membership_imputations(draws, mi.m, mi.stride);
    auto written = write_membership_imputations(dir / "imputations", loaded.data, imps);

    // Completed-membership estimate per imputation: the U_zero risk
    // difference between arms with its binomial variance.
    std::vector<double> est, var;
    ojson per = ojson::array();
    for (const auto &imp : imps) {
        double n[2] = {0, 0}, events[2] = {0, 0};
        for (std::size_t i = 0; i < imp.labels.size(); ++i) {
            if (imp.labels[i] != Subpop::zero) continue;
            n[loaded.data.z()[i]] += 1.0;
            events[loaded.data.z()[i]] += loaded.data.y()[i];
        }
        if (n[0] < 1 || n[1] < 1) throw DataError("fixed_window", "an imputed U_zero lacks one arm");
        const double p0 = events[0] / n[0], p1 = events[1] / n[1];
        est.push_back(p1 - p0);
        var.push_back(p0 * (1 - p0) / n[0] + p1 * (1 - p1) / n[1]);
        per.push_back({{"chain", imp.chain}, {"iteration", imp.iteration}, {"n_ineligible", n[0]}, {"n_eligible", n[1]},
                       {"risk_difference", est.back()}, {"variance", var.back()}});
    }
    ojson j;
    j["estimand"] = "risk difference (z=1 minus z=0) within imputed U_zero";
    j["imputations"] = per;
    j["combined"] = to_json(rubin_combine(est, var));
    write_json(dir / "imputation_combined.json", j);
    written.push_back(dir / "imputation_combined.json");
    return written;
}

void write_manifest(const RunConfig &config, const LoadedData &loaded,
                    const std::vector<std::filesystem::path> &outputs) {
    const auto dir = out_dir(config);
    const auto echo = config_to_json(config);
    ojson m;
    m["tool"] = "rdmix";
    m["version"] = kVersion;
    m["seed"] = config.sampler.seed;
    m["config"] = echo;
    m["config_hash"] = hex64(fnv1a64(echo.dump()));
    ojson data;
    data["source"] = loaded.source;
    data["n"] = loaded.data.n();
    data["p"] = loaded.data.p();
    if (config.data) data["fnv1a64"] = hex64(file_hash(config.data->path));
    m["data"] = data;
    ojson files = ojson::object();
    std::vector<std::filesystem::path> sorted = outputs;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (const auto &p : sorted)
        if (std::filesystem::is_regular_file(p))
            files[std::filesystem::relative(p, dir).generic_string()] = hex64(file_hash(p));
    m["outputs"] = files;
    write_json(dir / "run_manifest.json", m);
}

std::filesystem::path run(const RunConfig &config) {
    config.validate();
    const auto dir = out_dir(config);
    std::filesystem::remove(dir / "error.json");
    write_json(dir / "config.json", config_to_json(config));
    const LoadedData loaded = load_dataset(config);
    std::vector<std::filesystem::path> outputs{dir / "config.json"};
    auto add = [&](std::vector<std::filesystem::path> v) { outputs.insert(outputs.end(), v.begin(), v.end()); };
    add(stage_ingest_check(config, loaded));
    if (loaded.truth) add(stage_synth(config, loaded));
    try {
        if (config.analysis.mixture) {
            add(stage_sample(config, loaded));
            add(stage_summarize(dir));
        }
        if (config.analysis.balance.enabled && loaded.data.p() > 0) add(stage_balance(config, loaded));
        if (!config.analysis.windows.empty()) add(stage_windows(config, loaded));
        if (config.analysis.mixture && config.analysis.imputation.enabled) add(stage_imputation(config, loaded));
    } catch (...) {
        write_manifest(config, loaded, outputs);
        throw;
    }
    write_manifest(config, loaded, outputs);
    return dir;
}

nlohmann::ordered_json error_json(const std::exception &e) {
    ojson j;
    if (const auto *err = dynamic_cast<const Error *>(&e)) {
        j["error"] = {{"kind", err->kind()}, {"module", err->module()}, {"message", err->what()}};
    } else {
        j["error"] = {{"kind", "internal"}, {"module", "unknown"}, {"message", e.what()}};
    }
    j["exit_code"] = exit_code(e);
    return j;
}

int exit_code(const std::exception &e) {
    if (dynamic_cast<const ConfigError *>(&e)) return 2;
    if (dynamic_cast<const DataError *>(&e)) return 3;
    if (dynamic_cast<const NumericError *>(&e)) return 4;
    return 1;
}

} // namespace rdmix
