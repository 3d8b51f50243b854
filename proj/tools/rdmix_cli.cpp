// rdmix command-line front end.
#include "rdmix/error.hpp"
#include "rdmix/io.hpp"
#include "rdmix/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out;
};

void add_common(CLI::App *app, Common &c, bool needs_config = true) {
    auto *opt = app->add_option("--config", c.config, "JSON run configuration");
    if (needs_config) opt->required();
    app->add_option("--seed", c.seed, "override sampler.seed");
    app->add_option("--threads", c.threads, "override sampler.threads")->check(CLI::PositiveNumber);
    app->add_option("--out", c.out, "override output_dir");
}

// File < environment < flags.
rdmix::RunConfig resolve(const Common &c) {
    rdmix::RunConfig cfg = rdmix::load_config(c.config);
    rdmix::apply_environment(cfg);
    if (c.seed) cfg.sampler.seed = *c.seed;
    if (c.threads) cfg.sampler.threads = *c.threads;
    if (!c.out.empty()) cfg.output_dir = c.out;
    cfg.validate();
    return cfg;
}

std::vector<double> parse_list(const std::string &text, const char *what) {
    std::vector<double> out;
    std::string cell;
    std::istringstream is(text);
    while (std::getline(is, cell, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(cell, &used));
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception &) {
            throw rdmix::ConfigError("cli", std::string(what) + ": '" + cell + "' is not a number");
        }
    }
    return out;
}

void print(const nlohmann::ordered_json &j) { std::cout << j.dump(2) << '\n'; }

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Bayesian mixture analysis of regression-discontinuity designs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(rdmix::kVersion));

    Common run_o, ingest_o, sample_o, balance_o, window_o, synth_o;
    auto *run_cmd = app.add_subcommand("run", "full pipeline: data, sampling, summaries, balance, windows");
    add_common(run_cmd, run_o);
    auto *ingest_cmd = app.add_subcommand("ingest-check", "validate and describe the input data");
    add_common(ingest_cmd, ingest_o);
    auto *sample_cmd = app.add_subcommand("sample", "run the mixture sampler and persist its draws");
    add_common(sample_cmd, sample_o);
    auto *balance_cmd = app.add_subcommand("balance", "balance tables from persisted membership draws");
    add_common(balance_cmd, balance_o);
    auto *window_cmd = app.add_subcommand("window", "fixed-window and local-polynomial analyses");
    add_common(window_cmd, window_o);
    auto *synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset with ground truth");
    add_common(synth_cmd, synth_o, false);
    std::string synth_scenario;
    std::optional<std::size_t> synth_n;
    synth_cmd->add_option("--scenario", synth_scenario, "preset name (separated, null-effect, rare-outcome)");
    synth_cmd->add_option("--n", synth_n, "number of units");

    std::string summarize_dir;
    auto *summarize_cmd = app.add_subcommand("summarize", "summaries from a persisted posterior");
    summarize_cmd->add_option("--out,dir", summarize_dir, "run directory holding the draws")->required();

    std::string estimates, variances;
    auto *combine_cmd = app.add_subcommand("combine", "Rubin's rules for multiply imputed estimates");
    combine_cmd->add_option("--estimates", estimates, "comma-separated point estimates")->required();
    combine_cmd->add_option("--variances", variances, "comma-separated variances")->required();

    std::string conv_in, conv_out, conv_format;
    auto *convert_cmd = app.add_subcommand("convert", "convert a draw file between csv and binary");
    convert_cmd->add_option("input", conv_in)->required()->check(CLI::ExistingFile);
    convert_cmd->add_option("output", conv_out)->required();
    convert_cmd->add_option("--format", conv_format)->check(CLI::IsMember({"csv", "binary"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    std::filesystem::path error_dir;
    try {
        if (run_cmd->parsed()) {
            const auto cfg = resolve(run_o);
            error_dir = cfg.output_dir;
            const auto dir = rdmix::run(cfg);
            std::cout << "run complete: " << dir.string() << '\n';
        } else if (ingest_cmd->parsed()) {
            const auto cfg = resolve(ingest_o);
            error_dir = cfg.output_dir;
            const auto loaded = rdmix::load_dataset(cfg);
            for (const auto &p : rdmix::stage_ingest_check(cfg, loaded)) std::cout << p.string() << '\n';
        } else if (sample_cmd->parsed()) {
            const auto cfg = resolve(sample_o);
            error_dir = cfg.output_dir;
            const auto loaded = rdmix::load_dataset(cfg);
            auto files = rdmix::stage_sample(cfg, loaded);
            rdmix::write_manifest(cfg, loaded, files);
            for (const auto &p : files) std::cout << p.string() << '\n';
        } else if (summarize_cmd->parsed()) {
            error_dir = summarize_dir;
            for (const auto &p : rdmix::stage_summarize(summarize_dir)) std::cout << p.string() << '\n';
        } else if (balance_cmd->parsed()) {
            const auto cfg = resolve(balance_o);
            error_dir = cfg.output_dir;
            const auto loaded = rdmix::load_dataset(cfg);
            for (const auto &p : rdmix::stage_balance(cfg, loaded)) std::cout << p.string() << '\n';
        } else if (window_cmd->parsed()) {
            const auto cfg = resolve(window_o);
            error_dir = cfg.output_dir;
            if (cfg.analysis.windows.empty()) throw rdmix::ConfigError("cli", "config lists no analysis.windows");
            const auto loaded = rdmix::load_dataset(cfg);
            for (const auto &p : rdmix::stage_windows(cfg, loaded)) std::cout << p.string() << '\n';
        } else if (synth_cmd->parsed()) {
            rdmix::RunConfig cfg;
            if (!synth_o.config.empty()) {
                cfg = resolve(synth_o);
            } else {
                if (synth_scenario.empty()) throw rdmix::ConfigError("cli", "synth needs --config or --scenario");
                cfg.synth = rdmix::SynthSection{synth_scenario, synth_n};
                rdmix::apply_environment(cfg);
                if (synth_o.seed) cfg.sampler.seed = *synth_o.seed;
                if (!synth_o.out.empty()) cfg.output_dir = synth_o.out;
                cfg.validate();
            }
            if (!synth_scenario.empty() && cfg.synth) cfg.synth->scenario = synth_scenario;
            if (synth_n && cfg.synth) cfg.synth->n = synth_n;
            cfg.validate();
            error_dir = cfg.output_dir;
            const auto loaded = rdmix::load_dataset(cfg);
            for (const auto &p : rdmix::stage_synth(cfg, loaded)) std::cout << p.string() << '\n';
        } else if (combine_cmd->parsed()) {
            const auto est = parse_list(estimates, "--estimates");
            const auto var = parse_list(variances, "--variances");
            if (est.size() != var.size())
                throw rdmix::ConfigError("cli", "--estimates and --variances need the same length");
            print(rdmix::to_json(rdmix::rubin_combine(est, var)));
        } else if (convert_cmd->parsed()) {
            const auto table = rdmix::read_table(conv_in);
            const bool binary = conv_format.empty() ? conv_out.ends_with(".bin") : conv_format == "binary";
            if (binary) rdmix::write_table_binary(conv_out, table);
            else rdmix::write_table_csv(conv_out, table);
            std::cout << conv_out << '\n';
        }
    } catch (const std::exception &e) {
        const auto j = rdmix::error_json(e);
        std::cerr << j.dump() << '\n';
        if (!error_dir.empty() && std::filesystem::is_directory(error_dir)) {
            try {
                rdmix::write_json(error_dir / "error.json", j);
            } catch (...) {
            }
        }
        return rdmix::exit_code(e);
    }
    return 0;
}
