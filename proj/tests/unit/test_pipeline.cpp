#include "fixtures.hpp"
#include "rdmix/error.hpp"
#include "rdmix/io.hpp"
#include "rdmix/pipeline.hpp"

#include <doctest.h>

using namespace rdmix;
using nlohmann::json;

namespace {

const std::string kCli = RDMIX_CLI_PATH;

json small_run(const std::filesystem::path &out) {
    auto j = json::parse(R"({
        "synth": {"scenario": "separated", "n": 2000},
        "sampler": {"iterations": 60, "burn_in": 20, "chains": 2, "seed": 5, "membership_stride": 5},
        "analysis": {
            "windows": [
                {"label": "uniform_p1", "kernel": "uniform", "order": 1, "bandwidth_left": 76.5, "bandwidth_right": 43.9},
                {"label": "triangular_p1", "kernel": "triangular", "order": 1, "bandwidth_left": 81.0, "bandwidth_right": 54.5},
                {"label": "uniform_p2", "kernel": "uniform", "order": 2, "bandwidth_left": 120, "bandwidth_right": 46.0},
                {"label": "triangular_p2", "kernel": "triangular", "order": 2, "bandwidth_left": 120, "bandwidth_right": 45.6}
            ],
            "local_polynomial": true,
            "imputation": {"enabled": true, "m": 3, "stride": 1}
        }
    })");
    j["output_dir"] = out.string();
    return j;
}

std::filesystem::path write_config(const std::filesystem::path &dir, const json &j) {
    const auto p = dir / "config_in.json";
    fx::spit(p, j.dump(2));
    return p;
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("end-to-end run on a synthetic preset") {
    const auto root = fx::fresh_dir(RDMIX_TEST_TMP, "pipeline_run");
    const auto out = root / "out";
    const auto dir = run(parse_config(small_run(out)));
    CHECK(dir == out);
    for (const char *f : {"config.json", "ingest_report.json", "synth.csv", "draws.csv", "posterior.json",
                          "summary.json", "summary.txt", "balance.json", "windows.json", "run_manifest.json",
                          "imputation_combined.json"})
        CHECK_MESSAGE(std::filesystem::exists(out / f), f);
    const auto summary = json::parse(fx::slurp(out / "summary.json"));
    CHECK(summary["draws"] == 80);
    CHECK(summary["rr"].contains("median"));
    CHECK(summary["membership"].contains("pi_zero"));
    CHECK(summary["membership_by_forcing"].is_array());
    CHECK(summary["diagnostics"]["structural_violations"] == 0);
    const auto text = fx::slurp(out / "summary.txt");
    CHECK(text.find("RR") != std::string::npos);

    const auto windows = json::parse(fx::slurp(out / "windows.json"));
    REQUIRE(windows.size() == 4);
    CHECK(windows[3]["label"] == "triangular_p2");
    CHECK(windows[3]["bandwidth_right"] == 45.6);
    CHECK(windows[0]["local_polynomial"].contains("p0_hat"));

    // Same config and seed: byte-identical draws.
    const auto draws = fx::slurp(out / "draws.csv");
    run(parse_config(small_run(out)));
    CHECK(fx::slurp(out / "draws.csv") == draws);
    CHECK_FALSE(std::filesystem::exists(out / "error.json"));
}

TEST_CASE("summaries can be rebuilt from persisted draws") {
    const auto root = fx::fresh_dir(RDMIX_TEST_TMP, "pipeline_summarize");
    auto j = small_run(root / "out");
    j["analysis"] = {{"balance", {{"enabled", false}}}};
    run(parse_config(j));
    const auto before = fx::slurp(root / "out" / "summary.json");
    std::filesystem::remove(root / "out" / "summary.json");
    stage_summarize(root / "out");
    CHECK(fx::slurp(root / "out" / "summary.json") == before);
}

TEST_CASE("error classification") {
    CHECK(exit_code(ConfigError("cli", "x")) == 2);
    CHECK(exit_code(DataError("cli", "x")) == 3);
    CHECK(exit_code(NumericError("cli", "x")) == 4);
    CHECK(exit_code(std::runtime_error("x")) == 1);
    const auto j = error_json(DataError("ingest", "bad row"));
    CHECK(j["error"]["kind"] == "data");
    CHECK(j["exit_code"] == 3);
}

TEST_CASE("command-line exit codes and outputs") {
    const auto root = fx::fresh_dir(RDMIX_TEST_TMP, "pipeline_cli");
    const std::string quiet = " >" + (root / "stdout.txt").string() + " 2>" + (root / "stderr.txt").string();

    // Unknown config key: configuration error.
    auto bad = small_run(root / "bad");
    bad["sampler"]["bogus"] = 1;
    CHECK(fx::shell(kCli + " run --config " + write_config(root, bad).string() + quiet) == 2);
    CHECK(fx::slurp(root / "stderr.txt").find("bogus") != std::string::npos);

    // Input file without eligible units: data error.
    fx::spit(root / "one_side.csv", "id,s,y\n1,150,0\n2,160,1\n3,170,0\n");
    json data = {{"data", {{"path", (root / "one_side.csv").string()}, {"s0", 120}, {"columns", {{"id", "id"}, {"s", "s"}, {"y", "y"}}}}},
                 {"output_dir", (root / "data_out").string()}};
    CHECK(fx::shell(kCli + " ingest-check --config " + write_config(root, data).string() + quiet) == 3);

    CHECK(fx::shell(kCli + " combine --estimates 1.0,1.2,1.4 --variances 0.04,0.04,0.04" + quiet) == 0);
    const auto combined = json::parse(fx::slurp(root / "stdout.txt"));
    CHECK(combined["point"].get<double>() == doctest::Approx(1.2));
    CHECK(combined["total_variance"].get<double>() == doctest::Approx(0.0933333333333333));
    CHECK(fx::shell(kCli + " combine --estimates 1.0 --variances 0.04" + quiet) == 2);

    CHECK(fx::shell(kCli + " synth --scenario null-effect --n 300 --seed 3 --out " + (root / "s1").string() + quiet) == 0);
    CHECK(fx::shell(kCli + " synth --scenario null-effect --n 300 --seed 3 --out " + (root / "s2").string() + quiet) == 0);
    CHECK(fx::slurp(root / "s1" / "synth.csv") == fx::slurp(root / "s2" / "synth.csv"));
    CHECK(fx::shell(kCli + " synth --scenario nope --out " + (root / "s3").string() + quiet) == 2);

    auto win = small_run(root / "win");
    CHECK(fx::shell(kCli + " window --config " + write_config(root, win).string() + quiet) == 0);
    CHECK(json::parse(fx::slurp(root / "win" / "windows.json")).size() == 4);

    CHECK(fx::shell(kCli + " sample --config " + write_config(root, small_run(root / "smp")).string() + quiet) == 0);
    CHECK(fx::shell(kCli + " convert " + (root / "smp" / "draws.csv").string() + " " + (root / "d.bin").string() +
                    " --format binary" + quiet) == 0);
    CHECK(fx::shell(kCli + " convert " + (root / "d.bin").string() + " " + (root / "d.csv").string() + quiet) == 0);
    CHECK(fx::slurp(root / "d.csv") == fx::slurp(root / "smp" / "draws.csv"));
    CHECK(fx::shell(kCli + " summarize " + (root / "smp").string() + quiet) == 0);
    CHECK(std::filesystem::exists(root / "smp" / "summary.json"));

    CHECK(fx::shell(kCli + " frobnicate" + quiet) == 2);
}

} // TEST_SUITE
