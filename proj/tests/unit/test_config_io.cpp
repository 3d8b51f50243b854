#include "fixtures.hpp"
#include "rdmix/config.hpp"
#include "rdmix/error.hpp"
#include "rdmix/io.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>

using namespace rdmix;
using nlohmann::json;

namespace {

json minimal() {
    return json::parse(R"({"synth": {"scenario": "separated", "n": 500},
                           "sampler": {"iterations": 20, "burn_in": 5}})");
}

std::string config_error(const json &j) {
    try {
        parse_config(j).validate();
    } catch (const ConfigError &e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_SUITE("config_io") {

TEST_CASE("a minimal configuration parses with defaults") {
    const auto c = parse_config(minimal());
    CHECK(c.synth->scenario == "separated");
    CHECK(*c.synth->n == 500);
    CHECK(c.sampler.iterations == 20);
    CHECK(c.sampler.thinning == 1);
    CHECK(c.priors.df == 3.0);
    CHECK(c.draw_format == DrawFormat::csv);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("unknown keys are rejected with their path") {
    auto j = minimal();
    j["priors"]["bogus"] = 1;
    CHECK(config_error(j).find("priors.bogus") != std::string::npos);
    j = minimal();
    j["analysis"]["windows"] = json::array({{{"bandwidth_left", 10}, {"bandwidth_right", 10}, {"kernal", "uniform"}}});
    CHECK(config_error(j).find("kernal") != std::string::npos);
    j = minimal();
    j["extra"] = true;
    CHECK(config_error(j).find("extra") != std::string::npos);
}

TEST_CASE("cross-field and type checks") {
    auto j = minimal();
    j["sampler"]["burn_in"] = 20;
    CHECK(config_error(j).find("burn_in") != std::string::npos);
    j = minimal();
    j["sampler"]["iterations"] = "many";
    CHECK_FALSE(config_error(j).empty());
    j = minimal();
    j["data"] = {{"path", "x.csv"}, {"s0", 120}, {"columns", {{"s", "s"}, {"y", "y"}}}};
    CHECK(config_error(j).find("exactly one") != std::string::npos);
    j = minimal();
    j["analysis"]["windows"] = json::array({{{"label", "a"}, {"bandwidth_left", 5}, {"bandwidth_right", 5}},
                                            {{"label", "a"}, {"bandwidth_left", 9}, {"bandwidth_right", 9}}});
    CHECK(config_error(j).find("duplicate") != std::string::npos);
    j = minimal();
    j["priors"]["beta_intercept_mean"] = {1.0, 2.0};
    CHECK_FALSE(config_error(j).empty());
    j = minimal();
    j["sampler"]["init"] = "provided";
    CHECK_FALSE(config_error(j).empty());
}

TEST_CASE("window entries") {
    const auto w = parse_window(json::parse(
        R"({"label": "t2", "kernel": "triangular", "order": 2, "bandwidth_left": 120, "bandwidth_right": 45.6})"));
    CHECK(w.kernel == Kernel::triangular);
    CHECK(w.order == 2);
    CHECK(w.bandwidth_right == 45.6);
    CHECK(w.lower_bound(120.0) == 0.0);
    const auto b = parse_window(json::parse(R"({"lower": 100, "upper": 140})"));
    CHECK(*b.lower == 100.0);
    CHECK(b.upper_bound(120.0) == 140.0);
}

TEST_CASE("configuration round-trips through its JSON form") {
    auto j = minimal();
    j["priors"]["sd_gamma"] = 2.5;
    j["analysis"]["windows"] = json::array({{{"label", "u1"}, {"bandwidth_left", 76.5}, {"bandwidth_right", 43.9}}});
    const auto c = parse_config(j);
    const auto again = parse_config(json::parse(config_to_json(c).dump()));
    CHECK(config_to_json(again).dump() == config_to_json(c).dump());
    CHECK(again.priors.sd_gamma == 2.5);
}

TEST_CASE("environment overrides") {
    auto c = parse_config(minimal());
    ::setenv("RDMIX_SEED", "4242", 1);
    ::setenv("RDMIX_THREADS", "3", 1);
    ::setenv("RDMIX_OUT", "/tmp/elsewhere", 1);
    apply_environment(c);
    CHECK(c.sampler.seed == 4242);
    CHECK(c.sampler.threads == 3);
    CHECK(c.output_dir == "/tmp/elsewhere");
    ::setenv("RDMIX_THREADS", "zero", 1);
    CHECK_THROWS_AS(apply_environment(c), ConfigError);
    ::unsetenv("RDMIX_SEED");
    ::unsetenv("RDMIX_THREADS");
    ::unsetenv("RDMIX_OUT");
}

TEST_CASE("draw tables round-trip exactly in both formats") {
    DrawTable t;
    t.columns = {"chain", "iteration", "a", "b"};
    RngStream rng(12, 0);
    for (int r = 0; r < 50; ++r)
        t.rows.push_back({0.0, static_cast<double>(r), rng.normal() * 1e-7, std::exp(rng.normal() * 30.0)});
    t.rows[3][2] = std::numeric_limits<double>::denorm_min();
    t.rows[4][3] = -0.0;
    const auto dir = fx::fresh_dir(RDMIX_TEST_TMP, "tables");
    write_table_csv(dir / "t.csv", t);
    write_table_binary(dir / "t.bin", t);
    CHECK_FALSE(is_binary_table(dir / "t.csv"));
    CHECK(is_binary_table(dir / "t.bin"));
    for (const auto &p : {dir / "t.csv", dir / "t.bin"}) {
        const auto back = read_table(p);
        CHECK(back.columns == t.columns);
        REQUIRE(back.rows.size() == t.rows.size());
        for (std::size_t r = 0; r < t.rows.size(); ++r) CHECK(back.rows[r] == t.rows[r]);
    }
    CHECK(read_table(dir / "t.csv").column("b") == 3);
    CHECK_THROWS_AS(read_table(dir / "t.csv").column("zzz"), DataError);

    // CSV -> binary -> CSV reproduces the file byte for byte.
    write_table_csv(dir / "t2.csv", read_table(dir / "t.bin"));
    CHECK(fx::slurp(dir / "t.csv") == fx::slurp(dir / "t2.csv"));
    CHECK(file_hash(dir / "t.csv") == file_hash(dir / "t2.csv"));
}

TEST_CASE("number formatting") {
    CHECK(format_double(0.5) == "0.5");
    CHECK(std::stod(format_double(0.1 + 0.2)) == 0.1 + 0.2);
    CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
    CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("posterior persistence") {
    const auto d = fx::random_dataset(120, 1, 13);
    SamplerConfig c;
    c.iterations = 30;
    c.burn_in = 10;
    c.membership_stride = 5;
    const auto post = run_chain(d, Priors{}, c, 0);
    const auto dir = fx::fresh_dir(RDMIX_TEST_TMP, "posterior");
    write_posterior(dir, d, post, false);
    const auto back = load_posterior(dir);
    REQUIRE(back.size() == post.size());
    for (std::size_t k = 0; k < post.size(); ++k) {
        CHECK(back.draws[k].theta == post.draws[k].theta);
        CHECK(back.draws[k].score.rr == post.draws[k].score.rr);
    }
    CHECK(back.unit_counts == post.unit_counts);
    CHECK(back.snapshots.size() == post.snapshots.size());
    const auto s = mixture_summary(back);
    for (const char *key : {"draws", "rr", "membership", "membership_by_forcing", "convergence", "diagnostics"})
        CHECK(s.contains(key));
}

} // TEST_SUITE
