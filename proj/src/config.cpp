#include "rdmix/config.hpp"

#include "rdmix/error.hpp"
#include "rdmix/synth.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace rdmix {

namespace {

using json = nlohmann::json;

// Walks one object of the tree, remembering which keys were read so that
// anything left over can be reported as unknown.
class Section {
  public:
    Section(const json &node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) fail("", "must be an object");
    }

    bool has(const std::string &key) const { return node_.contains(key) && !node_.at(key).is_null(); }

    const json &raw(const std::string &key) {
        seen_.insert(key);
        return node_.at(key);
    }

    Section child(const std::string &key) { return Section(raw(key), join(key)); }

    template <class T> void read(const std::string &key, T &out) {
        if (!node_.contains(key)) return;
        const json &v = raw(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw std::invalid_argument("expected true or false");
            } else if constexpr (std::is_arithmetic_v<T>) {
                if (!v.is_number()) throw std::invalid_argument("expected a number");
                if constexpr (std::is_integral_v<T>) {
                    if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
                    if constexpr (std::is_unsigned_v<T>)
                        if (v.get<long long>() < 0) throw std::invalid_argument("expected a nonnegative integer");
                }
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw std::invalid_argument("expected a string");
            }
            out = v.get<T>();
        } catch (const std::exception &e) {
            fail(key, e.what());
        }
    }

    template <class T> std::optional<T> optional(const std::string &key) {
        if (!has(key)) {
            if (node_.contains(key)) seen_.insert(key);
            return std::nullopt;
        }
        T v{};
        read(key, v);
        return v;
    }

    void finish() const {
        for (auto it = node_.begin(); it != node_.end(); ++it)
            if (!seen_.count(it.key())) fail(it.key(), "unknown key");
    }

    [[noreturn]] void fail(const std::string &key, const std::string &what) const {
        throw ConfigError("cli", "config " + (key.empty() ? path_ : join(key)) + ": " + what);
    }

    std::string join(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

  private:
    const json &node_;
    std::string path_;
    std::set<std::string> seen_;
};

DataSection parse_data(Section s) {
    DataSection d;
    std::string path;
    s.read("path", path);
    if (path.empty()) s.fail("path", "is required");
    d.path = path;
    if (!s.has("columns")) s.fail("columns", "is required");
    {
        Section c = s.child("columns");
        c.read("id", d.columns.id);
        c.read("s", d.columns.s);
        c.read("y", d.columns.y);
        c.read("x", d.columns.x);
        if (d.columns.s.empty() || d.columns.y.empty()) c.fail("", "needs the 's' and 'y' column names");
        c.finish();
    }
    if (!s.has("s0")) s.fail("s0", "is required");
    s.read("s0", d.options.s0);
    s.read("eps0", d.options.eps0);
    d.options.max_s = s.optional<double>("max_s");
    s.read("standardize", d.options.standardize);
    std::string delim = ",";
    s.read("delimiter", delim);
    if (delim == "\\t" || delim == "tab") delim = "\t";
    if (delim.size() != 1) s.fail("delimiter", "must be a single character");
    d.options.delimiter = delim[0];
    s.finish();
    return d;
}

Priors parse_priors(Section s) {
    Priors p;
    s.read("sd_alpha", p.sd_alpha);
    s.read("sd_gamma", p.sd_gamma);
    s.read("var_beta", p.var_beta);
    s.read("df", p.df);
    s.read("scale", p.scale);
    if (s.has("beta_intercept_mean")) {
        std::vector<double> m;
        s.read("beta_intercept_mean", m);
        if (m.size() != 3) s.fail("beta_intercept_mean", "needs three values (U_minus, U_zero, U_plus)");
        p.beta_intercept_mean = {m[0], m[1], m[2]};
    }
    s.finish();
    try {
        p.validate();
    } catch (const Error &e) {
        s.fail("", e.what());
    }
    return p;
}

InitStrategy init_from_name(const std::string &name, const Section &s) {
    if (name == "random") return InitStrategy::random;
    if (name == "all_zero") return InitStrategy::all_zero;
    s.fail("init", "expected 'random' or 'all_zero'");
}

std::string init_name(InitStrategy i) {
    switch (i) {
    case InitStrategy::random: return "random";
    case InitStrategy::all_zero: return "all_zero";
    default: return "provided";
    }
}

SamplerConfig parse_sampler(Section s) {
    SamplerConfig c;
    s.read("iterations", c.iterations);
    s.read("burn_in", c.burn_in);
    s.read("thinning", c.thinning);
    s.read("chains", c.chains);
    s.read("seed", c.seed);
    if (s.has("init")) {
        std::string init;
        s.read("init", init);
        c.init = init_from_name(init, s);
    }
    s.read("rr_guard", c.rr_guard);
    s.read("membership_stride", c.membership_stride);
    s.read("loglik_check_stride", c.loglik_check_stride);
    s.read("shard_size", c.shard_size);
    s.read("threads", c.threads);
    s.read("bin_width", c.bin_width);
    s.finish();
    try {
        c.validate();
    } catch (const Error &e) {
        s.fail("", e.what());
    }
    return c;
}

WindowSpec parse_window(Section s, std::size_t index) {
    WindowSpec w;
    w.label = "window" + std::to_string(index + 1);
    s.read("label", w.label);
    w.lower = s.optional<double>("lower");
    w.upper = s.optional<double>("upper");
    if (s.has("kernel")) {
        std::string k;
        s.read("kernel", k);
        try {
            w.kernel = kernel_from_name(k);
        } catch (const Error &e) {
            s.fail("kernel", e.what());
        }
    }
    s.read("order", w.order);
    s.read("bandwidth_left", w.bandwidth_left);
    s.read("bandwidth_right", w.bandwidth_right);
    s.finish();
    return w;
}

AnalysisSection parse_analysis(Section s) {
    AnalysisSection a;
    s.read("mixture", a.mixture);
    if (s.has("balance")) {
        Section b = s.child("balance");
        b.read("enabled", a.balance.enabled);
        if (b.has("weights")) {
            std::string w;
            b.read("weights", w);
            if (w == "reliability") a.balance.weights = WeightConvention::reliability;
            else if (w == "frequency") a.balance.weights = WeightConvention::frequency;
            else b.fail("weights", "expected 'reliability' or 'frequency'");
        }
        b.finish();
    }
    if (s.has("windows")) {
        const json &list = s.raw("windows");
        if (!list.is_array()) s.fail("windows", "must be a list");
        for (std::size_t k = 0; k < list.size(); ++k)
            a.windows.push_back(parse_window(Section(list[k], s.join("windows[" + std::to_string(k) + "]")), k));
    }
    s.read("local_polynomial", a.local_polynomial);
    if (s.has("imputation")) {
        Section m = s.child("imputation");
        m.read("enabled", a.imputation.enabled);
        m.read("m", a.imputation.m);
        m.read("stride", a.imputation.stride);
        if (a.imputation.m < 2) m.fail("m", "must be at least 2");
        if (a.imputation.stride < 1) m.fail("stride", "must be at least 1");
        m.finish();
    }
    if (s.has("stratified")) {
        Section st = s.child("stratified");
        st.read("enabled", a.stratified.enabled);
        st.read("columns", a.stratified.columns);
        if (st.has("weighting")) {
            std::string w;
            st.read("weighting", w);
            if (w == "equal") a.stratified.weighting = StratumWeighting::equal;
            else if (w == "population") a.stratified.weighting = StratumWeighting::population;
            else st.fail("weighting", "expected 'equal' or 'population'");
        }
        st.finish();
    }
    s.finish();
    return a;
}

std::optional<long long> env_integer(const char *name) {
    const char *v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    char *end = nullptr;
    errno = 0;
    const long long out = std::strtoll(v, &end, 10);
    if (errno || *end != '\0') throw ConfigError("cli", std::string("environment variable ") + name + " is not an integer");
    return out;
}

} // namespace

void RunConfig::validate() const {
    if (data.has_value() == synth.has_value())
        throw ConfigError("cli", "config needs exactly one of 'data' or 'synth'");
    priors.validate();
    sampler.validate();
    if (synth) scenario(synth->scenario);
    if (synth && synth->n && *synth->n < 1) throw ConfigError("cli", "config synth.n must be positive");
    if (data && !(data->options.s0 > 0.0)) throw ConfigError("cli", "config data.s0 must be positive");
    if (data && data->options.eps0 < 0.0) throw ConfigError("cli", "config data.eps0 must be nonnegative");
    const double s0 = data ? data->options.s0 : scenario(synth->scenario).s0;
    std::set<std::string> labels;
    for (const auto &w : analysis.windows) {
        w.validate(s0);
        if (!labels.insert(w.label).second) throw ConfigError("cli", "duplicate window label '" + w.label + "'");
    }
    if (analysis.imputation.enabled && !analysis.mixture)
        throw ConfigError("cli", "membership imputation export needs the mixture analysis");
    if (analysis.imputation.enabled && sampler.membership_stride == 0)
        throw ConfigError("cli", "membership imputation export needs sampler.membership_stride > 0");
    if (output_dir.empty()) throw ConfigError("cli", "config output_dir must not be empty");
}

Priors parse_priors(const nlohmann::json &tree) { return parse_priors(Section(tree, "priors")); }

SamplerConfig parse_sampler(const nlohmann::json &tree) { return parse_sampler(Section(tree, "sampler")); }

WindowSpec parse_window(const nlohmann::json &tree) { return parse_window(Section(tree, "window"), 0); }

RunConfig parse_config(const nlohmann::json &tree) {
    Section root(tree, "");
    RunConfig c;
    if (root.has("data")) c.data = parse_data(root.child("data"));
    if (root.has("synth")) {
        Section s = root.child("synth");
        SynthSection syn;
        s.read("scenario", syn.scenario);
        if (syn.scenario.empty()) s.fail("scenario", "is required");
        syn.n = s.optional<std::size_t>("n");
        s.finish();
        c.synth = syn;
    }
    if (root.has("priors")) c.priors = parse_priors(root.child("priors"));
    if (root.has("sampler")) c.sampler = parse_sampler(root.child("sampler"));
    if (root.has("analysis")) c.analysis = parse_analysis(root.child("analysis"));
    if (root.has("output_dir")) {
        std::string out;
        root.read("output_dir", out);
        c.output_dir = out;
    }
    if (root.has("draw_format")) {
        std::string f;
        root.read("draw_format", f);
        if (f == "csv") c.draw_format = DrawFormat::csv;
        else if (f == "binary") c.draw_format = DrawFormat::binary;
        else root.fail("draw_format", "expected 'csv' or 'binary'");
    }
    root.finish();
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cli", "cannot open config file " + path.string());
    json tree;
    try {
        tree = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error &e) {
        throw ConfigError("cli", "config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(tree);
}

nlohmann::ordered_json config_to_json(const RunConfig &c) {
    nlohmann::ordered_json j;
    if (c.data) {
        const auto &d = *c.data;
        j["data"]["path"] = d.path.string();
        j["data"]["columns"] = {{"id", d.columns.id}, {"s", d.columns.s}, {"y", d.columns.y}, {"x", d.columns.x}};
        j["data"]["s0"] = d.options.s0;
        j["data"]["eps0"] = d.options.eps0;
        j["data"]["max_s"] = d.options.max_s ? nlohmann::ordered_json(*d.options.max_s) : nullptr;
        j["data"]["standardize"] = d.options.standardize;
        j["data"]["delimiter"] = std::string(1, d.options.delimiter);
    }
    if (c.synth) {
        j["synth"]["scenario"] = c.synth->scenario;
        j["synth"]["n"] = c.synth->n ? *c.synth->n : scenario(c.synth->scenario).n;
    }
    const auto &p = c.priors;
    j["priors"] = {{"sd_alpha", p.sd_alpha},
                   {"sd_gamma", p.sd_gamma},
                   {"var_beta", p.var_beta},
                   {"df", p.df},
                   {"scale", p.scale},
                   {"beta_intercept_mean", p.beta_intercept_mean}};
    const auto &s = c.sampler;
    j["sampler"] = {{"iterations", s.iterations},
                    {"burn_in", s.burn_in},
                    {"thinning", s.thinning},
                    {"chains", s.chains},
                    {"seed", s.seed},
                    {"init", init_name(s.init)},
                    {"rr_guard", s.rr_guard},
                    {"membership_stride", s.membership_stride},
                    {"loglik_check_stride", s.loglik_check_stride},
                    {"shard_size", s.shard_size},
                    {"threads", s.threads},
                    {"bin_width", s.bin_width}};
    const auto &a = c.analysis;
    nlohmann::ordered_json windows = nlohmann::ordered_json::array();
    for (const auto &w : a.windows) {
        nlohmann::ordered_json wj;
        wj["label"] = w.label;
        wj["lower"] = w.lower ? nlohmann::ordered_json(*w.lower) : nullptr;
        wj["upper"] = w.upper ? nlohmann::ordered_json(*w.upper) : nullptr;
        wj["kernel"] = kernel_name(w.kernel);
        wj["order"] = w.order;
        wj["bandwidth_left"] = w.bandwidth_left;
        wj["bandwidth_right"] = w.bandwidth_right;
        windows.push_back(wj);
    }
    j["analysis"] = {
        {"mixture", a.mixture},
        {"balance",
         {{"enabled", a.balance.enabled},
          {"weights", a.balance.weights == WeightConvention::reliability ? "reliability" : "frequency"}}},
        {"windows", windows},
        {"local_polynomial", a.local_polynomial},
        {"imputation", {{"enabled", a.imputation.enabled}, {"m", a.imputation.m}, {"stride", a.imputation.stride}}},
        {"stratified",
         {{"enabled", a.stratified.enabled},
          {"columns", a.stratified.columns},
          {"weighting", a.stratified.weighting == StratumWeighting::equal ? "equal" : "population"}}}};
    j["output_dir"] = c.output_dir.string();
    j["draw_format"] = c.draw_format == DrawFormat::csv ? "csv" : "binary";
    return j;
}

void apply_environment(RunConfig &config) {
    if (auto seed = env_integer("RDMIX_SEED")) {
        if (*seed < 0) throw ConfigError("cli", "RDMIX_SEED must be nonnegative");
        config.sampler.seed = static_cast<std::uint64_t>(*seed);
    }
    if (const char *out = std::getenv("RDMIX_OUT"); out && *out) config.output_dir = out;
    if (auto threads = env_integer("RDMIX_THREADS")) {
        if (*threads < 1) throw ConfigError("cli", "RDMIX_THREADS must be at least 1");
        config.sampler.threads = static_cast<int>(*threads);
    }
}

} // namespace rdmix
