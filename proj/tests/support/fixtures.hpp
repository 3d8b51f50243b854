#pragma once

#include "rdmix/data.hpp"
#include "rdmix/model.hpp"
#include "rdmix/random.hpp"

#include <Eigen/Core>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fx {

inline rdmix::ObservedDataset dataset(std::vector<double> s, std::vector<std::uint8_t> y, Eigen::MatrixXd x,
                                      double s0 = 120.0, double eps0 = 0.5) {
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < x.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
    return rdmix::ObservedDataset({}, std::move(s), std::move(y), std::move(x), s0, eps0,
                                  rdmix::CovariateScaling::identity(std::move(names)));
}

inline rdmix::ObservedDataset dataset(std::vector<double> s, std::vector<std::uint8_t> y, double s0 = 120.0) {
    return dataset(std::move(s), std::move(y), Eigen::MatrixXd(static_cast<Eigen::Index>(y.size()), 0), s0);
}

/// Random units on both sides of s0 = 120 with normal covariates.
inline rdmix::ObservedDataset random_dataset(std::size_t n, std::size_t p, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> su(5.0, 300.0);
    std::normal_distribution<double> nd;
    std::bernoulli_distribution bd(0.3);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = su(gen);
        y[i] = bd(gen);
        for (std::size_t j = 0; j < p; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = nd(gen);
    }
    // Both sides always populated.
    if (n >= 2) {
        s[0] = 60.0;
        s[1] = 200.0;
    }
    return dataset(std::move(s), std::move(y), std::move(x));
}

/// Admissible random labels.
inline std::vector<rdmix::Subpop> random_labels(const rdmix::ObservedDataset &d, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::bernoulli_distribution coin(0.5);
    std::vector<rdmix::Subpop> g(d.n());
    for (std::size_t i = 0; i < d.n(); ++i)
        g[i] = coin(gen) ? rdmix::Subpop::zero : (d.z()[i] ? rdmix::Subpop::minus : rdmix::Subpop::plus);
    return g;
}

inline std::filesystem::path fresh_dir(const std::string &root, const std::string &name) {
    auto p = std::filesystem::path(root) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string slurp(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void spit(const std::filesystem::path &p, const std::string &text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

/// Runs a shell command; returns the process exit status.
inline int shell(const std::string &cmd) {
    const int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace fx
