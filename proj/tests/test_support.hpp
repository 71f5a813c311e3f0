#pragma once

// Independent oracles shared by the unit and acceptance tests. Nothing here
// calls into the library's numeric kernels.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <random>
#include <vector>

#include "prefex/mlp.hpp"

namespace prefex::testing {

// Forward pass in long double, straight from the documented layout: layer l
// holds an [out][in] row-major weight block followed by its bias.
inline long double naive_forward(const MlpParams& p, const std::vector<double>& x) {
    const auto& sizes = p.layer_sizes();
    const auto v = p.values();
    std::vector<long double> act(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t in = sizes[l];
        const std::size_t out = sizes[l + 1];
        std::vector<long double> next(out);
        for (std::size_t o = 0; o < out; ++o) {
            long double s = v[off + in * out + o];
            for (std::size_t i = 0; i < in; ++i) s += static_cast<long double>(v[off + o * in + i]) * act[i];
            next[o] = (l + 2 < sizes.size()) ? std::tanh(s) : s;
        }
        off += in * out + out;
        act = std::move(next);
    }
    return act[0];
}

// -log of the Bradley-Terry likelihood, log(1 + e^(other - chosen)), in long double.
inline long double naive_ce(long double r, long double rp, int c) {
    const long double chosen = c == 0 ? r : rp;
    const long double other = c == 0 ? rp : r;
    return std::log1p(std::exp(other - chosen));
}

inline double relative_error(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& g, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = d(g);
    return v;
}

inline MlpParams random_params(std::vector<std::size_t> sizes, std::mt19937_64& g, double scale = 0.5) {
    MlpParams p(std::move(sizes));
    std::normal_distribution<double> d(0.0, scale);
    for (auto& x : p.values()) x = d(g);
    return p;
}

// Central finite difference of f along coordinate i of p.
template <class F>
double central_difference(MlpParams p, std::size_t i, F&& f, double h = 1e-5) {
    const double x0 = p.values()[i];
    p.values()[i] = x0 + h;
    const double up = f(p);
    p.values()[i] = x0 - h;
    const double down = f(p);
    return (up - down) / (2 * h);
}

// z-score of a binomial count against probability p.
inline double binomial_z(std::size_t hits, std::size_t trials, double p) {
    const double n = static_cast<double>(trials);
    return (static_cast<double>(hits) - n * p) / std::sqrt(n * p * (1 - p));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("prefex_" + tag + "_" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace prefex::testing
