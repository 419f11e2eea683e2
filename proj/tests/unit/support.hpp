#pragma once

// Hand-rolled generators and numeric helpers shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "scp/core.hpp"
#include "scp/uncertainty.hpp"

namespace testing {

using scp::FeatureMap;
using scp::Mask;
using scp::ProbabilityMap;
using scp::Tensor3;

inline Tensor3<double> random_tensor(std::mt19937_64& rng, int c, int h, int w, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor3<double> t(c, h, w);
    for (auto& v : t.flat()) v = u(rng);
    return t;
}

inline ProbabilityMap random_prob(std::mt19937_64& rng, int c, int h, int w, double spread = 3.0) {
    return scp::class_softmax(random_tensor(rng, c, h, w, -spread, spread));
}

inline FeatureMap random_feat(std::mt19937_64& rng, int d, int h, int w) {
    return FeatureMap{random_tensor(rng, d, h, w, -1.0, 1.0)};
}

inline Mask random_one_hot(std::mt19937_64& rng, int c, int h, int w) {
    std::uniform_int_distribution<int> cls(0, c - 1);
    Mask m(c, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m(cls(rng), y, x) = 1;
    return m;
}

inline scp::PixelWeightMap random_weight(std::mt19937_64& rng, scp::PixelWeightMap::Kind kind, int h, int w,
                                         double lo = 0.0, double hi = 1.0) {
    return {kind, random_tensor(rng, 1, h, w, lo, hi)};
}

inline double max_abs_diff(const Tensor3<double>& a, const Tensor3<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
    return m;
}

// Relative error in the norm sense, robust when both gradients are tiny.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        scale += analytic[i] * analytic[i] + numeric[i] * numeric[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(scale), 1e-12);
}

// Central differences of f with respect to every entry of x (x is restored afterwards).
inline std::vector<double> numeric_gradient(std::vector<double*> x, const std::function<double()>& f, double h = 1e-4) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = *x[i];
        *x[i] = keep + h;
        const double up = f();
        *x[i] = keep - h;
        const double down = f();
        *x[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

inline std::vector<double*> entries(Tensor3<double>& t) {
    std::vector<double*> out;
    for (auto& v : t.flat()) out.push_back(&v);
    return out;
}

inline std::vector<double> values(const Tensor3<double>& t) { return {t.flat().begin(), t.flat().end()}; }

// Scratch directory removed at scope exit.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static std::mt19937_64 rng(std::random_device{}());
        path = std::filesystem::temp_directory_path() / ("scp_test_" + tag + "_" + std::to_string(rng()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testing
