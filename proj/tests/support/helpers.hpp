#pragma once

#include <filesystem>
#include <initializer_list>
#include <random>
#include <string>

#include <unistd.h>

#include "phenovlp/common/rng.hpp"
#include "phenovlp/nn/autograd.hpp"
#include "oracles.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(PHENOVLP_FIXTURE_DIR) / name;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
    static int counter = 0;
    auto dir = std::filesystem::temp_directory_path() /
               ("phenovlp_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline phenovlp::nn::Matrix random_unit_rows(int n, int d, phenovlp::Rng& rng) {
    phenovlp::nn::Matrix m(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
        m.row(i).normalize();
    }
    return m;
}

inline phenovlp::nn::Matrix rows_of(std::initializer_list<std::initializer_list<double>> rows) {
    phenovlp::nn::Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

inline oracle::Rows to_rows(const phenovlp::nn::Matrix& m) {
    oracle::Rows rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(m(i, j));
    return rows;
}

inline phenovlp::nn::Matrix from_rows(const oracle::Rows& rows) {
    phenovlp::nn::Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) of an
// analytic gradient against central differences of f at x.
template <typename F>
double fd_relative_error(F&& f, phenovlp::nn::Matrix x, const phenovlp::nn::Matrix& analytic, double step = 1e-4) {
    phenovlp::nn::Matrix numeric(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double orig = x(i, j);
            x(i, j) = orig + step;
            const double up = f(x);
            x(i, j) = orig - step;
            const double down = f(x);
            x(i, j) = orig;
            numeric(i, j) = (up - down) / (2 * step);
        }
    }
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
    return (analytic - numeric).norm() / scale;
}

}  // namespace testing
