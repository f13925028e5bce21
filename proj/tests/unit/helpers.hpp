#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include <scbridge/scbridge.hpp>

namespace testing {

inline scbridge::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, scbridge::Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    scbridge::Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = normal(rng);
        }
    }
    return m;
}

inline double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

}  // namespace testing
