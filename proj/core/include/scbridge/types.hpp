#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace scbridge {

/// Dense row-major real matrix. Rows are samples (cells), columns are features (genes).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Gene activation states, one byte per gene with values in {0, 1}.
using ActivationVector = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// All stochastic routines take an explicit generator so that runs replay bit-exactly.
using Rng = std::mt19937_64;

}  // namespace scbridge
