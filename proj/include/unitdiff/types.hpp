#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace unitdiff {

// Rows are sequence positions; row-major keeps per-position access contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Discrete unit ids in [0, K). The denoiser vocabulary extends this with
// mask_id = K and pad_id = K + 1.
using UnitSequence = std::vector<int>;

// Meta-symbol ids in [0, C) conditioning the denoiser.
using SourceSequence = std::vector<int>;

// n x D embedding of a UnitSequence in codebook space.
using ContinuousSequence = Matrix;

inline int mask_id(int num_units) { return num_units; }
inline int pad_id(int num_units) { return num_units + 1; }
inline int denoiser_vocab(int num_units) { return num_units + 2; }

}  // namespace unitdiff
