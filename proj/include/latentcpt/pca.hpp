#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Core>

#include "latentcpt/data.hpp"

namespace latentcpt {

// Linear baseline: the top-k principal directions of centered profiles.
struct PcaBasis {
  Eigen::VectorXd mean;        // dim
  Eigen::MatrixXd components;  // k x dim, orthonormal rows, descending variance
  Eigen::VectorXd variances;   // k eigenvalues of the covariance
};

// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues are
// returned in descending order with eigenvectors as matching columns.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};
SymmetricEigen jacobi_eigen(Eigen::MatrixXd matrix);

/// Rows of `data` are observations. Throws RankDeficient when fewer than
/// k + 1 rows are given or the k-th variance vanishes.
PcaBasis pca_fit(const Eigen::MatrixXd& data, std::size_t k);
PcaBasis pca_fit(std::span<const ChannelArray> profiles, std::size_t k);

Eigen::VectorXd pca_encode(const PcaBasis& basis, std::span<const double> x);
Eigen::VectorXd pca_decode(const PcaBasis& basis, const Eigen::VectorXd& scores);

}  // namespace latentcpt
