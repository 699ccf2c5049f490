#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>

namespace mshom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Complex = std::complex<double>;

using VectorXd = Eigen::VectorXd;
using VectorXcd = Eigen::VectorXcd;
using SpMat = Eigen::SparseMatrix<double>;
using SpMatC = Eigen::SparseMatrix<Complex>;
using Triplet = Eigen::Triplet<double>;

/// Point sampler for a symmetric 3x3 coefficient tensor.
using TensorSampler = std::function<Mat3(const Vec3&)>;
/// Point sampler for a scalar coefficient.
using ScalarSampler = std::function<double(const Vec3&)>;
/// Point sampler for a 3-vector field.
using VectorSampler = std::function<Vec3(const Vec3&)>;

} // namespace mshom
