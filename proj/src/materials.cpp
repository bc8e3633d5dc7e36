#include "impm/materials.hpp"

#include <Eigen/Dense>

namespace impm {

namespace {

Eigen::Matrix3d to_eigen(const Mat3d& m) {
  Eigen::Matrix3d out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = m(i, j);
  return out;
}

Mat3d from_eigen(const Eigen::Matrix3d& m) {
  Mat3d out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = m(i, j);
  return out;
}

}  // namespace

Mat3d hencky_stress_3x3(const Mat3d& F, const ElasticParams& p) {
  const Eigen::Matrix3d Fe = to_eigen(F);
  const double J = Fe.determinant();
  if (!(J > 0.0)) throw DomainError("Hencky stress: det F <= 0");
  const Eigen::Matrix3d b = Fe * Fe.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(b);
  const Eigen::Vector3d lam = eig.eigenvalues();
  const Eigen::Matrix3d V = eig.eigenvectors();
  Eigen::Matrix3d eps = Eigen::Matrix3d::Zero();
  for (int k = 0; k < 3; ++k)
    eps += 0.5 * std::log(lam(k)) * V.col(k) * V.col(k).transpose();
  const Eigen::Matrix3d tau =
      p.lambda() * eps.trace() * Eigen::Matrix3d::Identity() + 2.0 * p.mu() * eps;
  return from_eigen((tau / J).eval());
}

Mat3d neo_hookean_stress_3x3(const Mat3d& F, const ElasticParams& p) {
  const Eigen::Matrix3d Fe = to_eigen(F);
  const double J = Fe.determinant();
  if (!(J > 0.0)) throw DomainError("neo-Hookean stress: det F <= 0");
  const Eigen::Matrix3d b = Fe * Fe.transpose();
  const Eigen::Matrix3d tau = p.mu() * (b - Eigen::Matrix3d::Identity()) +
                              p.lambda() * std::log(J) * Eigen::Matrix3d::Identity();
  return from_eigen((tau / J).eval());
}

}  // namespace impm
