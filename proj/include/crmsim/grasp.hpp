#pragma once

#include "crmsim/types.hpp"

namespace crmsim {

// ---------------------------------------------------------------------------
// Grasp matrix
// ---------------------------------------------------------------------------

/// Planar grasp matrix (3 x 3N). Block i maps the wrench (fx, fy, mz) at
/// grasp point i to the net wrench at the CM: force passes through, moment
/// picks up r_tilde x f with r_tilde = R(theta) r_i in the world frame.
inline MatrixXd grasp_matrix(const GraspGeometry& grasp, double load_orientation) {
  const int n = grasp.robots();
  MatrixXd Jo_T = MatrixXd::Zero(3, 3 * n);
  const Matrix2d R = rot2(load_orientation);
  for (int i = 0; i < n; ++i) {
    const Vector2d rw = R * grasp.r[i];
    Jo_T.block<2, 2>(0, 3 * i).setIdentity();
    // -S(r) reduces to the perpendicular-dot row [r_y, -r_x].
    Jo_T(2, 3 * i) = rw.y();
    Jo_T(2, 3 * i + 1) = -rw.x();
    Jo_T(2, 3 * i + 2) = 1.0;
  }
  return Jo_T;
}

/// Spatial grasp matrix (6 x 6N), blocks [I, 0; -S(r_i), I] with r_i already
/// expressed in the world frame.
inline MatrixXd grasp_matrix_spatial(const std::vector<Vector3d>& r_world) {
  const int n = static_cast<int>(r_world.size());
  MatrixXd Jo_T = MatrixXd::Zero(6, 6 * n);
  for (int i = 0; i < n; ++i) {
    Jo_T.block<3, 3>(0, 6 * i).setIdentity();
    Jo_T.block<3, 3>(3, 6 * i) = -skew(r_world[i]);
    Jo_T.block<3, 3>(3, 6 * i + 3).setIdentity();
  }
  return Jo_T;
}

// ---------------------------------------------------------------------------
// Motion-inducing / internal decomposition
// ---------------------------------------------------------------------------

struct ForceDecomposition {
  VectorXd f_M;  // row-space component, balances the load dynamics
  VectorXd f_I;  // null-space component, pure squeeze
};

/// Moore-Penrose pseudoinverse via SVD with relative cutoff.
inline MatrixXd pseudo_inverse(const MatrixXd& A, double rel_cutoff = 1e-10) {
  Eigen::JacobiSVD<MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double cutoff = rel_cutoff * sv.maxCoeff();
  VectorXd inv = VectorXd::Zero(sv.size());
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// f = f_M + f_I with f_M = (Jo^T)+ Jo^T f and Jo^T f_I = 0.
inline ForceDecomposition decompose_forces(const VectorXd& f, const MatrixXd& Jo_T) {
  Eigen::JacobiSVD<MatrixXd> svd(Jo_T, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double cutoff = 1e-10 * sv.maxCoeff();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;
  if (rank < Jo_T.rows())
    throw DegenerateGraspError("grasp matrix is rank-deficient (rank " +
                               std::to_string(rank) + " of " +
                               std::to_string(Jo_T.rows()) + ")");
  ForceDecomposition out;
  VectorXd inv = VectorXd::Zero(sv.size());
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  const MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  out.f_M = pinv * (Jo_T * f);
  out.f_I = f - out.f_M;
  return out;
}

}  // namespace crmsim
