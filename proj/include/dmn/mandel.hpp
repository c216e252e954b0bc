#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "dmn/errors.hpp"

namespace dmn {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

// Mandel component order: 11, 22, 33, sqrt(2)*12, sqrt(2)*23, sqrt(2)*31.
// Inner products of Mandel vectors equal double contractions of the tensors.
inline constexpr int kKinematicRows[3] = {0, 1, 3}; // 11, 22, 12: continuous across a laminate interface
inline constexpr int kTractionRows[3] = {2, 4, 5};  // 33, 23, 31: continuous tractions (normal along axis 3)

// Euler angles, intrinsic Z-X-Z: Q = Rz(alpha) * Rx(beta) * Rz(gamma).
// Unbounded trainables; reduction mod 2*pi happens only at serialization.
struct EulerAngles {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
};

Vec6 tensor_to_mandel(const Mat3& t, double sym_tol = 1e-12);
Mat3 mandel_to_tensor(const Vec6& v);

Mat3 euler_to_matrix(const EulerAngles& e);
// Recovers Z-X-Z angles with beta in [0, pi]; gimbal-locked inputs get gamma = 0.
EulerAngles euler_from_matrix(const Mat3& q);

// 6x6 Mandel image of a 3x3 rotation q: rotation6(q) * mandel(T) = mandel(q T q^T).
Mat6 rotation6(const Mat3& q);
Mat6 rotation6(const EulerAngles& e);
// Value and per-angle derivatives, for backpropagation through node rotations.
void rotation6_jacobian(const EulerAngles& e, Mat6& r, std::array<Mat6, 3>& dr);

// Stiffness of the same material observed after actively rotating it by Q(e):
// C' = R6 C R6^T, identical to the component-wise fourth-order rotation.
Mat6 rotate_stiffness(const Mat6& c, const EulerAngles& e);
Vec6 rotate_vector(const Vec6& v, const EulerAngles& e);

Mat6 isotropic_stiffness(double young, double poisson);

bool is_symmetric6(const Mat6& m, double rel_tol = 1e-9);
bool is_spd(const Mat6& m, double rel_tol = 1e-9);

inline Mat6 symmetrized(const Mat6& m) { return 0.5 * (m + m.transpose()); }

// Direction-dependent Young's modulus E(d) = 1 / (d x d : C^-1 : d x d).
double directional_young_modulus(const Mat6& compliance, const Vec3& dir);

struct SurfacePoint {
    Vec3 dir;
    double young;
};

// Latitude-longitude sampling of the modulus surface; n_theta >= 2, n_phi >= 1.
std::vector<SurfacePoint> modulus_surface(const Mat6& stiffness, int n_theta, int n_phi);

} // namespace dmn
