#include "dmn/mandel.hpp"

#include <cmath>

namespace dmn {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

Mat3 basis_tensor(int j) {
    Mat3 e = Mat3::Zero();
    switch (j) {
        case 0: e(0, 0) = 1.0; break;
        case 1: e(1, 1) = 1.0; break;
        case 2: e(2, 2) = 1.0; break;
        case 3: e(0, 1) = e(1, 0) = 1.0 / kSqrt2; break;
        case 4: e(1, 2) = e(2, 1) = 1.0 / kSqrt2; break;
        default: e(2, 0) = e(0, 2) = 1.0 / kSqrt2; break;
    }
    return e;
}

Vec6 mandel_unchecked(const Mat3& t) {
    Vec6 v;
    v << t(0, 0), t(1, 1), t(2, 2),
         kSqrt2 * 0.5 * (t(0, 1) + t(1, 0)),
         kSqrt2 * 0.5 * (t(1, 2) + t(2, 1)),
         kSqrt2 * 0.5 * (t(2, 0) + t(0, 2));
    return v;
}

Mat3 rot_z(double t) {
    Mat3 q;
    q << std::cos(t), -std::sin(t), 0.0,
         std::sin(t), std::cos(t), 0.0,
         0.0, 0.0, 1.0;
    return q;
}

Mat3 rot_x(double t) {
    Mat3 q;
    q << 1.0, 0.0, 0.0,
         0.0, std::cos(t), -std::sin(t),
         0.0, std::sin(t), std::cos(t);
    return q;
}

Mat3 drot_z(double t) {
    Mat3 q;
    q << -std::sin(t), -std::cos(t), 0.0,
         std::cos(t), -std::sin(t), 0.0,
         0.0, 0.0, 0.0;
    return q;
}

Mat3 drot_x(double t) {
    Mat3 q;
    q << 0.0, 0.0, 0.0,
         0.0, -std::sin(t), -std::cos(t),
         0.0, std::cos(t), -std::sin(t);
    return q;
}

} // namespace

Vec6 tensor_to_mandel(const Mat3& t, double sym_tol) {
    double scale = t.cwiseAbs().maxCoeff();
    double dev = (t - t.transpose()).cwiseAbs().maxCoeff();
    if (dev > sym_tol * std::max(1.0, scale)) {
        throw NumericError("tensor_to_mandel: input violates symmetry");
    }
    return mandel_unchecked(t);
}

Mat3 mandel_to_tensor(const Vec6& v) {
    Mat3 t;
    t << v[0], v[3] / kSqrt2, v[5] / kSqrt2,
         v[3] / kSqrt2, v[1], v[4] / kSqrt2,
         v[5] / kSqrt2, v[4] / kSqrt2, v[2];
    return t;
}

Mat3 euler_to_matrix(const EulerAngles& e) {
    return rot_z(e.alpha) * rot_x(e.beta) * rot_z(e.gamma);
}

EulerAngles euler_from_matrix(const Mat3& q) {
    EulerAngles e;
    double c = std::clamp(q(2, 2), -1.0, 1.0);
    e.beta = std::acos(c);
    double sb = std::sqrt(std::max(0.0, 1.0 - c * c));
    if (sb > 1e-12) {
        e.alpha = std::atan2(q(0, 2), -q(1, 2));
        e.gamma = std::atan2(q(2, 0), q(2, 1));
    } else {
        // gimbal lock: only alpha +/- gamma is determined; put it all in alpha
        e.alpha = std::atan2(q(1, 0), q(0, 0));
        e.gamma = 0.0;
    }
    return e;
}

Mat6 rotation6(const Mat3& q) {
    Mat6 r;
    for (int j = 0; j < 6; ++j) {
        Mat3 rotated = q * basis_tensor(j) * q.transpose();
        r.col(j) = mandel_unchecked(rotated);
    }
    return r;
}

Mat6 rotation6(const EulerAngles& e) { return rotation6(euler_to_matrix(e)); }

void rotation6_jacobian(const EulerAngles& e, Mat6& r, std::array<Mat6, 3>& dr) {
    Mat3 za = rot_z(e.alpha), xb = rot_x(e.beta), zg = rot_z(e.gamma);
    Mat3 q = za * xb * zg;
    Mat3 dq[3] = {drot_z(e.alpha) * xb * zg, za * drot_x(e.beta) * zg, za * xb * drot_z(e.gamma)};
    r = rotation6(q);
    for (int a = 0; a < 3; ++a) {
        for (int j = 0; j < 6; ++j) {
            Mat3 ej = basis_tensor(j);
            Mat3 d = dq[a] * ej * q.transpose() + q * ej * dq[a].transpose();
            dr[a].col(j) = mandel_unchecked(d);
        }
    }
}

Mat6 rotate_stiffness(const Mat6& c, const EulerAngles& e) {
    Mat6 r = rotation6(e);
    return r * c * r.transpose();
}

Vec6 rotate_vector(const Vec6& v, const EulerAngles& e) { return rotation6(e) * v; }

Mat6 isotropic_stiffness(double young, double poisson) {
    if (!(young > 0.0)) {
        throw NumericError("isotropic_stiffness: Young's modulus must be positive");
    }
    if (poisson >= 0.5) {
        throw NumericError("isotropic_stiffness: Poisson ratio >= 0.5 (incompressible)");
    }
    if (poisson <= -1.0) {
        throw NumericError("isotropic_stiffness: Poisson ratio <= -1");
    }
    double kappa = young / (3.0 * (1.0 - 2.0 * poisson));
    double mu = young / (2.0 * (1.0 + poisson));
    Vec6 m;
    m << 1.0, 1.0, 1.0, 0.0, 0.0, 0.0;
    Mat6 p_vol = (m * m.transpose()) / 3.0;
    return 3.0 * kappa * p_vol + 2.0 * mu * (Mat6::Identity() - p_vol);
}

bool is_symmetric6(const Mat6& m, double rel_tol) {
    double scale = m.norm();
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * std::max(1.0, scale);
}

bool is_spd(const Mat6& m, double rel_tol) {
    if (!is_symmetric6(m, rel_tol)) return false;
    Eigen::SelfAdjointEigenSolver<Mat6> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) return false;
    double max_diag = m.diagonal().cwiseAbs().maxCoeff();
    return es.eigenvalues().minCoeff() > -rel_tol * std::max(1.0, max_diag) &&
           es.eigenvalues().maxCoeff() > 0.0;
}

double directional_young_modulus(const Mat6& compliance, const Vec3& dir) {
    Vec3 d = dir.normalized();
    Vec6 n = mandel_unchecked(d * d.transpose());
    double s = n.dot(compliance * n);
    return 1.0 / s;
}

std::vector<SurfacePoint> modulus_surface(const Mat6& stiffness, int n_theta, int n_phi) {
    if (n_theta < 2 || n_phi < 1) {
        throw UserError("modulus_surface: need n_theta >= 2 and n_phi >= 1");
    }
    Eigen::FullPivLU<Mat6> lu(stiffness);
    if (!lu.isInvertible()) {
        throw NumericError("modulus_surface: singular stiffness");
    }
    Mat6 compliance = lu.inverse();
    std::vector<SurfacePoint> out;
    out.reserve(static_cast<std::size_t>(n_theta) * n_phi);
    const double pi = 3.14159265358979323846;
    for (int i = 0; i < n_theta; ++i) {
        double theta = pi * i / (n_theta - 1);
        for (int j = 0; j < n_phi; ++j) {
            double phi = 2.0 * pi * j / n_phi;
            Vec3 d(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
            out.push_back({d, directional_young_modulus(compliance, d)});
        }
    }
    return out;
}

} // namespace dmn
