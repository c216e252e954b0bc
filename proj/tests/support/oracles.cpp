#include "support/oracles.hpp"

#include <cmath>

#include "dmn/rng.hpp"

namespace oracle {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;
const int kPairI[6] = {0, 1, 2, 0, 1, 2};
const int kPairJ[6] = {0, 1, 2, 1, 2, 0};
const int kK[3] = {0, 1, 3};
const int kT[3] = {2, 4, 5};

double mandel_scale(int idx) { return idx < 3 ? 1.0 : kSqrt2; }

} // namespace

Mat6 rotate_stiffness_tensor(const Mat6& c_mandel, const Mat3& q) {
    double c4[3][3][3][3];
    // expand to the full fourth-order tensor
    for (int a = 0; a < 6; ++a) {
        for (int b = 0; b < 6; ++b) {
            double val = c_mandel(a, b) / (mandel_scale(a) * mandel_scale(b));
            int i = kPairI[a], j = kPairJ[a], k = kPairI[b], l = kPairJ[b];
            c4[i][j][k][l] = val;
            c4[j][i][k][l] = val;
            c4[i][j][l][k] = val;
            c4[j][i][l][k] = val;
        }
    }
    double r4[3][3][3][3] = {};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) {
                    double s = 0.0;
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b)
                            for (int c = 0; c < 3; ++c)
                                for (int d = 0; d < 3; ++d)
                                    s += q(i, a) * q(j, b) * q(k, c) * q(l, d) * c4[a][b][c][d];
                    r4[i][j][k][l] = s;
                }
    Mat6 out;
    for (int a = 0; a < 6; ++a) {
        for (int b = 0; b < 6; ++b) {
            out(a, b) = r4[kPairI[a]][kPairJ[a]][kPairI[b]][kPairJ[b]] * mandel_scale(a) * mandel_scale(b);
        }
    }
    return out;
}

InterfaceSolution solve_interface(const Mat6& c1, const Mat6& c2, double vf2, const Vec6& ds1,
                                  const Vec6& ds2) {
    const double v = vf2;
    Eigen::Matrix<double, 12, 12> m = Eigen::Matrix<double, 12, 12>::Zero();
    // rows 0-2: kinematic equality on the in-plane components
    for (int r = 0; r < 3; ++r) {
        m(r, kK[r]) = 1.0;
        m(r, 6 + kK[r]) = -1.0;
    }
    // rows 3-5: traction continuity across the interface
    for (int r = 0; r < 3; ++r) {
        for (int cidx = 0; cidx < 6; ++cidx) {
            m(3 + r, cidx) = c1(kT[r], cidx);
            m(3 + r, 6 + cidx) = -c2(kT[r], cidx);
        }
    }
    // rows 6-11: volume average recovers the block strain
    for (int r = 0; r < 6; ++r) {
        m(6 + r, r) = 1.0 - v;
        m(6 + r, 6 + r) = v;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 12, 12>> lu(m);
    if (!lu.isInvertible()) throw std::runtime_error("oracle interface system singular");

    InterfaceSolution sol;
    for (int col = 0; col < 6; ++col) {
        Eigen::Matrix<double, 12, 1> rhs = Eigen::Matrix<double, 12, 1>::Zero();
        rhs(6 + col) = 1.0;
        Eigen::Matrix<double, 12, 1> x = lu.solve(rhs);
        sol.a1.col(col) = x.head<6>();
        sol.a2.col(col) = x.tail<6>();
    }
    Eigen::Matrix<double, 12, 1> rhs = Eigen::Matrix<double, 12, 1>::Zero();
    for (int r = 0; r < 3; ++r) rhs(3 + r) = ds2[kT[r]] - ds1[kT[r]];
    Eigen::Matrix<double, 12, 1> x = lu.solve(rhs);
    sol.b1 = x.head<6>();
    sol.b2 = x.tail<6>();
    sol.c_bar = (1.0 - v) * c1 * sol.a1 + v * c2 * sol.a2;
    sol.ds_bar = (1.0 - v) * (c1 * sol.b1 + ds1) + v * (c2 * sol.b2 + ds2);
    return sol;
}

Mat6 reference_forward(const dmn::Network& net, const Mat6& c_fiber, const Mat6& c_matrix) {
    std::vector<double> w = net.weights();
    struct Eval {
        const dmn::Network& net;
        const std::vector<double>& w;
        const Mat6 &cf, &cm;
        Mat6 operator()(int idx) const {
            if (idx >= net.first_bottom()) {
                int k = idx - net.first_bottom() + 1;
                return (dmn::phase_of_bottom(k) == dmn::Phase::fiber) ? cf : cm;
            }
            int l = dmn::tree_left(idx), r = dmn::tree_right(idx);
            Mat6 bar;
            if (w[l] > 0.0 && w[r] > 0.0) {
                bar = solve_interface((*this)(l), (*this)(r), w[r] / (w[l] + w[r])).c_bar;
            } else if (w[l] > 0.0) {
                bar = (*this)(l);
            } else {
                bar = (*this)(r);
            }
            Mat6 rot = dmn::rotation6(net.angles[idx]);
            return rot * bar * rot.transpose();
        }
    };
    return Eval{net, w, c_fiber, c_matrix}(0);
}

std::vector<double> fd_gradient(const dmn::Network& net, std::span<const dmn::train::Sample> batch,
                                double lambda, double rel_step) {
    dmn::Network probe = net;
    std::vector<double> theta = net.pack_parameters();
    std::vector<double> g(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double h = rel_step * std::max(1.0, std::abs(theta[i]));
        double save = theta[i];
        theta[i] = save + h;
        probe.unpack_parameters(theta);
        double jp = dmn::train::cost(probe, batch, lambda);
        theta[i] = save - h;
        probe.unpack_parameters(theta);
        double jm = dmn::train::cost(probe, batch, lambda);
        theta[i] = save;
        g[i] = (jp - jm) / (2.0 * h);
    }
    probe.unpack_parameters(theta);
    return g;
}

void jacobi_eigen3(const Mat3& a, Vec3& eigenvalues, Mat3& eigenvectors) {
    Mat3 d = 0.5 * (a + a.transpose());
    Mat3 v = Mat3::Identity();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) off += d(p, q) * d(p, q);
        if (off < 1e-32) break;
        for (int p = 0; p < 3; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(d(p, q)) < 1e-300) continue;
                double theta = (d(q, q) - d(p, p)) / (2.0 * d(p, q));
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                Mat3 r = Mat3::Identity();
                r(p, p) = c;
                r(q, q) = c;
                r(p, q) = s;
                r(q, p) = -s;
                d = r.transpose() * d * r;
                v = v * r;
            }
        }
    }
    // sort descending
    std::array<int, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int x, int y) { return d(x, x) > d(y, y); });
    for (int i = 0; i < 3; ++i) {
        eigenvalues[i] = d(order[i], order[i]);
        eigenvectors.col(i) = v.col(order[i]);
    }
}

bool within_voigt_reuss(const Mat6& c_bar, const Mat6& c1, const Mat6& c2, double vf2,
                        dmn::Rng& rng, int n_probes, double slack) {
    Mat6 voigt = (1.0 - vf2) * c1 + vf2 * c2;
    Mat6 reuss = ((1.0 - vf2) * c1.inverse() + vf2 * c2.inverse()).inverse();
    for (int i = 0; i < n_probes; ++i) {
        Vec6 x;
        for (int j = 0; j < 6; ++j) x[j] = rng.uniform(-1.0, 1.0);
        double eb = x.dot(c_bar * x);
        double ev = x.dot(voigt * x);
        double er = x.dot(reuss * x);
        double tol = slack * std::max(1.0, ev);
        if (eb > ev + tol || eb < er - tol) return false;
    }
    return true;
}

LaminateOracle::LaminateOracle(const dmn::material::ConstitutiveSpec* p1,
                               const dmn::material::ConstitutiveSpec* p2, double vf2)
    : p1_(p1), p2_(p2), vf2_(vf2) {}

Vec6 LaminateOracle::step(const Vec6& dstrain_bar) {
    const double v = vf2_;
    Eigen::Matrix<double, 12, 1> x = Eigen::Matrix<double, 12, 1>::Zero();
    // start from the uniform-strain guess
    for (int i = 0; i < 6; ++i) {
        x(i) = dstrain_bar[i];
        x(6 + i) = dstrain_bar[i];
    }
    dmn::material::UpdateResult r1, r2;
    for (int it = 0; it < 100; ++it) {
        Vec6 de1 = x.head<6>(), de2 = x.tail<6>();
        r1 = p1_.update(de1);
        r2 = p2_.update(de2);
        Eigen::Matrix<double, 12, 1> res = Eigen::Matrix<double, 12, 1>::Zero();
        for (int r = 0; r < 3; ++r) res(r) = de1[kK[r]] - de2[kK[r]];
        for (int r = 0; r < 3; ++r) {
            res(3 + r) = r1.state.stress[kT[r]] - r2.state.stress[kT[r]];
        }
        for (int r = 0; r < 6; ++r) {
            res(6 + r) = (1.0 - v) * de1[r] + v * de2[r] - dstrain_bar[r];
        }
        double scale = std::max(1.0, dstrain_bar.norm());
        double stress_scale = std::max({1.0, r1.state.stress.norm(), r2.state.stress.norm()});
        if (res.head<3>().norm() + res.tail<6>().norm() <= 1e-13 * scale &&
            res.segment<3>(3).norm() <= 1e-12 * stress_scale) {
            break;
        }
        Eigen::Matrix<double, 12, 12> jac = Eigen::Matrix<double, 12, 12>::Zero();
        for (int r = 0; r < 3; ++r) {
            jac(r, kK[r]) = 1.0;
            jac(r, 6 + kK[r]) = -1.0;
        }
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 6; ++c) {
                jac(3 + r, c) = r1.tangent(kT[r], c);
                jac(3 + r, 6 + c) = -r2.tangent(kT[r], c);
            }
        }
        for (int r = 0; r < 6; ++r) {
            jac(6 + r, r) = 1.0 - v;
            jac(6 + r, 6 + r) = v;
        }
        x -= jac.fullPivLu().solve(res);
    }
    p1_.commit(r1.state);
    p2_.commit(r2.state);
    sigma_bar_ = (1.0 - v) * r1.state.stress + v * r2.state.stress;
    return sigma_bar_;
}

Mat6 random_spd(dmn::Rng& rng, double lo, double hi) {
    Mat6 m;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    Mat6 c = m * m.transpose();
    double shift = rng.log_uniform(lo, hi);
    return c * shift / c.norm() * 6.0 + Mat6::Identity() * shift * 0.1;
}

Mat3 random_rotation(dmn::Rng& rng) {
    dmn::EulerAngles e{rng.uniform(-3.14, 3.14), rng.uniform(0.0, 3.14), rng.uniform(-3.14, 3.14)};
    return dmn::euler_to_matrix(e);
}

} // namespace oracle
