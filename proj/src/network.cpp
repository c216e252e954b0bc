#include "dmn/network.hpp"

#include <cmath>

#include "dmn/rng.hpp"

namespace dmn {

Network::Network(int layers) : n_layers(layers) {
    if (layers < 2) {
        throw UserError("network: need at least 2 layers");
    }
    z.assign(tree_bottom_count(layers), 0.0);
    angles.assign(tree_node_count(layers), EulerAngles{});
}

Network Network::random(int layers, std::uint64_t seed) {
    Network net(layers);
    Rng rng(seed);
    // z around 0.5 keeps sum(ReLU(z)) near the 2^(N-2) regularization target
    for (double& v : net.z) v = rng.uniform(0.4, 0.6);
    const double q = 0.78539816339744830962; // pi/4
    for (EulerAngles& e : net.angles) {
        e.alpha = rng.uniform(-q, q);
        e.beta = rng.uniform(-q, q);
        e.gamma = rng.uniform(-q, q);
    }
    return net;
}

std::vector<double> Network::weights() const {
    std::vector<double> w(nodes(), 0.0);
    int fb = first_bottom();
    for (int j = 0; j < bottoms(); ++j) {
        w[fb + j] = std::max(z[j], 0.0);
    }
    for (int idx = fb - 1; idx >= 0; --idx) {
        w[idx] = w[tree_left(idx)] + w[tree_right(idx)];
    }
    return w;
}

double Network::total_weight() const {
    double t = 0.0;
    for (double v : z) t += std::max(v, 0.0);
    return t;
}

std::vector<double> Network::pack_parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    p.insert(p.end(), z.begin(), z.end());
    for (const EulerAngles& e : angles) p.push_back(e.alpha);
    for (const EulerAngles& e : angles) p.push_back(e.beta);
    for (const EulerAngles& e : angles) p.push_back(e.gamma);
    return p;
}

void Network::unpack_parameters(const std::vector<double>& p) {
    if (static_cast<int>(p.size()) != parameter_count()) {
        throw UserError("network: parameter vector size mismatch");
    }
    int nb = bottoms(), nn = nodes();
    for (int i = 0; i < nb; ++i) z[i] = p[i];
    for (int i = 0; i < nn; ++i) angles[i].alpha = p[nb + i];
    for (int i = 0; i < nn; ++i) angles[i].beta = p[nb + nn + i];
    for (int i = 0; i < nn; ++i) angles[i].gamma = p[nb + 2 * nn + i];
}

BlockSystem solve_block_system(const Mat6& c1, const Mat6& c2, double vf2) {
    if (!(vf2 >= 0.0 && vf2 <= 1.0)) {
        throw NumericError("block: volume fraction outside [0, 1]");
    }
    const double v = vf2;
    // Traction-block matrix: volume-weighted with the phase roles swapped,
    // h = v*c1 + (1-v)*c2 on the traction rows/columns.
    Mat3 s;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            int i = kTractionRows[a], j = kTractionRows[b];
            s(a, b) = v * c1(i, j) + (1.0 - v) * c2(i, j);
        }
    }
    double det = s.determinant();
    double scale = s.cwiseAbs().maxCoeff();
    if (!(std::abs(det) > 1e-40 * scale * scale * scale) || !std::isfinite(det)) {
        throw NumericError("block: degenerate interface (singular traction block)");
    }
    // Right-hand side: traction continuity written in terms of the averaged
    // strain; kinematic columns carry v*(c2-c1), traction columns carry c2.
    Mat36 rhs;
    for (int a = 0; a < 3; ++a) {
        int i = kTractionRows[a];
        for (int j = 0; j < 6; ++j) rhs(a, j) = v * (c2(i, j) - c1(i, j));
        for (int b = 0; b < 3; ++b) {
            int j = kTractionRows[b];
            rhs(a, j) = c2(i, j);
        }
    }
    BlockSystem sys;
    sys.vf2 = v;
    sys.s_inv = s.inverse();
    sys.a_hat = sys.s_inv * rhs;
    return sys;
}

Mat6 concentration_matrix(const BlockSystem& sys) {
    Mat6 a = Mat6::Zero();
    for (int j : kKinematicRows) a(j, j) = 1.0;
    for (int r = 0; r < 3; ++r) a.row(kTractionRows[r]) = sys.a_hat.row(r);
    return a;
}

Mat6 strain_concentration(const Mat6& c1, const Mat6& c2, double vf2) {
    return concentration_matrix(solve_block_system(c1, c2, vf2));
}

Mat6 block_homogenize(const Mat6& c1, const Mat6& c2, double vf2) {
    Mat6 a = strain_concentration(c1, c2, vf2);
    return c2 - (1.0 - vf2) * (c2 - c1) * a;
}

Mat6 forward_stiffness(const Network& net, const Mat6& c_fiber, const Mat6& c_matrix) {
    std::vector<double> w = net.weights();
    if (!(w[0] > 0.0)) {
        throw NumericError("forward_stiffness: network has zero total weight");
    }
    int nn = net.nodes(), fb = net.first_bottom();
    std::vector<Mat6> c(nn);
    std::vector<char> active(nn, 0);
    for (int idx = nn - 1; idx >= 0; --idx) {
        if (idx >= fb) {
            active[idx] = w[idx] > 0.0;
            if (active[idx]) {
                int k = idx - fb + 1;
                c[idx] = (phase_of_bottom(k) == Phase::fiber) ? c_fiber : c_matrix;
            }
            continue;
        }
        int l = tree_left(idx), r = tree_right(idx);
        Mat6 bar;
        if (active[l] && active[r]) {
            double vf2 = w[r] / (w[l] + w[r]);
            bar = block_homogenize(c[l], c[r], vf2);
        } else if (active[l]) {
            bar = c[l];
        } else if (active[r]) {
            bar = c[r];
        } else {
            continue;
        }
        active[idx] = 1;
        Mat6 rot = rotation6(net.angles[idx]);
        c[idx] = symmetrized(rot * bar * rot.transpose());
    }
    return c[0];
}

} // namespace dmn
