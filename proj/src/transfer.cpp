#include "dmn/transfer.hpp"

#include <algorithm>
#include <cmath>

namespace dmn::transfer {

namespace {

// Deterministic eigenvector post-processing: group (near-)equal eigenvalues,
// re-span each group's eigenspace from the global axes in projection order,
// then canonicalize signs by the largest component.
Mat3 canonical_frame(const Eigen::Vector3d& evals, const Mat3& evecs) {
    Mat3 q = evecs;
    double scale = evals.cwiseAbs().maxCoeff() + 1.0;
    int i = 0;
    while (i < 3) {
        int j = i + 1;
        while (j < 3 && std::abs(evals[j] - evals[i]) <= 1e-9 * scale) ++j;
        int m = j - i; // group size
        if (m > 1) {
            Eigen::Matrix<double, 3, Eigen::Dynamic> basis = q.block(0, i, 3, m);
            Mat3 proj = basis * basis.transpose();
            int chosen = 0;
            for (int axis = 0; axis < 3 && chosen < m; ++axis) {
                Vec3 w = proj * Vec3::Unit(axis);
                for (int c = 0; c < chosen; ++c) w -= w.dot(q.col(i + c)) * q.col(i + c);
                if (w.norm() > 1e-6) q.col(i + chosen++) = w.normalized();
            }
            // fill any remainder from the original basis
            for (int c = chosen; c < m; ++c) {
                Vec3 w = basis.col(c);
                for (int cc = 0; cc < c; ++cc) w -= w.dot(q.col(i + cc)) * q.col(i + cc);
                q.col(i + c) = w.normalized();
            }
        }
        i = j;
    }
    for (int c = 0; c < 3; ++c) {
        int arg = 0;
        q.col(c).cwiseAbs().maxCoeff(&arg);
        if (q(arg, c) < 0.0) q.col(c) = -q.col(c);
    }
    if (q.determinant() < 0.0) q.col(2) = -q.col(2);
    return q;
}

} // namespace

Mat3 orientation_from_fibers(std::span<const Vec3> directions) {
    if (directions.empty()) throw UserError("orientation: empty fiber direction list");
    Mat3 a = Mat3::Zero();
    for (const Vec3& p : directions) {
        if (std::abs(p.norm() - 1.0) > 1e-9) {
            throw UserError("orientation: fiber directions must be unit vectors");
        }
        a += p * p.transpose();
    }
    return a / static_cast<double>(directions.size());
}

Mat3 validate_orientation(const Mat3& a, double trace_tol) {
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, a.cwiseAbs().maxCoeff())) {
        throw NumericError("orientation: tensor not symmetric");
    }
    double tr = a.trace();
    if (std::abs(tr - 1.0) > trace_tol) {
        throw NumericError("orientation: trace deviates from one beyond tolerance");
    }
    Mat3 an = 0.5 * (a + a.transpose()) / tr;
    Eigen::SelfAdjointEigenSolver<Mat3> es(an);
    if (es.eigenvalues().minCoeff() < -1e-9 || es.eigenvalues().maxCoeff() > 1.0 + 1e-9) {
        throw NumericError("orientation: eigenvalues outside [0, 1]");
    }
    return an;
}

std::pair<Descriptor, Mat3> descriptor_of(const Mat3& a, double vf) {
    Mat3 an = validate_orientation(a, 1e-6);
    Eigen::SelfAdjointEigenSolver<Mat3> es(an);
    // descending order
    Eigen::Vector3d evals = es.eigenvalues().reverse();
    Mat3 evecs;
    for (int c = 0; c < 3; ++c) evecs.col(c) = es.eigenvectors().col(2 - c);
    Mat3 q = canonical_frame(evals, evecs);
    Descriptor d;
    d.vf = vf;
    d.a11 = std::clamp(evals[0], 0.0, 1.0);
    d.a22 = std::clamp(evals[1], 0.0, 1.0);
    return {d, q};
}

AnchorSet AnchorSet::fit(std::array<Anchor, 4> anchors) {
    AnchorSet set;
    set.anchors_ = std::move(anchors);
    int layers = set.anchors_[0].net.n_layers;
    for (const Anchor& a : set.anchors_) {
        if (a.net.n_layers != layers) throw UserError("anchors: network topologies differ");
    }
    Eigen::Matrix4d design;
    for (int i = 0; i < 4; ++i) {
        const Descriptor& x = set.anchors_[i].x;
        design.row(i) << 1.0, x.vf, x.a11, x.a22;
    }
    Eigen::FullPivLU<Eigen::Matrix4d> lu(design);
    if (!lu.isInvertible()) {
        throw UserError("anchors: degenerate descriptor set (singular design matrix)");
    }
    std::array<std::vector<double>, 4> params;
    for (int i = 0; i < 4; ++i) params[i] = set.anchors_[i].net.pack_parameters();
    int np = static_cast<int>(params[0].size());
    set.coeffs_.resize(np);
    for (int p = 0; p < np; ++p) {
        Eigen::Vector4d y(params[0][p], params[1][p], params[2][p], params[3][p]);
        Eigen::Vector4d c = lu.solve(y);
        set.coeffs_[p] = {c[0], c[1], c[2], c[3]};
    }
    set.vf_min_ = set.vf_max_ = set.anchors_[0].x.vf;
    for (const Anchor& a : set.anchors_) {
        set.vf_min_ = std::min(set.vf_min_, a.x.vf);
        set.vf_max_ = std::max(set.vf_max_, a.x.vf);
    }
    // diagnostic for the raw-angle interpolation risk
    int nb = set.anchors_[0].net.bottoms();
    for (int p = nb; p < np; ++p) {
        double lo = params[0][p], hi = params[0][p];
        for (int i = 1; i < 4; ++i) {
            lo = std::min(lo, params[i][p]);
            hi = std::max(hi, params[i][p]);
        }
        set.max_angle_spread_ = std::max(set.max_angle_spread_, hi - lo);
    }
    return set;
}

Network AnchorSet::evaluate_principal(const Descriptor& x) const {
    Network net(n_layers());
    std::vector<double> p(coeffs_.size());
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
        const auto& c = coeffs_[i];
        p[i] = c[0] + c[1] * x.vf + c[2] * x.a11 + c[3] * x.a22;
    }
    net.unpack_parameters(p);
    return net;
}

AnchorSet::Instantiated AnchorSet::instantiate(const Mat3& orientation, double vf) const {
    auto [desc, frame] = descriptor_of(orientation, vf);
    Instantiated out;
    out.frame = frame;
    out.extrapolated = vf < vf_min_ - 1e-12 || vf > vf_max_ + 1e-12;
    out.net = evaluate_principal(desc);
    // express outputs in the global frame: compose the principal rotation
    // on the outside of the top node's own rotation
    Mat3 top = euler_to_matrix(out.net.angles[0]);
    out.net.angles[0] = euler_from_matrix(frame * top);
    return out;
}

} // namespace dmn::transfer
