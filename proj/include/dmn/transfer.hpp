#pragma once

#include <array>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dmn/network.hpp"

namespace dmn::transfer {

// Microstructure descriptor: fiber volume fraction plus the two largest
// eigenvalues of the orientation tensor, with a11 >= a22 >= 1 - a11 - a22 >= 0.
struct Descriptor {
    double vf = 0.0;
    double a11 = 0.0;
    double a22 = 0.0;
};

// Second moment of the fiber direction distribution: mean of p (x) p.
Mat3 orientation_from_fibers(std::span<const Vec3> directions);

// Symmetry / unit-trace / eigenvalue-range validation. trace_tol bounds the
// admissible deviation of tr(a) from one; the tensor is renormalized inside
// that tolerance.
Mat3 validate_orientation(const Mat3& a, double trace_tol);

// Eigen-decomposition with descending eigenvalues and a right-handed frame q
// such that a = q * diag(a11, a22, a33) * q^T. Ties are resolved by aligning
// the eigenspace basis with the global axes; eigenvector signs are fixed by
// their largest component. Exactly diagonal sorted input yields q = identity.
std::pair<Descriptor, Mat3> descriptor_of(const Mat3& a, double vf);

struct Anchor {
    Descriptor x;
    Network net;
};

// Four pre-trained networks plus the exact affine regression of every
// trainable parameter over (1, vf, a11, a22).
class AnchorSet {
public:
    AnchorSet() = default; // empty; build with fit()
    static AnchorSet fit(std::array<Anchor, 4> anchors);

    const std::array<Anchor, 4>& anchors() const { return anchors_; }
    int n_layers() const { return anchors_[0].net.n_layers; }

    // Regression evaluated at a raw descriptor; output lives in the
    // orientation tensor's principal frame.
    Network evaluate_principal(const Descriptor& x) const;

    struct Instantiated {
        Network net;
        Mat3 frame;            // principal frame used for the top rotation
        bool extrapolated = false;
    };

    // Online instantiation: regression at the descriptor, principal-frame
    // rotation composed into the top node so outputs live in the global frame.
    Instantiated instantiate(const Mat3& orientation, double vf) const;

    // Largest spread of any angle parameter across the anchors; values above
    // pi/2 indicate the linear interpolation of raw angles is questionable.
    double max_angle_spread() const { return max_angle_spread_; }

private:
    std::array<Anchor, 4> anchors_{};
    std::vector<std::array<double, 4>> coeffs_; // per packed parameter
    double vf_min_ = 0.0, vf_max_ = 0.0;
    double max_angle_spread_ = 0.0;
};

} // namespace dmn::transfer
