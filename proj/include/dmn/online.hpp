#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "dmn/material.hpp"
#include "dmn/network.hpp"

namespace dmn::online {

struct AffineBlockResult {
    Mat6 stiffness;  // homogenized tangent
    Vec6 correction; // homogenized stress correction
};

// Exact affine homogenization of the two-phase laminate block: with phase laws
// dsig_j = c_j * deps_j + ds_j, returns (c_bar, ds_bar) such that the block
// response is dsig_bar = c_bar * deps_bar + ds_bar for every deps_bar.
AffineBlockResult affine_block_homogenize(const Mat6& c1, const Vec6& ds1,
                                          const Mat6& c2, const Vec6& ds2, double vf2);

// Per-block de-homogenization operator, cached from the last upward sweep.
struct BlockOperator {
    BlockSystem sys;
    Vec6 b1 = Vec6::Zero(); // affine offset of the phase-1 strain (traction rows)

    // Splits the block-average strain increment into phase strains; the
    // mixture identity (1-vf2)*e1 + vf2*e2 = e_bar holds by construction.
    std::pair<Vec6, Vec6> phase_strains(const Vec6& parent_strain) const;
};

BlockOperator make_block_operator(const Mat6& c1, const Vec6& ds1,
                                  const Mat6& c2, const Vec6& ds2, double vf2);

struct StepResult {
    Vec6 dstress = Vec6::Zero();
    int iterations = 0;
    double residual = 0.0;
};

// Per-quadrature-point nonlinear state: an immutable network shared across
// points, one material point per active bottom node, and the committed
// macroscopic stress. step() runs the fixed-point sweep (material update,
// forward homogenization, top-node increment, backward de-homogenization)
// until the bottom-strain residual drops below tol * max(1, |deps_macro|),
// then commits bottom states and accumulates the macroscopic stress.
class NetworkState {
public:
    NetworkState(std::shared_ptr<const Network> net,
                 const material::ConstitutiveSpec& fiber,
                 const material::ConstitutiveSpec& matrix);

    StepResult step(const Vec6& macro_dstrain, double tol = 1e-8, int max_iter = 50);

    const Vec6& stress() const { return sigma_; }
    double homogenized_eps() const;
    const Network& network() const { return *net_; }

    // snapshot access
    std::vector<material::PointState> bottom_states() const;
    void restore(const Vec6& stress, const std::vector<material::PointState>& states);

private:
    struct Node {
        enum Mode { dead, leaf, pass_left, pass_right, block } mode = dead;
        double vf2 = 0.0;
        bool rotate = false;
        Mat6 rot;        // node rotation (internal nodes)
        // per-sweep caches
        Mat6 c_up;       // tangent seen by the parent (post-rotation)
        Vec6 ds_up;      // correction seen by the parent
        BlockOperator op;
        Vec6 de_in;      // strain increment handed down by the parent
        Vec6 de_local;   // node-local strain increment
        int point = -1;  // material point index for leaves
    };

    void material_sweep();                    // evaluate laws at current bottom strains
    void upward_sweep();                      // homogenize tangents and corrections
    double downward_sweep(const Vec6& macro); // refresh strains, return residual

    std::shared_ptr<const Network> net_;
    material::ConstitutiveSpec fiber_, matrix_;
    std::vector<Node> nodes_;
    std::vector<int> bottom_nodes_; // active bottom flat indices
    std::vector<material::MaterialPoint> points_;
    std::vector<material::UpdateResult> results_;
    std::vector<double> matrix_weights_; // per bottom point, matrix phase only
    Vec6 sigma_ = Vec6::Zero();
};

} // namespace dmn::online
