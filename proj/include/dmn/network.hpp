#pragma once

#include <cstdint>
#include <vector>

#include "dmn/mandel.hpp"

namespace dmn {

// Binary-tree layout, heap order: node (layer i, index k), 1-based, lives at
// flat index 2^(i-1) - 1 + (k - 1). Children of flat index n are 2n+1, 2n+2.
inline int tree_node_count(int n_layers) { return (1 << n_layers) - 1; }
inline int tree_bottom_count(int n_layers) { return 1 << (n_layers - 1); }
inline int tree_node_index(int layer, int k) { return (1 << (layer - 1)) - 1 + (k - 1); }
inline int tree_left(int idx) { return 2 * idx + 1; }
inline int tree_right(int idx) { return 2 * idx + 2; }

enum class Phase { matrix, fiber };

// Bottom nodes alternate phases: odd k -> matrix, even k -> fiber (1-based k).
inline Phase phase_of_bottom(int k) { return (k % 2 == 0) ? Phase::fiber : Phase::matrix; }

struct Network {
    int n_layers = 0;
    std::vector<double> z;           // bottom activations, size 2^(N-1)
    std::vector<EulerAngles> angles; // one triple per node, size 2^N - 1

    Network() = default; // empty; assign a real network before use
    explicit Network(int layers);
    static Network random(int layers, std::uint64_t seed);

    int nodes() const { return tree_node_count(n_layers); }
    int bottoms() const { return tree_bottom_count(n_layers); }
    int first_bottom() const { return nodes() / 2; }

    // Nodal weights: bottom w = ReLU(z), parents sum their children.
    std::vector<double> weights() const;
    double total_weight() const;

    // Flat trainable-parameter vector, order [z | alpha | beta | gamma].
    int parameter_count() const { return bottoms() + 3 * nodes(); }
    std::vector<double> pack_parameters() const;
    void unpack_parameters(const std::vector<double>& p);
};

// Two-phase laminate building block with interface normal along axis 3.
// Phase 1 sits in the left child slot, phase 2 (volume fraction vf2) in the right.
struct BlockSystem {
    Mat36 a_hat;    // traction rows of the phase-1 strain concentration
    Mat3 s_inv;     // inverse of the traction-block matrix
    double vf2 = 0.0;
};

BlockSystem solve_block_system(const Mat6& c1, const Mat6& c2, double vf2);

// Full 6x6 phase-1 strain concentration (kinematic rows are unit rows).
Mat6 concentration_matrix(const BlockSystem& sys);

Mat6 strain_concentration(const Mat6& c1, const Mat6& c2, double vf2);
Mat6 block_homogenize(const Mat6& c1, const Mat6& c2, double vf2);

// Linear forward pass: bottom phases by parity, per-block homogenization with
// vf2 = w_right / (w_left + w_right), node rotation applied to each averaged
// stiffness. Subtrees with zero weight are skipped.
Mat6 forward_stiffness(const Network& net, const Mat6& c_fiber, const Mat6& c_matrix);

} // namespace dmn
