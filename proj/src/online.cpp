#include "dmn/online.hpp"

#include <cmath>

namespace dmn::online {

namespace {

Vec6 correction_offset(const BlockSystem& sys, const Vec6& ds1, const Vec6& ds2) {
    // Traction continuity with phase corrections moves vf2 * (ds2 - ds1) onto
    // the right-hand side of the interface solve; kinematic rows stay exact.
    Eigen::Vector3d rhs;
    for (int a = 0; a < 3; ++a) {
        int i = kTractionRows[a];
        rhs[a] = sys.vf2 * (ds2[i] - ds1[i]);
    }
    Eigen::Vector3d sol = sys.s_inv * rhs;
    Vec6 b1 = Vec6::Zero();
    for (int a = 0; a < 3; ++a) b1[kTractionRows[a]] = sol[a];
    return b1;
}

} // namespace

BlockOperator make_block_operator(const Mat6& c1, const Vec6& ds1,
                                  const Mat6& c2, const Vec6& ds2, double vf2) {
    BlockOperator op;
    op.sys = solve_block_system(c1, c2, vf2);
    op.b1 = correction_offset(op.sys, ds1, ds2);
    return op;
}

AffineBlockResult affine_block_homogenize(const Mat6& c1, const Vec6& ds1,
                                          const Mat6& c2, const Vec6& ds2, double vf2) {
    BlockOperator op = make_block_operator(c1, ds1, c2, ds2, vf2);
    Mat6 a = concentration_matrix(op.sys);
    AffineBlockResult out;
    out.stiffness = c2 - (1.0 - vf2) * (c2 - c1) * a;
    out.correction = (1.0 - vf2) * ds1 + vf2 * ds2 - (1.0 - vf2) * (c2 - c1) * op.b1;
    return out;
}

std::pair<Vec6, Vec6> BlockOperator::phase_strains(const Vec6& parent_strain) const {
    Vec6 e1;
    for (int j : kKinematicRows) e1[j] = parent_strain[j];
    for (int a = 0; a < 3; ++a) {
        int i = kTractionRows[a];
        e1[i] = sys.a_hat.row(a).dot(parent_strain) + b1[i];
    }
    double v = sys.vf2;
    Vec6 e2 = (parent_strain - (1.0 - v) * e1) / v;
    return {e1, e2};
}

NetworkState::NetworkState(std::shared_ptr<const Network> net,
                           const material::ConstitutiveSpec& fiber,
                           const material::ConstitutiveSpec& matrix)
    : net_(std::move(net)), fiber_(fiber), matrix_(matrix) {
    fiber_.validate();
    matrix_.validate();
    std::vector<double> w = net_->weights();
    if (!(w[0] > 0.0)) {
        throw NumericError("network state: zero total weight");
    }
    int nn = net_->nodes(), fb = net_->first_bottom();
    nodes_.resize(nn);
    // Dead branches are pruned once here; live blocks keep vf2 in (0, 1).
    for (int idx = nn - 1; idx >= 0; --idx) {
        Node& nd = nodes_[idx];
        nd.de_local = Vec6::Zero();
        nd.de_in = Vec6::Zero();
        if (idx >= fb) {
            if (w[idx] > 0.0) {
                nd.mode = Node::leaf;
                int k = idx - fb + 1;
                const material::ConstitutiveSpec& spec =
                    (phase_of_bottom(k) == Phase::fiber) ? fiber_ : matrix_;
                nd.point = static_cast<int>(points_.size());
                points_.emplace_back(&spec == &fiber_ ? &fiber_ : &matrix_);
                bottom_nodes_.push_back(idx);
                matrix_weights_.push_back(phase_of_bottom(k) == Phase::matrix ? w[idx] : 0.0);
            }
            continue;
        }
        int l = tree_left(idx), r = tree_right(idx);
        bool la = nodes_[l].mode != Node::dead, ra = nodes_[r].mode != Node::dead;
        if (la && ra) {
            nd.mode = Node::block;
            nd.vf2 = w[r] / (w[l] + w[r]);
        } else if (la) {
            nd.mode = Node::pass_left;
        } else if (ra) {
            nd.mode = Node::pass_right;
        } else {
            continue;
        }
        nd.rotate = true;
        nd.rot = rotation6(net_->angles[idx]);
    }
    results_.resize(points_.size());
}

void NetworkState::material_sweep() {
    for (std::size_t i = 0; i < bottom_nodes_.size(); ++i) {
        Node& nd = nodes_[bottom_nodes_[i]];
        results_[nd.point] = points_[nd.point].update(nd.de_local);
        nd.c_up = results_[nd.point].tangent;
        nd.ds_up = results_[nd.point].correction;
    }
}

void NetworkState::upward_sweep() {
    int fb = net_->first_bottom();
    for (int idx = fb - 1; idx >= 0; --idx) {
        Node& nd = nodes_[idx];
        if (nd.mode == Node::dead) continue;
        Mat6 c_bar;
        Vec6 ds_bar;
        if (nd.mode == Node::block) {
            const Node& l = nodes_[tree_left(idx)];
            const Node& r = nodes_[tree_right(idx)];
            nd.op = make_block_operator(l.c_up, l.ds_up, r.c_up, r.ds_up, nd.vf2);
            Mat6 a = concentration_matrix(nd.op.sys);
            c_bar = r.c_up - (1.0 - nd.vf2) * (r.c_up - l.c_up) * a;
            ds_bar = (1.0 - nd.vf2) * l.ds_up + nd.vf2 * r.ds_up -
                     (1.0 - nd.vf2) * (r.c_up - l.c_up) * nd.op.b1;
        } else {
            const Node& child = nodes_[nd.mode == Node::pass_left ? tree_left(idx) : tree_right(idx)];
            c_bar = child.c_up;
            ds_bar = child.ds_up;
        }
        nd.c_up = symmetrized(nd.rot * c_bar * nd.rot.transpose());
        nd.ds_up = nd.rot * ds_bar;
    }
}

double NetworkState::downward_sweep(const Vec6& macro) {
    int fb = net_->first_bottom();
    double residual = 0.0;
    // de_local of a node is the strain of its averaged (pre-rotation) frame;
    // parents hand the children their strains through de_in
    for (int idx = 0; idx < net_->nodes(); ++idx) {
        Node& nd = nodes_[idx];
        if (nd.mode == Node::dead) continue;
        const Vec6& incoming = (idx == 0) ? macro : nd.de_in;
        Vec6 local = nd.rotate ? Vec6(nd.rot.transpose() * incoming) : incoming;
        if (idx >= fb) {
            residual += (local - nd.de_local).norm();
            nd.de_local = local;
            continue;
        }
        nd.de_local = local;
        if (nd.mode == Node::block) {
            auto [e1, e2] = nd.op.phase_strains(local);
            nodes_[tree_left(idx)].de_in = e1;
            nodes_[tree_right(idx)].de_in = e2;
        } else if (nd.mode == Node::pass_left) {
            nodes_[tree_left(idx)].de_in = local;
        } else {
            nodes_[tree_right(idx)].de_in = local;
        }
    }
    return residual;
}

StepResult NetworkState::step(const Vec6& macro_dstrain, double tol, int max_iter) {
    if (!(tol > 0.0)) throw NumericError("network step: tolerance must be positive");
    // reset bottom strains; iterate from the committed state every step
    for (int idx : bottom_nodes_) nodes_[idx].de_local = Vec6::Zero();
    // stash the incoming strains of leaves before the downward sweep rewrites
    std::vector<Vec6> prev(bottom_nodes_.size(), Vec6::Zero());

    double scale = std::max(1.0, macro_dstrain.norm());
    StepResult out;
    double prev_residual = std::numeric_limits<double>::infinity();
    int stall = 0;
    bool converged = false;
    for (int ite = 1; ite <= max_iter; ++ite) {
        for (std::size_t i = 0; i < bottom_nodes_.size(); ++i) prev[i] = nodes_[bottom_nodes_[i]].de_local;
        material_sweep();
        upward_sweep();
        double residual = downward_sweep(macro_dstrain);
        out.iterations = ite;
        out.residual = residual;
        if (residual <= tol * scale) {
            converged = true;
            break;
        }
        if (residual >= prev_residual) {
            if (++stall >= 20) {
                // damp the update to break fixed-point oscillations
                for (std::size_t i = 0; i < bottom_nodes_.size(); ++i) {
                    Node& nd = nodes_[bottom_nodes_[i]];
                    nd.de_local = 0.5 * (nd.de_local + prev[i]);
                }
            }
        } else {
            stall = 0;
        }
        prev_residual = residual;
    }
    if (!converged) {
        throw NumericError("network step: no convergence after " + std::to_string(max_iter) +
                           " iterations, residual " + std::to_string(out.residual));
    }

    // Final pass at the converged strains, then commit.
    material_sweep();
    upward_sweep();
    out.dstress = nodes_[0].c_up * macro_dstrain + nodes_[0].ds_up;
    for (std::size_t i = 0; i < bottom_nodes_.size(); ++i) {
        int p = nodes_[bottom_nodes_[i]].point;
        points_[p].commit(results_[p].state);
    }
    sigma_ += out.dstress;
    return out;
}

double NetworkState::homogenized_eps() const {
    double wsum = 0.0, esum = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (matrix_weights_[i] > 0.0) {
            wsum += matrix_weights_[i];
            esum += matrix_weights_[i] * points_[i].state().eps_plastic;
        }
    }
    return wsum > 0.0 ? esum / wsum : 0.0;
}

std::vector<material::PointState> NetworkState::bottom_states() const {
    std::vector<material::PointState> out;
    out.reserve(points_.size());
    for (const auto& p : points_) out.push_back(p.state());
    return out;
}

void NetworkState::restore(const Vec6& stress, const std::vector<material::PointState>& states) {
    if (states.size() != points_.size()) {
        throw UserError("network state restore: state count mismatch");
    }
    sigma_ = stress;
    for (std::size_t i = 0; i < points_.size(); ++i) points_[i].set_state(states[i]);
}

} // namespace dmn::online
