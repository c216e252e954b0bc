#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dmn/fe/mesh.hpp"
#include "dmn/online.hpp"
#include "dmn/transfer.hpp"

namespace dmn::fe {

struct MicroRow {
    Mat3 orientation = Mat3::Identity() / 3.0;
    double vf = 0.0;
};

// Per-element microstructure CSV: elem,axx,ayy,azz,axy,ayz,azx,vf.
// Rows must cover every element; the trace is renormalized when within 1e-3.
std::vector<MicroRow> load_microstructure_field(const std::string& path, const Mesh& mesh);

struct BoundaryCondition {
    enum class Kind { fixed, displacement, velocity };
    Kind kind = Kind::fixed;
    std::string node_set;
    std::array<bool, 3> dof{false, false, false};
    double value = 0.0;                            // constant velocity
    std::vector<std::pair<double, double>> table;  // (t, amplitude), piecewise linear
};

double bc_amplitude(const BoundaryCondition& bc, double t);

struct SimConfig {
    double dt = 0.0;
    double t_end = 0.0;
    material::ConstitutiveSpec fiber, matrix;
    std::vector<BoundaryCondition> bcs;
    Vec3 initial_velocity = Vec3::Zero();
    int output_every = 1;
    bool allow_dt_override = false; // accept dt above the stability estimate
    double mass_damping = 0.0;      // mass-proportional damping coefficient
    double network_tol = 1e-8;
    int network_max_iter = 50;
    int threads = 1;
};

struct QuadPoint {
    int element = 0;
    int qp = 0;
    double weight_detj = 0.0;                        // quadrature weight times detJ
    Eigen::Matrix<double, 8, 3> grads;               // shape gradients, reference config
    std::unique_ptr<online::NetworkState> state;
};

struct Snapshot {
    double time = 0.0;
    long step = 0;
    std::vector<double> u, v, u_committed;
    std::vector<Vec6> qp_stress;
    std::vector<std::vector<material::PointState>> qp_states;
};

struct ReactionSample {
    long step = 0;
    double time = 0.0;
    std::map<std::string, Vec3> force; // sum of internal force over each constrained set
};

struct FieldRow {
    int element = 0;
    int qp = 0;
    Vec6 stress = Vec6::Zero();
    double eps_hom = 0.0;
};

// Explicit central-difference solver, hex8 with full 2x2x2 quadrature and one
// network state per quadrature point. Time loop is serial; the per-element
// internal-force evaluation runs in parallel with a fixed-order reduction.
class Simulation {
public:
    Simulation(Mesh mesh, std::vector<MicroRow> micro, const transfer::AnchorSet& anchors,
               SimConfig cfg);

    double critical_dt() const { return dt_crit_; }
    double time() const { return time_; }
    long step_count() const { return step_; }
    double element_volume(int e) const; // quadrature-integrated

    void step();
    void run(); // to t_end, recording histories at the configured cadence

    const std::vector<double>& displacement() const { return u_; }
    const std::vector<ReactionSample>& reactions() const { return reactions_; }
    const std::vector<std::pair<long, std::vector<FieldRow>>>& field_frames() const {
        return field_frames_;
    }
    std::vector<FieldRow> field_now() const;
    double kinetic_energy() const;
    double internal_work() const { return internal_work_; }

    // deterministic distinct-network count (microstructure deduplication)
    int distinct_networks() const { return distinct_networks_; }
    const Network* network_of_element(int e) const { return element_nets_[e].get(); }

    Snapshot snapshot() const;
    void restore(const Snapshot& s);

    // Advances every quadrature point by the element strain increments of du
    // and assembles B^T sigma; exposed for patch-style checks.
    std::vector<double> assemble_internal_force(const std::vector<double>& du);

private:
    void apply_bcs(double t_new);
    void init_bindings(const transfer::AnchorSet& anchors, const std::vector<MicroRow>& micro);

    Mesh mesh_;
    SimConfig cfg_;
    std::vector<std::shared_ptr<const Network>> element_nets_;
    int distinct_networks_ = 0;
    std::vector<QuadPoint> qps_;            // 8 per element, element-major
    std::vector<double> mass_;              // lumped, per node
    std::vector<double> u_, v_, u_committed_;
    std::vector<double> fint_;
    double time_ = 0.0;
    long step_ = 0;
    double dt_crit_ = 0.0;
    double internal_work_ = 0.0;
    std::vector<ReactionSample> reactions_;
    std::vector<std::pair<long, std::vector<FieldRow>>> field_frames_;
};

void save_snapshot(const std::string& path, const Snapshot& s);
Snapshot load_snapshot(const std::string& path);

} // namespace dmn::fe
