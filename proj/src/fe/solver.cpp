#include "dmn/fe/solver.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "dmn/io.hpp"

namespace dmn::fe {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

const double kXi[8] = {-1, 1, 1, -1, -1, 1, 1, -1};
const double kEta[8] = {-1, -1, 1, 1, -1, -1, 1, 1};
const double kZeta[8] = {-1, -1, -1, -1, 1, 1, 1, 1};

void shape_gradients_local(double xi, double eta, double zeta, Eigen::Matrix<double, 8, 3>& dn) {
    for (int a = 0; a < 8; ++a) {
        dn(a, 0) = 0.125 * kXi[a] * (1.0 + kEta[a] * eta) * (1.0 + kZeta[a] * zeta);
        dn(a, 1) = 0.125 * (1.0 + kXi[a] * xi) * kEta[a] * (1.0 + kZeta[a] * zeta);
        dn(a, 2) = 0.125 * (1.0 + kXi[a] * xi) * (1.0 + kEta[a] * eta) * kZeta[a];
    }
}

double shape_value(int a, double xi, double eta, double zeta) {
    return 0.125 * (1.0 + kXi[a] * xi) * (1.0 + kEta[a] * eta) * (1.0 + kZeta[a] * zeta);
}

Vec6 strain_to_mandel(const Mat3& sym_grad) {
    Vec6 v;
    v << sym_grad(0, 0), sym_grad(1, 1), sym_grad(2, 2),
         kSqrt2 * sym_grad(0, 1), kSqrt2 * sym_grad(1, 2), kSqrt2 * sym_grad(2, 0);
    return v;
}

} // namespace

double bc_amplitude(const BoundaryCondition& bc, double t) {
    if (bc.table.empty()) return bc.value;
    if (t <= bc.table.front().first) return bc.table.front().second;
    for (std::size_t i = 1; i < bc.table.size(); ++i) {
        if (t <= bc.table[i].first) {
            double t0 = bc.table[i - 1].first, t1 = bc.table[i].first;
            double v0 = bc.table[i - 1].second, v1 = bc.table[i].second;
            return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
        }
    }
    return bc.table.back().second;
}

std::vector<MicroRow> load_microstructure_field(const std::string& path, const Mesh& mesh) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open microstructure file: " + path);
    std::unordered_map<long, int> emap;
    for (std::size_t i = 0; i < mesh.element_ids.size(); ++i) {
        emap[mesh.element_ids[i]] = static_cast<int>(i);
    }
    std::vector<MicroRow> rows(mesh.elements.size());
    std::vector<char> seen(mesh.elements.size(), 0);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("elem", 0) == 0) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        auto fail = [&](const std::string& what) -> UserError {
            return UserError(path + ":" + std::to_string(line_no) + ": " + what);
        };
        if (cells.size() != 8) throw fail("expected 8 columns elem,axx,ayy,azz,axy,ayz,azx,vf");
        long id;
        double c[7];
        try {
            id = std::stol(cells[0]);
            for (int i = 0; i < 7; ++i) c[i] = io::parse_double(cells[i + 1]);
        } catch (const std::exception& e) {
            throw fail(e.what());
        }
        auto it = emap.find(id);
        if (it == emap.end()) throw fail("unknown element id " + std::to_string(id));
        if (seen[it->second]) throw fail("duplicate element id " + std::to_string(id));
        Mat3 a;
        a << c[0], c[3], c[5],
             c[3], c[1], c[4],
             c[5], c[4], c[2];
        MicroRow row;
        try {
            row.orientation = transfer::validate_orientation(a, 1e-3);
        } catch (const NumericError& e) {
            throw fail(e.what());
        }
        if (!(c[6] > 0.0 && c[6] < 1.0)) throw fail("volume fraction outside (0, 1)");
        row.vf = c[6];
        rows[it->second] = row;
        seen[it->second] = 1;
    }
    for (std::size_t e = 0; e < seen.size(); ++e) {
        if (!seen[e]) {
            throw UserError(path + ": no microstructure row for element id " +
                            std::to_string(mesh.element_ids[e]));
        }
    }
    return rows;
}

Simulation::Simulation(Mesh mesh, std::vector<MicroRow> micro, const transfer::AnchorSet& anchors,
                       SimConfig cfg)
    : mesh_(std::move(mesh)), cfg_(std::move(cfg)) {
    cfg_.fiber.validate();
    cfg_.matrix.validate();
    if (micro.size() != mesh_.elements.size()) {
        throw UserError("simulation: microstructure row count does not match element count");
    }
    init_bindings(anchors, micro);

    int nn = static_cast<int>(mesh_.nodes.size());
    u_.assign(3 * nn, 0.0);
    v_.assign(3 * nn, 0.0);
    u_committed_.assign(3 * nn, 0.0);
    fint_.assign(3 * nn, 0.0);
    mass_.assign(nn, 0.0);

    const double g = 1.0 / std::sqrt(3.0);
    const Mat6 c_fiber = cfg_.fiber.stiffness();
    const Mat6 c_matrix = cfg_.matrix.stiffness();
    dt_crit_ = std::numeric_limits<double>::infinity();

    qps_.resize(mesh_.elements.size() * 8);
    for (std::size_t e = 0; e < mesh_.elements.size(); ++e) {
        const auto& conn = mesh_.elements[e];
        Eigen::Matrix<double, 3, 8> coords;
        for (int a = 0; a < 8; ++a) coords.col(a) = mesh_.nodes[conn[a]];
        double density = (1.0 - micro[e].vf) * cfg_.matrix.density + micro[e].vf * cfg_.fiber.density;
        double volume = 0.0;
        for (int q = 0; q < 8; ++q) {
            double xi = g * kXi[q], eta = g * kEta[q], zeta = g * kZeta[q];
            Eigen::Matrix<double, 8, 3> dn_local;
            shape_gradients_local(xi, eta, zeta, dn_local);
            Mat3 jac = coords * dn_local; // dx/dxi
            double detj = jac.determinant();
            if (!(detj > 0.0)) {
                throw UserError("simulation: non-positive Jacobian in element id " +
                                std::to_string(mesh_.element_ids[e]));
            }
            QuadPoint& qp = qps_[e * 8 + q];
            qp.element = static_cast<int>(e);
            qp.qp = q;
            qp.weight_detj = detj; // unit Gauss weights for 2x2x2
            qp.grads = dn_local * jac.inverse();
            qp.state = std::make_unique<online::NetworkState>(element_nets_[e], cfg_.fiber, cfg_.matrix);
            volume += qp.weight_detj;
            for (int a = 0; a < 8; ++a) {
                mass_[conn[a]] += density * shape_value(a, xi, eta, zeta) * detj;
            }
        }
        (void)volume;
        // stability estimate from the homogenized elastic stiffness
        Mat6 c_hom = forward_stiffness(*element_nets_[e], c_fiber, c_matrix);
        Eigen::SelfAdjointEigenSolver<Mat6> es(c_hom);
        double wave_speed = std::sqrt(es.eigenvalues().maxCoeff() / density);
        double h_min = std::numeric_limits<double>::infinity();
        static const int edges[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                         {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
        for (auto& ed : edges) {
            h_min = std::min(h_min, (coords.col(ed[0]) - coords.col(ed[1])).norm());
        }
        dt_crit_ = std::min(dt_crit_, h_min / wave_speed);
    }
    if (!(cfg_.dt > 0.0)) throw UserError("simulation: dt must be positive");
    if (cfg_.dt > dt_crit_ && !cfg_.allow_dt_override) {
        throw UserError("simulation: dt " + std::to_string(cfg_.dt) +
                        " exceeds stability estimate " + std::to_string(dt_crit_) +
                        " (set allow_dt_override to proceed)");
    }
    // free dofs must carry mass
    for (double m : mass_) {
        if (!(m > 0.0)) throw NumericError("simulation: zero lumped mass");
    }
    for (int n = 0; n < nn; ++n) {
        for (int d = 0; d < 3; ++d) v_[3 * n + d] = cfg_.initial_velocity[d];
    }
    apply_bcs(0.0);
}

void Simulation::init_bindings(const transfer::AnchorSet& anchors, const std::vector<MicroRow>& micro) {
    element_nets_.resize(micro.size());
    std::map<std::array<double, 10>, std::shared_ptr<const Network>> cache;
    for (std::size_t e = 0; e < micro.size(); ++e) {
        const MicroRow& m = micro[e];
        std::array<double, 10> key{m.orientation(0, 0), m.orientation(1, 1), m.orientation(2, 2),
                                   m.orientation(0, 1), m.orientation(1, 2), m.orientation(2, 0),
                                   m.vf, 0.0, 0.0, 0.0};
        auto it = cache.find(key);
        if (it == cache.end()) {
            auto inst = anchors.instantiate(m.orientation, m.vf);
            auto net = std::make_shared<Network>(std::move(inst.net));
            it = cache.emplace(key, std::move(net)).first;
        }
        element_nets_[e] = it->second;
    }
    distinct_networks_ = static_cast<int>(cache.size());
}

double Simulation::element_volume(int e) const {
    double v = 0.0;
    for (int q = 0; q < 8; ++q) v += qps_[static_cast<std::size_t>(e) * 8 + q].weight_detj;
    return v;
}

std::vector<double> Simulation::assemble_internal_force(const std::vector<double>& du) {
    std::size_t ne = mesh_.elements.size();
    std::vector<std::array<double, 24>> elem_force(ne);

    auto process = [&](std::size_t e) {
        const auto& conn = mesh_.elements[e];
        Eigen::Matrix<double, 3, 8> due;
        for (int a = 0; a < 8; ++a) {
            for (int d = 0; d < 3; ++d) due(d, a) = du[3 * conn[a] + d];
        }
        elem_force[e].fill(0.0);
        for (int q = 0; q < 8; ++q) {
            QuadPoint& qp = qps_[e * 8 + q];
            Mat3 grad_u = due * qp.grads; // du_i/dx_j
            Mat3 sym = 0.5 * (grad_u + grad_u.transpose());
            Vec6 deps = strain_to_mandel(sym);
            online::StepResult res;
            try {
                res = qp.state->step(deps, cfg_.network_tol, cfg_.network_max_iter);
            } catch (const NumericError& err) {
                throw NumericError("element id " + std::to_string(mesh_.element_ids[e]) +
                                   " qp " + std::to_string(q) + ": " + err.what());
            }
            internal_work_ += qp.weight_detj * (qp.state->stress() - 0.5 * res.dstress).dot(deps);
            Mat3 sigma = mandel_to_tensor(qp.state->stress());
            for (int a = 0; a < 8; ++a) {
                Vec3 f = sigma * Vec3(qp.grads(a, 0), qp.grads(a, 1), qp.grads(a, 2)) * qp.weight_detj;
                for (int d = 0; d < 3; ++d) elem_force[e][3 * a + d] += f[d];
            }
        }
    };

    int nt = std::max(1, cfg_.threads);
    if (nt == 1 || ne < 2) {
        for (std::size_t e = 0; e < ne; ++e) process(e);
    } else {
        std::vector<std::exception_ptr> errors(nt);
        std::vector<std::thread> pool;
        for (int ti = 0; ti < nt; ++ti) {
            pool.emplace_back([&, ti]() {
                try {
                    for (std::size_t e = ti; e < ne; e += nt) process(e);
                } catch (...) {
                    errors[ti] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& err : errors) {
            if (err) std::rethrow_exception(err);
        }
    }

    std::vector<double> f(u_.size(), 0.0);
    for (std::size_t e = 0; e < ne; ++e) { // fixed-order reduction
        const auto& conn = mesh_.elements[e];
        for (int a = 0; a < 8; ++a) {
            for (int d = 0; d < 3; ++d) f[3 * conn[a] + d] += elem_force[e][3 * a + d];
        }
    }
    return f;
}

void Simulation::apply_bcs(double t_new) {
    for (const BoundaryCondition& bc : cfg_.bcs) {
        auto it = mesh_.node_sets.find(bc.node_set);
        if (it == mesh_.node_sets.end()) {
            throw UserError("simulation: unknown node set '" + bc.node_set + "'");
        }
        for (int n : it->second) {
            for (int d = 0; d < 3; ++d) {
                if (!bc.dof[d]) continue;
                int ix = 3 * n + d;
                switch (bc.kind) {
                    case BoundaryCondition::Kind::fixed:
                        v_[ix] = 0.0;
                        u_[ix] = 0.0;
                        break;
                    case BoundaryCondition::Kind::velocity:
                        v_[ix] = bc_amplitude(bc, t_new);
                        break;
                    case BoundaryCondition::Kind::displacement: {
                        double target = bc_amplitude(bc, t_new);
                        v_[ix] = (cfg_.dt > 0.0 && t_new > 0.0) ? (target - u_[ix]) / cfg_.dt : 0.0;
                        u_[ix] = target;
                        break;
                    }
                }
            }
        }
    }
}

void Simulation::step() {
    std::vector<double> du(u_.size());
    for (std::size_t i = 0; i < u_.size(); ++i) du[i] = u_[i] - u_committed_[i];
    fint_ = assemble_internal_force(du);
    u_committed_ = u_;

    double t_new = time_ + cfg_.dt;
    for (std::size_t n = 0; n < mesh_.nodes.size(); ++n) {
        double m = mass_[n];
        for (int d = 0; d < 3; ++d) {
            std::size_t ix = 3 * n + d;
            double a = (-fint_[ix] - cfg_.mass_damping * m * v_[ix]) / m;
            v_[ix] += a * cfg_.dt;
            if (!std::isfinite(v_[ix])) {
                throw NumericError("simulation: non-finite kinematics at t=" + std::to_string(time_));
            }
        }
    }
    // boundary enforcement overrides the free update on constrained dofs
    for (const BoundaryCondition& bc : cfg_.bcs) {
        auto& set = mesh_.node_sets.at(bc.node_set);
        for (int n : set) {
            for (int d = 0; d < 3; ++d) {
                if (!bc.dof[d]) continue;
                std::size_t ix = 3 * n + d;
                if (bc.kind == BoundaryCondition::Kind::fixed) {
                    v_[ix] = 0.0;
                } else if (bc.kind == BoundaryCondition::Kind::velocity) {
                    v_[ix] = bc_amplitude(bc, t_new);
                } else {
                    v_[ix] = (bc_amplitude(bc, t_new) - u_[ix]) / cfg_.dt;
                }
            }
        }
    }
    for (std::size_t i = 0; i < u_.size(); ++i) u_[i] += v_[i] * cfg_.dt;
    for (const BoundaryCondition& bc : cfg_.bcs) {
        if (bc.kind != BoundaryCondition::Kind::displacement &&
            bc.kind != BoundaryCondition::Kind::fixed) {
            continue;
        }
        auto& set = mesh_.node_sets.at(bc.node_set);
        for (int n : set) {
            for (int d = 0; d < 3; ++d) {
                if (!bc.dof[d]) continue;
                std::size_t ix = 3 * n + d;
                u_[ix] = (bc.kind == BoundaryCondition::Kind::fixed) ? 0.0 : bc_amplitude(bc, t_new);
            }
        }
    }
    time_ = t_new;
    ++step_;

    ReactionSample rs;
    rs.step = step_;
    rs.time = time_;
    for (const BoundaryCondition& bc : cfg_.bcs) {
        Vec3 sum = Vec3::Zero();
        for (int n : mesh_.node_sets.at(bc.node_set)) {
            for (int d = 0; d < 3; ++d) sum[d] += fint_[3 * n + d];
        }
        rs.force[bc.node_set] = sum;
    }
    reactions_.push_back(rs);
}

void Simulation::run() {
    long total = static_cast<long>(std::llround(cfg_.t_end / cfg_.dt));
    for (long s = 0; s < total; ++s) {
        step();
        if (cfg_.output_every > 0 && (step_ % cfg_.output_every == 0 || s + 1 == total)) {
            field_frames_.emplace_back(step_, field_now());
        }
    }
}

std::vector<FieldRow> Simulation::field_now() const {
    std::vector<FieldRow> rows;
    rows.reserve(qps_.size());
    for (const QuadPoint& qp : qps_) {
        rows.push_back({qp.element, qp.qp, qp.state->stress(), qp.state->homogenized_eps()});
    }
    return rows;
}

double Simulation::kinetic_energy() const {
    double ke = 0.0;
    for (std::size_t n = 0; n < mesh_.nodes.size(); ++n) {
        double vv = 0.0;
        for (int d = 0; d < 3; ++d) vv += v_[3 * n + d] * v_[3 * n + d];
        ke += 0.5 * mass_[n] * vv;
    }
    return ke;
}

Snapshot Simulation::snapshot() const {
    Snapshot s;
    s.time = time_;
    s.step = step_;
    s.u = u_;
    s.v = v_;
    s.u_committed = u_committed_;
    for (const QuadPoint& qp : qps_) {
        s.qp_stress.push_back(qp.state->stress());
        s.qp_states.push_back(qp.state->bottom_states());
    }
    return s;
}

void Simulation::restore(const Snapshot& s) {
    if (s.u.size() != u_.size() || s.qp_stress.size() != qps_.size()) {
        throw UserError("snapshot does not match this simulation");
    }
    time_ = s.time;
    step_ = s.step;
    u_ = s.u;
    v_ = s.v;
    u_committed_ = s.u_committed;
    for (std::size_t q = 0; q < qps_.size(); ++q) {
        qps_[q].state->restore(s.qp_stress[q], s.qp_states[q]);
    }
}

namespace {

nlohmann::json vec_to_json(const Vec6& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

Vec6 vec_from_json(const nlohmann::json& j) {
    Vec6 v;
    for (int i = 0; i < 6; ++i) v[i] = j.at(i).get<double>();
    return v;
}

} // namespace

void save_snapshot(const std::string& path, const Snapshot& s) {
    nlohmann::json j;
    j["time"] = s.time;
    j["step"] = s.step;
    j["u"] = s.u;
    j["v"] = s.v;
    j["u_committed"] = s.u_committed;
    auto stresses = nlohmann::json::array();
    for (const Vec6& v : s.qp_stress) stresses.push_back(vec_to_json(v));
    j["qp_stress"] = stresses;
    auto states = nlohmann::json::array();
    for (const auto& pts : s.qp_states) {
        auto arr = nlohmann::json::array();
        for (const material::PointState& p : pts) {
            arr.push_back({{"stress", vec_to_json(p.stress)},
                           {"plastic_strain", vec_to_json(p.plastic_strain)},
                           {"eps_plastic", p.eps_plastic}});
        }
        states.push_back(arr);
    }
    j["qp_states"] = states;
    std::ofstream out(path);
    if (!out) throw UserError("cannot write snapshot: " + path);
    out << j.dump() << '\n';
}

Snapshot load_snapshot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open snapshot: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UserError(path + ": " + e.what());
    }
    Snapshot s;
    s.time = j.at("time").get<double>();
    s.step = j.at("step").get<long>();
    s.u = j.at("u").get<std::vector<double>>();
    s.v = j.at("v").get<std::vector<double>>();
    s.u_committed = j.at("u_committed").get<std::vector<double>>();
    for (const auto& v : j.at("qp_stress")) s.qp_stress.push_back(vec_from_json(v));
    for (const auto& arr : j.at("qp_states")) {
        std::vector<material::PointState> pts;
        for (const auto& p : arr) {
            material::PointState ps;
            ps.stress = vec_from_json(p.at("stress"));
            ps.plastic_strain = vec_from_json(p.at("plastic_strain"));
            ps.eps_plastic = p.at("eps_plastic").get<double>();
            pts.push_back(ps);
        }
        s.qp_states.push_back(std::move(pts));
    }
    return s;
}

} // namespace dmn::fe
