#include "dmn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "dmn/hash.hpp"

namespace dmn::train {

namespace {

constexpr double kPi = 3.14159265358979323846;

enum : signed char { kDead = 0, kLeaf = 1, kPassLeft = 2, kPassRight = 3, kBlock = 4 };

// Topology, weights, and rotations are fixed while a batch is evaluated, so
// they are resolved once and shared across samples.
struct NetStructure {
    int nn = 0, fb = 0;
    std::vector<double> w;
    std::vector<signed char> mode;
    std::vector<double> vf;
    std::vector<Mat6> rot;
    std::vector<std::array<Mat6, 3>> drot;
};

NetStructure analyze(const Network& net, bool with_jacobians) {
    NetStructure s;
    s.nn = net.nodes();
    s.fb = net.first_bottom();
    s.w = net.weights();
    if (!(s.w[0] > 0.0)) throw NumericError("network has zero total weight");
    s.mode.assign(s.nn, kDead);
    s.vf.assign(s.nn, 0.0);
    s.rot.resize(s.nn);
    if (with_jacobians) s.drot.resize(s.nn);
    for (int idx = s.nn - 1; idx >= 0; --idx) {
        if (idx >= s.fb) {
            s.mode[idx] = s.w[idx] > 0.0 ? kLeaf : kDead;
            continue;
        }
        int l = tree_left(idx), r = tree_right(idx);
        bool la = s.mode[l] != kDead, ra = s.mode[r] != kDead;
        if (!la && !ra) continue;
        s.mode[idx] = (la && ra) ? kBlock : (la ? kPassLeft : kPassRight);
        if (la && ra) s.vf[idx] = s.w[r] / (s.w[l] + s.w[r]);
        if (with_jacobians) {
            rotation6_jacobian(net.angles[idx], s.rot[idx], s.drot[idx]);
        } else {
            s.rot[idx] = rotation6(net.angles[idx]);
        }
    }
    return s;
}

struct Tape {
    std::vector<Mat6> c_up, c_bar, conc;
    std::vector<Mat36> a_hat;
    std::vector<Mat3> s_inv;
    void resize(int nn) {
        c_up.resize(nn);
        c_bar.resize(nn);
        conc.resize(nn);
        a_hat.resize(nn);
        s_inv.resize(nn);
    }
};

Mat6 forward_tape(const NetStructure& s, const Mat6& cf, const Mat6& cm, Tape& t) {
    for (int idx = s.nn - 1; idx >= 0; --idx) {
        switch (s.mode[idx]) {
            case kDead:
                break;
            case kLeaf: {
                int k = idx - s.fb + 1;
                t.c_up[idx] = (phase_of_bottom(k) == Phase::fiber) ? cf : cm;
                break;
            }
            case kPassLeft:
            case kPassRight: {
                int c = (s.mode[idx] == kPassLeft) ? tree_left(idx) : tree_right(idx);
                t.c_bar[idx] = t.c_up[c];
                t.c_up[idx] = symmetrized(s.rot[idx] * t.c_bar[idx] * s.rot[idx].transpose());
                break;
            }
            default: {
                int l = tree_left(idx), r = tree_right(idx);
                BlockSystem sys = solve_block_system(t.c_up[l], t.c_up[r], s.vf[idx]);
                t.s_inv[idx] = sys.s_inv;
                t.a_hat[idx] = sys.a_hat;
                t.conc[idx] = concentration_matrix(sys);
                t.c_bar[idx] = t.c_up[r] - (1.0 - s.vf[idx]) * (t.c_up[r] - t.c_up[l]) * t.conc[idx];
                t.c_up[idx] = symmetrized(s.rot[idx] * t.c_bar[idx] * s.rot[idx].transpose());
                break;
            }
        }
    }
    return t.c_up[0];
}

// Reverse sweep: adjoints of the post-rotation stiffnesses flow top-down;
// volume-fraction sensitivities accumulate into nodal-weight adjoints, which
// reach the activations through the ReLU mask at the leaves.
void backward_tape(const NetStructure& s, const Network& net, const Tape& t, const Mat6& g_top,
                   std::vector<Mat6>& adj, std::vector<double>& wbar, Gradients& g) {
    adj[0] = g_top;
    std::fill(wbar.begin(), wbar.end(), 0.0);
    for (int idx = 0; idx < s.nn; ++idx) {
        if (s.mode[idx] == kDead) continue;
        if (s.mode[idx] == kLeaf) {
            int j = idx - s.fb;
            if (net.z[j] > 0.0) g.z[j] += wbar[idx];
            continue;
        }
        const Mat6 gup = adj[idx];
        Mat6 m_r = 2.0 * gup * s.rot[idx] * t.c_bar[idx];
        g.alpha[idx] += m_r.cwiseProduct(s.drot[idx][0]).sum();
        g.beta[idx] += m_r.cwiseProduct(s.drot[idx][1]).sum();
        g.gamma[idx] += m_r.cwiseProduct(s.drot[idx][2]).sum();
        Mat6 gbar = s.rot[idx].transpose() * gup * s.rot[idx];
        if (s.mode[idx] != kBlock) {
            int c = (s.mode[idx] == kPassLeft) ? tree_left(idx) : tree_right(idx);
            adj[c] = gbar;
            wbar[c] += wbar[idx];
            continue;
        }
        int l = tree_left(idx), r = tree_right(idx);
        double v = s.vf[idx];
        Mat6 d = t.c_up[r] - t.c_up[l];
        const Mat6& a = t.conc[idx];
        Mat6 ga = gbar * a.transpose();
        Mat6 gl = (1.0 - v) * ga;
        Mat6 gr = gbar - (1.0 - v) * ga;
        // back through the interface solve
        Mat6 dg = d * gbar;
        Mat36 abar;
        for (int rr = 0; rr < 3; ++rr) abar.row(rr) = -(1.0 - v) * dg.row(kTractionRows[rr]);
        Mat36 y = t.s_inv[idx] * abar;
        Mat3 zmat = y * t.a_hat[idx].transpose();
        double g_v = gbar.cwiseProduct(d * a).sum();
        for (int jj : kKinematicRows) {
            for (int rr = 0; rr < 3; ++rr) {
                gr(kTractionRows[rr], jj) += v * y(rr, jj);
                gl(kTractionRows[rr], jj) -= v * y(rr, jj);
                g_v += y(rr, jj) * d(kTractionRows[rr], jj);
            }
        }
        for (int rr = 0; rr < 3; ++rr) {
            for (int cc = 0; cc < 3; ++cc) {
                int ti = kTractionRows[rr], tj = kTractionRows[cc];
                gr(ti, tj) += y(rr, tj);
                gl(ti, tj) -= v * zmat(rr, cc);
                gr(ti, tj) -= (1.0 - v) * zmat(rr, cc);
                g_v += zmat(rr, cc) * d(ti, tj);
            }
        }
        adj[l] = 0.5 * (gl + gl.transpose());
        adj[r] = 0.5 * (gr + gr.transpose());
        double wsum = s.w[l] + s.w[r];
        wbar[l] += wbar[idx] - g_v * v / wsum;
        wbar[r] += wbar[idx] + g_v * (1.0 - v) / wsum;
    }
}

double relu_sum(const Network& net) {
    double t = 0.0;
    for (double v : net.z) t += std::max(v, 0.0);
    return t;
}

double penalty_target(const Network& net) { return static_cast<double>(1 << (net.n_layers - 2)); }

struct Metrics {
    double cost = 0.0;
    double mae = 0.0;
};

Metrics evaluate_metrics(const Network& net, std::span<const Sample> part, double lambda) {
    NetStructure s = analyze(net, false);
    Tape t;
    t.resize(s.nn);
    Metrics m;
    for (const Sample& smp : part) {
        Mat6 pred = forward_tape(s, smp.c_fiber, smp.c_matrix, t);
        double tn = smp.c_composite.norm();
        double dn = (pred - smp.c_composite).norm();
        m.cost += 0.5 * dn * dn / (tn * tn);
        m.mae += dn / tn;
    }
    double n = static_cast<double>(part.size());
    m.cost /= n;
    m.mae /= n;
    double excess = relu_sum(net) - penalty_target(net);
    m.cost += lambda * excess * excess;
    return m;
}

} // namespace

std::string network_hash(const Network& net) {
    Fnv1a h;
    h.update(&net.n_layers, sizeof net.n_layers);
    for (double v : net.z) h.update(v);
    for (const EulerAngles& e : net.angles) {
        h.update(e.alpha);
        h.update(e.beta);
        h.update(e.gamma);
    }
    return h.hex();
}

namespace {

Mat6 orthotropic_phase(Rng& rng, double e_lo, double e_hi) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        double e1 = rng.log_uniform(e_lo, e_hi);
        double e2 = rng.log_uniform(e_lo, e_hi);
        double e3 = rng.log_uniform(e_lo, e_hi);
        double nu12 = rng.uniform(0.05, 0.45);
        double nu13 = rng.uniform(0.05, 0.45);
        double nu23 = rng.uniform(0.05, 0.45);
        Mat3 sn;
        sn << 1.0 / e1, -nu12 / e1, -nu13 / e1,
              -nu12 / e1, 1.0 / e2, -nu23 / e2,
              -nu13 / e1, -nu23 / e2, 1.0 / e3;
        Eigen::SelfAdjointEigenSolver<Mat3> es(sn);
        if (es.eigenvalues().minCoeff() <= 1e-12 / e_hi) continue;
        Mat6 c = Mat6::Zero();
        c.topLeftCorner<3, 3>() = sn.inverse();
        c(3, 3) = 2.0 * rng.log_uniform(e_lo / 3.0, e_hi / 3.0);
        c(4, 4) = 2.0 * rng.log_uniform(e_lo / 3.0, e_hi / 3.0);
        c(5, 5) = 2.0 * rng.log_uniform(e_lo / 3.0, e_hi / 3.0);
        c = 0.5 * (c + c.transpose()).eval();
        if (is_spd(c, 1e-12)) return c;
    }
    throw NumericError("phase sampling: no SPD draw in 1000 attempts");
}

} // namespace

std::pair<Mat6, Mat6> generate_phase_pair(Rng& rng) {
    Mat6 fiber = orthotropic_phase(rng, 1e2, 1e5);
    Mat6 matrix = orthotropic_phase(rng, 1.0, 1e2);
    return {fiber, matrix};
}

Dataset generate_teacher_dataset(const Network& teacher, int n_total, Rng& rng) {
    if (n_total < 2) throw UserError("dataset: need at least 2 samples");
    Dataset data;
    data.samples.reserve(n_total);
    for (int i = 0; i < n_total; ++i) {
        auto [cf, cm] = generate_phase_pair(rng);
        Sample smp;
        smp.c_fiber = cf;
        smp.c_matrix = cm;
        smp.c_composite = forward_stiffness(teacher, cf, cm);
        data.samples.push_back(smp);
    }
    data.n_train = (n_total * 4) / 5;
    data.teacher_hash = network_hash(teacher);
    return data;
}

void Gradients::resize(const Network& net) {
    z.assign(net.bottoms(), 0.0);
    alpha.assign(net.nodes(), 0.0);
    beta.assign(net.nodes(), 0.0);
    gamma.assign(net.nodes(), 0.0);
}

void Gradients::setZero() {
    std::fill(z.begin(), z.end(), 0.0);
    std::fill(alpha.begin(), alpha.end(), 0.0);
    std::fill(beta.begin(), beta.end(), 0.0);
    std::fill(gamma.begin(), gamma.end(), 0.0);
}

std::vector<double> Gradients::pack() const {
    std::vector<double> p;
    p.reserve(z.size() + 3 * alpha.size());
    p.insert(p.end(), z.begin(), z.end());
    p.insert(p.end(), alpha.begin(), alpha.end());
    p.insert(p.end(), beta.begin(), beta.end());
    p.insert(p.end(), gamma.begin(), gamma.end());
    return p;
}

double cost(const Network& net, std::span<const Sample> batch, double lambda) {
    if (batch.empty()) throw UserError("cost: empty batch");
    NetStructure s = analyze(net, false);
    Tape t;
    t.resize(s.nn);
    double j = 0.0;
    for (const Sample& smp : batch) {
        Mat6 pred = forward_tape(s, smp.c_fiber, smp.c_matrix, t);
        j += 0.5 * (pred - smp.c_composite).squaredNorm() / smp.c_composite.squaredNorm();
    }
    j /= static_cast<double>(batch.size());
    double excess = relu_sum(net) - penalty_target(net);
    return j + lambda * excess * excess;
}

Gradients gradients(const Network& net, std::span<const Sample> batch, double lambda, int threads) {
    if (batch.empty()) throw UserError("gradients: empty batch");
    NetStructure s = analyze(net, true);
    int nt = std::max(1, threads);
    nt = std::min<int>(nt, static_cast<int>(batch.size()));
    double inv_ns = 1.0 / static_cast<double>(batch.size());

    std::vector<Gradients> partial(nt);
    std::vector<std::exception_ptr> errors(nt);
    auto work = [&](int ti) {
        try {
            partial[ti].resize(net);
            Tape t;
            t.resize(s.nn);
            std::vector<Mat6> adj(s.nn);
            std::vector<double> wbar(s.nn);
            std::size_t lo = batch.size() * ti / nt;
            std::size_t hi = batch.size() * (ti + 1) / nt;
            for (std::size_t i = lo; i < hi; ++i) {
                const Sample& smp = batch[i];
                Mat6 pred = forward_tape(s, smp.c_fiber, smp.c_matrix, t);
                Mat6 gtop = (inv_ns / smp.c_composite.squaredNorm()) * (pred - smp.c_composite);
                backward_tape(s, net, t, gtop, adj, wbar, partial[ti]);
            }
        } catch (...) {
            errors[ti] = std::current_exception();
        }
    };
    if (nt == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nt);
        for (int ti = 0; ti < nt; ++ti) pool.emplace_back(work, ti);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    // fixed reduction order keeps results independent of scheduling
    Gradients g = std::move(partial[0]);
    for (int ti = 1; ti < nt; ++ti) {
        for (std::size_t i = 0; i < g.z.size(); ++i) g.z[i] += partial[ti].z[i];
        for (std::size_t i = 0; i < g.alpha.size(); ++i) {
            g.alpha[i] += partial[ti].alpha[i];
            g.beta[i] += partial[ti].beta[i];
            g.gamma[i] += partial[ti].gamma[i];
        }
    }
    double pen = 2.0 * lambda * (relu_sum(net) - penalty_target(net));
    for (std::size_t i = 0; i < g.z.size(); ++i) {
        if (net.z[i] > 0.0) g.z[i] += pen;
    }
    return g;
}

double evaluate_error(const Network& net, std::span<const Sample> part) {
    if (part.empty()) throw UserError("evaluate_error: empty dataset part");
    NetStructure s = analyze(net, false);
    Tape t;
    t.resize(s.nn);
    double mae = 0.0;
    for (const Sample& smp : part) {
        Mat6 pred = forward_tape(s, smp.c_fiber, smp.c_matrix, t);
        mae += (pred - smp.c_composite).norm() / smp.c_composite.norm();
    }
    return mae / static_cast<double>(part.size());
}

TrainResult train(const Network& init, const Dataset& data, const TrainConfig& cfg) {
    if (data.n_train <= 0 || data.n_train > static_cast<int>(data.samples.size())) {
        throw UserError("train: invalid dataset split");
    }
    if (!(cfg.bold_up > 1.0) || !(cfg.bold_down > 0.0) || !(cfg.bold_down < 1.0)) {
        throw UserError("train: bold driver factors need up > 1 > down > 0");
    }
    TrainResult result{init, {}};
    Network& net = result.network;
    Rng rng(cfg.seed);
    auto train_part = data.train_split();
    auto test_part = data.test_split();

    Metrics cur = evaluate_metrics(net, train_part, cfg.lambda);
    if (!std::isfinite(cur.cost)) throw NumericError("train: initial cost is not finite");
    double lr = cfg.lr0;

    std::vector<int> order(train_part.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::vector<Sample> scratch;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<double> snapshot = net.pack_parameters();
        rng.shuffle(order);
        int nb = std::min<int>(cfg.n_batches, static_cast<int>(order.size()));
        bool failed = false;
        for (int b = 0; b < nb && !failed; ++b) {
            std::size_t lo = order.size() * b / nb;
            std::size_t hi = order.size() * (b + 1) / nb;
            scratch.assign(hi - lo, Sample{});
            for (std::size_t i = lo; i < hi; ++i) scratch[i - lo] = train_part[order[i]];
            try {
                Gradients g = gradients(net, scratch, cfg.lambda, cfg.threads);
                std::vector<double> theta = net.pack_parameters();
                std::vector<double> gv = g.pack();
                for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * gv[i];
                net.unpack_parameters(theta);
            } catch (const NumericError&) {
                failed = true;
            }
        }

        Metrics cand;
        cand.cost = std::numeric_limits<double>::infinity();
        if (!failed) {
            try {
                cand = evaluate_metrics(net, train_part, cfg.lambda);
            } catch (const NumericError&) {
                cand.cost = std::numeric_limits<double>::infinity();
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        if (std::isfinite(cand.cost) && cand.cost < cur.cost) {
            cur = cand;
            lr *= cfg.bold_up;
        } else {
            net.unpack_parameters(snapshot);
            lr *= cfg.bold_down;
            rec.reverted = true;
            if (lr < 1e-300) {
                throw NumericError("train: learning rate underflow, optimization diverged");
            }
        }
        rec.train_cost = cur.cost;
        rec.train_error = cur.mae;
        if (!test_part.empty()) {
            Metrics tm = evaluate_metrics(net, test_part, cfg.lambda);
            rec.test_cost = tm.cost;
            rec.test_error = tm.mae;
        }
        rec.lr = lr;
        result.history.push_back(rec);
        if (cfg.stop_train_error > 0.0 && cur.mae <= cfg.stop_train_error) break;
    }
    return result;
}

Network make_structured_teacher(int n_layers, OrientationKind kind, double fiber_vf) {
    if (!(fiber_vf > 0.0 && fiber_vf < 1.0)) {
        throw UserError("teacher: fiber volume fraction must lie in (0, 1)");
    }
    Network net(n_layers);
    for (int j = 0; j < net.bottoms(); ++j) {
        // odd k -> matrix slot, even k -> fiber slot; each pair sums to one
        net.z[j] = (j % 2 == 0) ? (1.0 - fiber_vf) : fiber_vf;
    }
    // Interface normals spread by low-discrepancy sequences so the laminate
    // hierarchy mimics the intended orientation state.
    for (int idx = 0; idx < net.first_bottom(); ++idx) {
        double u = std::fmod((idx + 1) * 0.7548776662466927, 1.0);
        double v = std::fmod((idx + 1) * 0.5698402909980532, 1.0);
        EulerAngles& e = net.angles[idx];
        switch (kind) {
            case OrientationKind::ud:
                // normals confined to the y-z plane keep axis 1 fiber-stiff
                e = {0.0, kPi * u, 0.0};
                break;
            case OrientationKind::random2d:
                // normals on a narrow cone about axis 3: stiff in-plane response
                e = {2.0 * kPi * u, 0.25, 0.0};
                break;
            case OrientationKind::random3d:
                e = {2.0 * kPi * u, std::acos(1.0 - 2.0 * v), 0.0};
                break;
        }
    }
    return net;
}

std::vector<TrainResult> transfer_train_chain(int n_layers, std::span<const ChainStage> stages,
                                              const Network* stage1_init) {
    if (stages.empty()) throw UserError("chain: no stages");
    if (stage1_init && stage1_init->n_layers != n_layers) {
        throw UserError("chain: initial network topology mismatch");
    }
    std::vector<TrainResult> out;
    out.reserve(stages.size());
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const ChainStage& st = stages[i];
        if (!st.dataset) throw UserError("chain: stage without dataset");
        Network init = (i == 0)
                           ? (stage1_init ? *stage1_init : Network::random(n_layers, st.config.seed))
                           : out.back().network;
        out.push_back(train(init, *st.dataset, st.config));
    }
    return out;
}

} // namespace dmn::train
