#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "dmn/online.hpp"
#include "dmn/rng.hpp"
#include "dmn/training.hpp"
#include "support/oracles.hpp"

using namespace dmn;
using namespace dmn::online;

namespace {

material::ConstitutiveSpec elastic_spec(double e, double nu, double rho = 1e-9) {
    material::ConstitutiveSpec s;
    s.law = material::ConstitutiveSpec::Law::elastic;
    s.young = e;
    s.poisson = nu;
    s.density = rho;
    return s;
}

material::ConstitutiveSpec j2_spec() {
    material::ConstitutiveSpec s;
    s.law = material::ConstitutiveSpec::Law::j2;
    s.young = 3800.0;
    s.poisson = 0.39;
    s.density = 1e-9;
    s.hardening.kind = material::HardeningCurve::Kind::exponential;
    s.hardening.h0 = 140.0;
    s.hardening.s1 = 120.0;
    s.hardening.s2 = 0.0;
    s.hardening.s3 = 90.0;
    return s;
}

} // namespace

TEST(AffineBlock, ZeroCorrectionsReduceToLinear) {
    Mat6 cf = isotropic_stiffness(72000.0, 0.20);
    Mat6 cm = isotropic_stiffness(1616.0, 0.3545);
    auto res = affine_block_homogenize(cm, Vec6::Zero(), cf, Vec6::Zero(), 0.3);
    EXPECT_EQ(res.correction.norm(), 0.0);
    Mat6 linear = block_homogenize(cm, cf, 0.3);
    EXPECT_NEAR((res.stiffness - linear).norm() / linear.norm(), 0.0, 1e-13);
}

TEST(AffineBlock, IdenticalStiffnessAveragesCorrections) {
    Mat6 c = isotropic_stiffness(1000.0, 0.3);
    Vec6 d1, d2;
    d1 << 1, 2, 3, 4, 5, 6;
    d2 << -2, 1, 0.5, 3, -1, 2;
    double v = 0.35;
    auto res = affine_block_homogenize(c, d1, c, d2, v);
    Vec6 expect = (1.0 - v) * d1 + v * d2;
    EXPECT_NEAR((res.correction - expect).norm(), 0.0, 1e-12);
}

TEST(AffineBlock, MatchesAffineInterfaceOracle) {
    Rng rng(41);
    for (int i = 0; i < 30; ++i) {
        auto [cf, cm] = train::generate_phase_pair(rng);
        double v = rng.uniform(0.1, 0.9);
        Vec6 d1, d2;
        for (int j = 0; j < 6; ++j) {
            d1[j] = rng.uniform(-5.0, 5.0);
            d2[j] = rng.uniform(-5.0, 5.0);
        }
        auto got = affine_block_homogenize(cm, d1, cf, d2, v);
        auto sol = oracle::solve_interface(cm, cf, v, d1, d2);
        EXPECT_LT((got.stiffness - sol.c_bar).norm() / sol.c_bar.norm(), 1e-10);
        double dscale = std::max(1.0, sol.ds_bar.norm());
        EXPECT_LT((got.correction - sol.ds_bar).norm() / dscale, 1e-10);
        // response agreement for random block strains
        for (int k = 0; k < 10; ++k) {
            Vec6 eb;
            for (int j = 0; j < 6; ++j) eb[j] = rng.uniform(-1.0, 1.0);
            Vec6 mine = got.stiffness * eb + got.correction;
            Vec6 ref = sol.c_bar * eb + sol.ds_bar;
            EXPECT_LT((mine - ref).norm() / std::max(1.0, ref.norm()), 1e-10);
        }
    }
}

TEST(Dehomogenize, IdenticalChildrenShareStrain) {
    Mat6 c = isotropic_stiffness(500.0, 0.25);
    auto op = make_block_operator(c, Vec6::Zero(), c, Vec6::Zero(), 0.4);
    Vec6 eb;
    eb << 1, -2, 3, 0.5, -0.25, 2;
    auto [e1, e2] = op.phase_strains(eb);
    EXPECT_NEAR((e1 - eb).norm(), 0.0, 1e-12);
    EXPECT_NEAR((e2 - eb).norm(), 0.0, 1e-12);
}

TEST(Dehomogenize, PhaseStrainsMatchOracleAndMixture) {
    Rng rng(43);
    for (int i = 0; i < 30; ++i) {
        auto [cf, cm] = train::generate_phase_pair(rng);
        double v = rng.uniform(0.1, 0.9);
        Vec6 d1, d2;
        for (int j = 0; j < 6; ++j) {
            d1[j] = rng.uniform(-2.0, 2.0);
            d2[j] = rng.uniform(-2.0, 2.0);
        }
        auto op = make_block_operator(cm, d1, cf, d2, v);
        auto sol = oracle::solve_interface(cm, cf, v, d1, d2);
        Vec6 eb;
        for (int j = 0; j < 6; ++j) eb[j] = rng.uniform(-1.0, 1.0);
        auto [e1, e2] = op.phase_strains(eb);
        Vec6 ref1 = sol.a1 * eb + sol.b1;
        Vec6 ref2 = sol.a2 * eb + sol.b2;
        EXPECT_LT((e1 - ref1).norm() / std::max(1.0, ref1.norm()), 1e-10);
        EXPECT_LT((e2 - ref2).norm() / std::max(1.0, ref2.norm()), 1e-10);
        // mixture identity
        Vec6 mix = (1.0 - v) * e1 + v * e2;
        EXPECT_NEAR((mix - eb).norm(), 0.0, 1e-12 * std::max(1.0, eb.norm()));
        // stress recombination consistent with the affine block
        auto blk = affine_block_homogenize(cm, d1, cf, d2, v);
        Vec6 s_mix = (1.0 - v) * (cm * e1 + d1) + v * (cf * e2 + d2);
        Vec6 s_blk = blk.stiffness * eb + blk.correction;
        EXPECT_LT((s_mix - s_blk).norm() / std::max(1.0, s_blk.norm()), 1e-11);
    }
}

TEST(NetworkStep, ElasticMatchesLinearForward) {
    auto fiber = elastic_spec(72000.0, 0.20);
    auto matrix = elastic_spec(1616.0, 0.3545);
    Rng rng(47);
    for (int i = 0; i < 20; ++i) {
        auto net = std::make_shared<Network>(Network::random(4, rng.next_u64()));
        NetworkState state(net, fiber, matrix);
        Mat6 c_lin = forward_stiffness(*net, fiber.stiffness(), matrix.stiffness());
        Vec6 de;
        for (int j = 0; j < 6; ++j) de[j] = rng.uniform(-1e-3, 1e-3);
        StepResult res = state.step(de, 1e-10);
        EXPECT_LE(res.iterations, 2);
        Vec6 expect = c_lin * de;
        EXPECT_LT((res.dstress - expect).norm() / expect.norm(), 1e-8);
        EXPECT_LT((state.stress() - expect).norm() / expect.norm(), 1e-8);
    }
}

TEST(NetworkStep, ZeroIncrementLeavesStateUnchanged) {
    auto fiber = elastic_spec(72000.0, 0.20);
    auto matrix = j2_spec();
    auto net = std::make_shared<Network>(Network::random(3, 5));
    NetworkState state(net, fiber, matrix);
    StepResult res = state.step(Vec6::Zero(), 1e-10);
    EXPECT_EQ(res.dstress.norm(), 0.0);
    EXPECT_EQ(state.stress().norm(), 0.0);
    EXPECT_LE(res.iterations, 2);
    EXPECT_EQ(state.homogenized_eps(), 0.0);
}

TEST(NetworkStep, MatchesNonlinearLaminateOracle) {
    auto fiber = elastic_spec(80000.0, 0.20);
    auto matrix = j2_spec();
    double vf = 0.25;
    auto net = std::make_shared<Network>(Network(2));
    net->z = {1.0 - vf, vf}; // matrix left, fiber right, angles zero
    NetworkState state(net, fiber, matrix);
    oracle::LaminateOracle ref(&matrix, &fiber, vf);
    Vec6 de = Vec6::Zero();
    de[0] = 4e-4; // to 2% axial strain over 50 steps, well past matrix yield
    double worst = 0.0;
    for (int stepi = 0; stepi < 50; ++stepi) {
        state.step(de, 1e-11, 200);
        Vec6 sig_ref = ref.step(de);
        double err = (state.stress() - sig_ref).norm() / std::max(1.0, sig_ref.norm());
        worst = std::max(worst, err);
    }
    EXPECT_LT(worst, 1e-6);
    EXPECT_GT(state.homogenized_eps(), 0.0);
}

TEST(NetworkStep, TopRotationObjectivity) {
    auto fiber = elastic_spec(72000.0, 0.20);
    auto matrix = j2_spec();
    Rng rng(53);
    Network base = Network::random(3, 11);
    EulerAngles extra{0.6, 0.8, -0.4};
    // composed-top network
    Network composed = base;
    composed.angles[0] =
        euler_from_matrix(euler_to_matrix(extra) * euler_to_matrix(base.angles[0]));
    auto net_a = std::make_shared<Network>(composed);
    auto net_b = std::make_shared<Network>(base);
    NetworkState sa(net_a, fiber, matrix);
    NetworkState sb(net_b, fiber, matrix);
    Mat6 r6 = rotation6(extra);
    Vec6 de;
    for (int j = 0; j < 6; ++j) de[j] = rng.uniform(-2e-3, 2e-3);
    for (int stepi = 0; stepi < 5; ++stepi) {
        sa.step(de, 1e-12, 200);
        sb.step(r6.transpose() * de, 1e-12, 200);
        Vec6 expect = r6 * sb.stress();
        EXPECT_LT((sa.stress() - expect).norm() / std::max(1.0, expect.norm()), 1e-8);
    }
}

TEST(NetworkStep, StepSizeConsistency) {
    auto fiber = elastic_spec(80000.0, 0.20);
    auto matrix = j2_spec();
    auto net = std::make_shared<Network>(Network::random(3, 29));
    NetworkState coarse(net, fiber, matrix);
    NetworkState fine(net, fiber, matrix);
    Vec6 de = Vec6::Zero();
    de[0] = 4e-4;
    de[3] = 1e-4;
    for (int i = 0; i < 25; ++i) coarse.step(de, 1e-11, 200);
    for (int i = 0; i < 50; ++i) fine.step(0.5 * de, 1e-11, 200);
    double rel = (coarse.stress() - fine.stress()).norm() / fine.stress().norm();
    EXPECT_LT(rel, 0.01);
}

TEST(NetworkStep, NonConvergenceRaises) {
    auto fiber = elastic_spec(80000.0, 0.20);
    auto matrix = j2_spec();
    auto net = std::make_shared<Network>(Network::random(3, 31));
    NetworkState state(net, fiber, matrix);
    Vec6 de = Vec6::Zero();
    de[0] = 0.02; // deep plastic step cannot settle in a single sweep
    EXPECT_THROW(state.step(de, 1e-14, 1), NumericError);
}

TEST(HomogenizedEps, WeightedAverageOverMatrixNodes) {
    auto fiber = elastic_spec(72000.0, 0.2);
    auto matrix = j2_spec();
    // 3-layer tree: matrix bottom nodes are k = 1 and k = 3 (z indices 0, 2)
    Network net(3);
    net.z = {1.0, 1.0, 3.0, 1.0};
    auto shared = std::make_shared<Network>(net);
    NetworkState state(shared, fiber, matrix);
    auto states = state.bottom_states();
    ASSERT_EQ(states.size(), 4u);
    // bottom nodes recorded in descending flat-index order: k = 4, 3, 2, 1
    states[1].eps_plastic = 0.2; // k = 3, weight 3
    states[3].eps_plastic = 0.1; // k = 1, weight 1
    state.restore(Vec6::Zero(), states);
    EXPECT_NEAR(state.homogenized_eps(), 0.175, 1e-15);
}

TEST(HomogenizedEps, SingleSurvivingMatrixNode) {
    auto fiber = elastic_spec(72000.0, 0.2);
    auto matrix = j2_spec();
    Network net(2);
    net.z = {0.7, 0.3};
    auto shared = std::make_shared<Network>(net);
    NetworkState state(shared, fiber, matrix);
    auto states = state.bottom_states();
    states[1].eps_plastic = 0.05; // matrix is bottom k = 1, recorded second
    state.restore(Vec6::Zero(), states);
    EXPECT_DOUBLE_EQ(state.homogenized_eps(), 0.05);
}
