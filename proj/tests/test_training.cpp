#include <gtest/gtest.h>

#include <cmath>

#include "dmn/training.hpp"
#include "support/oracles.hpp"

using namespace dmn;
using namespace dmn::train;

TEST(PhasePair, DeterministicForSeed) {
    Rng a(5), b(5);
    auto [fa, ma] = generate_phase_pair(a);
    auto [fb, mb] = generate_phase_pair(b);
    EXPECT_EQ((fa - fb).norm(), 0.0);
    EXPECT_EQ((ma - mb).norm(), 0.0);
}

TEST(PhasePair, AllDrawsSpdWithContrast) {
    Rng rng(17);
    int contrast_ok = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        auto [cf, cm] = generate_phase_pair(rng);
        ASSERT_TRUE(is_spd(cf, 1e-10));
        ASSERT_TRUE(is_spd(cm, 1e-10));
        Eigen::SelfAdjointEigenSolver<Mat6> ef(cf), em(cm);
        double ratio = ef.eigenvalues().maxCoeff() / em.eigenvalues().maxCoeff();
        if (ratio >= 10.0) ++contrast_ok;
    }
    EXPECT_GE(contrast_ok, n * 9 / 10);
}

TEST(TeacherDataset, SplitAndSelfConsistency) {
    Network teacher = Network::random(3, 7);
    Rng rng(9);
    Dataset data = generate_teacher_dataset(teacher, 500, rng);
    EXPECT_EQ(data.samples.size(), 500u);
    EXPECT_EQ(data.n_train, 400);
    EXPECT_EQ(data.train_split().size(), 400u);
    EXPECT_EQ(data.test_split().size(), 100u);
    EXPECT_EQ(data.teacher_hash, network_hash(teacher));
    EXPECT_EQ(evaluate_error(teacher, data.train_split()), 0.0);
    EXPECT_EQ(evaluate_error(teacher, data.test_split()), 0.0);
}

TEST(Cost, ZeroAtExactPredictionsOnTarget) {
    Network teacher = Network::random(3, 21);
    // z drawn in (0.4, 0.6) does not hit the regularization target exactly;
    // rescale so sum(ReLU(z)) equals 2^(N-2)
    double target = 2.0, sum = 0.0;
    for (double z : teacher.z) sum += std::max(z, 0.0);
    for (double& z : teacher.z) z *= target / sum;
    Rng rng(23);
    Dataset data = generate_teacher_dataset(teacher, 20, rng);
    EXPECT_NEAR(cost(teacher, data.train_split(), 1e-3), 0.0, 1e-24);
}

TEST(Cost, FrobeniusScalingCase) {
    // one sample, prediction C vs target 2C, lambda 0 -> J = 0.125
    Network net(2);
    net.z = {0.5, 0.5};
    Mat6 cf = isotropic_stiffness(100.0, 0.3);
    Sample smp;
    smp.c_fiber = cf;
    smp.c_matrix = cf;
    smp.c_composite = 2.0 * cf; // prediction will be cf itself
    std::vector<Sample> batch{smp};
    EXPECT_NEAR(cost(net, batch, 0.0), 0.125, 1e-14);
}

TEST(Cost, PenaltyDecreasesTowardTarget) {
    // phase-identical isotropic inputs pin the prediction; only the penalty moves
    Mat6 c = isotropic_stiffness(50.0, 0.25);
    Sample smp;
    smp.c_fiber = c;
    smp.c_matrix = c;
    smp.c_composite = c;
    std::vector<Sample> batch{smp};
    Network net(3);
    net.z = {0.9, 0.9, 0.9, 0.9}; // sum 3.6, target 2
    double j_far = cost(net, batch, 1e-3);
    net.z = {0.6, 0.6, 0.6, 0.6}; // sum 2.4
    double j_near = cost(net, batch, 1e-3);
    EXPECT_LT(j_near, j_far);
}

TEST(Gradients, MatchesCentralDifferences) {
    Network net = Network::random(4, 3);
    Rng rng(31);
    Dataset data = generate_teacher_dataset(Network::random(4, 4), 5, rng);
    data.n_train = 5;
    Gradients g = gradients(net, data.train_split(), 1e-3);
    std::vector<double> packed = g.pack();
    std::vector<double> fd = oracle::fd_gradient(net, data.train_split(), 1e-3);
    ASSERT_EQ(packed.size(), fd.size());
    for (std::size_t i = 0; i < fd.size(); ++i) {
        EXPECT_NEAR(packed[i], fd[i], 1e-5 * std::max(1.0, std::abs(fd[i])))
            << "parameter index " << i;
    }
}

TEST(Gradients, ThreadedMatchesSerial) {
    Network net = Network::random(4, 13);
    Rng rng(37);
    Dataset data = generate_teacher_dataset(Network::random(4, 14), 12, rng);
    Gradients a = gradients(net, data.train_split(), 1e-3, 1);
    Gradients b = gradients(net, data.train_split(), 1e-3, 4);
    EXPECT_EQ(a.pack(), b.pack());
}

TEST(Gradients, PhaseIdenticalIsotropicKillsAngleGradients) {
    Mat6 c = isotropic_stiffness(100.0, 0.3);
    Sample smp;
    smp.c_fiber = c;
    smp.c_matrix = c;
    smp.c_composite = 1.3 * c; // nonzero loss, still angle-independent
    std::vector<Sample> batch{smp};
    Network net = Network::random(4, 5);
    Gradients g = gradients(net, batch, 0.0);
    for (double v : g.alpha) EXPECT_NEAR(v, 0.0, 1e-12);
    for (double v : g.beta) EXPECT_NEAR(v, 0.0, 1e-12);
    for (double v : g.gamma) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Gradients, DeadActivationGetsNoGradient) {
    Network net = Network::random(4, 7);
    net.z[5] = -0.3;
    Rng rng(41);
    Dataset data = generate_teacher_dataset(Network::random(4, 8), 4, rng);
    data.n_train = 4;
    Gradients g = gradients(net, data.train_split(), 1e-3);
    EXPECT_EQ(g.z[5], 0.0);
}

TEST(EvaluateError, ScalingIdentity) {
    Network net(2);
    net.z = {0.5, 0.5};
    Mat6 c = isotropic_stiffness(10.0, 0.2);
    Sample smp;
    smp.c_fiber = c;
    smp.c_matrix = c;
    smp.c_composite = 1.01 * c; // prediction = c
    std::vector<Sample> one{smp};
    EXPECT_NEAR(evaluate_error(net, one), 0.01 / 1.01, 1e-12);
}

TEST(Train, ZeroEpochsReturnsInit) {
    Network init = Network::random(3, 55);
    Rng rng(43);
    Dataset data = generate_teacher_dataset(Network::random(3, 56), 20, rng);
    TrainConfig cfg;
    cfg.epochs = 0;
    TrainResult res = train::train(init, data, cfg);
    EXPECT_EQ(res.network.pack_parameters(), init.pack_parameters());
    EXPECT_TRUE(res.history.empty());
}

TEST(Train, ShortRunImprovesError) {
    Network teacher = make_structured_teacher(3, OrientationKind::ud, 0.2);
    Rng rng(47);
    Dataset data = generate_teacher_dataset(teacher, 60, rng);
    Network init = Network::random(3, 48);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.n_batches = 4;
    cfg.lr0 = 0.02;
    cfg.seed = 2;
    TrainResult res = train::train(init, data, cfg);
    double before = evaluate_error(init, data.train_split());
    double after = evaluate_error(res.network, data.train_split());
    EXPECT_LT(after, before);
    EXPECT_EQ(res.history.size(), 60u);
}

TEST(Train, DeterministicForFixedSeed) {
    Rng rng(51);
    Dataset data = generate_teacher_dataset(Network::random(3, 52), 30, rng);
    Network init = Network::random(3, 53);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.n_batches = 3;
    cfg.seed = 4;
    TrainResult a = train::train(init, data, cfg);
    TrainResult b = train::train(init, data, cfg);
    EXPECT_EQ(a.network.pack_parameters(), b.network.pack_parameters());
}

TEST(Train, BoldDriverSurvivesHugeLearningRate) {
    Rng rng(57);
    Dataset data = generate_teacher_dataset(Network::random(3, 58), 30, rng);
    Network init = Network::random(3, 59);
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.n_batches = 3;
    cfg.lr0 = 1e8; // absurd; the driver must shrink it and keep history finite
    cfg.seed = 6;
    TrainResult res = train::train(init, data, cfg);
    for (const EpochRecord& r : res.history) {
        EXPECT_TRUE(std::isfinite(r.train_cost));
        EXPECT_TRUE(std::isfinite(r.train_error));
    }
    double lr_min = res.history.back().lr;
    EXPECT_LT(lr_min, 1e8);
}

TEST(Train, WarmStartStationary) {
    Network teacher = make_structured_teacher(3, OrientationKind::random3d, 0.15);
    Rng rng(61);
    Dataset data = generate_teacher_dataset(teacher, 40, rng);
    // warm start exactly at the teacher: already optimal up to the penalty
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.n_batches = 4;
    cfg.lr0 = 1e-3;
    cfg.seed = 8;
    TrainResult res = train::train(teacher, data, cfg);
    double initial = evaluate_error(teacher, data.train_split());
    for (const EpochRecord& r : res.history) {
        EXPECT_LE(r.train_error, initial + 1e-4);
    }
}

TEST(Chain, TopologyAndDeterminism) {
    Network t1 = make_structured_teacher(3, OrientationKind::random3d, 0.1);
    Network t2 = make_structured_teacher(3, OrientationKind::ud, 0.1);
    Rng r1(63), r2(64);
    Dataset d1 = generate_teacher_dataset(t1, 30, r1);
    Dataset d2 = generate_teacher_dataset(t2, 30, r2);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.n_batches = 3;
    cfg.seed = 10;
    std::vector<ChainStage> stages{{&d1, cfg}, {&d2, cfg}};
    auto res_a = transfer_train_chain(3, stages);
    auto res_b = transfer_train_chain(3, stages);
    ASSERT_EQ(res_a.size(), 2u);
    for (const auto& r : res_a) EXPECT_EQ(r.network.n_layers, 3);
    EXPECT_EQ(res_a[1].network.pack_parameters(), res_b[1].network.pack_parameters());
    // stage-2 warm start begins at or below the random-init error (soft check, logged)
    Network cold = Network::random(3, cfg.seed);
    double cold_err = evaluate_error(cold, d2.train_split());
    double warm_err = evaluate_error(res_a[0].network, d2.train_split());
    if (warm_err >= cold_err) {
        std::fprintf(stderr, "note: warm start not better here (warm %.4f vs cold %.4f)\n",
                     warm_err, cold_err);
    }
    // mismatched explicit init is rejected
    Network wrong = Network::random(4, 1);
    EXPECT_THROW(transfer_train_chain(3, stages, &wrong), UserError);
}

TEST(StructuredTeacher, UdIsStiffAlongAxisOne) {
    Network ud = make_structured_teacher(5, OrientationKind::ud, 0.2);
    Mat6 cf = isotropic_stiffness(72000.0, 0.20);
    Mat6 cm = isotropic_stiffness(1616.0, 0.3545);
    Mat6 c = forward_stiffness(ud, cf, cm);
    Mat6 s = c.inverse();
    double e1 = directional_young_modulus(s, Vec3::UnitX());
    double e2 = directional_young_modulus(s, Vec3::UnitY());
    double e3 = directional_young_modulus(s, Vec3::UnitZ());
    EXPECT_GT(e1, 1.5 * e2);
    EXPECT_GT(e1, 1.5 * e3);

    Network r2d = make_structured_teacher(5, OrientationKind::random2d, 0.2);
    Mat6 c2 = forward_stiffness(r2d, cf, cm);
    Mat6 s2 = c2.inverse();
    double p1 = directional_young_modulus(s2, Vec3::UnitX());
    double p2 = directional_young_modulus(s2, Vec3::UnitY());
    double p3 = directional_young_modulus(s2, Vec3::UnitZ());
    EXPECT_GT(std::min(p1, p2), p3); // in-plane stiffer than out-of-plane
}
