#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmn/network.hpp"
#include "dmn/rng.hpp"

namespace dmn::train {

struct Sample {
    Mat6 c_fiber;
    Mat6 c_matrix;
    Mat6 c_composite;
};

struct Dataset {
    std::vector<Sample> samples;
    int n_train = 0; // leading n_train samples form the training split
    std::string teacher_hash;

    std::span<const Sample> train_split() const {
        return {samples.data(), static_cast<std::size_t>(n_train)};
    }
    std::span<const Sample> test_split() const {
        return {samples.data() + n_train, samples.size() - n_train};
    }
};

struct TrainConfig {
    int epochs = 20000;
    int n_batches = 10;
    double lambda = 1e-3;     // weight-sum regularization
    double lr0 = 0.02;
    double bold_up = 1.05;    // learning-rate growth on improvement
    double bold_down = 0.5;   // shrink factor, with parameter revert
    std::uint64_t seed = 0;
    int threads = 1;
    double stop_train_error = 0.0; // early stop on scaled MAE; 0 disables
};

// Orthotropic SPD phase pair with strong contrast: matrix axis moduli
// log-uniform on [1, 1e2], fiber on [1e2, 1e5]; couplings rejected until SPD.
std::pair<Mat6, Mat6> generate_phase_pair(Rng& rng); // (fiber, matrix)

// Synthetic dataset: composite stiffness from the teacher's forward pass.
Dataset generate_teacher_dataset(const Network& teacher, int n_total, Rng& rng);

std::string network_hash(const Network& net);

double cost(const Network& net, std::span<const Sample> batch, double lambda);

struct Gradients {
    std::vector<double> z;
    std::vector<double> alpha, beta, gamma; // per node

    void resize(const Network& net);
    void setZero();
    std::vector<double> pack() const; // same layout as Network::pack_parameters
};

Gradients gradients(const Network& net, std::span<const Sample> batch, double lambda,
                    int threads = 1);

// Scaled mean absolute error: mean of |C_pred - C_ref|_F / |C_ref|_F.
double evaluate_error(const Network& net, std::span<const Sample> part);

struct EpochRecord {
    int epoch = 0;
    double train_cost = 0.0;
    double train_error = 0.0;
    double test_cost = 0.0;
    double test_error = 0.0;
    double lr = 0.0;
    bool reverted = false;
};

struct TrainResult {
    Network network;
    std::vector<EpochRecord> history;
};

// Mini-batch gradient descent with bold-driver learning-rate adaptation:
// grow lr on improvement, shrink and revert the epoch otherwise.
TrainResult train(const Network& init, const Dataset& data, const TrainConfig& cfg);

// Deterministic teachers standing in for the four reference microstructures.
enum class OrientationKind { random3d, random2d, ud };
Network make_structured_teacher(int n_layers, OrientationKind kind, double fiber_vf);

struct ChainStage {
    const Dataset* dataset = nullptr;
    TrainConfig config;
};

// Multi-stage training where each stage starts from the previous result.
std::vector<TrainResult> transfer_train_chain(int n_layers, std::span<const ChainStage> stages,
                                              const Network* stage1_init = nullptr);

} // namespace dmn::train
