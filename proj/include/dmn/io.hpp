#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmn/network.hpp"
#include "dmn/training.hpp"
#include "dmn/transfer.hpp"

namespace dmn::io {

// Locale-independent full-round-trip numeric formatting.
std::string format_double(double v);
double parse_double(const std::string& s); // throws UserError on garbage

struct NetworkProvenance {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string parent; // hash of the initialization network, when transferred
    std::optional<transfer::Descriptor> descriptor;
};

void save_network(const std::string& path, const Network& net,
                  const NetworkProvenance& prov = {});
std::pair<Network, NetworkProvenance> load_network(const std::string& path);

// Dataset: '#'-prefixed header records notation and ordering, then one line
// per sample with 3 x 21 upper-triangle entries (row-major, full precision).
void save_dataset(const std::string& path, const train::Dataset& data);
train::Dataset load_dataset(const std::string& path);

void save_bundle(const std::string& path, const std::array<transfer::Anchor, 4>& anchors);
std::array<transfer::Anchor, 4> load_bundle(const std::string& path);

// Loading path CSV: step, e11, e22, e33, e12, e23, e31 (tensor shear
// components, converted to Mandel internally).
std::vector<Vec6> load_strain_path(const std::string& path);

struct HistoryRow {
    int step = 0;
    Vec6 stress = Vec6::Zero(); // Mandel, written as tensor components
    double eps_hom = 0.0;
};
void write_stress_history(const std::string& path, const std::vector<HistoryRow>& rows);

void write_modulus_surface(const std::string& path, const std::vector<SurfacePoint>& pts);

void write_train_history(const std::string& path, const std::vector<train::EpochRecord>& hist);

std::string file_hash(const std::string& path); // FNV-1a hex of the raw bytes

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::map<std::string, std::string> input_hashes;
    std::vector<std::uint64_t> seeds;
    double wall_seconds = 0.0;
};
void write_manifest(const std::string& path, const RunManifest& m);

} // namespace dmn::io
