#include "dmn/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dmn/hash.hpp"

namespace dmn::io {

using nlohmann::json;

namespace {

constexpr int kNetworkVersion = 1;
constexpr int kDatasetVersion = 1;
constexpr double kSqrt2 = 1.4142135623730950488;

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open file: " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw UserError("cannot write file: " + path);
    return out;
}

json load_json(const std::string& path) {
    std::ifstream in = open_in(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw UserError(path + ": " + e.what());
    }
    return j;
}

json require(const json& j, const char* key, const std::string& path) {
    if (!j.contains(key)) throw UserError(path + ": missing field '" + key + "'");
    return j.at(key);
}

json network_to_json(const Network& net, const NetworkProvenance& prov) {
    json j;
    j["format_version"] = kNetworkVersion;
    j["n_layers"] = net.n_layers;
    j["z"] = net.z;
    std::vector<double> alpha, beta, gamma;
    for (const EulerAngles& e : net.angles) {
        alpha.push_back(e.alpha);
        beta.push_back(e.beta);
        gamma.push_back(e.gamma);
    }
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["gamma"] = gamma;
    json p;
    p["seed"] = prov.seed;
    p["config_hash"] = prov.config_hash;
    p["parent"] = prov.parent;
    if (prov.descriptor) {
        p["descriptor"] = {{"vf", prov.descriptor->vf},
                           {"a11", prov.descriptor->a11},
                           {"a22", prov.descriptor->a22}};
    }
    j["provenance"] = p;
    return j;
}

std::pair<Network, NetworkProvenance> network_from_json(const json& j, const std::string& path) {
    int version = require(j, "format_version", path).get<int>();
    if (version != kNetworkVersion) {
        throw UserError(path + ": unsupported network format version " + std::to_string(version));
    }
    int layers = require(j, "n_layers", path).get<int>();
    Network net(layers);
    std::vector<double> z = require(j, "z", path).get<std::vector<double>>();
    std::vector<double> alpha = require(j, "alpha", path).get<std::vector<double>>();
    std::vector<double> beta = require(j, "beta", path).get<std::vector<double>>();
    std::vector<double> gamma = require(j, "gamma", path).get<std::vector<double>>();
    if (static_cast<int>(z.size()) != net.bottoms()) {
        throw UserError(path + ": field 'z' has wrong length");
    }
    if (static_cast<int>(alpha.size()) != net.nodes() || alpha.size() != beta.size() ||
        alpha.size() != gamma.size()) {
        throw UserError(path + ": angle arrays have wrong length");
    }
    net.z = z;
    for (int i = 0; i < net.nodes(); ++i) net.angles[i] = {alpha[i], beta[i], gamma[i]};
    NetworkProvenance prov;
    if (j.contains("provenance")) {
        const json& p = j.at("provenance");
        prov.seed = p.value("seed", std::uint64_t{0});
        prov.config_hash = p.value("config_hash", std::string{});
        prov.parent = p.value("parent", std::string{});
        if (p.contains("descriptor")) {
            transfer::Descriptor d;
            d.vf = p.at("descriptor").value("vf", 0.0);
            d.a11 = p.at("descriptor").value("a11", 0.0);
            d.a22 = p.at("descriptor").value("a22", 0.0);
            prov.descriptor = d;
        }
    }
    return {net, prov};
}

// 21 upper-triangle entries, row-major
void append_upper(std::string& line, const Mat6& m) {
    for (int r = 0; r < 6; ++r) {
        for (int c = r; c < 6; ++c) {
            line += ',';
            line += format_double(m(r, c));
        }
    }
}

Mat6 read_upper(const std::vector<double>& vals, int offset) {
    Mat6 m;
    int k = offset;
    for (int r = 0; r < 6; ++r) {
        for (int c = r; c < 6; ++c) {
            m(r, c) = vals[k];
            m(c, r) = vals[k];
            ++k;
        }
    }
    return m;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last) {
        throw UserError("malformed number: '" + s + "'");
    }
    return v;
}

void save_network(const std::string& path, const Network& net, const NetworkProvenance& prov) {
    std::ofstream out = open_out(path);
    out << network_to_json(net, prov).dump(2) << '\n';
}

std::pair<Network, NetworkProvenance> load_network(const std::string& path) {
    return network_from_json(load_json(path), path);
}

void save_dataset(const std::string& path, const train::Dataset& data) {
    std::ofstream out = open_out(path);
    out << "# dmn-dataset v" << kDatasetVersion
        << " notation=mandel order=11,22,33,s2*12,s2*23,s2*31 layout=Cf21,Cm21,Cc21 upper-triangle row-major\n";
    out << "# n_train=" << data.n_train << " teacher=" << data.teacher_hash << '\n';
    for (const train::Sample& smp : data.samples) {
        std::string line = "s";
        append_upper(line, smp.c_fiber);
        append_upper(line, smp.c_matrix);
        append_upper(line, smp.c_composite);
        out << line << '\n';
    }
}

train::Dataset load_dataset(const std::string& path) {
    std::ifstream in = open_in(path);
    train::Dataset data;
    std::string line;
    int line_no = 0;
    bool version_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string tok;
            while (hs >> tok) {
                if (tok == "dmn-dataset") version_seen = true;
                if (tok.rfind("n_train=", 0) == 0) data.n_train = std::stoi(tok.substr(8));
                if (tok.rfind("teacher=", 0) == 0) data.teacher_hash = tok.substr(8);
            }
            continue;
        }
        std::vector<std::string> cells = split_csv(line);
        if (cells.size() != 64 || cells[0] != "s") {
            throw UserError(path + ":" + std::to_string(line_no) + ": malformed sample record");
        }
        std::vector<double> vals(63);
        for (int i = 0; i < 63; ++i) {
            try {
                vals[i] = parse_double(cells[i + 1]);
            } catch (const UserError& e) {
                throw UserError(path + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        train::Sample smp;
        smp.c_fiber = read_upper(vals, 0);
        smp.c_matrix = read_upper(vals, 21);
        smp.c_composite = read_upper(vals, 42);
        data.samples.push_back(smp);
    }
    if (!version_seen) throw UserError(path + ": missing dataset header");
    if (data.n_train <= 0 || data.n_train > static_cast<int>(data.samples.size())) {
        throw UserError(path + ": invalid n_train header");
    }
    return data;
}

void save_bundle(const std::string& path, const std::array<transfer::Anchor, 4>& anchors) {
    json j;
    j["format_version"] = 1;
    j["anchors"] = json::array();
    for (const transfer::Anchor& a : anchors) {
        json e;
        e["descriptor"] = {{"vf", a.x.vf}, {"a11", a.x.a11}, {"a22", a.x.a22}};
        e["network"] = network_to_json(a.net, {});
        j["anchors"].push_back(e);
    }
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
}

std::array<transfer::Anchor, 4> load_bundle(const std::string& path) {
    json j = load_json(path);
    json list = require(j, "anchors", path);
    if (!list.is_array() || list.size() != 4) {
        throw UserError(path + ": bundle needs exactly 4 anchors");
    }
    std::array<transfer::Anchor, 4> out;
    for (int i = 0; i < 4; ++i) {
        const json& e = list.at(i);
        json d = require(e, "descriptor", path);
        out[i].x.vf = require(d, "vf", path).get<double>();
        out[i].x.a11 = require(d, "a11", path).get<double>();
        out[i].x.a22 = require(d, "a22", path).get<double>();
        out[i].net = network_from_json(require(e, "network", path), path).first;
    }
    return out;
}

std::vector<Vec6> load_strain_path(const std::string& path) {
    std::ifstream in = open_in(path);
    std::vector<Vec6> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("step", 0) == 0) continue; // column header
        std::vector<std::string> cells = split_csv(line);
        if (cells.size() != 7) {
            throw UserError(path + ":" + std::to_string(line_no) + ": expected 7 columns");
        }
        Vec6 e;
        try {
            for (int i = 0; i < 6; ++i) e[i] = parse_double(cells[i + 1]);
        } catch (const UserError& err) {
            throw UserError(path + ":" + std::to_string(line_no) + ": " + err.what());
        }
        // tensor shear components to Mandel
        e[3] *= kSqrt2;
        e[4] *= kSqrt2;
        e[5] *= kSqrt2;
        out.push_back(e);
    }
    if (out.empty()) throw UserError(path + ": empty loading path");
    return out;
}

void write_stress_history(const std::string& path, const std::vector<HistoryRow>& rows) {
    std::ofstream out = open_out(path);
    out << "step,s11,s22,s33,s12,s23,s31,eps_hom\n";
    for (const HistoryRow& r : rows) {
        out << r.step;
        Vec6 t = r.stress;
        t[3] /= kSqrt2;
        t[4] /= kSqrt2;
        t[5] /= kSqrt2;
        for (int i = 0; i < 6; ++i) out << ',' << format_double(t[i]);
        out << ',' << format_double(r.eps_hom) << '\n';
    }
}

void write_modulus_surface(const std::string& path, const std::vector<SurfacePoint>& pts) {
    std::ofstream out = open_out(path);
    out << "nx,ny,nz,E_MPa\n";
    for (const SurfacePoint& p : pts) {
        out << format_double(p.dir[0]) << ',' << format_double(p.dir[1]) << ','
            << format_double(p.dir[2]) << ',' << format_double(p.young) << '\n';
    }
}

void write_train_history(const std::string& path, const std::vector<train::EpochRecord>& hist) {
    std::ofstream out = open_out(path);
    out << "epoch,train_cost,train_error,test_cost,test_error,lr,reverted\n";
    for (const train::EpochRecord& r : hist) {
        out << r.epoch << ',' << format_double(r.train_cost) << ',' << format_double(r.train_error)
            << ',' << format_double(r.test_cost) << ',' << format_double(r.test_error) << ','
            << format_double(r.lr) << ',' << (r.reverted ? 1 : 0) << '\n';
    }
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open file for hashing: " + path);
    Fnv1a h;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        h.update(buf, static_cast<std::size_t>(in.gcount()));
        if (!in) break;
    }
    return h.hex();
}

void write_manifest(const std::string& path, const RunManifest& m) {
    json j;
    j["command"] = m.command;
    j["config_hash"] = m.config_hash;
    j["input_hashes"] = m.input_hashes;
    j["seeds"] = m.seeds;
    j["wall_seconds"] = m.wall_seconds;
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
}

} // namespace dmn::io
