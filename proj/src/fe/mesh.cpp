#include "dmn/fe/mesh.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include "dmn/errors.hpp"

namespace dmn::fe {

namespace {

std::unordered_map<long, int> build_map(const std::vector<long>& ids) {
    std::unordered_map<long, int> m;
    m.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) m[ids[i]] = static_cast<int>(i);
    return m;
}

} // namespace

int Mesh::node_index(long id) const {
    for (std::size_t i = 0; i < node_ids.size(); ++i) {
        if (node_ids[i] == id) return static_cast<int>(i);
    }
    throw UserError("mesh: unknown node id " + std::to_string(id));
}

int Mesh::element_index(long id) const {
    for (std::size_t i = 0; i < element_ids.size(); ++i) {
        if (element_ids[i] == id) return static_cast<int>(i);
    }
    throw UserError("mesh: unknown element id " + std::to_string(id));
}

Mesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open mesh file: " + path);
    Mesh mesh;
    struct RawHex {
        long id;
        std::array<long, 8> n;
        int line;
    };
    std::vector<RawHex> hexes;
    std::map<std::string, std::vector<long>> raw_nsets, raw_esets;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv(line);
        if (auto pos = sv.find('#'); pos != std::string_view::npos) sv = sv.substr(0, pos);
        std::istringstream ls{std::string(sv)};
        std::string kind;
        if (!(ls >> kind)) continue;
        auto fail = [&](const std::string& what) -> UserError {
            return UserError(path + ":" + std::to_string(line_no) + ": " + what);
        };
        if (kind == "node") {
            long id;
            double x, y, z;
            if (!(ls >> id >> x >> y >> z)) throw fail("malformed node record");
            mesh.node_ids.push_back(id);
            mesh.nodes.emplace_back(x, y, z);
        } else if (kind == "hex") {
            RawHex h{};
            h.line = line_no;
            if (!(ls >> h.id)) throw fail("malformed hex record");
            for (int i = 0; i < 8; ++i) {
                if (!(ls >> h.n[i])) throw fail("hex record needs 8 node ids");
            }
            hexes.push_back(h);
        } else if (kind == "nset" || kind == "eset") {
            std::string name;
            if (!(ls >> name)) throw fail("set record needs a name");
            auto& dst = (kind == "nset") ? raw_nsets[name] : raw_esets[name];
            long id;
            while (ls >> id) dst.push_back(id);
        } else {
            throw fail("unknown record kind '" + kind + "'");
        }
    }
    auto nmap = build_map(mesh.node_ids);
    for (const RawHex& h : hexes) {
        std::array<int, 8> conn{};
        for (int i = 0; i < 8; ++i) {
            auto it = nmap.find(h.n[i]);
            if (it == nmap.end()) {
                throw UserError(path + ":" + std::to_string(h.line) + ": hex references unknown node " +
                                std::to_string(h.n[i]));
            }
            conn[i] = it->second;
        }
        mesh.element_ids.push_back(h.id);
        mesh.elements.push_back(conn);
    }
    auto emap = build_map(mesh.element_ids);
    for (auto& [name, ids] : raw_nsets) {
        for (long id : ids) {
            auto it = nmap.find(id);
            if (it == nmap.end()) throw UserError(path + ": nset '" + name + "' references unknown node");
            mesh.node_sets[name].push_back(it->second);
        }
    }
    for (auto& [name, ids] : raw_esets) {
        for (long id : ids) {
            auto it = emap.find(id);
            if (it == emap.end()) throw UserError(path + ": eset '" + name + "' references unknown element");
            mesh.element_sets[name].push_back(it->second);
        }
    }
    if (mesh.elements.empty()) throw UserError(path + ": mesh has no elements");
    return mesh;
}

Mesh make_brick_mesh(int nx, int ny, int nz, double lx, double ly, double lz) {
    Mesh mesh;
    auto nid = [&](int i, int j, int k) { return (k * (ny + 1) + j) * (nx + 1) + i; };
    for (int k = 0; k <= nz; ++k) {
        for (int j = 0; j <= ny; ++j) {
            for (int i = 0; i <= nx; ++i) {
                mesh.node_ids.push_back(nid(i, j, k) + 1);
                mesh.nodes.emplace_back(i * lx, j * ly, k * lz);
            }
        }
    }
    long eid = 1;
    for (int k = 0; k < nz; ++k) {
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                mesh.element_ids.push_back(eid++);
                mesh.elements.push_back({nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k),
                                         nid(i, j + 1, k), nid(i, j, k + 1), nid(i + 1, j, k + 1),
                                         nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)});
            }
        }
    }
    for (int k = 0; k <= nz; ++k) {
        for (int j = 0; j <= ny; ++j) {
            for (int i = 0; i <= nx; ++i) {
                int n = nid(i, j, k);
                mesh.node_sets["all"].push_back(n);
                if (i == 0) mesh.node_sets["xmin"].push_back(n);
                if (i == nx) mesh.node_sets["xmax"].push_back(n);
                if (j == 0) mesh.node_sets["ymin"].push_back(n);
                if (j == ny) mesh.node_sets["ymax"].push_back(n);
                if (k == 0) mesh.node_sets["zmin"].push_back(n);
                if (k == nz) mesh.node_sets["zmax"].push_back(n);
            }
        }
    }
    return mesh;
}

void save_mesh(const std::string& path, const Mesh& mesh) {
    std::ofstream out(path);
    if (!out) throw UserError("cannot write mesh file: " + path);
    out.precision(17);
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        out << "node " << mesh.node_ids[i] << ' ' << mesh.nodes[i][0] << ' ' << mesh.nodes[i][1]
            << ' ' << mesh.nodes[i][2] << '\n';
    }
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        out << "hex " << mesh.element_ids[e];
        for (int n : mesh.elements[e]) out << ' ' << mesh.node_ids[n];
        out << '\n';
    }
    for (const auto& [name, ids] : mesh.node_sets) {
        out << "nset " << name;
        for (int n : ids) out << ' ' << mesh.node_ids[n];
        out << '\n';
    }
    for (const auto& [name, ids] : mesh.element_sets) {
        out << "eset " << name;
        for (int e : ids) out << ' ' << mesh.element_ids[e];
        out << '\n';
    }
}

} // namespace dmn::fe
