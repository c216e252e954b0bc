#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "dmn/mandel.hpp"

namespace dmn::fe {

// Plain-text mesh: `node <id> <x> <y> <z>`, `hex <id> <n1>..<n8>`,
// `nset <name> <id>...`, `eset <name> <id>...`; '#' starts a comment.
struct Mesh {
    std::vector<Vec3> nodes;                     // dense storage
    std::vector<std::array<int, 8>> elements;    // dense node indices
    std::vector<long> node_ids, element_ids;     // original file ids
    std::map<std::string, std::vector<int>> node_sets;
    std::map<std::string, std::vector<int>> element_sets;

    int node_index(long id) const;    // throws UserError on unknown id
    int element_index(long id) const;
};

Mesh load_mesh(const std::string& path);

// Axis-aligned brick grid, element size (lx, ly, lz) per cell; handy for
// tests and demos. Adds face node sets xmin/xmax/ymin/ymax/zmin/zmax.
Mesh make_brick_mesh(int nx, int ny, int nz, double lx, double ly, double lz);

void save_mesh(const std::string& path, const Mesh& mesh);

} // namespace dmn::fe
