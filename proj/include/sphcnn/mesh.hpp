#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "sphcnn/geometry.hpp"

namespace sphcnn {

/// Closed-form face/edge/vertex counts for a level-l icosahedral sphere.
struct MeshLevelStats {
    int level = 0;
    std::int64_t n_f = 0;
    std::int64_t n_e = 0;
    std::int64_t n_v = 0;
};

MeshLevelStats level_stats(int level);

/// Triangulated icosahedral sphere. Vertices lie on the unit sphere, faces
/// wind counter-clockwise viewed from outside, and the first n_v(l-1)
/// vertices of a level-l mesh are exactly the level-(l-1) vertices.
struct IcoMesh {
    int level = 0;
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    // Undirected edges stored as (min,max), sorted lexicographically. New
    // vertices created by subdivision are indexed by the rank of their
    // parent edge in this list.
    std::vector<std::array<int, 2>> edges;

    int n_v() const { return static_cast<int>(vertices.size()); }
    int n_f() const { return static_cast<int>(faces.size()); }
    int n_e() const { return static_cast<int>(edges.size()); }
};

// Level-0 mesh: poles at (0,0,+-1), two staggered latitude rings of 5.
IcoMesh build_icosahedron();

IcoMesh subdivide(const IcoMesh& mesh);

inline constexpr int kMaxMeshLevel = 9;  // ~2.6M vertices

/// Repeated subdivision from the unit icosahedron. Throws std::out_of_range
/// for level < 0 or level > kMaxMeshLevel.
IcoMesh mesh_at_level(int level);

/// Neighbors of `vertex` in consistent cyclic (counter-clockwise) order,
/// starting from the smallest neighbor index. Throws std::out_of_range.
std::vector<int> one_ring(const IcoMesh& mesh, int vertex);

/// For each vertex, the indices of its incident faces.
std::vector<std::vector<int>> vertex_face_adjacency(const IcoMesh& mesh);

// OBJ text export/import (1-based indices), for inspection in mesh viewers.
void write_obj(const IcoMesh& mesh, std::ostream& out);
IcoMesh read_obj(std::istream& in);

// Native binary cache: magic "UGSM", version u16, level u16, then
// little-endian f64 vertices and u32 face indices.
void write_mesh_binary(const IcoMesh& mesh, const std::string& path);
IcoMesh read_mesh_binary(const std::string& path);

}  // namespace sphcnn
