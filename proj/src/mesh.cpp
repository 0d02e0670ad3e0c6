#include "sphcnn/mesh.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace sphcnn {

namespace {

std::vector<std::array<int, 2>> collect_edges(const std::vector<std::array<int, 3>>& faces) {
    std::vector<std::array<int, 2>> edges;
    edges.reserve(faces.size() * 3 / 2);
    for (const auto& f : faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            if (a < b) edges.push_back({a, b});
        }
    }
    std::sort(edges.begin(), edges.end());
    // A closed orientable mesh visits each undirected edge once per
    // direction, so the a<b filter above already yields unique edges.
    return edges;
}

}  // namespace

MeshLevelStats level_stats(int level) {
    if (level < 0) throw std::out_of_range("level_stats: negative level");
    MeshLevelStats s;
    s.level = level;
    s.n_f = 20ll << (2 * level);
    s.n_e = 30ll << (2 * level);
    s.n_v = s.n_e - s.n_f + 2;
    return s;
}

IcoMesh build_icosahedron() {
    IcoMesh mesh;
    mesh.level = 0;
    mesh.vertices.reserve(12);

    // Vertex 0 exactly at the north pole, vertex 11 at the south pole.
    // Ring vertices sit at z = +-1/sqrt(5), cylindrical radius 2/sqrt(5);
    // the lower ring is rotated by pi/5 against the upper one.
    const double rz = 1.0 / std::sqrt(5.0);
    const double rr = 2.0 / std::sqrt(5.0);
    mesh.vertices.push_back({0.0, 0.0, 1.0});
    for (int k = 0; k < 5; ++k) {
        double lon = 2.0 * kPi * k / 5.0;
        mesh.vertices.push_back({rr * std::cos(lon), rr * std::sin(lon), rz});
    }
    for (int k = 0; k < 5; ++k) {
        double lon = 2.0 * kPi * k / 5.0 + kPi / 5.0;
        mesh.vertices.push_back({rr * std::cos(lon), rr * std::sin(lon), -rz});
    }
    mesh.vertices.push_back({0.0, 0.0, -1.0});

    auto a = [](int k) { return 1 + k % 5; };
    auto b = [](int k) { return 6 + k % 5; };
    for (int k = 0; k < 5; ++k) mesh.faces.push_back({0, a(k), a(k + 1)});
    for (int k = 0; k < 5; ++k) mesh.faces.push_back({a(k), b(k), a(k + 1)});
    for (int k = 0; k < 5; ++k) mesh.faces.push_back({b(k), b(k + 1), a(k + 1)});
    for (int k = 0; k < 5; ++k) mesh.faces.push_back({11, b(k + 1), b(k)});

    mesh.edges = collect_edges(mesh.faces);
    return mesh;
}

IcoMesh subdivide(const IcoMesh& mesh) {
    IcoMesh fine;
    fine.level = mesh.level + 1;
    fine.vertices = mesh.vertices;
    fine.vertices.reserve(mesh.n_v() + mesh.n_e());

    // One new vertex per parent edge, indexed by edge rank: midpoint
    // reprojected onto the unit sphere.
    for (const auto& e : mesh.edges) {
        Vec3 mid = (mesh.vertices[e[0]] + mesh.vertices[e[1]]) * 0.5;
        fine.vertices.push_back(mid.normalized());
    }

    auto midpoint_index = [&](int a, int b) {
        std::array<int, 2> key{std::min(a, b), std::max(a, b)};
        auto it = std::lower_bound(mesh.edges.begin(), mesh.edges.end(), key);
        return mesh.n_v() + static_cast<int>(it - mesh.edges.begin());
    };

    fine.faces.reserve(mesh.n_f() * 4);
    for (const auto& f : mesh.faces) {
        int m01 = midpoint_index(f[0], f[1]);
        int m12 = midpoint_index(f[1], f[2]);
        int m20 = midpoint_index(f[2], f[0]);
        fine.faces.push_back({f[0], m01, m20});
        fine.faces.push_back({m01, f[1], m12});
        fine.faces.push_back({m20, m12, f[2]});
        fine.faces.push_back({m01, m12, m20});
    }

    fine.edges = collect_edges(fine.faces);
    return fine;
}

IcoMesh mesh_at_level(int level) {
    if (level < 0 || level > kMaxMeshLevel)
        throw std::out_of_range("mesh_at_level: level must be in [0, " +
                                std::to_string(kMaxMeshLevel) + "]");
    IcoMesh mesh = build_icosahedron();
    for (int l = 0; l < level; ++l) mesh = subdivide(mesh);
    return mesh;
}

std::vector<int> one_ring(const IcoMesh& mesh, int vertex) {
    if (vertex < 0 || vertex >= mesh.n_v()) throw std::out_of_range("one_ring: bad vertex index");
    // At vertex i each incident face (i,j,k) contributes the directed arc
    // j->k; chaining the arcs walks the ring counter-clockwise.
    std::map<int, int> next;
    for (const auto& f : mesh.faces) {
        for (int c = 0; c < 3; ++c) {
            if (f[c] == vertex) next[f[(c + 1) % 3]] = f[(c + 2) % 3];
        }
    }
    std::vector<int> ring;
    ring.reserve(next.size());
    int start = next.begin()->first;  // smallest neighbor: deterministic start
    int cur = start;
    do {
        ring.push_back(cur);
        cur = next.at(cur);
    } while (cur != start);
    return ring;
}

std::vector<std::vector<int>> vertex_face_adjacency(const IcoMesh& mesh) {
    std::vector<std::vector<int>> adj(mesh.n_v());
    for (int fi = 0; fi < mesh.n_f(); ++fi) {
        for (int c = 0; c < 3; ++c) adj[mesh.faces[fi][c]].push_back(fi);
    }
    return adj;
}

void write_obj(const IcoMesh& mesh, std::ostream& out) {
    out.precision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x << " " << v.y << " " << v.z << "\n";
    for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

IcoMesh read_obj(std::istream& in) {
    IcoMesh mesh;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z)) throw std::runtime_error("obj: malformed vertex line");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::array<int, 3> f{};
            if (!(ls >> f[0] >> f[1] >> f[2])) throw std::runtime_error("obj: malformed face line");
            for (int& i : f) --i;
            mesh.faces.push_back(f);
        }
    }
    if (mesh.vertices.empty() || mesh.faces.empty())
        throw std::runtime_error("obj: no vertices or faces found");
    for (const auto& f : mesh.faces)
        for (int i : f)
            if (i < 0 || i >= static_cast<int>(mesh.vertices.size()))
                throw std::runtime_error("obj: face index out of range");
    mesh.edges = collect_edges(mesh.faces);
    // Recover the level from the face count; non-icosphere OBJ input gets
    // level -1 and is only suitable for inspection round-trips.
    mesh.level = -1;
    for (int l = 0; l <= kMaxMeshLevel; ++l) {
        if (level_stats(l).n_f == mesh.n_f()) mesh.level = l;
    }
    return mesh;
}

namespace {

template <typename T>
void write_raw(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("mesh binary: truncated file");
    return value;
}

}  // namespace

void write_mesh_binary(const IcoMesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write("UGSM", 4);
    write_raw<std::uint16_t>(out, 1);  // format version
    write_raw<std::uint16_t>(out, static_cast<std::uint16_t>(mesh.level));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(mesh.n_v()));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(mesh.n_f()));
    for (const auto& v : mesh.vertices) {
        write_raw(out, v.x);
        write_raw(out, v.y);
        write_raw(out, v.z);
    }
    for (const auto& f : mesh.faces)
        for (int i : f) write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(i));
    if (!out) throw std::runtime_error("write failed: " + path);
}

IcoMesh read_mesh_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "UGSM", 4) != 0)
        throw std::runtime_error("mesh binary: bad magic in " + path);
    auto version = read_raw<std::uint16_t>(in);
    if (version != 1) throw std::runtime_error("mesh binary: unsupported version");
    IcoMesh mesh;
    mesh.level = read_raw<std::uint16_t>(in);
    auto nv = read_raw<std::uint32_t>(in);
    auto nf = read_raw<std::uint32_t>(in);
    mesh.vertices.resize(nv);
    for (auto& v : mesh.vertices) {
        v.x = read_raw<double>(in);
        v.y = read_raw<double>(in);
        v.z = read_raw<double>(in);
    }
    mesh.faces.resize(nf);
    for (auto& f : mesh.faces)
        for (int& i : f) i = static_cast<int>(read_raw<std::uint32_t>(in));
    mesh.edges = collect_edges(mesh.faces);
    return mesh;
}

}  // namespace sphcnn
