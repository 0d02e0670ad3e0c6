#include "sphcnn/operators.hpp"

#include <cmath>
#include <stdexcept>

namespace sphcnn {

namespace {

constexpr double kPoleEps = 1e-12;

bool is_pole(const Vec3& v) { return std::abs(v.z) >= 1.0 - kPoleEps; }

struct FaceBasisGradients {
    Vec3 grad[3];  // gradient of the hat function of each corner
    double area;
};

FaceBasisGradients face_basis_gradients(const Vec3& p0, const Vec3& p1, const Vec3& p2) {
    Vec3 normal = (p1 - p0).cross(p2 - p0);
    double two_area = normal.norm();
    if (two_area < 1e-15) throw std::runtime_error("degenerate face in gradient assembly");
    Vec3 n = normal / two_area;
    FaceBasisGradients g;
    g.area = 0.5 * two_area;
    g.grad[0] = n.cross(p2 - p1) / two_area;
    g.grad[1] = n.cross(p0 - p2) / two_area;
    g.grad[2] = n.cross(p1 - p0) / two_area;
    return g;
}

}  // namespace

FaceGradientOperator face_gradient_operator(const IcoMesh& mesh) {
    FaceGradientOperator fg;
    fg.face_areas.reserve(mesh.n_f());
    fg.vertex_faces = vertex_face_adjacency(mesh);

    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.n_f()) * 9);
    for (int fi = 0; fi < mesh.n_f(); ++fi) {
        const auto& f = mesh.faces[fi];
        auto g = face_basis_gradients(mesh.vertices[f[0]], mesh.vertices[f[1]],
                                      mesh.vertices[f[2]]);
        fg.face_areas.push_back(g.area);
        for (int c = 0; c < 3; ++c) {
            triplets.push_back({3 * fi + 0, f[c], g.grad[c].x});
            triplets.push_back({3 * fi + 1, f[c], g.grad[c].y});
            triplets.push_back({3 * fi + 2, f[c], g.grad[c].z});
        }
    }
    fg.op = SparseMatrix::from_triplets(3 * mesh.n_f(), mesh.n_v(), std::move(triplets));
    return fg;
}

std::vector<Vec3> vertex_gradients(const FaceGradientOperator& fg, const IcoMesh& mesh,
                                   const std::vector<double>& f) {
    if (static_cast<int>(f.size()) != mesh.n_v())
        throw std::invalid_argument("vertex_gradients: field length mismatch");
    std::vector<double> face_grads = fg.op.multiply(f);
    std::vector<Vec3> out(mesh.n_v());
    for (int v = 0; v < mesh.n_v(); ++v) {
        Vec3 acc{};
        double wsum = 0.0;
        for (int fi : fg.vertex_faces[v]) {
            double a = fg.face_areas[fi];
            acc += a * Vec3{face_grads[3 * fi], face_grads[3 * fi + 1], face_grads[3 * fi + 2]};
            wsum += a;
        }
        out[v] = acc / wsum;
    }
    return out;
}

DirectionFields direction_fields(const IcoMesh& mesh) {
    const int nv = mesh.n_v();
    std::vector<double> lat(nv), lon(nv);
    for (int v = 0; v < nv; ++v) {
        lat[v] = latitude(mesh.vertices[v]);
        lon[v] = longitude(mesh.vertices[v]);
    }

    // Per-face gradients of the longitude and latitude fields. Longitude is
    // unwrapped per face into a common 2*pi window so faces straddling the
    // +-pi seam do not see an O(2*pi) jump; a pole corner (where longitude
    // is undefined) takes the mean of the other two corners.
    std::vector<Vec3> grad_lon_acc(nv), grad_lat_acc(nv);
    std::vector<double> wsum(nv, 0.0);
    for (const auto& f : mesh.faces) {
        double flon[3], flat[3];
        bool pole[3];
        for (int c = 0; c < 3; ++c) {
            flon[c] = lon[f[c]];
            flat[c] = lat[f[c]];
            pole[c] = is_pole(mesh.vertices[f[c]]);
        }
        // unwrap over the non-pole corners
        double ref = 0.0;
        int nref = 0;
        for (int c = 0; c < 3; ++c) {
            if (pole[c]) continue;
            if (nref == 0) {
                ref = flon[c];
            } else {
                while (flon[c] - ref > kPi) flon[c] -= 2 * kPi;
                while (flon[c] - ref < -kPi) flon[c] += 2 * kPi;
            }
            ++nref;
        }
        double mean = 0.0;
        for (int c = 0; c < 3; ++c)
            if (!pole[c]) mean += flon[c] / nref;
        for (int c = 0; c < 3; ++c)
            if (pole[c]) flon[c] = mean;

        auto g = face_basis_gradients(mesh.vertices[f[0]], mesh.vertices[f[1]],
                                      mesh.vertices[f[2]]);
        Vec3 glon{}, glat{};
        for (int c = 0; c < 3; ++c) {
            glon += flon[c] * g.grad[c];
            glat += flat[c] * g.grad[c];
        }
        for (int c = 0; c < 3; ++c) {
            grad_lon_acc[f[c]] += g.area * glon;
            grad_lat_acc[f[c]] += g.area * glat;
            wsum[f[c]] += g.area;
        }
    }

    DirectionFields fields;
    fields.east.assign(nv, Vec3{});
    fields.north.assign(nv, Vec3{});
    for (int v = 0; v < nv; ++v) {
        if (is_pole(mesh.vertices[v])) continue;
        Vec3 r = mesh.vertices[v];
        // project onto the tangent plane, then orthonormalize east against
        // north so the frame invariants hold exactly
        Vec3 north = grad_lat_acc[v] / wsum[v];
        north = north - north.dot(r) * r;
        north = north.normalized();
        Vec3 east = grad_lon_acc[v] / wsum[v];
        east = east - east.dot(r) * r;
        east = east - east.dot(north) * north;
        fields.north[v] = north;
        fields.east[v] = east.normalized();
    }
    return fields;
}

std::pair<SparseMatrix, DualAreas> cotan_laplacian(const IcoMesh& mesh) {
    const int nv = mesh.n_v();
    DualAreas dual;
    dual.area.assign(nv, 0.0);

    // Accumulate cotangent weights per directed edge; each undirected edge
    // receives cot(alpha)+cot(beta) from its two incident faces.
    std::vector<Triplet> weight_triplets;
    weight_triplets.reserve(static_cast<std::size_t>(mesh.n_f()) * 6);
    for (const auto& f : mesh.faces) {
        const Vec3* p[3] = {&mesh.vertices[f[0]], &mesh.vertices[f[1]], &mesh.vertices[f[2]]};
        double area = 0.5 * (*p[1] - *p[0]).cross(*p[2] - *p[0]).norm();
        for (int c = 0; c < 3; ++c) {
            dual.area[f[c]] += area / 3.0;
            int i = f[(c + 1) % 3], j = f[(c + 2) % 3];
            Vec3 u = *p[(c + 1) % 3] - *p[c];
            Vec3 v = *p[(c + 2) % 3] - *p[c];
            double cot = u.dot(v) / u.cross(v).norm();
            weight_triplets.push_back({i, j, cot});
            weight_triplets.push_back({j, i, cot});
        }
    }
    SparseMatrix weights = SparseMatrix::from_triplets(nv, nv, std::move(weight_triplets), 0.0);

    std::vector<Triplet> triplets;
    triplets.reserve(weights.nnz() + nv);
    for (int i = 0; i < nv; ++i) {
        double scale = 1.0 / (2.0 * dual.area[i]);
        double diag = 0.0;
        for (int k = weights.offsets()[i]; k < weights.offsets()[i + 1]; ++k) {
            double w = weights.values()[k] * scale;
            triplets.push_back({i, weights.indices()[k], w});
            diag -= w;
        }
        triplets.push_back({i, i, diag});
    }
    return {SparseMatrix::from_triplets(nv, nv, std::move(triplets)), std::move(dual)};
}

OperatorSet assemble_operator_set(const IcoMesh& mesh) {
    const int nv = mesh.n_v();
    OperatorSet set;
    set.level = mesh.level;
    set.identity = SparseMatrix::identity(nv);

    DirectionFields fields = direction_fields(mesh);
    auto vertex_faces = vertex_face_adjacency(mesh);
    std::vector<FaceBasisGradients> face_basis;
    face_basis.reserve(mesh.n_f());
    for (const auto& f : mesh.faces)
        face_basis.push_back(face_basis_gradients(mesh.vertices[f[0]], mesh.vertices[f[1]],
                                                  mesh.vertices[f[2]]));

    // Row i of grad_x is x_hat_i dotted into the area-weighted average of
    // the incident face-gradient rows; pole rows stay empty.
    auto directional = [&](const std::vector<Vec3>& dir) {
        std::vector<Triplet> triplets;
        for (int v = 0; v < nv; ++v) {
            const Vec3& d = dir[v];
            if (d.norm() == 0.0) continue;
            double wsum = 0.0;
            for (int fi : vertex_faces[v]) wsum += face_basis[fi].area;
            for (int fi : vertex_faces[v]) {
                double w = face_basis[fi].area / wsum;
                for (int c = 0; c < 3; ++c)
                    triplets.push_back({v, mesh.faces[fi][c], w * d.dot(face_basis[fi].grad[c])});
            }
        }
        return SparseMatrix::from_triplets(nv, nv, std::move(triplets));
    };

    set.grad_x = directional(fields.east);
    set.grad_y = directional(fields.north);
    set.laplacian = cotan_laplacian(mesh).first;

    set.grad_x_t = set.grad_x.transposed();
    set.grad_y_t = set.grad_y.transposed();
    set.laplacian_t = set.laplacian.transposed();
    return set;
}

const SparseMatrix& OperatorSet::forward_op(int k) const {
    switch (k) {
        case 0: return identity;
        case 1: return grad_x;
        case 2: return grad_y;
        case 3: return laplacian;
    }
    throw std::out_of_range("OperatorSet: bad operator index");
}

const SparseMatrix& OperatorSet::transpose_op(int k) const {
    switch (k) {
        case 0: return identity;
        case 1: return grad_x_t;
        case 2: return grad_y_t;
        case 3: return laplacian_t;
    }
    throw std::out_of_range("OperatorSet: bad operator index");
}

std::shared_ptr<const IcoMesh> OperatorCache::mesh(int level) {
    if (level < 0 || level > kMaxMeshLevel) throw std::out_of_range("OperatorCache: bad level");
    if (static_cast<int>(meshes_.size()) <= level) meshes_.resize(level + 1);
    if (!meshes_[level]) {
        if (level == 0) {
            meshes_[0] = std::make_shared<IcoMesh>(build_icosahedron());
        } else {
            meshes_[level] = std::make_shared<IcoMesh>(subdivide(*mesh(level - 1)));
        }
    }
    return meshes_[level];
}

std::shared_ptr<const OperatorSet> OperatorCache::operators(int level) {
    if (level < 0 || level > kMaxMeshLevel) throw std::out_of_range("OperatorCache: bad level");
    if (static_cast<int>(ops_.size()) <= level) ops_.resize(level + 1);
    if (!ops_[level]) ops_[level] = std::make_shared<OperatorSet>(assemble_operator_set(*mesh(level)));
    return ops_[level];
}

}  // namespace sphcnn
