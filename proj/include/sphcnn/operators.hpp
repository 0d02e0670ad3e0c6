#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "sphcnn/mesh.hpp"
#include "sphcnn/sparse.hpp"

namespace sphcnn {

/// Linear map from per-vertex scalars to stacked per-face gradients:
/// rows (3f, 3f+1, 3f+2) of `op` give the x/y/z components of the
/// (constant) gradient of the piecewise-linear interpolant on face f.
/// Face areas are flat (chordal) triangle areas.
struct FaceGradientOperator {
    SparseMatrix op;  // 3*n_f x n_v
    std::vector<double> face_areas;
    std::vector<std::vector<int>> vertex_faces;
};

FaceGradientOperator face_gradient_operator(const IcoMesh& mesh);

/// Area-weighted average of incident per-face gradients.
std::vector<Vec3> vertex_gradients(const FaceGradientOperator& fg, const IcoMesh& mesh,
                                   const std::vector<double>& f);

/// Per-vertex unit tangent frames: `east` points along increasing
/// longitude, `north` along increasing latitude. Zero vectors at the two
/// pole vertices (coordinate singularity).
struct DirectionFields {
    std::vector<Vec3> east;
    std::vector<Vec3> north;
};

DirectionFields direction_fields(const IcoMesh& mesh);

/// Barycentric dual areas: one third of the incident face areas.
struct DualAreas {
    std::vector<double> area;
};

/// Cotangent Laplacian with the negative-semidefinite sign convention
/// (L z ~ -2 z on the sphere): L_ii = -sum_j w_ij/(2A_i),
/// L_ij = +w_ij/(2A_i) with w_ij = cot(alpha_ij) + cot(beta_ij).
std::pair<SparseMatrix, DualAreas> cotan_laplacian(const IcoMesh& mesh);

/// The four n_v x n_v linear operators of the PDO kernel, with cached
/// transposes for reverse-mode passes. Immutable after assembly.
struct OperatorSet {
    int level = 0;
    SparseMatrix identity;
    SparseMatrix grad_x;  // east-west derivative
    SparseMatrix grad_y;  // north-south derivative
    SparseMatrix laplacian;
    SparseMatrix grad_x_t;
    SparseMatrix grad_y_t;
    SparseMatrix laplacian_t;

    const SparseMatrix& forward_op(int k) const;
    const SparseMatrix& transpose_op(int k) const;
};

OperatorSet assemble_operator_set(const IcoMesh& mesh);

/// Lazily constructed meshes and operator sets, shared across layers.
class OperatorCache {
public:
    std::shared_ptr<const IcoMesh> mesh(int level);
    std::shared_ptr<const OperatorSet> operators(int level);

private:
    std::vector<std::shared_ptr<const IcoMesh>> meshes_;
    std::vector<std::shared_ptr<const OperatorSet>> ops_;
};

}  // namespace sphcnn
