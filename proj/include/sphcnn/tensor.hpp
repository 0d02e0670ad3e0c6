#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sphcnn {

/// Dense f64 signal shaped (batch, channels, vertices), batch-major.
/// `level` is the mesh level of the vertex axis; level -1 marks flat
/// feature tensors (e.g. after global pooling) whose vertex axis is not
/// tied to a mesh.
struct MeshTensor {
    int batch = 0;
    int channels = 0;
    int verts = 0;
    int level = -1;
    std::vector<double> data;

    MeshTensor() = default;
    MeshTensor(int b, int c, int v, int lvl)
        : batch(b), channels(c), verts(v), level(lvl),
          data(static_cast<std::size_t>(b) * c * v, 0.0) {}

    std::size_t size() const { return data.size(); }

    double& at(int b, int c, int v) {
        return data[(static_cast<std::size_t>(b) * channels + c) * verts + v];
    }
    const double& at(int b, int c, int v) const {
        return data[(static_cast<std::size_t>(b) * channels + c) * verts + v];
    }

    /// Pointer to the contiguous (channels x verts) slice of sample b.
    double* sample(int b) { return data.data() + static_cast<std::size_t>(b) * channels * verts; }
    const double* sample(int b) const {
        return data.data() + static_cast<std::size_t>(b) * channels * verts;
    }

    void require_shape(int c, int v, int lvl, const char* where) const {
        if (channels != c || verts != v || level != lvl)
            throw std::invalid_argument(std::string(where) + ": tensor shape mismatch");
    }
};

}  // namespace sphcnn
