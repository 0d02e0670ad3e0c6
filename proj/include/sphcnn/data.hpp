#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphcnn/mesh.hpp"
#include "sphcnn/network.hpp"

namespace sphcnn {

/// Thrown for malformed input files (bad magic, truncation, count
/// mismatches).
class DataFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Equirectangular panorama. Longitude spans [-pi, pi) left to right,
/// latitude spans [+pi/2, -pi/2] top to bottom (row 0 = north); pixel
/// centers sit at half-integer offsets. Values are f64, nominally [0,1]
/// for image I/O.
struct EquirectImage {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> pixels;  // (height, width, channels) row-major

    EquirectImage() = default;
    EquirectImage(int w, int h, int c)
        : width(w), height(h), channels(c),
          pixels(static_cast<std::size_t>(w) * h * c, 0.0) {}

    double& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    const double& at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// Binary PGM (P5, 1 channel) / PPM (P6, 3 channels), 8-bit. Writing clamps
// to [0,1] and scales to 255; reading scales back to [0,1].
EquirectImage read_pnm(const std::string& path);
void write_pnm(const EquirectImage& img, const std::string& path);

// ------------------------------------------------------------------- IDX

struct DigitSet {
    int rows = 0;
    int cols = 0;
    std::vector<std::vector<double>> images;  // row-major, values in [0,1]
    std::vector<int> labels;
};

/// IDX image/label pair (magic 0x00000803 / 0x00000801, big-endian dims,
/// unsigned byte payload).
DigitSet load_idx(const std::string& images_path, const std::string& labels_path);

void write_idx_images(const std::string& path, int rows, int cols,
                      const std::vector<std::vector<double>>& images);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

// ------------------------------------------------------------ projection

/// Square lat/lon patch of half-extent `delta` on the equator, centered at
/// longitude lon0. The latitude center is pinned to the equator to stay
/// clear of the pole singularities.
struct ProjectionSpec {
    double lon0 = 0.0;
    double delta = kPi / 6.0;  // 30 degrees; patch spans +-delta
};

/// Maps the image linearly onto [lon0-delta, lon0+delta] x [-delta, +delta]
/// and bilinearly samples it at each mesh vertex inside the patch; vertices
/// outside receive 0. Throws std::invalid_argument for delta outside
/// (0, pi/3].
std::vector<double> project_digit(const std::vector<double>& image, int rows, int cols,
                                  const ProjectionSpec& spec, const IcoMesh& mesh);

enum class SampleMode { bilinear, nearest };

/// Samples the panorama at each vertex (lon, lat). Bilinear wraps
/// longitude and clamps latitude; nearest returns an existing pixel value
/// exactly. Output is (channels, n_v) row-major.
std::vector<double> sample_equirect(const EquirectImage& img, const IcoMesh& mesh,
                                    SampleMode mode);

/// Paints each pixel with the barycentric interpolation of the per-vertex
/// signal on the spherical triangle containing the pixel direction.
/// Containment uses an eps=1e-12 slack; ties go to the lowest face index.
EquirectImage render_equirect(const std::vector<double>& signal, const IcoMesh& mesh,
                              int width, int height);

/// Label variant: each pixel takes the label of the vertex with the
/// largest barycentric weight in its containing triangle.
EquirectImage render_equirect_labels(const std::vector<int>& labels, const IcoMesh& mesh,
                                     int width, int height);

// ------------------------------------------------------------- synthetic

struct SphericalSample {
    std::vector<double> features;  // (channels, n_v) row-major
    std::vector<int> labels;       // per vertex
};

/// Synthetic segmentation fixtures: per class a random mixture of the nine
/// real polynomial harmonics up to degree 2; the label is the argmax field
/// and the features are the class fields plus one distractor mixture
/// (channels = classes + 1). Deterministic per seed.
std::vector<SphericalSample> synth_segmentation_set(int level, int classes, int count,
                                                    std::uint64_t seed, const IcoMesh& mesh);

Dataset dataset_from_samples(const std::vector<SphericalSample>& samples, int level,
                             int channels);

// ----------------------------------------------------- feature files

// Per-sample binary feature file: magic "UGSF", version u16, level u16,
// channels u32, verts u32, f64 payload. Label files use magic "UGSL" with
// i32 payload.
void write_feature_file(const std::string& path, int level, int channels,
                        const std::vector<double>& data);
struct FeatureFile {
    int level = 0;
    int channels = 0;
    int verts = 0;
    std::vector<double> data;
};
FeatureFile read_feature_file(const std::string& path);

void write_label_file(const std::string& path, int level, const std::vector<int>& labels);
std::vector<int> read_label_file(const std::string& path, int* level = nullptr);

// ------------------------------------------------------------- manifests

/// One line per sample: feature path, then either an integer class label
/// or '@' + per-vertex label file path, tab separated. Paths are relative
/// to the manifest's directory.
struct ManifestEntry {
    std::string feature_path;
    int label = -1;
    std::string label_path;  // empty for classification entries
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

/// Reads every referenced file into memory. All samples must agree on
/// level and channel count.
Dataset load_dataset(const std::string& manifest_path);

}  // namespace sphcnn
