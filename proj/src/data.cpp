#include "sphcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sphcnn/rng.hpp"

namespace sphcnn {

namespace {

double wrap_longitude(double lon) {
    while (lon < -kPi) lon += 2.0 * kPi;
    while (lon >= kPi) lon -= 2.0 * kPi;
    return lon;
}

std::uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataFormatError("idx: truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

// ------------------------------------------------------------------- PNM

void write_pnm(const EquirectImage& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_pnm: only 1 or 3 channels supported");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * img.channels + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

EquirectImage read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") throw DataFormatError("pnm: bad magic in " + path);
    int width = 0, height = 0, maxval = 0;
    // header tokens may be separated by whitespace or '#' comment lines
    auto next_int = [&]() {
        int v;
        while (in >> std::ws && in.peek() == '#') in.ignore(1 << 16, '\n');
        if (!(in >> v)) throw DataFormatError("pnm: bad header in " + path);
        return v;
    };
    width = next_int();
    height = next_int();
    maxval = next_int();
    if (maxval != 255) throw DataFormatError("pnm: only maxval 255 supported");
    in.ignore(1);  // single whitespace before payload
    EquirectImage img(width, height, magic == "P5" ? 1 : 3);
    std::vector<unsigned char> raw(img.pixels.size());
    in.read(reinterpret_cast<char*>(raw.data()), raw.size());
    if (!in) throw DataFormatError("pnm: truncated payload in " + path);
    for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
    return img;
}

// ------------------------------------------------------------------- IDX

DigitSet load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw DataFormatError("cannot open: " + images_path);
    if (read_be32(imgs) != 0x00000803u)
        throw DataFormatError("idx: bad image magic in " + images_path);
    const std::uint32_t count = read_be32(imgs);
    const std::uint32_t rows = read_be32(imgs);
    const std::uint32_t cols = read_be32(imgs);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw DataFormatError("cannot open: " + labels_path);
    if (read_be32(labs) != 0x00000801u)
        throw DataFormatError("idx: bad label magic in " + labels_path);
    if (read_be32(labs) != count)
        throw DataFormatError("idx: image/label count mismatch");

    DigitSet set;
    set.rows = static_cast<int>(rows);
    set.cols = static_cast<int>(cols);
    set.images.resize(count);
    set.labels.resize(count);
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t i = 0; i < count; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), buf.size());
        if (!imgs) throw DataFormatError("idx: truncated image payload");
        set.images[i].resize(buf.size());
        for (std::size_t j = 0; j < buf.size(); ++j) set.images[i][j] = buf[j] / 255.0;
        unsigned char y;
        labs.read(reinterpret_cast<char*>(&y), 1);
        if (!labs) throw DataFormatError("idx: truncated label payload");
        set.labels[i] = y;
    }
    return set;
}

void write_idx_images(const std::string& path, int rows, int cols,
                      const std::vector<std::vector<double>>& images) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_be32(out, 0x00000803u);
    write_be32(out, static_cast<std::uint32_t>(images.size()));
    write_be32(out, static_cast<std::uint32_t>(rows));
    write_be32(out, static_cast<std::uint32_t>(cols));
    for (const auto& img : images) {
        if (img.size() != static_cast<std::size_t>(rows) * cols)
            throw std::invalid_argument("write_idx_images: image size mismatch");
        for (double v : img) {
            unsigned char b =
                static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            out.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_be32(out, 0x00000801u);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (int y : labels) {
        auto b = static_cast<unsigned char>(y);
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// ------------------------------------------------------------ projection

std::vector<double> project_digit(const std::vector<double>& image, int rows, int cols,
                                  const ProjectionSpec& spec, const IcoMesh& mesh) {
    if (!(spec.delta > 0.0) || spec.delta > kPi / 3.0)
        throw std::invalid_argument("project_digit: patch half-extent outside (0, pi/3]");
    if (image.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("project_digit: image size mismatch");

    std::vector<double> signal(mesh.n_v(), 0.0);
    const double d = spec.delta;
    for (int i = 0; i < mesh.n_v(); ++i) {
        const Vec3& p = mesh.vertices[i];
        double lat = latitude(p);
        if (std::abs(lat) > d) continue;
        double lon = wrap_longitude(longitude(p) - spec.lon0);
        if (std::abs(lon) > d) continue;
        // patch-local pixel coordinates; row 0 is the north edge
        double fx = (lon + d) / (2.0 * d) * cols - 0.5;
        double fy = (d - lat) / (2.0 * d) * rows - 0.5;
        double cx = std::clamp(fx, 0.0, static_cast<double>(cols - 1));
        double cy = std::clamp(fy, 0.0, static_cast<double>(rows - 1));
        int x0 = static_cast<int>(std::floor(cx));
        int y0 = static_cast<int>(std::floor(cy));
        int x1 = std::min(x0 + 1, cols - 1);
        int y1 = std::min(y0 + 1, rows - 1);
        double tx = cx - x0, ty = cy - y0;
        signal[i] = (1 - ty) * ((1 - tx) * image[static_cast<std::size_t>(y0) * cols + x0] +
                                tx * image[static_cast<std::size_t>(y0) * cols + x1]) +
                    ty * ((1 - tx) * image[static_cast<std::size_t>(y1) * cols + x0] +
                          tx * image[static_cast<std::size_t>(y1) * cols + x1]);
    }
    return signal;
}

std::vector<double> sample_equirect(const EquirectImage& img, const IcoMesh& mesh,
                                    SampleMode mode) {
    const int n_v = mesh.n_v();
    std::vector<double> out(static_cast<std::size_t>(img.channels) * n_v, 0.0);
    for (int i = 0; i < n_v; ++i) {
        double lon = longitude(mesh.vertices[i]);
        double lat = latitude(mesh.vertices[i]);
        double u = (lon + kPi) / (2.0 * kPi) * img.width;   // in [0, width)
        double v = (kPi / 2.0 - lat) / kPi * img.height;    // in [0, height]
        if (mode == SampleMode::nearest) {
            int x = std::clamp(static_cast<int>(std::floor(u)), 0, img.width - 1);
            int y = std::clamp(static_cast<int>(std::floor(v)), 0, img.height - 1);
            for (int c = 0; c < img.channels; ++c)
                out[static_cast<std::size_t>(c) * n_v + i] = img.at(y, x, c);
        } else {
            double fx = u - 0.5;  // pixel-center coordinates; lon wraps
            double fy = std::clamp(v - 0.5, 0.0, static_cast<double>(img.height - 1));
            int x0 = static_cast<int>(std::floor(fx));
            double tx = fx - x0;
            int xa = ((x0 % img.width) + img.width) % img.width;
            int xb = (xa + 1) % img.width;
            int y0 = static_cast<int>(std::floor(fy));
            int y1 = std::min(y0 + 1, img.height - 1);
            double ty = fy - y0;
            for (int c = 0; c < img.channels; ++c)
                out[static_cast<std::size_t>(c) * n_v + i] =
                    (1 - ty) * ((1 - tx) * img.at(y0, xa, c) + tx * img.at(y0, xb, c)) +
                    ty * ((1 - tx) * img.at(y1, xa, c) + tx * img.at(y1, xb, c));
        }
    }
    return out;
}

// ------------------------------------------------------------- rendering

namespace {

/// Pixel -> containing-face lookup shared by the two render variants.
/// Faces are bucketed by the lat/lon bounding box of their vertices, with
/// seam-spanning and pole-touching faces widened to full longitude range.
class FaceLocator {
public:
    explicit FaceLocator(const IcoMesh& mesh) : mesh_(mesh) {
        const int n_f = mesh.n_f();
        lon_bins_ = std::max(8, static_cast<int>(std::sqrt(static_cast<double>(n_f))));
        lat_bins_ = std::max(4, lon_bins_ / 2);
        buckets_.resize(static_cast<std::size_t>(lon_bins_) * lat_bins_);
        for (int f = 0; f < n_f; ++f) {
            double lat_min = kPi, lat_max = -kPi;
            double lon_min = kPi, lon_max = -kPi;
            bool pole = false, seam = false;
            for (int k = 0; k < 3; ++k) {
                const Vec3& p = mesh.vertices[mesh.faces[f][k]];
                double lat = latitude(p);
                lat_min = std::min(lat_min, lat);
                lat_max = std::max(lat_max, lat);
                if (std::abs(p.z) > 0.999999) pole = true;
                double lon = longitude(p);
                lon_min = std::min(lon_min, lon);
                lon_max = std::max(lon_max, lon);
            }
            if (lon_max - lon_min > kPi) seam = true;  // face crosses the dateline
            const double pad = 0.02;
            int y0 = lat_bin(lat_max + pad), y1 = lat_bin(lat_min - pad);
            if (pole || seam) {
                for (int y = y0; y <= y1; ++y)
                    for (int x = 0; x < lon_bins_; ++x) buckets_[index(y, x)].push_back(f);
            } else {
                int x0 = lon_bin(lon_min - pad), x1 = lon_bin(lon_max + pad);
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x)
                        buckets_[index(y, ((x % lon_bins_) + lon_bins_) % lon_bins_)]
                            .push_back(f);
            }
        }
        for (auto& b : buckets_) {
            std::sort(b.begin(), b.end());
            b.erase(std::unique(b.begin(), b.end()), b.end());
        }
    }

    /// Containing face (lowest index on ties) and normalized barycentric
    /// weights for a unit direction.
    int locate(const Vec3& dir, double bary[3]) const {
        double lat = latitude(dir), lon = longitude(dir);
        const auto& bucket = buckets_[index(lat_bin(lat), lon_bin(lon))];
        int best = -1;
        double best_min = -1e30;
        double b[3];
        for (int f : bucket) {
            if (!barycentric(f, dir, b)) continue;
            double mn = std::min({b[0], b[1], b[2]});
            if (mn >= -1e-12) {
                std::memcpy(bary, b, sizeof(b));
                return f;  // bucket is sorted, so the first hit is the lowest index
            }
            if (mn > best_min) {
                best_min = mn;
                best = f;
                std::memcpy(bary, b, sizeof(b));
            }
        }
        if (best >= 0) return best;
        // bucket miss (should not happen): global max-min-barycentric scan
        for (int f = 0; f < mesh_.n_f(); ++f) {
            if (!barycentric(f, dir, b)) continue;
            double mn = std::min({b[0], b[1], b[2]});
            if (mn > best_min) {
                best_min = mn;
                best = f;
                std::memcpy(bary, b, sizeof(b));
            }
        }
        return best;
    }

private:
    int lat_bin(double lat) const {
        double t = (kPi / 2.0 - lat) / kPi;
        return std::clamp(static_cast<int>(t * lat_bins_), 0, lat_bins_ - 1);
    }
    int lon_bin(double lon) const {
        double t = (lon + kPi) / (2.0 * kPi);
        return std::clamp(static_cast<int>(t * lon_bins_), 0, lon_bins_ - 1);
    }
    std::size_t index(int y, int x) const {
        return static_cast<std::size_t>(y) * lon_bins_ + x;
    }

    /// Central-projection barycentric weights: solve [v0 v1 v2] c = dir and
    /// normalize to sum 1. Returns false for a degenerate (back-facing)
    /// configuration.
    bool barycentric(int f, const Vec3& dir, double b[3]) const {
        const Vec3& v0 = mesh_.vertices[mesh_.faces[f][0]];
        const Vec3& v1 = mesh_.vertices[mesh_.faces[f][1]];
        const Vec3& v2 = mesh_.vertices[mesh_.faces[f][2]];
        double det = v0.dot(v1.cross(v2));
        if (std::abs(det) < 1e-14) return false;
        double c0 = dir.dot(v1.cross(v2)) / det;
        double c1 = v0.dot(dir.cross(v2)) / det;
        double c2 = v0.dot(v1.cross(dir)) / det;
        double s = c0 + c1 + c2;
        if (s <= 0.0) return false;  // antipodal hit
        b[0] = c0 / s;
        b[1] = c1 / s;
        b[2] = c2 / s;
        return true;
    }

    const IcoMesh& mesh_;
    int lon_bins_ = 0, lat_bins_ = 0;
    std::vector<std::vector<int>> buckets_;
};

Vec3 pixel_direction(int x, int y, int width, int height) {
    double lon = -kPi + (x + 0.5) * 2.0 * kPi / width;
    double lat = kPi / 2.0 - (y + 0.5) * kPi / height;
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

}  // namespace

EquirectImage render_equirect(const std::vector<double>& signal, const IcoMesh& mesh,
                              int width, int height) {
    if (signal.size() != static_cast<std::size_t>(mesh.n_v()))
        throw std::invalid_argument("render_equirect: signal length mismatch");
    FaceLocator locator(mesh);
    EquirectImage img(width, height, 1);
    double b[3];
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            int f = locator.locate(pixel_direction(x, y, width, height), b);
            const auto& face = mesh.faces[f];
            img.at(y, x, 0) =
                b[0] * signal[face[0]] + b[1] * signal[face[1]] + b[2] * signal[face[2]];
        }
    return img;
}

EquirectImage render_equirect_labels(const std::vector<int>& labels, const IcoMesh& mesh,
                                     int width, int height) {
    if (labels.size() != static_cast<std::size_t>(mesh.n_v()))
        throw std::invalid_argument("render_equirect_labels: label length mismatch");
    FaceLocator locator(mesh);
    EquirectImage img(width, height, 1);
    double b[3];
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            int f = locator.locate(pixel_direction(x, y, width, height), b);
            int k = 0;
            if (b[1] > b[k]) k = 1;
            if (b[2] > b[k]) k = 2;
            img.at(y, x, 0) = labels[mesh.faces[f][k]];
        }
    return img;
}

// ------------------------------------------------------------- synthetic

std::vector<SphericalSample> synth_segmentation_set(int level, int classes, int count,
                                                    std::uint64_t seed, const IcoMesh& mesh) {
    if (classes < 2) throw std::invalid_argument("synth_segmentation_set: classes must be >= 2");
    if (mesh.level != level)
        throw std::invalid_argument("synth_segmentation_set: mesh level mismatch");
    const int n_v = mesh.n_v();
    const int channels = classes + 1;

    // real polynomial harmonics up to degree 2, evaluated per vertex
    constexpr int kBasis = 9;
    std::vector<double> basis(static_cast<std::size_t>(kBasis) * n_v);
    for (int i = 0; i < n_v; ++i) {
        const Vec3& p = mesh.vertices[i];
        const double vals[kBasis] = {1.0,         p.x,       p.y,
                                     p.z,         p.x * p.y, p.y * p.z,
                                     p.z * p.x,   p.x * p.x - p.y * p.y,
                                     3.0 * p.z * p.z - 1.0};
        for (int j = 0; j < kBasis; ++j) basis[static_cast<std::size_t>(j) * n_v + i] = vals[j];
    }

    std::mt19937_64 rng = rng_stream(seed, "synth");
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<SphericalSample> samples(count);
    for (auto& sample : samples) {
        sample.features.assign(static_cast<std::size_t>(channels) * n_v, 0.0);
        sample.labels.assign(n_v, 0);
        for (int c = 0; c < channels; ++c) {
            double coef[kBasis];
            for (double& w : coef) w = gauss(rng);
            coef[0] *= 0.3;  // keep the constant term from drowning one class
            double* field = sample.features.data() + static_cast<std::size_t>(c) * n_v;
            for (int j = 0; j < kBasis; ++j) {
                const double* bj = basis.data() + static_cast<std::size_t>(j) * n_v;
                for (int i = 0; i < n_v; ++i) field[i] += coef[j] * bj[i];
            }
        }
        for (int i = 0; i < n_v; ++i) {
            int argmax = 0;
            for (int c = 1; c < classes; ++c)
                if (sample.features[static_cast<std::size_t>(c) * n_v + i] >
                    sample.features[static_cast<std::size_t>(argmax) * n_v + i])
                    argmax = c;
            sample.labels[i] = argmax;
        }
    }
    return samples;
}

Dataset dataset_from_samples(const std::vector<SphericalSample>& samples, int level,
                             int channels) {
    Dataset data;
    data.level = level;
    data.channels = channels;
    data.verts = static_cast<int>(level_stats(level).n_v);
    for (const auto& s : samples) {
        if (s.features.size() != static_cast<std::size_t>(channels) * data.verts)
            throw std::invalid_argument("dataset_from_samples: feature size mismatch");
        data.features.push_back(s.features);
        data.vertex_labels.push_back(s.labels);
    }
    return data;
}

// ----------------------------------------------------- feature files

namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_or_throw(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataFormatError(std::string("truncated ") + what);
    return v;
}

}  // namespace

void write_feature_file(const std::string& path, int level, int channels,
                        const std::vector<double>& data) {
    const auto verts = level_stats(level).n_v;
    if (data.size() != static_cast<std::size_t>(channels) * verts)
        throw std::invalid_argument("write_feature_file: data size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write("UGSF", 4);
    put<std::uint16_t>(out, 1);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(level));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(verts));
    out.write(reinterpret_cast<const char*>(data.data()), sizeof(double) * data.size());
    if (!out) throw std::runtime_error("write failed: " + path);
}

FeatureFile read_feature_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "UGSF", 4) != 0)
        throw DataFormatError("feature file: bad magic in " + path);
    if (get_or_throw<std::uint16_t>(in, "version") != 1)
        throw DataFormatError("feature file: unsupported version in " + path);
    FeatureFile f;
    f.level = get_or_throw<std::uint16_t>(in, "level");
    f.channels = static_cast<int>(get_or_throw<std::uint32_t>(in, "channels"));
    f.verts = static_cast<int>(get_or_throw<std::uint32_t>(in, "verts"));
    if (f.verts != level_stats(f.level).n_v)
        throw DataFormatError("feature file: vertex count does not match level in " + path);
    f.data.resize(static_cast<std::size_t>(f.channels) * f.verts);
    in.read(reinterpret_cast<char*>(f.data.data()), sizeof(double) * f.data.size());
    if (!in) throw DataFormatError("feature file: truncated payload in " + path);
    return f;
}

void write_label_file(const std::string& path, int level, const std::vector<int>& labels) {
    if (labels.size() != static_cast<std::size_t>(level_stats(level).n_v))
        throw std::invalid_argument("write_label_file: label count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write("UGSL", 4);
    put<std::uint16_t>(out, 1);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(level));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(labels.size()));
    for (int y : labels) put<std::int32_t>(out, y);
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<int> read_label_file(const std::string& path, int* level) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "UGSL", 4) != 0)
        throw DataFormatError("label file: bad magic in " + path);
    if (get_or_throw<std::uint16_t>(in, "version") != 1)
        throw DataFormatError("label file: unsupported version in " + path);
    int lvl = get_or_throw<std::uint16_t>(in, "level");
    if (level) *level = lvl;
    auto count = get_or_throw<std::uint32_t>(in, "count");
    std::vector<int> labels(count);
    for (auto& y : labels) y = get_or_throw<std::int32_t>(in, "label payload");
    return labels;
}

// ------------------------------------------------------------- manifests

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& e : entries) {
        if (e.label_path.empty())
            out << e.feature_path << '\t' << e.label << '\n';
        else
            out << e.feature_path << "\t@" << e.label_path << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataFormatError("cannot open: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataFormatError("manifest: missing tab separator in " + path);
        ManifestEntry e;
        e.feature_path = line.substr(0, tab);
        std::string rest = line.substr(tab + 1);
        if (!rest.empty() && rest[0] == '@') {
            e.label_path = rest.substr(1);
        } else {
            try {
                e.label = std::stoi(rest);
            } catch (const std::exception&) {
                throw DataFormatError("manifest: bad label field '" + rest + "' in " + path);
            }
        }
        entries.push_back(e);
    }
    return entries;
}

Dataset load_dataset(const std::string& manifest_path) {
    auto entries = read_manifest(manifest_path);
    if (entries.empty()) throw DataFormatError("manifest is empty: " + manifest_path);
    const auto base = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) { return (base / p).string(); };

    Dataset data;
    bool first = true;
    for (const auto& e : entries) {
        FeatureFile f = read_feature_file(resolve(e.feature_path));
        if (first) {
            data.level = f.level;
            data.channels = f.channels;
            data.verts = f.verts;
            first = false;
        } else if (f.level != data.level || f.channels != data.channels) {
            throw DataFormatError("dataset: inconsistent level/channels at " + e.feature_path);
        }
        data.features.push_back(std::move(f.data));
        if (e.label_path.empty()) {
            data.labels.push_back(e.label);
        } else {
            int lvl = 0;
            auto labels = read_label_file(resolve(e.label_path), &lvl);
            if (lvl != data.level)
                throw DataFormatError("dataset: label level mismatch at " + e.label_path);
            data.vertex_labels.push_back(std::move(labels));
        }
    }
    if (!data.labels.empty() && !data.vertex_labels.empty())
        throw DataFormatError("dataset: mixed classification and segmentation entries");
    return data;
}

}  // namespace sphcnn
