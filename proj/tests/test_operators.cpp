#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sphcnn/mesh.hpp"
#include "sphcnn/operators.hpp"

using namespace sphcnn;

namespace {

std::vector<double> vertex_z(const IcoMesh& mesh) {
    std::vector<double> f(mesh.n_v());
    for (int i = 0; i < mesh.n_v(); ++i) f[i] = mesh.vertices[i].z;
    return f;
}

bool is_pole(const Vec3& v) { return std::abs(v.z) > 1.0 - 1e-12; }

}  // namespace

TEST_CASE("face gradients annihilate constants, areas positive") {
    IcoMesh mesh = mesh_at_level(2);
    auto fg = face_gradient_operator(mesh);
    std::vector<double> ones(mesh.n_v(), 1.0), out(3 * mesh.n_f());
    fg.op.multiply(ones.data(), out.data());
    for (double v : out) CHECK(std::abs(v) <= 1e-12);
    for (double a : fg.face_areas) CHECK(a > 0.0);
}

TEST_CASE("level-0 face areas are all equal") {
    IcoMesh mesh = mesh_at_level(0);
    auto fg = face_gradient_operator(mesh);
    double total = 0.0;
    for (double a : fg.face_areas) total += a;
    for (double a : fg.face_areas) CHECK(a == doctest::Approx(total / 20.0).epsilon(1e-12));
}

TEST_CASE("face gradient of z equals in-plane projection of (0,0,1)") {
    IcoMesh mesh = mesh_at_level(4);
    auto fg = face_gradient_operator(mesh);
    auto f = vertex_z(mesh);
    std::vector<double> g(3 * mesh.n_f());
    fg.op.multiply(f.data(), g.data());
    double max_err = 0.0;
    for (int fi = 0; fi < mesh.n_f(); ++fi) {
        const auto& face = mesh.faces[fi];
        Vec3 a = mesh.vertices[face[0]], b = mesh.vertices[face[1]], c = mesh.vertices[face[2]];
        Vec3 n = (b - a).cross(c - a).normalized();
        Vec3 expect = Vec3{0, 0, 1} - n * n.z;  // projection onto the face plane
        Vec3 got{g[3 * fi], g[3 * fi + 1], g[3 * fi + 2]};
        max_err = std::max(max_err, (got - expect).norm());
    }
    CHECK(max_err <= 0.02);
}

TEST_CASE("vertex gradients: linearity and |grad z| = cos(lat)") {
    IcoMesh mesh = mesh_at_level(5);
    auto fg = face_gradient_operator(mesh);
    auto f = vertex_z(mesh);
    auto grads = vertex_gradients(fg, mesh, f);
    double max_err = 0.0;
    for (int i = 0; i < mesh.n_v(); ++i) {
        if (is_pole(mesh.vertices[i])) continue;
        double expect = std::cos(latitude(mesh.vertices[i]));
        max_err = std::max(max_err, std::abs(grads[i].norm() - expect));
    }
    CHECK(max_err <= 0.01);

    // linearity on a smaller mesh
    IcoMesh small = mesh_at_level(2);
    auto fg2 = face_gradient_operator(small);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> u(small.n_v()), v(small.n_v()), w(small.n_v());
    for (int i = 0; i < small.n_v(); ++i) {
        u[i] = dist(rng);
        v[i] = dist(rng);
        w[i] = 2.0 * u[i] - 3.0 * v[i];
    }
    auto gu = vertex_gradients(fg2, small, u);
    auto gv = vertex_gradients(fg2, small, v);
    auto gw = vertex_gradients(fg2, small, w);
    for (int i = 0; i < small.n_v(); ++i)
        CHECK((gw[i] - (gu[i] * 2.0 - gv[i] * 3.0)).norm() <= 1e-12);
}

TEST_CASE("direction fields are orthonormal tangent frames") {
    IcoMesh mesh = mesh_at_level(3);
    auto df = direction_fields(mesh);
    for (int i = 0; i < mesh.n_v(); ++i) {
        const Vec3& p = mesh.vertices[i];
        if (is_pole(p)) {
            CHECK(df.east[i].norm() == 0.0);
            CHECK(df.north[i].norm() == 0.0);
            continue;
        }
        CHECK(std::abs(df.east[i].norm() - 1.0) <= 1e-10);
        CHECK(std::abs(df.north[i].norm() - 1.0) <= 1e-10);
        CHECK(std::abs(df.east[i].dot(df.north[i])) <= 1e-10);
        CHECK(std::abs(df.east[i].dot(p)) <= 1e-10);
        CHECK(std::abs(df.north[i].dot(p)) <= 1e-10);
    }
}

TEST_CASE("direction fields at equatorial vertices point east and north") {
    IcoMesh mesh = mesh_at_level(4);
    auto df = direction_fields(mesh);
    int checked = 0;
    for (int i = 0; i < mesh.n_v(); ++i) {
        const Vec3& p = mesh.vertices[i];
        if (std::abs(latitude(p)) > 0.05 || std::abs(longitude(p)) > 0.05) continue;
        ++checked;
        CHECK(std::abs(df.north[i].x - 0.0) <= 0.02);
        CHECK(std::abs(df.north[i].y - 0.0) <= 0.02);
        CHECK(std::abs(df.north[i].z - 1.0) <= 0.02);
        CHECK(std::abs(df.east[i].x - 0.0) <= 0.02);
        CHECK(std::abs(df.east[i].y - 1.0) <= 0.02);
        CHECK(std::abs(df.east[i].z - 0.0) <= 0.02);
    }
    CHECK(checked > 0);
}

TEST_CASE("laplacian eigenvalue on the l=1 harmonic") {
    IcoMesh mesh = mesh_at_level(5);
    auto [lap, areas] = cotan_laplacian(mesh);
    auto f = vertex_z(mesh);
    auto lf = lap.multiply(f);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < mesh.n_v(); ++i) {
        double r = lf[i] + 2.0 * f[i];
        num += r * r;
        den += 4.0 * f[i] * f[i];
    }
    CHECK(std::sqrt(num / den) <= 0.01);

    double total_area = 0.0;
    for (double a : areas.area) {
        CHECK(a > 0.0);
        total_area += a;
    }
    // barycentric duals partition the chordal surface area, slightly
    // below the spherical 4*pi
    auto fg = face_gradient_operator(mesh);
    double face_total = 0.0;
    for (double a : fg.face_areas) face_total += a;
    CHECK(total_area == doctest::Approx(face_total).epsilon(1e-9));
}

TEST_CASE("laplacian row sums vanish and scaled matrix is symmetric") {
    IcoMesh mesh = mesh_at_level(3);
    auto [lap, areas] = cotan_laplacian(mesh);
    std::vector<double> ones(mesh.n_v(), 1.0);
    auto sums = lap.multiply(ones);
    for (double s : sums) CHECK(std::abs(s) <= 1e-10);

    // diag(2 A_i) L must be symmetric
    for (int i = 0; i < mesh.n_v(); ++i)
        for (int k = lap.offsets()[i]; k < lap.offsets()[i + 1]; ++k) {
            int j = lap.indices()[k];
            double wij = 2.0 * areas.area[i] * lap.values()[k];
            double wji = 2.0 * areas.area[j] * lap.coeff(j, i);
            CHECK(std::abs(wij - wji) <= 1e-10);
        }
}

TEST_CASE("laplacian is negative semidefinite in the area inner product") {
    IcoMesh mesh = mesh_at_level(2);
    auto [lap, areas] = cotan_laplacian(mesh);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(mesh.n_v());
        for (auto& v : x) v = dist(rng);
        auto lx = lap.multiply(x);
        double quad = 0.0;
        for (int i = 0; i < mesh.n_v(); ++i) quad += areas.area[i] * x[i] * lx[i];
        CHECK(quad <= 1e-10);
    }
}

TEST_CASE("operator set structure") {
    OperatorCache cache;
    auto ops = cache.operators(2);
    auto mesh = cache.mesh(2);
    const int n_v = mesh->n_v();
    CHECK(ops->identity.nnz() == n_v);
    for (int i = 0; i < n_v; ++i) CHECK(ops->identity.coeff(i, i) == 1.0);

    // laplacian row i has 1 + valence(i) nonzeros
    for (int i = 0; i < n_v; ++i)
        CHECK(ops->laplacian.row_nnz(i) == static_cast<int>(one_ring(*mesh, i).size()) + 1);

    // pole rows of the derivative operators are empty
    for (int i = 0; i < n_v; ++i) {
        if (std::abs(mesh->vertices[i].z) > 1.0 - 1e-12) {
            CHECK(ops->grad_x.row_nnz(i) == 0);
            CHECK(ops->grad_y.row_nnz(i) == 0);
        }
    }

    // derivative rows annihilate constants
    std::vector<double> ones(n_v, 1.0);
    for (double v : ops->grad_x.multiply(ones)) CHECK(std::abs(v) <= 1e-10);
    for (double v : ops->grad_y.multiply(ones)) CHECK(std::abs(v) <= 1e-10);

    // cached transposes
    for (int k = 1; k <= 3; ++k) {
        const SparseMatrix& a = ops->forward_op(k);
        const SparseMatrix& t = ops->transpose_op(k);
        for (int i = 0; i < n_v; i += 13)
            for (int j = 0; j < n_v; j += 17) CHECK(a.coeff(i, j) == t.coeff(j, i));
    }
}

TEST_CASE("grad_y of z matches cos(lat); grad_x of z vanishes") {
    OperatorCache cache;
    auto ops = cache.operators(4);
    auto mesh = cache.mesh(4);
    auto f = vertex_z(*mesh);
    auto gy = ops->grad_y.multiply(f);
    auto gx = ops->grad_x.multiply(f);
    for (int i = 0; i < mesh->n_v(); ++i) {
        if (is_pole(mesh->vertices[i])) continue;
        CHECK(std::abs(gy[i] - std::cos(latitude(mesh->vertices[i]))) <= 0.02);
        CHECK(std::abs(gx[i]) <= 0.02);
    }
}

TEST_CASE("refinement convergence of grad_y against cos(lat)") {
    OperatorCache cache;
    double prev = 1e30;
    for (int level = 3; level <= 5; ++level) {
        auto ops = cache.operators(level);
        auto mesh = cache.mesh(level);
        auto gy = ops->grad_y.multiply(vertex_z(*mesh));
        double max_err = 0.0;
        for (int i = 0; i < mesh->n_v(); ++i) {
            if (is_pole(mesh->vertices[i])) continue;
            max_err = std::max(max_err, std::abs(gy[i] - std::cos(latitude(mesh->vertices[i]))));
        }
        CHECK(max_err < prev);
        prev = max_err;
    }
}

TEST_CASE("operator linearity") {
    OperatorCache cache;
    auto ops = cache.operators(2);
    const int n_v = static_cast<int>(level_stats(2).n_v);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> f(n_v), g(n_v), h(n_v);
    for (int i = 0; i < n_v; ++i) {
        f[i] = dist(rng);
        g[i] = dist(rng);
        h[i] = 0.5 * f[i] + 1.5 * g[i];
    }
    for (int k = 0; k < 4; ++k) {
        auto of = ops->forward_op(k).multiply(f);
        auto og = ops->forward_op(k).multiply(g);
        auto oh = ops->forward_op(k).multiply(h);
        for (int i = 0; i < n_v; ++i)
            CHECK(std::abs(oh[i] - (0.5 * of[i] + 1.5 * og[i])) <= 1e-12);
    }
}
