#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace sphcnn {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const { return *this / norm(); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Latitude in [-pi/2, pi/2]; poles map to +-pi/2.
inline double latitude(const Vec3& v) { return std::asin(std::clamp(v.z, -1.0, 1.0)); }

/// Longitude in [-pi, pi); undefined (returns 0) at the poles.
inline double longitude(const Vec3& v) { return std::atan2(v.y, v.x); }

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace sphcnn
