// Minimal 2-D vector / symmetric 2x2 matrix arithmetic.

#pragma once

#include <algorithm>
#include <cmath>

namespace georing {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(const Vec2& o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm2() const { return x * x + y * y; }
    double norm() const { return std::sqrt(norm2()); }
    bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

// 2x2 matrix, stored row-major. Covariance use assumes m01 == m10.
struct Mat2 {
    double m00 = 0.0, m01 = 0.0, m10 = 0.0, m11 = 0.0;

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2 diag(double a, double b) { return {a, 0.0, 0.0, b}; }

    double det() const { return m00 * m11 - m01 * m10; }
    double trace() const { return m00 + m11; }

    Mat2 operator+(const Mat2& o) const { return {m00 + o.m00, m01 + o.m01, m10 + o.m10, m11 + o.m11}; }
    Mat2 operator*(double s) const { return {m00 * s, m01 * s, m10 * s, m11 * s}; }

    Vec2 mul(const Vec2& v) const { return {m00 * v.x + m01 * v.y, m10 * v.x + m11 * v.y}; }

    Mat2 inverse() const {
        const double d = det();
        return {m11 / d, -m01 / d, -m10 / d, m00 / d};
    }
};

// Eigenvalues of a symmetric 2x2, descending.
struct EigenSym2 {
    double lambda1 = 0.0, lambda2 = 0.0;
    Vec2 v1, v2;  // unit eigenvectors
};

inline EigenSym2 eigen_sym(const Mat2& m) {
    EigenSym2 e;
    const double half_tr = 0.5 * m.trace();
    const double half_diff = 0.5 * (m.m00 - m.m11);
    const double disc = std::sqrt(half_diff * half_diff + m.m01 * m.m01);
    e.lambda1 = half_tr + disc;
    e.lambda2 = half_tr - disc;
    if (std::abs(m.m01) > 1e-300) {
        Vec2 v{m.m01, e.lambda1 - m.m00};
        e.v1 = v / v.norm();
    } else {
        e.v1 = (m.m00 >= m.m11) ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
    }
    e.v2 = {-e.v1.y, e.v1.x};
    return e;
}

// Clamp eigenvalues from below and rebuild; keeps covariances invertible.
inline Mat2 floor_eigenvalues(const Mat2& m, double floor) {
    EigenSym2 e = eigen_sym(m);
    if (e.lambda1 >= floor && e.lambda2 >= floor) return m;
    const double l1 = std::max(e.lambda1, floor);
    const double l2 = std::max(e.lambda2, floor);
    const Vec2 a = e.v1, b = e.v2;
    return {l1 * a.x * a.x + l2 * b.x * b.x, l1 * a.x * a.y + l2 * b.x * b.y,
            l1 * a.x * a.y + l2 * b.x * b.y, l1 * a.y * a.y + l2 * b.y * b.y};
}

}  // namespace georing
