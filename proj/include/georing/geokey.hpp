// Locality-preserving key construction on a modular ring.
//
// Points in a planar square region are quantized to an equal-distance grid,
// then the grid cell is projected to one dimension with a Z-order (Morton)
// interleave. Coarser precisions are bit-prefixes of finer ones, so spatial
// proximity survives as shared key prefixes. Also hosts RTT multilateration
// for nodes that cannot (or will not) report their own position.

#pragma once

#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "georing/errors.hpp"
#include "georing/geom.hpp"

namespace georing::geokey {

using GeoPoint = Vec2;

struct GridCode {
    int level = 0;         // precision; cells per axis = 2^level
    uint32_t cell_x = 0;
    uint32_t cell_y = 0;

    // Alphanumeric rendering, e.g. "L3:5-2".
    std::string text() const {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "L%d:%u-%u", level, cell_x, cell_y);
        return buf;
    }

    static GridCode parse(const std::string& s) {
        GridCode g;
        unsigned lx = 0, ly = 0;
        if (std::sscanf(s.c_str(), "L%d:%u-%u", &g.level, &lx, &ly) != 3)
            throw ConfigError("bad grid code '" + s + "'");
        g.cell_x = lx;
        g.cell_y = ly;
        if (g.level < 0 || g.level > 32 ||
            (g.level < 32 && (g.cell_x >= (1u << g.level) || g.cell_y >= (1u << g.level))))
            throw ConfigError("grid code out of bounds '" + s + "'");
        return g;
    }

    bool operator==(const GridCode& o) const {
        return level == o.level && cell_x == o.cell_x && cell_y == o.cell_y;
    }
};

struct RingKey {
    uint64_t value = 0;
    int bits = 32;  // m, even

    bool operator==(const RingKey& o) const { return value == o.value && bits == o.bits; }
    bool operator!=(const RingKey& o) const { return !(*this == o); }

    std::string hex() const {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%0*llx", bits / 4, static_cast<unsigned long long>(value));
        return buf;
    }

    static RingKey from_hex(const std::string& s, int bits) {
        RingKey k;
        k.bits = bits;
        k.value = std::strtoull(s.c_str(), nullptr, 16);
        return k;
    }
};

inline uint64_t ring_mask(int bits) {
    return bits >= 64 ? ~0ull : ((1ull << bits) - 1ull);
}

inline uint64_t ring_span_half(int bits) { return 1ull << (bits - 1); }

struct AnchorObservation {
    GeoPoint anchor;
    double rtt = 0.0;  // two-way, time units
};

struct PropagationModel {
    double velocity = 1.0;  // meters per time unit
};

// --- grid / key projection ---------------------------------------------

inline GridCode encode_grid(const GeoPoint& p, int level, double side) {
    if (!(p.x >= 0.0 && p.x < side && p.y >= 0.0 && p.y < side))
        throw OutOfRegion();
    if (level < 0 || level > 32) throw ConfigError("grid level out of range");
    GridCode g;
    g.level = level;
    const double cells = static_cast<double>(1ull << level);
    const uint64_t max_cell = (1ull << level) - 1;
    g.cell_x = static_cast<uint32_t>(std::min<uint64_t>(static_cast<uint64_t>(p.x * cells / side), max_cell));
    g.cell_y = static_cast<uint32_t>(std::min<uint64_t>(static_cast<uint64_t>(p.y * cells / side), max_cell));
    return g;
}

// Morton interleave: x bits land on even positions (bit 0 = x LSB), y on odd.
// The 2*level significant bits are left-aligned into the m-bit key so that a
// coarse code is a prefix of any finer code of the same point.
inline RingKey interleave(uint32_t cell_x, uint32_t cell_y, int level, int m_bits) {
    if (m_bits <= 0 || m_bits > 64 || (m_bits & 1)) throw ConfigError("key width must be even and <= 64");
    if (2 * level > m_bits) throw ConfigError("grid level exceeds key width");
    if (level < 32 && (cell_x >= (1u << level) || cell_y >= (1u << level)))
        throw OutOfRegion("cell outside level bounds");
    uint64_t v = 0;
    for (int b = 0; b < level; ++b) {
        v |= static_cast<uint64_t>((cell_x >> b) & 1u) << (2 * b);
        v |= static_cast<uint64_t>((cell_y >> b) & 1u) << (2 * b + 1);
    }
    const int shift = m_bits - 2 * level;
    RingKey k;
    k.bits = m_bits;
    k.value = (shift >= 64) ? 0 : (v << shift) & ring_mask(m_bits);
    return k;
}

inline GridCode deinterleave(const RingKey& key, int level) {
    const int shift = key.bits - 2 * level;
    const uint64_t v = (shift >= 64) ? 0 : key.value >> shift;
    GridCode g;
    g.level = level;
    for (int b = 0; b < level; ++b) {
        g.cell_x |= static_cast<uint32_t>((v >> (2 * b)) & 1ull) << b;
        g.cell_y |= static_cast<uint32_t>((v >> (2 * b + 1)) & 1ull) << b;
    }
    return g;
}

inline RingKey point_to_key(const GeoPoint& p, double side, int m_bits = 32) {
    if (m_bits & 1) throw ConfigError("key width must be even");
    const GridCode g = encode_grid(p, m_bits / 2, side);
    return interleave(g.cell_x, g.cell_y, g.level, m_bits);
}

// Center of the grid cell addressed by the full key; inverse-ish of point_to_key.
inline GeoPoint key_to_cell_center(const RingKey& key, double side) {
    const int level = key.bits / 2;
    const GridCode g = deinterleave(key, level);
    const double cell = side / static_cast<double>(1ull << level);
    return {(g.cell_x + 0.5) * cell, (g.cell_y + 0.5) * cell};
}

inline uint64_t clockwise_distance(const RingKey& from, const RingKey& to) {
    if (from.bits != to.bits) throw KeyWidthMismatch();
    return (to.value - from.value) & ring_mask(from.bits);
}

inline uint64_t ring_distance(const RingKey& a, const RingKey& b) {
    if (a.bits != b.bits) throw KeyWidthMismatch();
    const uint64_t cw = (b.value - a.value) & ring_mask(a.bits);
    const uint64_t ccw = (a.value - b.value) & ring_mask(a.bits);
    return std::min(cw, ccw);
}

// true iff x lies on the clockwise arc (from, to]
inline bool on_arc(const RingKey& from, const RingKey& to, const RingKey& x) {
    const uint64_t span = clockwise_distance(from, to);
    const uint64_t off = clockwise_distance(from, x);
    return off != 0 && off <= span;
}

// --- RTT multilateration -------------------------------------------------

struct LocationEstimate {
    GeoPoint point;
    double rms_residual = 0.0;
};

namespace detail {

inline std::vector<double> range_residuals(const std::vector<AnchorObservation>& obs,
                                           const GeoPoint& p, double velocity) {
    std::vector<double> r(obs.size());
    for (size_t i = 0; i < obs.size(); ++i) {
        const double d = velocity * obs[i].rtt / 2.0;
        r[i] = distance(p, obs[i].anchor) - d;
    }
    return r;
}

inline double rms(const std::vector<double>& r, const std::vector<size_t>& idx) {
    if (idx.empty()) return 0.0;
    double s = 0.0;
    for (size_t i : idx) s += r[i] * r[i];
    return std::sqrt(s / static_cast<double>(idx.size()));
}

}  // namespace detail

// Least-squares multilateration: linearize against the first anchor, solve the
// 2-unknown normal equations, then refine with bounded Gauss-Newton.
inline LocationEstimate estimate_location(const std::vector<AnchorObservation>& obs,
                                          const PropagationModel& model) {
    if (model.velocity <= 0.0) throw ConfigError("propagation velocity must be positive");
    for (const auto& o : obs)
        if (o.rtt < 0.0) throw InvalidObservation();
    if (obs.size() < 3) throw InsufficientAnchors();

    const size_t n = obs.size();
    std::vector<double> d(n);
    double scale = 1.0;
    for (size_t i = 0; i < n; ++i) {
        d[i] = model.velocity * obs[i].rtt / 2.0;
        scale = std::max({scale, std::abs(obs[i].anchor.x), std::abs(obs[i].anchor.y), d[i]});
    }

    // normal equations for rows 2(ai - a0) . p = d0^2 - di^2 + |ai|^2 - |a0|^2
    const GeoPoint a0 = obs[0].anchor;
    double sxx = 0, sxy = 0, syy = 0, bx = 0, by = 0;
    for (size_t i = 1; i < n; ++i) {
        const double ax = 2.0 * (obs[i].anchor.x - a0.x);
        const double ay = 2.0 * (obs[i].anchor.y - a0.y);
        const double rhs = d[0] * d[0] - d[i] * d[i] + obs[i].anchor.norm2() - a0.norm2();
        sxx += ax * ax;
        sxy += ax * ay;
        syy += ay * ay;
        bx += ax * rhs;
        by += ay * rhs;
    }
    const double det = sxx * syy - sxy * sxy;
    if (std::abs(det) <= 1e-12 * scale * scale * scale * scale) throw DegenerateGeometry();
    GeoPoint p{(syy * bx - sxy * by) / det, (sxx * by - sxy * bx) / det};

    // Gauss-Newton on the range residuals.
    for (int it = 0; it < 20; ++it) {
        double jxx = 0, jxy = 0, jyy = 0, gx = 0, gy = 0;
        for (size_t i = 0; i < n; ++i) {
            const Vec2 diff = p - obs[i].anchor;
            const double dist = std::max(diff.norm(), 1e-12 * scale);
            const double ri = dist - d[i];
            const double jx = diff.x / dist, jy = diff.y / dist;
            jxx += jx * jx;
            jxy += jx * jy;
            jyy += jy * jy;
            gx += jx * ri;
            gy += jy * ri;
        }
        const double jdet = jxx * jyy - jxy * jxy;
        if (std::abs(jdet) <= 1e-14) break;
        const double sx = (jyy * gx - jxy * gy) / jdet;
        const double sy = (jxx * gy - jxy * gx) / jdet;
        p.x -= sx;
        p.y -= sy;
        if (std::sqrt(sx * sx + sy * sy) < 1e-9) break;
    }

    LocationEstimate est;
    est.point = p;
    const auto r = detail::range_residuals(obs, p, model.velocity);
    double s = 0.0;
    for (double ri : r) s += ri * ri;
    est.rms_residual = std::sqrt(s / static_cast<double>(n));
    return est;
}

// Flag anchors whose range residual stands out against the rest. Each
// candidate is tested leave-one-out: the remaining observations are
// re-estimated and the candidate is flagged when its residual against that
// estimate exceeds tau times the RMS of the survivors. A corrupted anchor
// cannot mask itself by dragging the fit, since it is excluded from the fit
// it is judged against.
inline std::set<size_t> flag_outliers(const std::vector<AnchorObservation>& obs,
                                      const LocationEstimate& estimate,
                                      const PropagationModel& model, double tau) {
    const size_t n = obs.size();
    double mean_range = 0.0;
    for (const auto& o : obs) mean_range += model.velocity * o.rtt / 2.0;
    mean_range /= std::max<size_t>(n, 1);
    const double floor = 1e-9 * std::max(1.0, mean_range);

    std::set<size_t> flags;
    // consistent observations need no leave-one-out scan
    {
        const auto r0 = detail::range_residuals(obs, estimate.point, model.velocity);
        bool clean = true;
        for (double r : r0)
            if (std::abs(r) > floor) clean = false;
        if (clean) return flags;
    }
    for (;;) {
        std::vector<size_t> unflagged;
        for (size_t i = 0; i < n; ++i)
            if (!flags.count(i)) unflagged.push_back(i);
        if (unflagged.size() <= 3) break;

        // the outlier is the observation whose exclusion best explains the
        // rest: smallest leave-one-out RMS wins
        size_t best = n;
        double best_rms = std::numeric_limits<double>::max();
        double best_resid = 0.0;
        for (size_t cand : unflagged) {
            std::vector<AnchorObservation> rest;
            std::vector<size_t> rest_idx;
            for (size_t i : unflagged)
                if (i != cand) {
                    rest.push_back(obs[i]);
                    rest_idx.push_back(i);
                }
            LocationEstimate re;
            try {
                re = estimate_location(rest, model);
            } catch (const Error&) {
                continue;
            }
            const auto rr = detail::range_residuals(obs, re.point, model.velocity);
            const double rms_rest = detail::rms(rr, rest_idx);
            if (rms_rest < best_rms) {
                best_rms = rms_rest;
                best = cand;
                best_resid = std::abs(rr[cand]);
            }
        }
        if (best == n) break;  // every exclusion left a degenerate geometry
        if (best_resid > tau * best_rms && best_resid > floor)
            flags.insert(best);
        else
            break;
    }
    return flags;
}

}  // namespace georing::geokey
