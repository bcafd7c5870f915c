#include "blockpred/geometry.hpp"

#include "blockpred/errors.hpp"

#include <algorithm>
#include <cmath>

namespace blockpred {

namespace {
constexpr double kTwoPi = 2.0 * M_PI;
} // namespace

double norm(const Vec2& a) { return std::hypot(a.x, a.y); }

Vec2 lemniscate_point(double u) {
    const double s = std::sin(u);
    const double c = std::cos(u);
    const double d = 1.0 + s * s;
    return {c / d, s * c / d};
}

Vec2 lemniscate_velocity(double u) {
    const double s = std::sin(u);
    const double c = std::cos(u);
    const double d = 1.0 + s * s;
    const double dd = 2.0 * s * c; // d'(u)
    const double dx = (-s * d - c * dd) / (d * d);
    // y = sin(2u)/2 / d
    const double c2 = std::cos(2.0 * u);
    const double s2 = std::sin(2.0 * u);
    const double dy = (c2 * d - 0.5 * s2 * dd) / (d * d);
    return {dx, dy};
}

ArcTable build_arclength_table(int resolution) {
    if (resolution < 64) {
        throw ConfigError("arc table resolution must be >= 64");
    }
    ArcTable table;
    table.du_ = kTwoPi / resolution;
    table.cumulative_.resize(static_cast<std::size_t>(resolution) + 1);
    table.cumulative_[0] = 0.0;
    const auto speed = [](double u) { return norm(lemniscate_velocity(u)); };
    for (int i = 0; i < resolution; ++i) {
        const double a = i * table.du_;
        const double b = a + table.du_;
        const double mid = 0.5 * (a + b);
        const double cell = (table.du_ / 6.0) * (speed(a) + 4.0 * speed(mid) + speed(b));
        table.cumulative_[static_cast<std::size_t>(i) + 1] =
            table.cumulative_[static_cast<std::size_t>(i)] + cell;
    }
    return table;
}

double ArcTable::parameter_at_fraction(double s) const {
    double frac = s - std::floor(s);
    const double target = frac * total_length();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    std::size_t hi = static_cast<std::size_t>(it - cumulative_.begin());
    if (hi == 0) {
        hi = 1;
    }
    if (hi >= cumulative_.size()) {
        hi = cumulative_.size() - 1;
    }
    const std::size_t lo = hi - 1;
    const double span = cumulative_[hi] - cumulative_[lo];
    const double t = span > 0.0 ? (target - cumulative_[lo]) / span : 0.0;
    return (static_cast<double>(lo) + t) * du_;
}

Vec2 ArcTable::point_at_fraction(double s) const {
    return lemniscate_point(parameter_at_fraction(s));
}

std::vector<Vec2> arc_polyline(const ArcTable& table, double center_fraction,
                               double arc_len, int segment_count) {
    if (arc_len <= 0.0) {
        throw ConfigError("arc_polyline: arc length must be > 0");
    }
    if (segment_count < 1) {
        segment_count = 1;
    }
    const double span = arc_len / table.total_length();
    std::vector<Vec2> poly;
    poly.reserve(static_cast<std::size_t>(segment_count) + 1);
    for (int i = 0; i <= segment_count; ++i) {
        const double f =
            center_fraction + span * (static_cast<double>(i) / segment_count - 0.5);
        poly.push_back(table.point_at_fraction(f));
    }
    return poly;
}

namespace {

// Shrink [s0,s1] to the region where a + s*b >= 0. Returns false when empty.
bool clip_halfline(double a, double b, double& s0, double& s1) {
    if (b == 0.0) {
        return a >= 0.0;
    }
    const double s = -a / b;
    if (b > 0.0) {
        s0 = std::max(s0, s);
    } else {
        s1 = std::min(s1, s);
    }
    return s0 <= s1;
}

} // namespace

double beam_block_fraction(const Vec2& bs, const Vec2& device, double beamwidth,
                           const std::vector<Vec2>& poly) {
    if (beamwidth <= 0.0) {
        throw ConfigError("beam_block_fraction: beamwidth must be > 0");
    }
    const Vec2 axis = device - bs;
    const double dist = norm(axis);
    if (dist == 0.0) {
        throw ConfigError("beam_block_fraction: bs and device coincide");
    }
    const Vec2 ahat{axis.x / dist, axis.y / dist};
    const Vec2 nhat{-ahat.y, ahat.x};
    const double half = 0.5 * beamwidth;

    std::vector<std::pair<double, double>> covered;
    covered.reserve(poly.size());
    for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
        const Vec2 p = poly[i] - bs;
        const Vec2 q = poly[i + 1] - bs;
        const double pa = dot(p, ahat);
        const double pc = dot(p, nhat);
        const double qa = dot(q, ahat);
        const double qc = dot(q, nhat);
        // point(s) = p + s*(q-p); clip s to the strip between BS and device
        double s0 = 0.0;
        double s1 = 1.0;
        if (!clip_halfline(pa, qa - pa, s0, s1)) continue;          // axial >= 0
        if (!clip_halfline(dist - pa, pa - qa, s0, s1)) continue;   // axial <= dist
        if (!clip_halfline(pc + half, qc - pc, s0, s1)) continue;   // cross >= -half
        if (!clip_halfline(half - pc, pc - qc, s0, s1)) continue;   // cross <= half
        const double c0 = pc + s0 * (qc - pc);
        const double c1 = pc + s1 * (qc - pc);
        covered.emplace_back(std::min(c0, c1), std::max(c0, c1));
    }
    if (covered.empty()) {
        return 0.0;
    }
    std::sort(covered.begin(), covered.end());
    double total = 0.0;
    double lo = covered.front().first;
    double hi = covered.front().second;
    for (std::size_t i = 1; i < covered.size(); ++i) {
        if (covered[i].first > hi) {
            total += hi - lo;
            lo = covered[i].first;
            hi = covered[i].second;
        } else {
            hi = std::max(hi, covered[i].second);
        }
    }
    total += hi - lo;
    const double p = total / beamwidth;
    return std::clamp(p, 0.0, 1.0);
}

} // namespace blockpred
