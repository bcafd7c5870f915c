#pragma once

#include <vector>

namespace blockpred {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.x + b.x, a.y + b.y}; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
double norm(const Vec2& a);

// Point on the unit-half-width Bernoulli lemniscate (x^2+y^2)^2 = x^2 - y^2,
// parametrized as x = cos(u)/(1+sin^2 u), y = sin(u)cos(u)/(1+sin^2 u).
// u = 0 is the apex (1, 0); u = pi/2 the self-intersection at the origin.
Vec2 lemniscate_point(double u);

// dP/du of the parametrization above.
Vec2 lemniscate_velocity(double u);

// Monotone mapping between normalized loop fraction s in [0,1) and curve
// parameter u in [0,2pi). Objects move at constant loop-fraction speed, so
// positions along the curve go through this table.
class ArcTable {
  public:
    double total_length() const { return cumulative_.back(); }

    // s may be any real; it is wrapped into [0,1)
    double parameter_at_fraction(double s) const;
    Vec2 point_at_fraction(double s) const;

  private:
    friend ArcTable build_arclength_table(int resolution);
    std::vector<double> cumulative_; // arc length at u_i = i*du, size res+1
    double du_ = 0.0;
};

// resolution >= 64; per-cell Simpson quadrature of |dP/du|
ArcTable build_arclength_table(int resolution);

// Polyline of segment_count chords sampling the curve arc of length arc_len
// (curve-length units) centered at loop fraction center_fraction.
std::vector<Vec2> arc_polyline(const ArcTable& table, double center_fraction,
                               double arc_len, int segment_count);

// Fraction of the beam cross section covered by the polyline.  The beam is a
// strip of width `beamwidth` centered on the bs->device segment; occluders
// behind the device or behind the BS do not block.  Returns the measure of
// the union of cross-axis intervals covered by the clipped segments, divided
// by the beamwidth.
double beam_block_fraction(const Vec2& bs, const Vec2& device, double beamwidth,
                           const std::vector<Vec2>& poly);

} // namespace blockpred
