#pragma once

#include "blockpred/geometry.hpp"
#include "blockpred/rng.hpp"
#include "blockpred/scenario.hpp"

#include <cstdint>
#include <vector>

namespace blockpred {

// Per-task instantaneous SNR and blockage-attenuation sequences. Arrays are
// stored as 32-bit floats, which is also the persisted precision, so labels
// recomputed from a saved file match the in-memory ones exactly.
struct ChannelTrace {
    int devices = 0;
    int slots = 0;
    std::vector<float> snr;  // K x T row-major, linear power
    std::vector<float> zeta; // K x T row-major, in (0,1]
    ScenarioParams scenario;

    float snr_at(int k, int t) const {
        return snr[static_cast<std::size_t>(k) * slots + t];
    }
    float zeta_at(int k, int t) const {
        return zeta[static_cast<std::size_t>(k) * slots + t];
    }
};

// |h| drawn as the magnitude of (A + n1) + i*n2 with n1, n2 ~ N(0, sigma^2).
double rician_sample(RandomStream& rng, double amplitude, double sigma);

// Polyline of the curve arc occupied by the object at the given slot; the
// arc is centered at loop fraction (initial_phase + speed * t * slot_seconds) mod 1.
std::vector<Vec2> object_polyline(const BlockageObject& obj, std::int64_t slot,
                                  const ArcTable& table, double slot_seconds);

// zeta_{k,t} = prod_m delta_m^{p_{k,m,t}} with delta_m the linear amplitude
// factor 10^(attenuation_db/20).
double attenuation_coefficient(const ScenarioParams& scenario, int device,
                               std::int64_t slot, const ArcTable& table);

// Deterministic in (scenario, slots, seed). Fading draws come from one
// derived stream per device so the result is independent of loop order.
ChannelTrace simulate_traces(const ScenarioParams& scenario, int slots,
                             std::uint64_t seed);

// Segment count used when discretizing object arcs.
int polyline_segments_for(double arc_len);

} // namespace blockpred
