#include "blockpred/channel.hpp"

#include "blockpred/errors.hpp"

#include <algorithm>
#include <cmath>

namespace blockpred {

namespace {
constexpr int kArcTableResolution = 4096;
} // namespace

int polyline_segments_for(double arc_len) {
    // keeps the chord-sum shortfall below ~1e-6 for the lengths in use
    const int n = static_cast<int>(std::ceil(arc_len / 0.004));
    return std::clamp(n, 8, 64);
}

double rician_sample(RandomStream& rng, double amplitude, double sigma) {
    if (amplitude < 0.0 || sigma <= 0.0) {
        throw ConfigError("rician_sample: need amplitude >= 0 and sigma > 0");
    }
    const double in_phase = amplitude + sigma * rng.normal();
    const double quadrature = sigma * rng.normal();
    return std::hypot(in_phase, quadrature);
}

std::vector<Vec2> object_polyline(const BlockageObject& obj, std::int64_t slot,
                                  const ArcTable& table, double slot_seconds) {
    const double center =
        obj.initial_phase + obj.speed * static_cast<double>(slot) * slot_seconds;
    return arc_polyline(table, center, obj.arc_length, polyline_segments_for(obj.arc_length));
}

double attenuation_coefficient(const ScenarioParams& scenario, int device,
                               std::int64_t slot, const ArcTable& table) {
    const Vec2& dev = scenario.device_positions.at(static_cast<std::size_t>(device));
    double zeta = 1.0;
    for (const BlockageObject& obj : scenario.objects) {
        const auto poly = object_polyline(obj, slot, table, scenario.fading.slot_seconds);
        const double p = beam_block_fraction(scenario.bs_position, dev, scenario.beamwidth, poly);
        if (p > 0.0) {
            const double delta = std::pow(10.0, obj.attenuation_db / 20.0);
            zeta *= std::pow(delta, p);
        }
    }
    return zeta;
}

namespace {

// Conservative axis-aligned overlap test between a polyline's bounding box
// (padded by half the beamwidth) and the bs->device segment's box.  Cheap
// reject so the exact clipping only runs for nearby objects.
bool near_strip(const std::vector<Vec2>& poly, const Vec2& bs, const Vec2& dev,
                double half_width) {
    double minx = poly[0].x, maxx = poly[0].x, miny = poly[0].y, maxy = poly[0].y;
    for (const Vec2& p : poly) {
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
    }
    const double bminx = std::min(bs.x, dev.x) - half_width;
    const double bmaxx = std::max(bs.x, dev.x) + half_width;
    const double bminy = std::min(bs.y, dev.y) - half_width;
    const double bmaxy = std::max(bs.y, dev.y) + half_width;
    return maxx >= bminx && minx <= bmaxx && maxy >= bminy && miny <= bmaxy;
}

} // namespace

ChannelTrace simulate_traces(const ScenarioParams& scenario, int slots,
                             std::uint64_t seed) {
    if (slots < 1) {
        throw ConfigError("simulate_traces: slots must be >= 1");
    }
    const int devices = static_cast<int>(scenario.device_positions.size());
    if (devices < 1) {
        throw ConfigError("simulate_traces: scenario has no devices");
    }
    static const ArcTable table = build_arclength_table(kArcTableResolution);

    ChannelTrace trace;
    trace.devices = devices;
    trace.slots = slots;
    trace.scenario = scenario;
    trace.snr.resize(static_cast<std::size_t>(devices) * slots);
    trace.zeta.resize(static_cast<std::size_t>(devices) * slots);

    std::vector<RandomStream> streams;
    streams.reserve(static_cast<std::size_t>(devices));
    for (int k = 0; k < devices; ++k) {
        streams.emplace_back(derive_seed(seed, seed_tag::channel, static_cast<std::uint64_t>(k)));
    }

    const double avg_amplitude = scenario.fading.unblocked_amplitude;
    const double sigma = scenario.fading.diffuse_sigma;
    const double half_width = 0.5 * scenario.beamwidth;
    std::vector<double> deltas;
    deltas.reserve(scenario.objects.size());
    for (const BlockageObject& obj : scenario.objects) {
        deltas.push_back(std::pow(10.0, obj.attenuation_db / 20.0));
    }

    std::vector<std::vector<Vec2>> polys(scenario.objects.size());
    for (int t = 0; t < slots; ++t) {
        for (std::size_t m = 0; m < scenario.objects.size(); ++m) {
            polys[m] = object_polyline(scenario.objects[m], t, table,
                                       scenario.fading.slot_seconds);
        }
        for (int k = 0; k < devices; ++k) {
            const Vec2& dev = scenario.device_positions[static_cast<std::size_t>(k)];
            double zeta = 1.0;
            for (std::size_t m = 0; m < scenario.objects.size(); ++m) {
                if (!near_strip(polys[m], scenario.bs_position, dev, half_width)) {
                    continue;
                }
                const double p = beam_block_fraction(scenario.bs_position, dev,
                                                     scenario.beamwidth, polys[m]);
                if (p > 0.0) {
                    zeta *= std::pow(deltas[m], p);
                }
            }
            const double amp = zeta * avg_amplitude;
            const double magnitude = rician_sample(streams[static_cast<std::size_t>(k)], amp, sigma);
            const std::size_t idx = static_cast<std::size_t>(k) * slots + t;
            trace.zeta[idx] = static_cast<float>(zeta);
            trace.snr[idx] = static_cast<float>(magnitude * magnitude);
        }
    }
    return trace;
}

} // namespace blockpred
