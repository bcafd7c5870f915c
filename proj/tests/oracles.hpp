#pragma once

#include "blockpred/channel.hpp"
#include "blockpred/geometry.hpp"

#include <cstdint>
#include <functional>
#include <vector>

// Reference implementations kept deliberately independent of the library
// code paths they check: different algorithms, no shared helpers.
namespace oracle {

// Blocked fraction of the bs->device beam by casting `rays` stratified
// parallel rays across the beam width and testing each against every
// polyline segment.
double ray_cast_block_fraction(const blockpred::Vec2& bs, const blockpred::Vec2& device,
                               double beamwidth, const std::vector<blockpred::Vec2>& poly,
                               int rays);

// Loop length of the lemniscate by composite Simpson over a finite-difference
// speed (does not call lemniscate_velocity or the arc table).
double quadrature_loop_length();

// Arc length from parameter 0 to u, same quadrature.
double quadrature_arc_length(double u);

// O(T*tau) window scan over the raw SNR array.
std::vector<std::uint8_t> brute_force_labels(const blockpred::ChannelTrace& trace,
                                             int device, bool any_mode, int xi, int tau,
                                             double gamma0_db, int* valid_count);

// Central finite differences of f at x.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& x, double step);

} // namespace oracle
