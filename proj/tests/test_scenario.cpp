#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "blockpred/errors.hpp"
#include "blockpred/scenario.hpp"

#include <cmath>
#include <set>

using namespace blockpred;

TEST_CASE("fading_from_targets solves the moment equations") {
    const auto f = fading_from_targets(0.0, 15.0, -20.0, 0.05);
    const double a2 = f.unblocked_amplitude * f.unblocked_amplitude;
    const double two_sigma2 = 2.0 * f.diffuse_sigma * f.diffuse_sigma;
    const double k_lin = std::pow(10.0, 1.5);
    CHECK(a2 + two_sigma2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a2 / two_sigma2 == doctest::Approx(k_lin).epsilon(1e-12));
    CHECK(a2 == doctest::Approx(k_lin / (1.0 + k_lin)).epsilon(1e-12));
    CHECK(f.snr_threshold_db == -20.0);
    CHECK(f.slot_seconds == 0.05);

    const auto g = fading_from_targets(6.0, 10.0, -15.0, 0.01);
    const double ga2 = g.unblocked_amplitude * g.unblocked_amplitude;
    const double gs2 = 2.0 * g.diffuse_sigma * g.diffuse_sigma;
    CHECK(ga2 + gs2 == doctest::Approx(std::pow(10.0, 0.6)).epsilon(1e-12));
    CHECK(ga2 / gs2 == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("sample_scenario is deterministic and respects the distribution") {
    ScenarioDistribution dist;
    const auto a = sample_scenario(dist, 42);
    const auto b = sample_scenario(dist, 42);
    REQUIRE(a.device_positions.size() == b.device_positions.size());
    for (std::size_t i = 0; i < a.device_positions.size(); ++i) {
        CHECK(a.device_positions[i].x == b.device_positions[i].x);
        CHECK(a.device_positions[i].y == b.device_positions[i].y);
    }
    REQUIRE(a.objects.size() == b.objects.size());
    for (std::size_t i = 0; i < a.objects.size(); ++i) {
        CHECK(a.objects[i].initial_phase == b.objects[i].initial_phase);
        CHECK(a.objects[i].speed == b.objects[i].speed);
        CHECK(a.objects[i].attenuation_db == b.objects[i].attenuation_db);
    }
    const auto c = sample_scenario(dist, 43);
    CHECK(a.device_positions[0].x != c.device_positions[0].x);

    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto s = sample_scenario(dist, seed);
        CHECK(static_cast<int>(s.device_positions.size()) == dist.devices);
        CHECK(s.objects.size() >= static_cast<std::size_t>(dist.objects_min));
        CHECK(s.objects.size() <= static_cast<std::size_t>(dist.objects_max));
        for (const Vec2& p : s.device_positions) {
            CHECK(p.x >= dist.area_min.x);
            CHECK(p.x <= dist.area_max.x);
            CHECK(p.y >= dist.area_min.y);
            CHECK(p.y <= dist.area_max.y);
        }
        for (const BlockageObject& o : s.objects) {
            CHECK(o.arc_length == dist.object_length_min); // degenerate range
            CHECK(o.speed >= dist.speed_min);
            CHECK(o.speed <= dist.speed_max);
            CHECK(o.initial_phase >= 0.0);
            CHECK(o.initial_phase < 1.0);
            CHECK(o.attenuation_db >= dist.attenuation_db_min);
            CHECK(o.attenuation_db <= dist.attenuation_db_max);
        }
        CHECK(s.beamwidth == dist.beamwidth);
        CHECK(s.bs_position.x == dist.bs_position.x);
        CHECK(s.rng_seed == seed);
    }
}

TEST_CASE("object count covers the whole configured range") {
    ScenarioDistribution dist;
    std::set<std::size_t> counts;
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        counts.insert(sample_scenario(dist, seed).objects.size());
    }
    CHECK(counts == std::set<std::size_t>{2, 3, 4, 5});
}

TEST_CASE("distribution validation") {
    ScenarioDistribution dist;
    CHECK_NOTHROW(dist.validate());
    auto bad = dist;
    bad.devices = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = dist;
    bad.objects_min = 6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = dist;
    bad.speed_min = 0.02;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = dist;
    bad.area_min.x = 2.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = dist;
    bad.beamwidth = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = dist;
    bad.objects_min = 0;
    bad.objects_max = 0;
    CHECK_NOTHROW(bad.validate()); // object-free cells are legal
}

TEST_CASE("scenario keys round-trip through apply") {
    ScenarioDistribution src;
    src.devices = 7;
    src.unblocked_snr_db = 3.5;
    src.k_factor_db = 12.0;
    src.beamwidth = 0.031;
    src.snr_threshold_db = -17.0;
    src.objects_min = 1;
    src.objects_max = 9;
    src.object_length_min = 0.04;
    src.object_length_max = 0.09;
    src.speed_min = 0.001;
    src.speed_max = 0.123;
    src.attenuation_db_min = -44.0;
    src.attenuation_db_max = -4.0;
    src.slot_ms = 12.5;
    src.bs_position = {-2.25, 0.125};
    src.area_min = {-3.0, -1.5};
    src.area_max = {3.0, 1.5};

    ScenarioDistribution dst;
    for (const auto& [key, value] : scenario_key_values(src)) {
        CHECK(apply_scenario_key(dst, key, value));
    }
    CHECK(scenario_key_values(dst) == scenario_key_values(src));

    CHECK_FALSE(apply_scenario_key(dst, "not_a_key", "1"));
    CHECK_THROWS_AS(apply_scenario_key(dst, "devices", "seven"), ConfigError);
    CHECK_THROWS_AS(apply_scenario_key(dst, "beamwidth", "0.02x"), ConfigError);
}

TEST_CASE("strict parsing helpers") {
    CHECK(parse_double("k", "0.25") == 0.25);
    CHECK(parse_double("k", "-1e-3") == -1e-3);
    CHECK_THROWS_AS(parse_double("k", ""), ConfigError);
    CHECK_THROWS_AS(parse_double("k", "1.5 apples"), ConfigError);
    CHECK_THROWS_AS(parse_double("k", "nan?"), ConfigError);
    CHECK(parse_int("k", "12") == 12);
    CHECK(parse_int("k", "-3") == -3);
    CHECK_THROWS_AS(parse_int("k", "2.5"), ConfigError);
    CHECK_THROWS_AS(parse_int("k", "0x10"), ConfigError);
    CHECK(parse_bool("k", "true"));
    CHECK(parse_bool("k", "1"));
    CHECK_FALSE(parse_bool("k", "false"));
    CHECK_FALSE(parse_bool("k", "0"));
    CHECK_THROWS_AS(parse_bool("k", "yes"), ConfigError);
}

TEST_CASE("format_double survives a parse round trip") {
    for (double v : {0.0, 0.025, 1.0 / 3.0, -30.0, 0.05, 1e-17, 5.244115108584239,
                     -0.123456789012345, 1e300}) {
        const std::string s = format_double(v);
        CHECK(parse_double("k", s) == v);
    }
}
