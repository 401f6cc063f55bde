#include <catch2/catch_amalgamated.hpp>

#include "skyfuse/core.hpp"

using namespace skyfuse;

TEST_CASE("class and sensor names round-trip through their parsers") {
    for (auto c : {TargetClass::Airplane, TargetClass::Bird, TargetClass::Drone,
                   TargetClass::Helicopter, TargetClass::Background, TargetClass::NoData})
        CHECK(parse_target_class(to_string(c)) == c);
    for (auto s : {SensorId::IRcam, SensorId::Vcam, SensorId::Audio, SensorId::ADSB,
                   SensorId::Fcam})
        CHECK(parse_sensor_id(to_string(s)) == s);
    CHECK_THROWS_AS(parse_target_class("Dinosaur"), SchemaError);
    CHECK_THROWS_AS(parse_sensor_id("Lidar"), SchemaError);
}

TEST_CASE("sensor label vocabularies") {
    SECTION("cameras report the four visible classes and nothing else") {
        for (auto cam : {SensorId::IRcam, SensorId::Vcam}) {
            CHECK(sensor_may_emit(cam, TargetClass::Airplane));
            CHECK(sensor_may_emit(cam, TargetClass::Bird));
            CHECK(sensor_may_emit(cam, TargetClass::Drone));
            CHECK(sensor_may_emit(cam, TargetClass::Helicopter));
            CHECK_FALSE(sensor_may_emit(cam, TargetClass::Background));
            CHECK_FALSE(sensor_may_emit(cam, TargetClass::NoData));
        }
    }
    SECTION("audio knows the trained sounds plus background") {
        CHECK(sensor_may_emit(SensorId::Audio, TargetClass::Drone));
        CHECK(sensor_may_emit(SensorId::Audio, TargetClass::Helicopter));
        CHECK(sensor_may_emit(SensorId::Audio, TargetClass::Background));
        CHECK_FALSE(sensor_may_emit(SensorId::Audio, TargetClass::Airplane));
        CHECK_FALSE(sensor_may_emit(SensorId::Audio, TargetClass::Bird));
        CHECK_FALSE(sensor_may_emit(SensorId::Audio, TargetClass::NoData));
    }
    SECTION("transponder-derived classes plus the no-category marker") {
        CHECK(sensor_may_emit(SensorId::ADSB, TargetClass::Airplane));
        CHECK(sensor_may_emit(SensorId::ADSB, TargetClass::Drone));
        CHECK(sensor_may_emit(SensorId::ADSB, TargetClass::Helicopter));
        CHECK(sensor_may_emit(SensorId::ADSB, TargetClass::NoData));
        CHECK_FALSE(sensor_may_emit(SensorId::ADSB, TargetClass::Bird));
        CHECK_FALSE(sensor_may_emit(SensorId::ADSB, TargetClass::Background));
    }
    SECTION("the steering camera casts no class vote") {
        for (auto c : {TargetClass::Airplane, TargetClass::Bird, TargetClass::Drone,
                       TargetClass::Helicopter, TargetClass::Background, TargetClass::NoData})
            CHECK_FALSE(sensor_may_emit(SensorId::Fcam, c));
    }
}

TEST_CASE("fused class columns") {
    CHECK(fused_column(TargetClass::Airplane) == 0);
    CHECK(fused_column(TargetClass::Bird) == 1);
    CHECK(fused_column(TargetClass::Drone) == 2);
    CHECK(fused_column(TargetClass::Helicopter) == 3);
    CHECK_FALSE(fused_column(TargetClass::Background).has_value());
    CHECK_FALSE(fused_column(TargetClass::NoData).has_value());
    for (int c = 0; c < kNumFusedClasses; ++c) CHECK(fused_column(fused_class_at(c)) == c);
    CHECK_THROWS_AS(fused_class_at(4), InvariantError);
    CHECK_THROWS_AS(fused_class_at(-1), InvariantError);
}

TEST_CASE("intersection over union") {
    SECTION("identical boxes overlap fully") {
        CHECK(iou({10, 20, 5, 8}, {10, 20, 5, 8}) == Catch::Approx(1.0));
    }
    SECTION("disjoint boxes overlap not at all") {
        CHECK(iou({0, 0, 4, 4}, {10, 10, 4, 4}) == 0.0);
        CHECK(iou({0, 0, 4, 4}, {4, 0, 4, 4}) == 0.0);  // edge contact has zero area
    }
    SECTION("hand-computed partial overlap") {
        // 2x2 intersection, union 16 + 16 - 4 = 28.
        CHECK(iou({0, 0, 4, 4}, {2, 2, 4, 4}) == Catch::Approx(4.0 / 28.0));
        // Containment: 4 / 16.
        CHECK(iou({0, 0, 4, 4}, {1, 1, 2, 2}) == Catch::Approx(0.25));
    }
    SECTION("degenerate boxes are rejected") {
        CHECK_THROWS_AS(iou({0, 0, 0, 4}, {0, 0, 4, 4}), std::invalid_argument);
        CHECK_THROWS_AS(iou({0, 0, 4, 4}, {0, 0, 4, -1}), std::invalid_argument);
    }
    SECTION("symmetry") {
        const BBox a{1.5, 2.5, 3.0, 7.0};
        const BBox b{2.0, 4.0, 6.0, 2.0};
        CHECK(iou(a, b) == iou(b, a));
    }
}

TEST_CASE("detection validation") {
    Detection d;
    d.sensor = SensorId::IRcam;
    d.cls = TargetClass::Drone;
    d.confidence = 0.8;
    d.bbox = BBox{10, 10, 4, 4};
    d.t = 1200;
    CHECK_NOTHROW(validate(d));

    SECTION("class outside the sensor vocabulary") {
        d.cls = TargetClass::Background;
        CHECK_THROWS_AS(validate(d), SchemaError);
    }
    SECTION("confidence outside the unit interval") {
        d.confidence = 1.2;
        CHECK_THROWS_AS(validate(d), SchemaError);
        d.confidence = -0.1;
        CHECK_THROWS_AS(validate(d), SchemaError);
    }
    SECTION("empty bbox") {
        d.bbox = BBox{10, 10, 0, 4};
        CHECK_THROWS_AS(validate(d), SchemaError);
    }
}

TEST_CASE("detection JSON round trip") {
    Detection d;
    d.sensor = SensorId::Vcam;
    d.cls = TargetClass::Helicopter;
    d.confidence = 0.625;
    d.bbox = BBox{12.5, 30.25, 6.0, 5.5};
    d.t = 98765;

    const Detection back = detection_from_json(to_json(d));
    CHECK(back.sensor == d.sensor);
    CHECK(back.cls == d.cls);
    CHECK(back.confidence == d.confidence);
    CHECK(back.t == d.t);
    REQUIRE(back.bbox.has_value());
    CHECK(back.bbox->x == d.bbox->x);
    CHECK(back.bbox->y == d.bbox->y);
    CHECK(back.bbox->w == d.bbox->w);
    CHECK(back.bbox->h == d.bbox->h);

    SECTION("bbox stays optional") {
        Detection audio;
        audio.sensor = SensorId::Audio;
        audio.cls = TargetClass::Background;
        audio.confidence = 0.9;
        audio.t = 50;
        const Detection b = detection_from_json(to_json(audio));
        CHECK_FALSE(b.bbox.has_value());
    }
    SECTION("schema violations surface as SchemaError") {
        nlohmann::json j = to_json(d);
        j.erase("confidence");
        CHECK_THROWS_AS(detection_from_json(j), SchemaError);
        nlohmann::json bad = to_json(d);
        bad["class"] = "Background";  // camera may not say Background
        CHECK_THROWS_AS(detection_from_json(bad), SchemaError);
    }
}
