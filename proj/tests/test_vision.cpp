#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "skyfuse/rng.hpp"
#include "skyfuse/vision.hpp"

using namespace skyfuse;

namespace {

GrayImage noisy_background(RngStream& rng, int w, int h, double level, double jitter) {
    GrayImage img(w, h);
    for (double& v : img.px) v = std::clamp(level + rng.uniform(-jitter, jitter), 0.0, 1.0);
    return img;
}

int count_set(const BinaryImage& m) {
    int n = 0;
    for (auto v : m.px) n += v;
    return n;
}

}  // namespace

TEST_CASE("a static scene produces no foreground once trained") {
    const int w = 64, h = 48;
    GmmConfig cfg;
    GmmModel model(w, h, cfg);
    RngStream rng(99);
    const GrayImage base = noisy_background(rng, w, h, 0.4, 0.0);
    for (int f = 0; f < cfg.training_frames; ++f) {
        const BinaryImage mask = model.apply(base);
        CHECK(count_set(mask) == 0);  // suppressed during training
    }
    for (int f = 0; f < 30; ++f) {
        const BinaryImage mask = model.apply(base);
        CHECK(count_set(mask) == 0);
    }
    CHECK(model.frames_seen() == cfg.training_frames + 30);
}

TEST_CASE("an inserted square is recovered with high pixel F1") {
    const int w = 64, h = 48;
    GmmModel model(w, h);
    RngStream rng(7);
    for (int f = 0; f < 12; ++f) model.apply(noisy_background(rng, w, h, 0.4, 0.02));

    GrayImage frame = noisy_background(rng, w, h, 0.4, 0.02);
    const int ox = 20, oy = 15, side = 10;
    for (int y = oy; y < oy + side; ++y)
        for (int x = ox; x < ox + side; ++x) frame.at(x, y) = 0.95;

    const BinaryImage mask = morph_open(model.apply(frame));
    int tp = 0, fp = 0, fn = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool truth = x >= ox && x < ox + side && y >= oy && y < oy + side;
            const bool pred = mask.at(x, y) != 0;
            if (truth && pred) ++tp;
            else if (pred) ++fp;
            else if (truth) ++fn;
        }
    }
    const double f1 = 2.0 * tp / (2.0 * tp + fp + fn);
    CHECK(f1 >= 0.9);
}

TEST_CASE("mixture bookkeeping") {
    GmmModel model(4, 4);
    RngStream rng(3);
    for (int f = 0; f < 25; ++f) model.apply(noisy_background(rng, 4, 4, 0.5, 0.05));

    SECTION("weights stay normalized") {
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                CHECK(model.weight_sum(x, y) == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("the dominant mode sits on the background intensity") {
        int best = 0;
        for (int k = 1; k < model.config().num_modes; ++k)
            if (model.mode_weight(1, 1, k) > model.mode_weight(1, 1, best)) best = k;
        CHECK(model.mode_mean(1, 1, best) == Catch::Approx(0.5).margin(0.05));
    }
    SECTION("variance never collapses below the floor") {
        GmmModel flat(2, 2);
        const GrayImage constant(2, 2, 0.3);
        for (int f = 0; f < 400; ++f) flat.apply(constant);
        for (int k = 0; k < flat.config().num_modes; ++k)
            CHECK(flat.mode_variance(0, 0, k) >= 1e-6);
        // And a constant pixel must still match its own mode afterwards.
        const BinaryImage mask = flat.apply(constant);
        CHECK(count_set(mask) == 0);
    }
    SECTION("frame size changes are rejected") {
        CHECK_THROWS_AS(model.apply(GrayImage(5, 4)), std::invalid_argument);
    }
}

TEST_CASE("a step change in the scene is absorbed after repeated exposure") {
    GmmModel model(2, 2);
    const GrayImage dark(2, 2, 0.2);
    const GrayImage bright(2, 2, 0.8);
    for (int f = 0; f < 15; ++f) model.apply(dark);
    CHECK(count_set(model.apply(bright)) == 4);  // novel intensity flags everywhere
    int flagged = 4;
    for (int f = 0; f < 200 && flagged > 0; ++f) flagged = count_set(model.apply(bright));
    CHECK(flagged == 0);  // the new level became background
}

TEST_CASE("model construction rejects bad parameters") {
    CHECK_THROWS_AS(GmmModel(0, 4), std::invalid_argument);
    GmmConfig bad_rate;
    bad_rate.learning_rate = 1.0;
    CHECK_THROWS_AS(GmmModel(4, 4, bad_rate), std::invalid_argument);
    GmmConfig bad_modes;
    bad_modes.num_modes = 0;
    CHECK_THROWS_AS(GmmModel(4, 4, bad_modes), std::invalid_argument);
}

TEST_CASE("opening removes speckle but keeps solid regions") {
    BinaryImage m(20, 20);
    // Lone pixels and a thin line must vanish.
    m.at(2, 2) = 1;
    m.at(10, 3) = 1;
    for (int x = 5; x < 15; ++x) m.at(x, 10) = 1;
    // A solid 4x4 block must survive exactly.
    for (int y = 14; y < 18; ++y)
        for (int x = 4; x < 8; ++x) m.at(x, y) = 1;

    const BinaryImage opened = morph_open(m);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            const bool in_block = x >= 4 && x < 8 && y >= 14 && y < 18;
            CHECK(int(opened.at(x, y)) == int(in_block));
        }
}

TEST_CASE("opening a solid square returns it unchanged") {
    BinaryImage m(16, 16);
    for (int y = 3; y < 13; ++y)
        for (int x = 3; x < 13; ++x) m.at(x, y) = 1;
    const BinaryImage opened = morph_open(m);
    CHECK(opened.px == m.px);
}

TEST_CASE("blob extraction") {
    SECTION("centroid, bbox and area of a rectangle") {
        BinaryImage m(20, 12);
        for (int y = 2; y < 6; ++y)
            for (int x = 3; x < 9; ++x) m.at(x, y) = 1;
        const auto blobs = blob_analysis(m);
        REQUIRE(blobs.size() == 1);
        CHECK(blobs[0].area == 24);
        CHECK(blobs[0].cx == Catch::Approx(5.5));
        CHECK(blobs[0].cy == Catch::Approx(3.5));
        CHECK(blobs[0].bbox.x == Catch::Approx(3.0));
        CHECK(blobs[0].bbox.y == Catch::Approx(2.0));
        CHECK(blobs[0].bbox.w == Catch::Approx(6.0));
        CHECK(blobs[0].bbox.h == Catch::Approx(4.0));
    }
    SECTION("diagonal neighbours join into one component") {
        BinaryImage m(6, 6);
        m.at(1, 1) = 1;
        m.at(2, 2) = 1;
        m.at(3, 3) = 1;
        const auto blobs = blob_analysis(m);
        REQUIRE(blobs.size() == 1);
        CHECK(blobs[0].area == 3);
    }
    SECTION("separated components come out in scan order") {
        BinaryImage m(10, 10);
        m.at(7, 1) = 1;  // first row reached first
        m.at(1, 5) = 1;
        const auto blobs = blob_analysis(m);
        REQUIRE(blobs.size() == 2);
        CHECK(blobs[0].cy == Catch::Approx(1.0));
        CHECK(blobs[1].cy == Catch::Approx(5.0));
    }
    SECTION("an oversized component is dropped as scenery") {
        BinaryImage m(40, 40, 1);  // 1600 px, over the default cap
        CHECK(blob_analysis(m).empty());
        CHECK(blob_analysis(m, 1600).size() == 1);
        CHECK_THROWS_AS(blob_analysis(m, 0), std::invalid_argument);
    }
    SECTION("empty mask yields no blobs") {
        CHECK(blob_analysis(BinaryImage(8, 8)).empty());
    }
}

TEST_CASE("flat field correction levels a shaded image") {
    const int w = 60, h = 40;
    GrayImage img(w, h);
    // Horizontal shading ramp: dark left, bright right.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.at(x, y) = 0.2 + 0.5 * x / (w - 1);

    const GrayImage flat = flat_field_correct(img, 10.0);
    double lo = 1.0, hi = 0.0;
    for (int y = 10; y < h - 10; ++y)
        for (int x = 10; x < w - 10; ++x) {
            lo = std::min(lo, flat.at(x, y));
            hi = std::max(hi, flat.at(x, y));
        }
    const double in_spread = img.at(w - 11, 0) - img.at(10, 0);
    CHECK(hi - lo < 0.5 * in_spread);
    CHECK_THROWS_AS(flat_field_correct(GrayImage(), 10.0), std::invalid_argument);
    CHECK_THROWS_AS(flat_field_correct(img, 0.0), std::invalid_argument);
}

TEST_CASE("contrast stretch maps the percentile range onto full scale") {
    GrayImage img(10, 10);
    for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = 0.3 + 0.2 * (double(i) / 99.0);
    const GrayImage out = contrast_stretch(img);
    // Nearest-rank 1st percentile of 100 samples is the minimum.
    CHECK(out.px.front() == Catch::Approx(0.0).margin(1e-12));
    double hi = 0.0;
    for (double v : out.px) hi = std::max(hi, v);
    CHECK(hi == Catch::Approx(1.0));

    SECTION("a flat image passes through unchanged") {
        const GrayImage flat(5, 5, 0.7);
        const GrayImage same = contrast_stretch(flat);
        CHECK(same.px == flat.px);
    }
    SECTION("empty image throws") {
        CHECK_THROWS_AS(contrast_stretch(GrayImage()), std::invalid_argument);
    }
}

TEST_CASE("crop and region helpers") {
    GrayImage img(8, 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x) img.at(x, y) = y * 8 + x;

    const GrayImage c = crop(img, {2, 1, 3, 4});
    REQUIRE(c.width == 3);
    REQUIRE(c.height == 4);
    CHECK(c.at(0, 0) == Catch::Approx(10.0));
    CHECK(c.at(2, 3) == Catch::Approx(36.0));

    const CropRect top = top_half(img);
    CHECK(top.x == 0);
    CHECK(top.y == 0);
    CHECK(top.w == 8);
    CHECK(top.h == 3);
    CHECK_THROWS_AS(top_half(GrayImage(8, 5)), std::invalid_argument);
    CHECK_THROWS_AS(crop(img, {7, 0, 2, 2}), std::invalid_argument);
    CHECK_THROWS_AS(crop(img, {0, 0, 0, 1}), std::invalid_argument);
}

TEST_CASE("pgm and pbm files round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "skyfuse_img_test";
    fs::create_directories(dir);

    SECTION("grayscale") {
        GrayImage img(17, 9);
        RngStream rng(11);
        for (double& v : img.px) v = rng.uniform(0.0, 1.0);
        const std::string path = (dir / "rt.pgm").string();
        save_pgm(img, path);
        const GrayImage back = load_pgm(path);
        REQUIRE(back.width == img.width);
        REQUIRE(back.height == img.height);
        for (size_t i = 0; i < img.px.size(); ++i)
            CHECK(back.px[i] == Catch::Approx(img.px[i]).margin(0.5 / 255.0 + 1e-12));
    }
    SECTION("binary with non-multiple-of-8 width") {
        BinaryImage m(13, 5);
        RngStream rng(12);
        for (auto& v : m.px) v = rng.bernoulli(0.5) ? 1 : 0;
        const std::string path = (dir / "rt.pbm").string();
        save_pbm(m, path);
        const BinaryImage back = load_pbm(path);
        REQUIRE(back.width == m.width);
        REQUIRE(back.height == m.height);
        CHECK(back.px == m.px);
    }
    SECTION("bad files are rejected") {
        CHECK_THROWS_AS(load_pgm((dir / "missing.pgm").string()), SchemaError);
        const std::string junk = (dir / "junk.pgm").string();
        {
            std::ofstream out(junk, std::ios::binary);
            out << "P6\n2 2\n255\n";
        }
        CHECK_THROWS_AS(load_pgm(junk), SchemaError);
        const std::string trunc = (dir / "trunc.pgm").string();
        {
            std::ofstream out(trunc, std::ios::binary);
            out << "P5\n4 4\n255\n";
            out.put('x');
        }
        CHECK_THROWS_AS(load_pgm(trunc), SchemaError);
    }
}
