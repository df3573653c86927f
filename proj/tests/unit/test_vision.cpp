#include <doctest.h>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/jsonl.hpp"
#include "phenovlp/vision/encoder.hpp"
#include "phenovlp/vision/image.hpp"
#include "support/helpers.hpp"

using namespace phenovlp;
using namespace phenovlp::vision;

namespace {

Image gradient_image(int w, int h) {
    Image img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            img.set(x, y, {static_cast<std::uint8_t>(x * 7 % 256), static_cast<std::uint8_t>(y * 11 % 256),
                           static_cast<std::uint8_t>((x + y) * 5 % 256)});
    return img;
}

}  // namespace

TEST_CASE("image files round trip") {
    const auto dir = testing::temp_dir("images");
    const auto img = gradient_image(13, 9);
    save_png(img, dir / "a.png");
    save_ppm(img, dir / "a.ppm");
    CHECK(load_image(dir / "a.png") == img);
    CHECK(load_image(dir / "a.ppm") == img);

    CHECK_THROWS_AS(load_image(dir / "missing.png"), InputError);
    write_text(dir / "junk.png", "definitely not an image");
    CHECK_THROWS_AS(load_image(dir / "junk.png"), InputError);
}

TEST_CASE("png encoding is deterministic") {
    const auto dir = testing::temp_dir("pngdet");
    const auto img = gradient_image(20, 20);
    save_png(img, dir / "a.png");
    save_png(img, dir / "b.png");
    CHECK(read_text(dir / "a.png") == read_text(dir / "b.png"));
}

TEST_CASE("crop and resize") {
    const auto img = gradient_image(10, 8);
    const auto c = crop(img, {2, 3, 4, 2});
    CHECK(c.width == 4);
    CHECK(c.height == 2);
    CHECK(c.at(0, 0) == img.at(2, 3));
    CHECK(c.at(3, 1) == img.at(5, 4));
    CHECK_THROWS_AS(crop(img, {8, 0, 4, 2}), ParameterError);

    CHECK(resize_bilinear(img, 10, 8) == img);
    const Image flat(6, 6, {40, 80, 120});
    const auto big = resize_bilinear(flat, 17, 11);
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 17; ++x) CHECK(big.at(x, y) == Rgb{40, 80, 120});
}

TEST_CASE("preprocess") {
    SUBCASE("constant image normalises to a known value") {
        const Image flat(30, 20, {255, 0, 128});
        Normalization norm{{0.5, 0.5, 0.5}, {0.25, 0.5, 1.0}};
        const auto row = preprocess(flat, 8, norm);
        REQUIRE(row.size() == 3 * 64);
        for (int p = 0; p < 64; ++p) {
            CHECK(row(p) == doctest::Approx((1.0 - 0.5) / 0.25));
            CHECK(row(64 + p) == doctest::Approx((0.0 - 0.5) / 0.5));
            CHECK(row(128 + p) == doctest::Approx(128 / 255.0 - 0.5));
        }
    }
    SUBCASE("centre crop of the longer side") {
        // Left and right thirds black, centre white: a square crop keeps the centre.
        Image img(30, 10, {0, 0, 0});
        fill_rect(img, {10, 0, 10, 10}, {255, 255, 255});
        Normalization id{{0, 0, 0}, {1, 1, 1}};
        const auto row = preprocess(img, 10, id);
        CHECK(row.minCoeff() == doctest::Approx(1.0));
    }
}

TEST_CASE("drawing") {
    Image img(60, 20);
    draw_rect(img, {1, 1, 58, 18}, {255, 0, 0}, 2);
    CHECK(img.at(1, 1) == Rgb{255, 0, 0});
    CHECK(img.at(2, 10) == Rgb{255, 0, 0});
    CHECK(img.at(10, 10) == Rgb{255, 255, 255});
    draw_text(img, 5, 6, "box_1", {0, 0, 0});
    int dark = 0;
    for (int y = 6; y < 6 + kGlyphHeight; ++y)
        for (int x = 5; x < 5 + text_width("box_1"); ++x) dark += img.at(x, y) == Rgb{0, 0, 0};
    CHECK(dark > 20);
    CHECK(text_width("box_1", 2) == 2 * text_width("box_1"));
}

TEST_CASE("vision encoder") {
    VisionEncoderConfig cfg;
    cfg.image_size = 12;
    cfg.embed_dim = 8;
    VisionEncoder enc(cfg, 3);
    Rng rng(1);
    const nn::Matrix x = nn::normal_matrix(5, enc.input_size(), 1.0, rng);

    SUBCASE("unit rows, batch independent") {
        const auto a = enc.encode(x, 2);
        const auto b = enc.encode(x, 5);
        for (Eigen::Index i = 0; i < 5; ++i) CHECK(std::abs(a.row(i).norm() - 1.0) < 1e-9);
        CHECK((a - b).norm() < 1e-12);
    }
    SUBCASE("permuted batch gives permuted rows") {
        const std::vector<int> perm{3, 0, 4, 2, 1};
        nn::Matrix px(5, x.cols());
        for (int i = 0; i < 5; ++i) px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        const auto a = enc.encode(x);
        const auto b = enc.encode(px);
        for (int i = 0; i < 5; ++i) CHECK((b.row(i) - a.row(perm[static_cast<std::size_t>(i)])).norm() < 1e-12);
    }
    SUBCASE("wrong input width") {
        CHECK_THROWS_AS(enc.encode(nn::Matrix::Zero(1, 7)), ParameterError);
    }
    SUBCASE("save and load") {
        const auto dir = testing::temp_dir("vision");
        enc.save(dir);
        const auto back = VisionEncoder::load(dir);
        CHECK(back.config() == enc.config());
        CHECK(back.encode(x) == enc.encode(x));
    }
    SUBCASE("parameter gradients") {
        auto params = enc.parameters();
        const nn::Matrix w = nn::normal_matrix(5, 8, 1.0, rng);
        auto loss_of = [&]() { return enc.forward(x).value().cwiseProduct(w).sum(); };
        nn::Var out = enc.forward(x);
        nn::make_op(nn::Matrix::Constant(1, 1, out.value().cwiseProduct(w).sum()), {out},
                    [w](nn::Node& n) { n.inputs[0]->accumulate(w * n.grad(0, 0)); })
            .backward();
        for (auto& [name, p] : params) {
            if (name != "vision.conv0.weight" && name != "vision.projection.weight") continue;
            CAPTURE(name);
            auto f = [&](const nn::Matrix& value) {
                const nn::Matrix saved = p.value();
                p.mutable_value() = value;
                const double r = loss_of();
                p.mutable_value() = saved;
                return r;
            };
            CHECK(testing::fd_relative_error(f, p.value(), p.grad(), 1e-6) < 1e-4);
        }
    }
    SUBCASE("config validation") {
        VisionEncoderConfig bad = cfg;
        bad.strides.pop_back();
        CHECK_THROWS_AS(VisionEncoder(bad, 0), ParameterError);
    }
}
