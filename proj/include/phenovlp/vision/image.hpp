#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace phenovlp::vision {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// 8-bit RGB raster, row-major, interleaved channels.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, Rgb fill = {255, 255, 255});

    bool empty() const { return width == 0 || height == 0; }
    Rgb at(int x, int y) const;
    void set(int x, int y, Rgb c);
    // Mean of the three channels, 0..255.
    double luminance(int x, int y) const;

    bool operator==(const Image&) const = default;
};

struct Box {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool operator==(const Box&) const = default;
};

// PNG (any bit depth / colour type libpng can convert) or binary PPM (P6).
Image load_image(const std::filesystem::path& path);
void save_png(const Image& image, const std::filesystem::path& path);
// PNG file bytes.
std::string encode_png(const Image& image);
void save_ppm(const Image& image, const std::filesystem::path& path);

Image crop(const Image& image, const Box& box);
Image resize_bilinear(const Image& image, int width, int height);

void fill_rect(Image& image, const Box& box, Rgb color);
void draw_rect(Image& image, const Box& box, Rgb color, int thickness = 1);
// 5x7 bitmap glyphs for digits, letters and '_', scaled by `scale`.
void draw_text(Image& image, int x, int y, std::string_view text, Rgb color, int scale = 1);
int text_width(std::string_view text, int scale = 1);
constexpr int kGlyphHeight = 7;

struct Normalization {
    std::array<double, 3> mean{0.48145466, 0.4578275, 0.40821073};
    std::array<double, 3> stddev{0.26862954, 0.26130258, 0.27577711};
};

// Resize the shorter side to `size`, centre crop to size x size, scale to
// [0,1], normalise per channel. Returns one row, channel-major (C*H*W).
Eigen::RowVectorXd preprocess(const Image& image, int size, const Normalization& norm = {});

}  // namespace phenovlp::vision
