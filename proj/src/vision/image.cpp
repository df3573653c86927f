#include "phenovlp/vision/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include <png.h>

#include "phenovlp/common/errors.hpp"

namespace phenovlp::vision {

namespace fs = std::filesystem;

Image::Image(int w, int h, Rgb fill) : width(w), height(h) {
    if (w < 0 || h < 0) throw ParameterError("negative image size");
    pixels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
        pixels[i] = fill.r;
        pixels[i + 1] = fill.g;
        pixels[i + 2] = fill.b;
    }
}

Rgb Image::at(int x, int y) const {
    const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
    pixels[i] = c.r;
    pixels[i + 1] = c.g;
    pixels[i + 2] = c.b;
}

double Image::luminance(int x, int y) const {
    const auto c = at(x, y);
    return (c.r + c.g + c.b) / 3.0;
}

namespace {

Image load_png(const fs::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw InputError("cannot read PNG " + path.string() + ": " + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    Image img(static_cast<int>(png.width), static_cast<int>(png.height));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw InputError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return img;
}

// Skips whitespace and '#' comments between PPM header fields.
int read_ppm_int(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v = -1;
    in >> v;
    return v;
}

Image load_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P6") throw InputError("unsupported image format: " + path.string());
    const int w = read_ppm_int(in), h = read_ppm_int(in), maxval = read_ppm_int(in);
    if (!in || w <= 0 || h <= 0 || maxval != 255) throw InputError("bad PPM header: " + path.string());
    in.get();
    Image img(w, h);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!in) throw InputError("truncated PPM: " + path.string());
    return img;
}

}  // namespace

Image load_image(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open image " + path.string());
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    in.close();
    if (png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
    return load_ppm(path);
}

void save_png(const Image& image, const fs::path& path) {
    if (image.empty()) throw ParameterError("cannot write an empty image");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
        throw InputError("cannot write PNG " + path.string() + ": " + png.message);
    }
}

std::string encode_png(const Image& image) {
    if (image.empty()) throw ParameterError("cannot encode an empty image");
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
        throw InputError(std::string("cannot encode PNG: ") + png.message);
    }
    std::string bytes(size, '\0');
    if (!png_image_write_to_memory(&png, bytes.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        throw InputError(std::string("cannot encode PNG: ") + png.message);
    }
    bytes.resize(size);
    return bytes;
}

void save_ppm(const Image& image, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw InputError("cannot write " + path.string());
}

Image crop(const Image& image, const Box& box) {
    if (box.x < 0 || box.y < 0 || box.width <= 0 || box.height <= 0 || box.x + box.width > image.width ||
        box.y + box.height > image.height) {
        throw ParameterError("crop box outside the image");
    }
    Image out(box.width, box.height);
    for (int y = 0; y < box.height; ++y) {
        const auto* src = image.pixels.data() + (static_cast<std::size_t>(box.y + y) * image.width + box.x) * 3;
        std::copy(src, src + static_cast<std::size_t>(box.width) * 3,
                  out.pixels.data() + static_cast<std::size_t>(y) * box.width * 3);
    }
    return out;
}

Image resize_bilinear(const Image& image, int width, int height) {
    if (image.empty() || width <= 0 || height <= 0) throw ParameterError("resize: empty image or target");
    Image out(width, height);
    const double sx = static_cast<double>(image.width) / width;
    const double sy = static_cast<double>(image.height) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - x0;
            const auto a = image.at(x0, y0), b = image.at(x1, y0), c = image.at(x0, y1), d = image.at(x1, y1);
            auto mix = [&](double pa, double pb, double pc, double pd) {
                const double v = (pa * (1 - wx) + pb * wx) * (1 - wy) + (pc * (1 - wx) + pd * wx) * wy;
                return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            };
            out.set(x, y, {mix(a.r, b.r, c.r, d.r), mix(a.g, b.g, c.g, d.g), mix(a.b, b.b, c.b, d.b)});
        }
    }
    return out;
}

void fill_rect(Image& image, const Box& box, Rgb color) {
    for (int y = box.y; y < box.y + box.height; ++y)
        for (int x = box.x; x < box.x + box.width; ++x) image.set(x, y, color);
}

void draw_rect(Image& image, const Box& box, Rgb color, int thickness) {
    for (int t = 0; t < thickness; ++t) {
        const int x0 = box.x + t, y0 = box.y + t;
        const int x1 = box.x + box.width - 1 - t, y1 = box.y + box.height - 1 - t;
        if (x0 > x1 || y0 > y1) break;
        for (int x = x0; x <= x1; ++x) {
            image.set(x, y0, color);
            image.set(x, y1, color);
        }
        for (int y = y0; y <= y1; ++y) {
            image.set(x0, y, color);
            image.set(x1, y, color);
        }
    }
}

namespace {

// Each glyph: 7 rows of 5 bits, most significant bit leftmost.
struct Glyph {
    char ch;
    std::array<std::uint8_t, 7> rows;
};

constexpr Glyph kFont[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'b', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1E}}, {'o', {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
    {'x', {0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11}}, {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
};

const Glyph* find_glyph(char c) {
    for (const auto& g : kFont)
        if (g.ch == c) return &g;
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (const auto& g : kFont)
        if (g.ch == upper) return &g;
    return nullptr;
}

}  // namespace

int text_width(std::string_view text, int scale) {
    if (text.empty()) return 0;
    return static_cast<int>(text.size()) * 6 * scale - scale;
}

void draw_text(Image& image, int x, int y, std::string_view text, Rgb color, int scale) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        const Glyph* g = find_glyph(text[i]);
        if (!g) continue;
        const int gx = x + static_cast<int>(i) * 6 * scale;
        for (int row = 0; row < kGlyphHeight; ++row)
            for (int col = 0; col < 5; ++col)
                if (g->rows[static_cast<std::size_t>(row)] & (0x10 >> col))
                    fill_rect(image, {gx + col * scale, y + row * scale, scale, scale}, color);
    }
}

Eigen::RowVectorXd preprocess(const Image& image, int size, const Normalization& norm) {
    if (size <= 0) throw ParameterError("image size must be positive");
    if (image.empty()) throw InputError("empty image");
    const double s = static_cast<double>(size) / std::min(image.width, image.height);
    const int w = std::max(size, static_cast<int>(std::lround(image.width * s)));
    const int h = std::max(size, static_cast<int>(std::lround(image.height * s)));
    const Image resized = (w == image.width && h == image.height) ? image : resize_bilinear(image, w, h);
    const Image square = crop(resized, {(w - size) / 2, (h - size) / 2, size, size});

    const auto plane = static_cast<Eigen::Index>(size) * size;
    Eigen::RowVectorXd out(3 * plane);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const auto c = square.at(x, y);
            const Eigen::Index p = static_cast<Eigen::Index>(y) * size + x;
            out(p) = (c.r / 255.0 - norm.mean[0]) / norm.stddev[0];
            out(plane + p) = (c.g / 255.0 - norm.mean[1]) / norm.stddev[1];
            out(2 * plane + p) = (c.b / 255.0 - norm.mean[2]) / norm.stddev[2];
        }
    }
    return out;
}

}  // namespace phenovlp::vision
