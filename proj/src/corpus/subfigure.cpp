#include "phenovlp/corpus/subfigure.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace phenovlp::corpus {

namespace {

struct Run {
    int start;
    int end;  // exclusive
};

std::vector<Run> content_runs(const std::vector<bool>& blank) {
    std::vector<Run> runs;
    int start = -1;
    for (int i = 0; i <= static_cast<int>(blank.size()); ++i) {
        const bool is_blank = i == static_cast<int>(blank.size()) || blank[static_cast<std::size_t>(i)];
        if (!is_blank && start < 0) start = i;
        if (is_blank && start >= 0) {
            runs.push_back({start, i});
            start = -1;
        }
    }
    return runs;
}

}  // namespace

std::vector<DetectedBox> GutterDetector::detect(const vision::Image& image) const {
    auto blank_px = [&](int x, int y) { return image.luminance(x, y) >= options_.white_level; };
    std::vector<bool> blank_rows(static_cast<std::size_t>(image.height), true);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width && blank_rows[static_cast<std::size_t>(y)]; ++x)
            if (!blank_px(x, y)) blank_rows[static_cast<std::size_t>(y)] = false;

    std::vector<DetectedBox> out;
    const double figure_area = static_cast<double>(image.width) * image.height;
    for (const auto& band : content_runs(blank_rows)) {
        std::vector<bool> blank_cols(static_cast<std::size_t>(image.width), true);
        for (int x = 0; x < image.width; ++x)
            for (int y = band.start; y < band.end && blank_cols[static_cast<std::size_t>(x)]; ++y)
                if (!blank_px(x, y)) blank_cols[static_cast<std::size_t>(x)] = false;
        for (const auto& cell : content_runs(blank_cols)) {
            // Trim the cell to its own content rows.
            int top = band.end, bottom = band.start;
            for (int y = band.start; y < band.end; ++y)
                for (int x = cell.start; x < cell.end; ++x)
                    if (!blank_px(x, y)) {
                        top = std::min(top, y);
                        bottom = std::max(bottom, y + 1);
                        break;
                    }
            const vision::Box box{cell.start, top, cell.end - cell.start, bottom - top};
            const double area = static_cast<double>(box.width) * box.height;
            out.push_back({box, area >= options_.min_area_fraction * figure_area ? 1.0 : options_.small_confidence});
        }
    }
    return out;
}

std::vector<DetectedBox> reading_order(std::vector<DetectedBox> boxes) {
    std::stable_sort(boxes.begin(), boxes.end(), [](const DetectedBox& a, const DetectedBox& b) {
        return a.bounds.y != b.bounds.y ? a.bounds.y < b.bounds.y : a.bounds.x < b.bounds.x;
    });
    std::vector<DetectedBox> out;
    for (std::size_t i = 0; i < boxes.size();) {
        const auto& lead = boxes[i].bounds;
        const int row_limit = lead.y + lead.height / 2;
        std::size_t j = i;
        while (j < boxes.size() && boxes[j].bounds.y <= row_limit) ++j;
        std::stable_sort(boxes.begin() + static_cast<std::ptrdiff_t>(i), boxes.begin() + static_cast<std::ptrdiff_t>(j),
                         [](const DetectedBox& a, const DetectedBox& b) { return a.bounds.x < b.bounds.x; });
        out.insert(out.end(), boxes.begin() + static_cast<std::ptrdiff_t>(i), boxes.begin() + static_cast<std::ptrdiff_t>(j));
        i = j;
    }
    return out;
}

std::vector<SubfigureBox> split_compound(const vision::Image& image, const SubfigureDetector& detector, double threshold) {
    std::vector<DetectedBox> detected;
    try {
        detected = detector.detect(image);
    } catch (const std::exception& e) {
        spdlog::warn("subfigure detector failed, keeping the figure whole: {}", e.what());
        return {};
    }
    std::vector<DetectedBox> kept;
    for (const auto& d : detected) {
        const auto& b = d.bounds;
        if (d.confidence < threshold) continue;
        if (b.width <= 0 || b.height <= 0 || b.x < 0 || b.y < 0 || b.x + b.width > image.width ||
            b.y + b.height > image.height) {
            spdlog::warn("dropping subfigure box outside the {}x{} figure", image.width, image.height);
            continue;
        }
        kept.push_back(d);
    }
    if (kept.size() < 2) return {};
    std::vector<SubfigureBox> out;
    for (const auto& d : reading_order(std::move(kept)))
        out.push_back({"box_" + std::to_string(out.size() + 1), d.bounds, d.confidence});
    return out;
}

vision::Image render_box_overlay(const vision::Image& image, const std::vector<SubfigureBox>& boxes) {
    const vision::Rgb red{230, 20, 20};
    vision::Image out = image;
    for (const auto& b : boxes) {
        vision::draw_rect(out, b.bounds, red, 2);
        const int tw = vision::text_width(b.box_id);
        const int mw = tw + 4, mh = vision::kGlyphHeight + 4;
        const int cx = b.bounds.x + b.bounds.width / 2, cy = b.bounds.y + b.bounds.height / 2;
        vision::Box marker{std::max(0, cx - mw / 2), std::max(0, cy - mh / 2), mw, mh};
        marker.width = std::min(marker.width, out.width - marker.x);
        marker.height = std::min(marker.height, out.height - marker.y);
        vision::fill_rect(out, marker, red);
        vision::draw_text(out, marker.x + 2, marker.y + 2, b.box_id, {255, 255, 255});
    }
    return out;
}

}  // namespace phenovlp::corpus
