#pragma once

#include <string>
#include <vector>

#include "phenovlp/vision/image.hpp"

namespace phenovlp::corpus {

struct DetectedBox {
    vision::Box bounds;
    double confidence = 1.0;
};

struct SubfigureBox {
    std::string box_id;  // "box_1", "box_2", ... in reading order
    vision::Box bounds;
    double confidence = 1.0;
    bool operator==(const SubfigureBox&) const = default;
};

class SubfigureDetector {
public:
    virtual ~SubfigureDetector() = default;
    virtual std::vector<DetectedBox> detect(const vision::Image& image) const = 0;
};

// Splits a figure along blank (near-white) gutters: first into horizontal
// bands, then each band into cells. Cells smaller than `min_area_fraction`
// of the figure come back with low confidence.
class GutterDetector : public SubfigureDetector {
public:
    struct Options {
        double white_level = 240.0;  // luminance at or above which a pixel is blank
        double min_area_fraction = 0.02;
        double small_confidence = 0.2;
    };
    GutterDetector() = default;
    explicit GutterDetector(Options options) : options_(options) {}
    std::vector<DetectedBox> detect(const vision::Image& image) const override;

private:
    Options options_;
};

// Top-to-bottom rows, left-to-right within a row. Two boxes share a row when
// the lower one starts above the vertical middle of the row's first box.
std::vector<DetectedBox> reading_order(std::vector<DetectedBox> boxes);

// Confident, in-bounds boxes in reading order, named box_1..box_n. An empty
// result means the figure stays whole: no confident boxes, a single box, or a
// detector failure (logged).
std::vector<SubfigureBox> split_compound(const vision::Image& image, const SubfigureDetector& detector,
                                         double threshold = 0.5);

// Copy of the figure with each box outlined in red and its id printed on a red
// marker at the box centre.
vision::Image render_box_overlay(const vision::Image& image, const std::vector<SubfigureBox>& boxes);

}  // namespace phenovlp::corpus
