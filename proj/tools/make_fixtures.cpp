// Regenerates the bundled fixture corpus: figure images, article records, the
// fitted cluster model and the keep list that retains the phenotype figures.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/rng.hpp"
#include "phenovlp/corpus/cluster.hpp"
#include "phenovlp/corpus/records.hpp"
#include "phenovlp/vision/image.hpp"

namespace fs = std::filesystem;
using namespace phenovlp;
using vision::Image;
using vision::Rgb;

namespace {

constexpr int kPanel = 40;
constexpr int kGutter = 8;
constexpr std::uint64_t kClusterSeed = 7;

void ellipse(Image& img, int cx, int cy, int rx, int ry, Rgb c) {
    for (int y = cy - ry; y <= cy + ry; ++y)
        for (int x = cx - rx; x <= cx + rx; ++x) {
            const double dx = static_cast<double>(x - cx) / rx, dy = static_cast<double>(y - cy) / ry;
            if (dx * dx + dy * dy <= 1.0) img.set(x, y, c);
        }
}

enum class Look { cataract, hemorrhage, edema, cafe_au_lait, melanoma };

// One clinical-looking panel per phenotype; `variant` shifts size and placement.
Image panel(Look look, int variant) {
    Rng rng(static_cast<std::uint64_t>(look) * 101 + static_cast<std::uint64_t>(variant));
    const int jitter = variant % 3 - 1;
    switch (look) {
        case Look::cataract: {
            Image img(kPanel, kPanel, {35, 30, 30});
            ellipse(img, 20 + jitter, 20, 15, 15, {120, 70, 40});
            ellipse(img, 20 + jitter, 20, 9 + variant % 2, 9 + variant % 2, {215, 215, 210});
            return img;
        }
        case Look::hemorrhage: {
            Image img(kPanel, kPanel, {205, 95, 40});
            ellipse(img, 12 + jitter, 20, 4, 4, {240, 210, 120});
            for (int i = 0; i < 9; ++i)
                ellipse(img, 8 + static_cast<int>(rng.below(26)), 6 + static_cast<int>(rng.below(28)), 2, 2, {110, 10, 10});
            return img;
        }
        case Look::edema: {
            Image img(kPanel, kPanel, {225, 180, 160});
            ellipse(img, 12, 20 + jitter, 8, 5, {240, 140, 150});
            ellipse(img, 28, 20 + jitter, 8, 5, {240, 140, 150});
            ellipse(img, 12, 20 + jitter, 3, 2, {60, 40, 40});
            ellipse(img, 28, 20 + jitter, 3, 2, {60, 40, 40});
            return img;
        }
        case Look::cafe_au_lait: {
            Image img(kPanel, kPanel, {214, 160, 120});
            ellipse(img, 20 + jitter * 3, 20, 12 - variant % 3, 8, {150, 95, 55});
            return img;
        }
        case Look::melanoma: {
            Image img(kPanel, kPanel, {210, 150, 115});
            for (int i = 0; i < 6; ++i)
                ellipse(img, 17 + static_cast<int>(rng.below(7)), 17 + static_cast<int>(rng.below(7)), 5, 4, {45, 25, 30});
            return img;
        }
    }
    throw InvariantError("unknown look");
}

Image grid(const std::vector<Look>& looks, int cols) {
    const int rows = static_cast<int>((looks.size() + static_cast<std::size_t>(cols) - 1) / static_cast<std::size_t>(cols));
    Image img(kGutter + cols * (kPanel + kGutter), kGutter + rows * (kPanel + kGutter));
    for (std::size_t i = 0; i < looks.size(); ++i) {
        const int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
        const Image p = panel(looks[i], static_cast<int>(i));
        for (int y = 0; y < kPanel; ++y)
            for (int x = 0; x < kPanel; ++x)
                img.set(kGutter + c * (kPanel + kGutter) + x, kGutter + r * (kPanel + kGutter) + y, p.at(x, y));
    }
    return img;
}

Image bar_chart(int bars) {
    Image img(120, 80);
    vision::fill_rect(img, {10, 70, 100, 2}, {0, 0, 0});
    vision::fill_rect(img, {10, 8, 2, 64}, {0, 0, 0});
    for (int i = 0; i < bars; ++i) {
        const int h = 12 + (i * 17) % 50;
        vision::fill_rect(img, {16 + i * 14, 70 - h, 9, h}, {90, 90, 100});
    }
    return img;
}

Image pedigree() {
    Image img(120, 80);
    const Rgb ink{20, 20, 20};
    vision::draw_rect(img, {30, 10, 12, 12}, ink, 2);
    ellipse(img, 84, 16, 6, 6, ink);
    vision::fill_rect(img, {42, 15, 36, 2}, ink);
    vision::fill_rect(img, {59, 16, 2, 24}, ink);
    vision::fill_rect(img, {30, 40, 62, 2}, ink);
    for (int i = 0; i < 3; ++i) vision::draw_rect(img, {24 + i * 30, 50, 12, 12}, ink, 2);
    return img;
}

Image schematic() {
    Image img(120, 80);
    for (int i = 0; i < 3; ++i) {
        vision::draw_rect(img, {8 + i * 38, 28, 28, 20}, {30, 30, 30}, 2);
        if (i < 2) vision::fill_rect(img, {36 + i * 38, 37, 10, 2}, {30, 30, 30});
    }
    return img;
}

Image blot() {
    Image img(120, 80, {235, 235, 235});
    for (int lane = 0; lane < 5; ++lane)
        for (int band = 0; band < 3; ++band) vision::fill_rect(img, {12 + lane * 20, 15 + band * 22, 14, 4}, {40, 40, 45});
    return img;
}

struct FigureSpec {
    std::string figure_id;
    Image image;
    std::string caption;
    std::vector<std::string> refs;
};

}  // namespace

int main(int argc, char** argv) {
    try {
        const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("data/fixtures");
        const fs::path dir = root / "corpus";
        fs::create_directories(dir / "images");
        using L = Look;

        std::vector<std::pair<std::string, std::vector<FigureSpec>>> articles;
        articles.push_back(
            {"PMC1001",
             {{"fig1", grid({L::cataract, L::cataract, L::hemorrhage, L::hemorrhage, L::edema, L::edema}, 3),
               "Ocular and periocular findings in the index family. Panel A: Dense cataract in the left eye of the "
               "proband. Panel B: Lens opacity seen on slit-lamp examination of the sister. Panel C: Retinal "
               "hemorrhage near the optic disc. Panel D: Fundus photograph showing retinal bleeding along the arcade. "
               "Panel E: Periorbital edema in the father. Panel F: Follow-up photograph after two weeks of treatment.",
               {"Figure 1 summarises the ocular phenotype of the family.",
                "The proband presented with reduced vision and swelling around both eyes."}},
              {"fig2", pedigree(), "Pedigree of the index family across three generations.",
               {"Inheritance appears autosomal dominant."}},
              {"fig3", bar_chart(6), "Age distribution of the cohort at first examination.", {}}}});
        articles.push_back(
            {"PMC1002",
             {{"fig1", grid({L::cafe_au_lait, L::cafe_au_lait, L::melanoma, L::melanoma}, 2),
               "Skin findings in patient 2. Panel A: Cafe-au-lait spot on the trunk. Panel B: Cutaneous melanoma on "
               "the upper back.",
               {"Pigmentary changes were documented at each visit."}},
              {"fig2", grid({L::cafe_au_lait, L::cafe_au_lait, L::edema, L::cafe_au_lait}, 2),
               "Panel A: Cafe-au-lait spot on the left flank. Panel B: Multiple cafe-au-lait spot lesions on the "
               "thigh. Panel C: Periorbital edema at presentation. Panel D: Close view of the lesion margin.",
               {"Figure 2 shows the cutaneous and periocular signs of patient 3."}},
              {"fig3", bar_chart(4), "Timeline of treatment and follow-up visits.", {}}}});
        articles.push_back(
            {"PMC1003",
             {{"fig1", grid({L::hemorrhage, L::hemorrhage, L::cataract, L::cataract, L::melanoma, L::cafe_au_lait}, 3),
               "Panel A: Retinal hemorrhage in the right eye. Panel B: Retinal hemorrhage in the left eye. Panel C: "
               "Cataract with posterior opacity. Panel D: Clouding of the lens in the fellow eye. Panel E: Cutaneous "
               "melanoma of the scalp. Panel F: Cafe-au-lait spot on the arm.",
               {"Ophthalmic and dermatological examination findings are shown in Figure 1."}},
              {"fig2", panel(L::cataract, 4), "Cataracts were not observed in any unaffected relative.", {}},
              {"fig3", schematic(), "Harmonised protocol for image acquisition.", {}},
              {"fig4", blot(), "Western blot of patient fibroblasts.", {}}}});

        std::vector<corpus::ArticleRecord> records;
        std::vector<Image> all_images;
        std::vector<bool> phenotype_figure;
        for (auto& [pmcid, figures] : articles) {
            corpus::ArticleRecord a{pmcid, {}};
            for (auto& f : figures) {
                const std::string ref = "images/" + pmcid + "_" + f.figure_id + ".png";
                vision::save_png(f.image, dir / ref);
                a.figures.push_back({f.figure_id, ref, f.caption, f.refs});
                all_images.push_back(f.image);
                phenotype_figure.push_back(f.image.width != 120);  // grids and the single eye panel
            }
            records.push_back(std::move(a));
        }
        corpus::write_corpus(dir / "corpus.jsonl", records);

        // Fit the two-level filter on every figure and keep the leaves that
        // hold clinical images; charts, diagrams and blots fall outside.
        const corpus::PixelStatsEmbedder embedder;
        corpus::Matrix emb(static_cast<Eigen::Index>(all_images.size()), embedder.dim());
        for (std::size_t i = 0; i < all_images.size(); ++i) emb.row(static_cast<Eigen::Index>(i)) = embedder.embed(all_images[i]);
        Rng rng(kClusterSeed);
        auto model = corpus::fit_cluster_filter(emb, 2, 2, rng);
        std::set<corpus::LeafId> keep;
        for (std::size_t i = 0; i < all_images.size(); ++i)
            if (phenotype_figure[i]) keep.insert(model.assign(emb.row(static_cast<Eigen::Index>(i))));
        for (std::size_t i = 0; i < all_images.size(); ++i)
            if (!phenotype_figure[i] && keep.count(model.assign(emb.row(static_cast<Eigen::Index>(i)))))
                std::cerr << "note: non-clinical figure " << i << " shares a kept leaf\n";
        model.keep_set = keep;
        write_json(dir / "cluster_model.json", model.to_json());
        corpus::write_keep_list(dir / "keep_list.txt", keep,
                                "Leaves of cluster_model.json (k1=2, k2=2, pixel-statistics embedder, seed 7)\n"
                                "that hold clinical photographs.");
        std::cout << "wrote " << records.size() << " articles, " << all_images.size() << " figures, " << keep.size()
                  << " kept leaves to " << dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "make_fixtures: " << e.what() << "\n";
        return 1;
    }
}
