#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/hash.hpp"
#include "phenovlp/eval/metrics.hpp"
#include "phenovlp/nn/layers.hpp"
#include "support/helpers.hpp"

using namespace phenovlp;
using namespace phenovlp::eval;
using testing::rows_of;

namespace {

// Deterministic stand-in encoder: unit vector seeded by the text hash.
Matrix hashed_embed(std::span<const std::string> texts) {
    Matrix out(static_cast<Eigen::Index>(texts.size()), 6);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        Rng rng(fnv1a(texts[i]));
        for (int j = 0; j < 6; ++j) out(static_cast<Eigen::Index>(i), j) = rng.normal();
        out.row(static_cast<Eigen::Index>(i)).normalize();
    }
    return out;
}

}  // namespace

TEST_CASE("prompt templates") {
    const auto defaults = PromptTemplateSet::defaults();
    CHECK(defaults.templates.size() == 12);
    CHECK_NOTHROW(defaults.validate());
    const auto prompts = defaults.instantiate("Cataract");
    CHECK(prompts[0] == "A medical image showing Cataract.");
    CHECK(prompts[11] == "Abnormal findings suggesting Cataract.");
    for (const auto& p : prompts) CHECK(p.find("[CLASS_NAME]") == std::string::npos);

    CHECK_THROWS_AS(PromptTemplateSet{{"no placeholder"}}.validate(), ParameterError);
    CHECK_THROWS_AS(PromptTemplateSet{{"[CLASS_NAME] and [CLASS_NAME]"}}.validate(), ParameterError);
    CHECK_THROWS_AS(PromptTemplateSet{}.validate(), ParameterError);

    const auto dir = testing::temp_dir("templates");
    write_text(dir / "ok.txt", "# custom\nPicture of [CLASS_NAME].\n\n  Case: [CLASS_NAME]  \n");
    const auto loaded = PromptTemplateSet::load(dir / "ok.txt");
    REQUIRE(loaded.templates.size() == 2);
    CHECK(loaded.templates[1] == "Case: [CLASS_NAME]");
    write_text(dir / "bad.txt", "Picture of something.\n");
    CHECK_THROWS_AS(PromptTemplateSet::load(dir / "bad.txt"), InputError);
}

TEST_CASE("class embeddings average the template embeddings") {
    const auto templates = PromptTemplateSet::defaults();
    const auto e = class_embedding(hashed_embed, "Retinal hemorrhage", templates);
    const auto prompts = templates.instantiate("Retinal hemorrhage");
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(6);
    for (const auto& p : prompts) mean += hashed_embed(std::span<const std::string>(&p, 1)).row(0);
    mean.normalize();
    CHECK((e - mean).norm() < 1e-12);

    const std::vector<std::string> names{"A", "Retinal hemorrhage", "C"};
    const Matrix all = class_embeddings(hashed_embed, names, templates);
    CHECK((all.row(1) - e).norm() < 1e-12);
    for (Eigen::Index i = 0; i < all.rows(); ++i) CHECK(all.row(i).norm() == doctest::Approx(1.0));
}

TEST_CASE("zero-shot classification") {
    const Matrix classes = rows_of({{1, 0}, {0, 1}});
    const Matrix images = rows_of({{0.9, 0.1}, {0.2, 2.0}, {1, 1}});
    const std::vector<int> labels{0, 1, 1};
    const auto r = zero_shot_classify(images, classes, labels);
    CHECK(r.predictions == std::vector<int>{0, 1, 0});  // exact tie goes to class 0
    CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(zero_shot_classify(images, classes, std::vector<int>{0}), ParameterError);
}

TEST_CASE("top-k ordering") {
    Eigen::RowVectorXd s(5);
    s << 0.3, 0.9, 0.3, 0.9, 0.1;
    CHECK(top_k(s, 3) == std::vector<int>{1, 3, 0});
    CHECK(top_k(s, 10).size() == 5);

    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::RowVectorXd x(12);
        for (int j = 0; j < 12; ++j) x(j) = static_cast<double>(rng.below(4));  // many ties
        std::vector<int> idx(12);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return x(a) > x(b); });
        idx.resize(5);
        CHECK(top_k(x, 5) == idx);
    }
}

TEST_CASE("recall at k") {
    // Query 0 ranks 2,0,1; query 1 ranks 0,2,1; query 2 ranks 1,0,2.
    const Matrix s = rows_of({{0.5, 0.1, 0.9}, {0.8, 0.2, 0.4}, {0.3, 0.7, 0.1}});
    const std::vector<std::vector<int>> truth{{0}, {1}, {1}};
    CHECK(recall_at_k(s, truth, 1) == doctest::Approx(1.0 / 3));
    CHECK(recall_at_k(s, truth, 2) == doctest::Approx(2.0 / 3));
    CHECK(recall_at_k(s, truth, 3) == doctest::Approx(1.0));

    const std::vector<std::vector<int>> multi{{0, 2}, {1, 0}, {1}};
    CHECK(recall_at_k(s, multi, 1, HitRule::any) == doctest::Approx(1.0));
    CHECK(recall_at_k(s, multi, 1, HitRule::all) == doctest::Approx(1.0 / 3));
    CHECK(recall_at_k(s, multi, 2, HitRule::all) == doctest::Approx(2.0 / 3));

    CHECK_THROWS_AS(recall_at_k(s, truth, 4), ParameterError);
    CHECK_THROWS_AS(recall_at_k(s, truth, 0), ParameterError);
    CHECK_THROWS_AS(recall_at_k(s, {{0}, {}, {1}}, 1), ParameterError);

    SUBCASE("monotone in k and complete at the gallery size") {
        Rng rng(17);
        for (int trial = 0; trial < 20; ++trial) {
            const Matrix r = nn::normal_matrix(7, 9, 1.0, rng);
            std::vector<std::vector<int>> t(7);
            for (auto& ti : t) ti = {static_cast<int>(rng.below(9))};
            double prev = 0;
            for (int k = 1; k <= 9; ++k) {
                const double cur = recall_at_k(r, t, k);
                CHECK(cur >= prev);
                prev = cur;
            }
            CHECK(prev == 1.0);
        }
    }
}

TEST_CASE("retrieval reports skip k beyond the gallery") {
    const Matrix s = rows_of({{1, 0}, {0, 1}});
    const auto r = retrieval_report("i2t", s, {{0}, {1}}, {1, 5, 10});
    CHECK(r.k_values == std::vector<int>{1});
    CHECK(r.metrics.at("R@1") == 1.0);
    CHECK(r.metrics.count("R@5") == 0);
    CHECK(r.to_json()["n_queries"] == 2);
}

TEST_CASE("phenotype retrieval in both directions") {
    // Three images, four candidate phenotypes; phenotype 3 has no image.
    const Matrix img = rows_of({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const Matrix ph = rows_of({{1, 0, 0}, {0, 0.6, 0.8}, {0, 0.8, 0.6}, {0.6, 0.8, 0}});
    const std::vector<std::vector<int>> linked{{0}, {2}, {1}};
    const auto r = phenotype_retrieval(img, ph, linked, {1, 2});
    CHECK(r.p2i_excluded == 1);
    CHECK(r.i2p.n_queries == 3);
    CHECK(r.p2i.n_queries == 3);
    // I2P: image 0 -> ph 0 (hit), image 1 -> ph 2 beats ph 3 (0.8 tie, lower index 2) hit, image 2 -> ph 1 hit.
    CHECK(r.i2p.metrics.at("R@1") == doctest::Approx(1.0));
    CHECK(r.p2i.metrics.at("R@1") == doctest::Approx(1.0));
}

TEST_CASE("phenotype matching precision, recall and F1") {
    const std::vector<std::set<int>> pred{{1, 2}, {3}, {4, 5, 6}, {7}};
    const std::vector<std::set<int>> truth{{1}, {3, 9}, {4}, {}};
    const auto micro = matching_metrics(pred, truth);
    CHECK(micro.n_images == 3);
    CHECK(micro.excluded == 1);
    CHECK(micro.precision == doctest::Approx(3.0 / 6.0));
    CHECK(micro.recall == doctest::Approx(3.0 / 4.0));
    CHECK(micro.f1 == doctest::Approx(2 * 0.5 * 0.75 / 1.25));

    const auto macro = matching_metrics(pred, truth, true);
    CHECK(macro.precision == doctest::Approx((0.5 + 1.0 + 1.0 / 3) / 3));
    CHECK(macro.recall == doctest::Approx((1.0 + 0.5 + 1.0) / 3));
    const double f1s = 2 * 0.5 / 1.5 + 2 * 0.5 / 1.5 + 2 * (1.0 / 3) / (4.0 / 3);
    CHECK(macro.f1 == doctest::Approx(f1s / 3));

    const auto perfect = matching_metrics(truth, truth);
    CHECK(perfect.f1 == doctest::Approx(1.0));
    CHECK_THROWS_AS(matching_metrics(pred, {{1}}), ParameterError);

    const Matrix s = rows_of({{0.9, 0.1, 0.8}, {0.1, 0.2, 0.3}});
    const auto sets = predicted_phenotype_sets(s, {{0, 2}, {1}});
    CHECK(sets[0] == std::set<int>{0, 2});
    CHECK(sets[1] == std::set<int>{2});
    CHECK(predicted_phenotype_sets(s, {{0, 2}, {1}}, 1)[0] == std::set<int>{0});
}

TEST_CASE("stratified subsample") {
    std::vector<int> labels;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 10 * (c + 1); ++i) labels.push_back(c);
    const auto s = stratified_subsample(labels, 3, 0.1, 4);
    std::map<int, int> counts;
    for (int i : s) ++counts[labels[static_cast<std::size_t>(i)]];
    CHECK(counts[0] == 1);
    CHECK(counts[1] == 2);
    CHECK(counts[2] == 3);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(stratified_subsample(labels, 3, 0.1, 4) == s);
    CHECK(stratified_subsample(labels, 3, 0.1, 5) != s);
    CHECK(stratified_subsample(labels, 3, 1.0, 0).size() == labels.size());
    CHECK(stratified_subsample({0, 0, 0, 1}, 2, 0.01, 0).size() == 2);
    CHECK_THROWS_AS(stratified_subsample(labels, 3, 0.0, 0), ParameterError);
    CHECK_THROWS_AS(stratified_subsample(labels, 3, 1.5, 0), ParameterError);
}

TEST_CASE("linear probe approaches the Bayes classifier") {
    // Three isotropic Gaussian classes of equal prior: the Bayes rule is the
    // nearest true mean.
    const Matrix means = rows_of({{0, 0}, {2.5, 0}, {1.25, 2.2}});
    Rng rng(31);
    auto sample = [&](int per_class) {
        LabeledFeatureSet s;
        s.class_names = {"a", "b", "c"};
        s.features.resize(3 * per_class, 2);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < per_class; ++i) {
                const Eigen::Index r = c * per_class + i;
                s.features(r, 0) = means(c, 0) + rng.normal();
                s.features(r, 1) = means(c, 1) + rng.normal();
                s.labels.push_back(c);
            }
        return s;
    };
    const auto train = sample(1000);
    const auto test = sample(1000);
    int bayes_correct = 0;
    for (Eigen::Index i = 0; i < test.features.rows(); ++i) {
        Eigen::Index best = 0;
        (means.rowwise() - test.features.row(i)).rowwise().squaredNorm().minCoeff(&best);
        bayes_correct += best == test.labels[static_cast<std::size_t>(i)];
    }
    const double bayes = bayes_correct / 3000.0;
    const auto r = linear_probe(train, test, 1.0, 0);
    MESSAGE("probe " << r.accuracy << " vs Bayes " << bayes << " after " << r.steps << " steps");
    CHECK(r.accuracy >= bayes - 0.02);
    CHECK(r.weights.rows() == 2);
    CHECK(r.weights.cols() == 3);

    const auto small = linear_probe(train, test, 0.01, 0);
    CHECK(small.train_examples == 30);
    CHECK(small.accuracy > 0.6);
    CHECK(linear_probe(train, test, 0.01, 0).predictions == small.predictions);
}

TEST_CASE("linear probe on separable data") {
    LabeledFeatureSet s;
    s.class_names = {"x", "y"};
    s.features = rows_of({{-2, 0}, {-1.5, 1}, {-1, -1}, {1, 0.5}, {2, -1}, {1.5, 1}});
    s.labels = {0, 0, 0, 1, 1, 1};
    const auto r = linear_probe(s, s, 1.0, 0);
    CHECK(r.accuracy == 1.0);
    LabeledFeatureSet bad = s;
    bad.labels.back() = 5;
    CHECK_THROWS_AS(linear_probe(bad, s, 1.0, 0), ParameterError);
}
