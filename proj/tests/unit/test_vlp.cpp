#include <doctest.h>

#include <cmath>
#include <thread>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/common/text.hpp"
#include "phenovlp/vision/image.hpp"
#include "phenovlp/vlp/loss.hpp"
#include "phenovlp/vlp/model.hpp"
#include "phenovlp/vlp/teacher.hpp"
#include "phenovlp/vlp/trainer.hpp"
#include "support/helpers.hpp"
#include "support/planted.hpp"

using namespace phenovlp;
using namespace phenovlp::vlp;
using nn::Matrix;
using testing::rows_of;

namespace {

const Matrix kV = Matrix::Identity(3, 3);
const Matrix kT = rows_of({{0.8, 0.6, 0.0}, {0.0, 0.6, 0.8}, {0.6, 0.0, 0.8}});
const Matrix kK4 = rows_of({{1, 0, 0}, {0.6, 0.8, 0}, {0, 0.6, 0.8}, {0, 0, 1}});
const Matrix kK3 = rows_of({{1, 0, 0}, {0, 1, 0}, {0.6, 0.8, 0}});

bool close(double got, double want, double rel) { return std::abs(got - want) <= rel * std::max(1.0, std::abs(want)); }

knowledge::TextEncoderConfig small_text(int dim = 16) {
    knowledge::TextEncoderConfig c;
    c.vocab_size = 512;
    c.model_dim = 16;
    c.heads = 2;
    c.layers = 1;
    c.hidden_dim = 32;
    c.embed_dim = dim;
    c.max_tokens = 32;
    return c;
}

vision::VisionEncoderConfig small_vision(int dim = 16, int size = 16) {
    vision::VisionEncoderConfig c;
    c.image_size = size;
    c.channels = {8, 16};
    c.strides = {2, 2};
    c.embed_dim = dim;
    return c;
}

VLModelSpec small_spec(TextInit init = TextInit::scratch, std::uint64_t seed = 5) {
    return {small_vision(), small_text(), init, seed};
}

VLPTrainConfig small_train(long steps) {
    VLPTrainConfig c;
    c.batch_size = 16;
    c.learning_rate = 3e-3;
    c.warmup_steps = 2;
    c.epochs = 1000;
    c.max_steps = steps;
    c.image_size = 16;
    c.max_tokens = 32;
    return c;
}

double r_at_1(const Matrix& v, const Matrix& t) {
    const Matrix s = v * t.transpose();
    int hits = 0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        Eigen::Index best = 0;
        s.row(i).maxCoeff(&best);
        hits += best == i;
    }
    return static_cast<double>(hits) / static_cast<double>(s.rows());
}

bool all_grads_zero(const nn::NamedParams& params) {
    for (const auto& [name, p] : params)
        if (p.has_grad() && !p.grad().isZero()) return false;
    return true;
}

}  // namespace

TEST_CASE("contrastive loss frozen values") {
    CHECK(close(multimodal_contrastive_loss(kV, kT, 0.5), 1.51041316083709424618767805231, 1e-12));
    CHECK(close(multimodal_contrastive_loss(kV, kT, 0.07), 1.48898472765498051184931918188, 1e-12));
    CHECK(close(knowledge_distillation_loss(kK4, kK4, 0.07), 0.0597155713628021740791726601893, 1e-12));
    CHECK(close(knowledge_distillation_loss(kK4, kK4, 0.5), 1.31846823461911481270862802452, 1e-12));
    CHECK(close(knowledge_distillation_loss(kT, kK3, 0.5), 2.05483811124294355358800770324, 1e-12));
    CHECK(close(total_vlp_loss(kV, kT, kK3, 0.5, 0.5, 0.3), 2.12686459420997731226408036329, 1e-12));
}

TEST_CASE("contrastive losses agree with the brute-force oracle") {
    Rng rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const int b = 2 + static_cast<int>(rng.below(7));
        const int d = 2 + static_cast<int>(rng.below(15));
        const double tau = rng.uniform(0.05, 1.0);
        const Matrix v = testing::random_unit_rows(b, d, rng);
        const Matrix t = testing::random_unit_rows(b, d, rng);
        const Matrix k = testing::random_unit_rows(b, d, rng);
        CAPTURE(trial);
        const double want_m = static_cast<double>(oracle::bidirectional(testing::to_rows(v), testing::to_rows(t), tau));
        const double want_kd = static_cast<double>(oracle::bidirectional(testing::to_rows(t), testing::to_rows(k), tau));
        CHECK(close(multimodal_contrastive_loss(v, t, tau), want_m, 1e-9));
        CHECK(close(knowledge_distillation_loss(t, k, tau), want_kd, 1e-9));
    }
}

TEST_CASE("contrastive loss analytic cases") {
    SUBCASE("a single pair has nothing to contrast") {
        const Matrix a = rows_of({{0.6, 0.8}});
        CHECK(multimodal_contrastive_loss(a, a, 0.07) == doctest::Approx(0.0));
    }
    SUBCASE("identical rows give 2 log B") {
        for (int b : {2, 5, 9}) {
            const Matrix a = Matrix::Ones(b, 1);
            CHECK(multimodal_contrastive_loss(a, a, 0.07) == doctest::Approx(2 * std::log(b)).epsilon(1e-10));
        }
    }
    SUBCASE("symmetric in its two arguments") {
        Rng rng(3);
        const Matrix v = testing::random_unit_rows(6, 8, rng);
        const Matrix t = testing::random_unit_rows(6, 8, rng);
        CHECK(multimodal_contrastive_loss(v, t, 0.1) == doctest::Approx(multimodal_contrastive_loss(t, v, 0.1)).epsilon(1e-12));
    }
    SUBCASE("joint row permutation leaves the loss unchanged") {
        Rng rng(4);
        const Matrix v = testing::random_unit_rows(5, 8, rng);
        const Matrix t = testing::random_unit_rows(5, 8, rng);
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
        perm.indices() << 2, 4, 0, 1, 3;
        CHECK(multimodal_contrastive_loss(perm * v, perm * t, 0.2) ==
              doctest::Approx(multimodal_contrastive_loss(v, t, 0.2)).epsilon(1e-12));
    }
    SUBCASE("argument validation") {
        CHECK_THROWS_AS(multimodal_contrastive_loss(kV, kT, 0.0), ParameterError);
        CHECK_THROWS_AS(multimodal_contrastive_loss(kV, kK4, 0.5), ParameterError);
        CHECK_THROWS_AS(multimodal_contrastive_loss(kV * 2.0, kT, 0.5), PreconditionError);
        CHECK_THROWS_AS(total_vlp_loss(kV, kT, kK3, 0.5, 0.5, -0.1), ParameterError);
    }
}

TEST_CASE("contrastive gradients match finite differences") {
    Rng rng(99);
    for (int trial = 0; trial < 4; ++trial) {
        const Matrix v = testing::random_unit_rows(6, 16, rng);
        const Matrix t = testing::random_unit_rows(6, 16, rng);
        const double tau = trial == 0 ? 0.07 : rng.uniform(0.1, 1.0);
        CAPTURE(tau);
        nn::Var vv = nn::parameter(v);
        nn::Var tv = nn::parameter(t);
        multimodal_contrastive_loss(vv, tv, tau).backward();
        auto fv = [&](const Matrix& x) { return bidirectional_contrastive(x, t, 1.0 / tau).loss; };
        auto ft = [&](const Matrix& x) { return bidirectional_contrastive(v, x, 1.0 / tau).loss; };
        CHECK(testing::fd_relative_error(fv, v, vv.grad(), 1e-5) < 1e-3);
        CHECK(testing::fd_relative_error(ft, t, tv.grad(), 1e-5) < 1e-3);

        const auto terms = bidirectional_contrastive(v, t, 1.0 / tau);
        const double h = 1e-5;
        const double numeric = (bidirectional_contrastive(v, t, 1.0 / tau + h).loss -
                                bidirectional_contrastive(v, t, 1.0 / tau - h).loss) / (2 * h);
        CHECK(terms.grad_scale == doctest::Approx(numeric).epsilon(1e-5));
    }
}

TEST_CASE("learnable temperature gradient") {
    Rng rng(8);
    const Matrix v = testing::random_unit_rows(5, 6, rng);
    const Matrix t = testing::random_unit_rows(5, 6, rng);
    nn::Var log_scale = nn::parameter(Matrix::Constant(1, 1, std::log(1 / 0.07)));
    nn::Var loss = multimodal_contrastive_loss(nn::constant(v), nn::constant(t), log_scale);
    CHECK(loss.scalar() == doctest::Approx(multimodal_contrastive_loss(v, t, 0.07)).epsilon(1e-12));
    loss.backward();
    auto f = [&](const Matrix& x) { return bidirectional_contrastive(v, t, std::exp(x(0, 0))).loss; };
    CHECK(testing::fd_relative_error(f, log_scale.value(), log_scale.grad(), 1e-6) < 1e-5);
}

TEST_CASE("distillation treats the teacher as a constant") {
    Rng rng(12);
    const Matrix s = testing::random_unit_rows(4, 8, rng);
    const Matrix k = testing::random_unit_rows(4, 8, rng);
    nn::Var sv = nn::parameter(s);
    knowledge_distillation_loss(sv, k, 0.1).backward();
    auto f = [&](const Matrix& x) { return bidirectional_contrastive(x, k, 10.0).loss; };
    CHECK(testing::fd_relative_error(f, s, sv.grad(), 1e-5) < 1e-3);
}

TEST_CASE("total loss is affine in alpha") {
    Rng rng(21);
    const Matrix v = testing::random_unit_rows(6, 8, rng);
    const Matrix t = testing::random_unit_rows(6, 8, rng);
    const Matrix k = testing::random_unit_rows(6, 8, rng);
    const double lm = multimodal_contrastive_loss(v, t, 0.07);
    const double lkd = knowledge_distillation_loss(t, k, 0.07);
    for (double alpha : {0.0, 0.3, 1.0}) {
        CAPTURE(alpha);
        CHECK(total_vlp_loss(v, t, k, 0.07, 0.07, alpha) == doctest::Approx(lm + alpha * lkd).epsilon(1e-12));
    }
    // alpha = 0 reproduces L_M bit for bit, gradients included.
    CHECK(total_vlp_loss(v, t, k, 0.07, 0.07, 0.0) == lm);
    nn::Var ta = nn::parameter(t), tb = nn::parameter(t);
    total_vlp_loss(nn::constant(v), ta, k, 0.07, 0.07, 0.0).backward();
    multimodal_contrastive_loss(nn::constant(v), tb, 0.07).backward();
    CHECK(ta.grad() == tb.grad());
}

TEST_CASE("learning rate schedule") {
    const double base = 1e-3;
    CHECK(lr_schedule(0, 10, 100, base) == 0.0);
    CHECK(lr_schedule(5, 10, 100, base) == doctest::Approx(base / 2));
    CHECK(lr_schedule(10, 10, 100, base) == doctest::Approx(base));
    CHECK(lr_schedule(55, 10, 100, base) == doctest::Approx(base / 2));
    CHECK(lr_schedule(100, 10, 100, base) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(lr_schedule(0, 0, 10, base) == doctest::Approx(base));
    double prev = -1;
    for (long s = 0; s <= 10; ++s) {
        CHECK(lr_schedule(s, 10, 100, base) > prev);
        prev = lr_schedule(s, 10, 100, base);
    }
    for (long s = 11; s <= 100; ++s) {
        const double cur = lr_schedule(s, 10, 100, base);
        CHECK(cur < prev);
        CHECK(prev - cur < base * 0.05);
        prev = cur;
    }
    CHECK_THROWS_AS(lr_schedule(0, 100, 100, base), ParameterError);
    CHECK_THROWS_AS(lr_schedule(101, 10, 100, base), ParameterError);
    CHECK_THROWS_AS(lr_schedule(-1, 10, 100, base), ParameterError);
}

TEST_CASE("step counting") {
    CHECK(vlp_steps_per_epoch(10, 3) == 3);  // trailing single example folded
    CHECK(vlp_steps_per_epoch(11, 3) == 4);
    CHECK(vlp_steps_per_epoch(12, 3) == 4);
    CHECK(vlp_steps_per_epoch(1, 3) == 0);
    VLPTrainConfig c;
    c.batch_size = 4;
    c.epochs = 3;
    CHECK(vlp_total_steps(c, 8) == 6);
    c.max_steps = 5;
    CHECK(vlp_total_steps(c, 8) == 5);
}

TEST_CASE("model construction") {
    knowledge::TextEncoder kg(small_text(), 77);
    SUBCASE("pretrained copies every knowledge encoder weight") {
        auto m = make_vl_model(small_spec(TextInit::pretrained), &kg, std::nullopt);
        CHECK(nn::checksum(m.text.parameters()) == nn::checksum(kg.parameters()));
        const std::vector<std::string> texts{"opaque lens", "small red spots"};
        CHECK(m.text.encode(texts) == kg.encode(texts));
        // Independent storage: training the student leaves the source alone.
        m.text.parameters()[0].second.mutable_value().array() += 1.0;
        CHECK(nn::checksum(m.text.parameters()) != nn::checksum(kg.parameters()));
        CHECK_FALSE(m.kd_projection.has_value());
    }
    SUBCASE("scratch ignores the knowledge encoder") {
        auto m = make_vl_model(small_spec(TextInit::scratch), &kg, std::nullopt);
        CHECK(nn::checksum(m.text.parameters()) != nn::checksum(kg.parameters()));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(make_vl_model(small_spec(TextInit::pretrained), nullptr, std::nullopt), ParameterError);
        auto spec = small_spec(TextInit::pretrained);
        spec.text.layers = 2;
        CHECK_THROWS_AS(make_vl_model(spec, &kg, std::nullopt), ParameterError);
        auto mismatch = small_spec();
        mismatch.vision.embed_dim = 8;
        CHECK_THROWS_AS(make_vl_model(mismatch, nullptr, std::nullopt), ParameterError);
    }
    SUBCASE("teacher of another width adds a projection") {
        auto m = make_vl_model(small_spec(), nullptr, 24);
        REQUIRE(m.kd_projection.has_value());
        const std::vector<std::string> texts{"a", "b c"};
        const Matrix p = m.project_for_teacher(m.text.forward(texts)).value();
        CHECK(p.cols() == 24);
        for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(p.row(i).norm() == doctest::Approx(1.0));
    }
    SUBCASE("save and load") {
        auto m = make_vl_model(small_spec(), nullptr, 24);
        const auto dir = testing::temp_dir("vlmodel");
        m.save(dir);
        const auto back = VLModel::load(dir);
        const std::vector<std::string> texts{"lens opacity", "spots"};
        CHECK(back.encode_texts(texts) == m.encode_texts(texts));
        Rng rng(1);
        const Matrix img = nn::normal_matrix(3, m.vision.input_size(), 1.0, rng);
        CHECK(back.encode_images(img) == m.encode_images(img));
        REQUIRE(back.kd_projection.has_value());
        CHECK(back.kd_projection->weight.value() == m.kd_projection->weight.value());
    }
    CHECK(text_init_from_string("pretrained") == TextInit::pretrained);
    CHECK(to_string(TextInit::scratch) == "scratch");
    CHECK_THROWS_AS(text_init_from_string("warm"), ParameterError);
}

TEST_CASE("teacher cache") {
    knowledge::TextEncoder enc(small_text(), 3);
    auto inner = std::make_shared<EncoderTeacher>(enc);
    auto cache = std::make_shared<TeacherCache>();
    CachedTeacher teacher(inner, cache);
    const std::vector<std::string> a{"lens opacity", "red spots", "lens opacity"};
    const Matrix first = teacher.encode(a);
    CHECK((first - inner->encode(a)).norm() < 1e-12);
    CHECK(first.row(0) == first.row(2));
    CHECK(teacher.misses() == 2);
    CHECK(cache->size() == 2);
    CHECK(teacher.encode(a) == first);
    CHECK(teacher.misses() == 2);

    SUBCASE("save and load") {
        const auto path = testing::temp_dir("cache") / "teacher.jsonl";
        cache->save(path);
        TeacherCache back;
        back.load(path);
        CHECK(back.size() == 2);
        Eigen::RowVectorXd row;
        REQUIRE(back.lookup("red spots", row));
        CHECK((row - first.row(1)).norm() < 1e-15);
        CHECK_FALSE(back.lookup("unseen", row));
    }
    SUBCASE("concurrent readers and writers") {
        std::vector<std::thread> workers;
        for (int w = 0; w < 4; ++w) {
            workers.emplace_back([&] {
                for (int i = 0; i < 200; ++i) {
                    const std::string caption = "caption " + std::to_string(i % 50);
                    Eigen::RowVectorXd row;
                    if (!cache->lookup(caption, row))
                        cache->insert(caption, Eigen::RowVectorXd::Constant(4, static_cast<double>(i % 50)));
                }
            });
        }
        for (auto& t : workers) t.join();
        CHECK(cache->size() == 52);
        Eigen::RowVectorXd row;
        REQUIRE(cache->lookup("caption 7", row));
        CHECK(row(0) == 7.0);
    }
}

TEST_CASE("dataset loading and image encoding") {
    const auto dir = testing::temp_dir("vlpdata");
    vision::save_png(planted::pattern_image(20, 0, 1, 2), dir / "good.png");
    write_text(dir / "junk.png", "no image here");
    std::vector<corpus::ImageCaptionPair> pairs(3);
    const char* refs[] = {"good.png", "missing.png", "junk.png"};
    for (int i = 0; i < 3; ++i) {
        pairs[static_cast<std::size_t>(i)].pair_id = "p" + std::to_string(i);
        pairs[static_cast<std::size_t>(i)].image_ref = refs[i];
        pairs[static_cast<std::size_t>(i)].caption = "caption";
    }
    const auto data = load_vlp_dataset(pairs, dir, 16);
    CHECK(data.examples.size() == 1);
    CHECK(data.skipped_missing == 2);
    CHECK(data.examples[0].image.size() == 3 * 16 * 16);
    CHECK_THROWS_AS(load_vlp_dataset(pairs, dir, 16, true), InputError);

    auto m = make_vl_model(small_spec(), nullptr, std::nullopt);
    const auto enc = encode_image_files(m, {dir / "good.png", dir / "missing.png", dir / "junk.png"});
    CHECK(enc.errors[0].empty());
    CHECK_FALSE(enc.errors[1].empty());
    CHECK_FALSE(enc.errors[2].empty());
    CHECK(enc.embeddings.row(0).norm() == doctest::Approx(1.0));
    CHECK(enc.embeddings.row(1).isZero());
    CHECK(enc.embeddings.row(2).isZero());
}

TEST_CASE("vlp training") {
    const auto data = planted::alignment_set(16);

    SUBCASE("loss falls and matching improves") {
        auto cfg = small_train(120);
        cfg.batch_size = 32;
        cfg.kd_enabled = false;
        auto before = make_vl_model(small_spec(), nullptr, std::nullopt);
        const double r0 = r_at_1(before.encode_images(data.images()), before.encode_texts(data.captions()));
        const auto res = train_vlp(cfg, data, std::move(before), nullptr);
        REQUIRE(res.history.size() == 120);
        const double r1 = r_at_1(res.model.encode_images(data.images()), res.model.encode_texts(data.captions()));
        double early = 0, late = 0;
        for (int i = 0; i < 10; ++i) {
            early += res.history[static_cast<std::size_t>(i)].loss;
            late += res.history[res.history.size() - 1 - static_cast<std::size_t>(i)].loss;
        }
        MESSAGE("R@1 before " << r0 << ", after " << r1);
        CHECK(late < 0.6 * early);
        CHECK(r1 > r0 + 0.2);
    }
    SUBCASE("deterministic under a fixed seed") {
        auto cfg = small_train(6);
        cfg.kd_enabled = false;
        const auto a = train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), nullptr);
        const auto b = train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), nullptr);
        for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].loss == b.history[i].loss);
        CHECK(nn::checksum(a.model.parameters()) == nn::checksum(b.model.parameters()));
    }
    SUBCASE("distillation off and alpha zero follow the same trajectory") {
        knowledge::TextEncoder kg(small_text(), 9);
        EncoderTeacher teacher(kg);
        auto cfg = small_train(6);
        cfg.kd_enabled = false;
        const auto off = train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), nullptr);
        cfg.kd_enabled = true;
        cfg.alpha = 0.0;
        const auto zero = train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), &teacher);
        for (std::size_t i = 0; i < off.history.size(); ++i) {
            CHECK(off.history[i].loss == zero.history[i].loss);
            CHECK(zero.history[i].distillation == 0.0);
        }
        CHECK(nn::checksum(off.model.parameters()) == nn::checksum(zero.model.parameters()));
    }
    SUBCASE("the teacher stays frozen") {
        knowledge::TextEncoder kg(small_text(), 9);
        const double before = nn::checksum(kg.parameters());
        EncoderTeacher teacher(kg);
        const double teacher_before = nn::checksum(teacher.encoder().parameters());
        auto cfg = small_train(8);
        const auto res = train_vlp(cfg, data, make_vl_model(small_spec(TextInit::pretrained), &kg, std::nullopt), &teacher);
        CHECK(nn::checksum(teacher.encoder().parameters()) == teacher_before);
        CHECK(nn::checksum(kg.parameters()) == before);
        CHECK(all_grads_zero(teacher.encoder().parameters()));
        CHECK(nn::checksum(res.model.text.parameters()) != before);
        for (const auto& r : res.history) {
            CHECK(r.distillation > 0.0);
            CHECK(r.loss == doctest::Approx(r.contrastive + cfg.alpha * r.distillation).epsilon(1e-12));
        }
    }
    SUBCASE("distillation pulls captions toward the teacher geometry") {
        const auto set = planted::class_clustered_set(4, 8, 16);
        planted::ClusteredTeacher teacher(set.class_names, 16, 0.05);
        const auto captions = set.data.captions();
        const Matrix k = teacher.encode(captions);
        auto cfg = small_train(60);
        cfg.alpha = 0.0;
        const auto plain = train_vlp(cfg, set.data, make_vl_model(small_spec(), nullptr, std::nullopt), &teacher);
        cfg.alpha = 1.0;
        const auto kd = train_vlp(cfg, set.data, make_vl_model(small_spec(), nullptr, std::nullopt), &teacher);
        const double lkd_plain = knowledge_distillation_loss(plain.model.encode_texts(captions), k, 0.07);
        const double lkd_kd = knowledge_distillation_loss(kd.model.encode_texts(captions), k, 0.07);
        MESSAGE("L_KD without distillation " << lkd_plain << ", with " << lkd_kd);
        CHECK(lkd_kd < lkd_plain);
    }
    SUBCASE("learnable temperature trains") {
        auto cfg = small_train(10);
        cfg.kd_enabled = false;
        cfg.learnable_temperature = true;
        const auto res = train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), nullptr);
        for (const auto& r : res.history) CHECK(std::isfinite(r.loss));
    }
    SUBCASE("checkpoints") {
        const auto dir = testing::temp_dir("vlpckpt");
        auto cfg = small_train(-1);
        cfg.epochs = 2;
        cfg.batch_size = 32;
        cfg.kd_enabled = false;
        cfg.checkpoint_dir = dir;
        const auto res = train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), nullptr);
        CHECK(res.total_steps == 4);
        for (const char* f : {"epoch_1/model.json", "epoch_2/model.json", "model.json", "optimizer.bin",
                              "train_config.json", "loss_history.csv"})
            CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
        const auto back = VLModel::load(dir);
        CHECK(back.encode_texts(data.captions()) == res.model.encode_texts(data.captions()));
        CHECK(text::split(text::trim(read_text(dir / "loss_history.csv")), '\n').size() == 5);
    }
    SUBCASE("configuration errors") {
        auto cfg = small_train(6);
        CHECK_THROWS_AS(train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), nullptr), ParameterError);
        cfg.kd_enabled = false;
        cfg.warmup_steps = 6;
        CHECK_THROWS_AS(train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), nullptr), ParameterError);
        cfg.warmup_steps = 1;
        cfg.batch_size = 1;
        CHECK_THROWS_AS(train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), nullptr), ParameterError);
        planted::ClusteredTeacher wide({"x"}, 24);
        cfg.batch_size = 16;
        cfg.kd_enabled = true;
        CHECK_THROWS_AS(train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), &wide), ParameterError);
    }
    SUBCASE("non-finite loss stops the stage with a batch dump") {
        const auto dir = testing::temp_dir("vlpnan");
        auto cfg = small_train(6);
        cfg.kd_enabled = false;
        cfg.tau_m = 1e-320;
        cfg.diagnostics_dir = dir;
        CHECK_THROWS_AS(train_vlp(cfg, data, make_vl_model(small_spec(), nullptr, std::nullopt), nullptr), StageError);
        CHECK(std::filesystem::exists(dir / "nan_batch_step0.json"));
    }
}
