#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/knowledge/loss.hpp"
#include "phenovlp/knowledge/text_encoder.hpp"
#include "phenovlp/knowledge/trainer.hpp"
#include "support/helpers.hpp"

using namespace phenovlp;
using namespace phenovlp::knowledge;
using nn::Matrix;
using testing::rows_of;

namespace {

TextEncoderConfig tiny_config() {
    TextEncoderConfig c;
    c.vocab_size = 512;
    c.model_dim = 32;
    c.heads = 2;
    c.layers = 2;
    c.hidden_dim = 64;
    c.embed_dim = 32;
    c.max_tokens = 32;
    return c;
}

// 20 phenotypes, each with its own vocabulary: name, definition, synonym.
ontology::PhenotypeGraph disjoint_vocab_graph() {
    std::vector<ontology::PhenotypeTerm> terms;
    for (int i = 0; i < 20; ++i) {
        const std::string w = "w" + std::to_string(i);
        ontology::PhenotypeTerm t;
        t.id = "T:" + std::to_string(100 + i);
        t.name = w + "alpha " + w + "beta";
        t.definition = w + "gamma " + w + "delta " + w + "epsilon";
        t.synonyms = {w + "zeta " + w + "eta"};
        terms.push_back(t);
    }
    return ontology::PhenotypeGraph::build(terms);
}

double mean_offdiag_cos(const Matrix& e) {
    double s = 0;
    int n = 0;
    for (Eigen::Index i = 0; i < e.rows(); ++i)
        for (Eigen::Index j = 0; j < e.rows(); ++j)
            if (i != j) {
                s += e.row(i).dot(e.row(j));
                ++n;
            }
    return s / n;
}

}  // namespace

TEST_CASE("infonce matches frozen high-precision values") {
    const double r = 1.0 / std::sqrt(2.0);
    const Matrix z = rows_of({{1, 0, 0, 0}, {r, r, 0, 0}, {0, 0, 1, 0}, {0, 0, r, r}});
    const std::vector<int> pairing{1, 0, 3, 2};
    // Evaluated term by term at 30 significant digits (tests/oracles/loss_oracles.py).
    CHECK(std::abs(knowledge_infonce_loss(z, pairing, 0.07) - 0.0000820305121518845104518) < 1e-12);
    CHECK(std::abs(knowledge_infonce_loss(z, pairing, 1.0) - 0.686191738855069737214810745762) < 1e-12);
}

TEST_CASE("infonce matches the brute-force oracle on random batches") {
    Rng rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const int b = 2 + static_cast<int>(rng.below(6));
        const int d = 2 + static_cast<int>(rng.below(15));
        const double tau = rng.uniform(0.05, 1.0);
        const Matrix z = testing::random_unit_rows(2 * b, d, rng);
        // A random fixed-point-free involution, not just the interleaved one.
        std::vector<int> order(static_cast<std::size_t>(2 * b));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        std::vector<int> pairing(order.size());
        for (std::size_t i = 0; i < order.size(); i += 2) {
            pairing[static_cast<std::size_t>(order[i])] = order[i + 1];
            pairing[static_cast<std::size_t>(order[i + 1])] = order[i];
        }
        const double expected = static_cast<double>(oracle::infonce(testing::to_rows(z), pairing, tau));
        CAPTURE(trial);
        CHECK(std::abs(knowledge_infonce_loss(z, pairing, tau) - expected) <= 1e-6);
    }
}

TEST_CASE("infonce analytic values") {
    SUBCASE("single pair with identical rows is exactly zero") {
        const Matrix z = rows_of({{0.6, 0.8}, {0.6, 0.8}});
        CHECK(knowledge_infonce_loss(z, std::vector<int>{1, 0}, 0.07) == 0.0);
        // Any single pair: the positive is the whole denominator.
        const Matrix w = rows_of({{1, 0}, {0, 1}});
        CHECK(knowledge_infonce_loss(w, std::vector<int>{1, 0}, 0.3) == 0.0);
    }
    SUBCASE("all similarities equal to 1") {
        for (int b : {2, 3, 5}) {
            const Matrix z = Matrix::Ones(2 * b, 1);
            CHECK(std::abs(knowledge_infonce_loss(z, interleaved_pairing(b), 0.07) - std::log(2.0 * b - 1)) < 1e-6);
        }
    }
    SUBCASE("all similarities equal to 0") {
        for (int b : {2, 4}) {
            const Matrix z = Matrix::Identity(2 * b, 2 * b);
            CHECK(std::abs(knowledge_infonce_loss(z, interleaved_pairing(b), 0.5) - std::log(2.0 * b - 1)) < 1e-6);
        }
    }
}

TEST_CASE("infonce gradient matches finite differences") {
    Rng rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix z = testing::random_unit_rows(8, 16, rng);
        const auto pairing = interleaved_pairing(4);
        const double tau = trial == 0 ? 0.07 : rng.uniform(0.1, 1.0);
        nn::Var zv = nn::parameter(z);
        knowledge_infonce_loss(zv, pairing, tau).backward();
        // The formula itself, evaluated off the unit sphere.
        auto f = [&](const Matrix& x) { return infonce_with_grad(x, pairing, tau).loss; };
        CAPTURE(tau);
        CHECK(testing::fd_relative_error(f, z, zv.grad(), 1e-4) < 1e-3);
    }
}

TEST_CASE("infonce properties") {
    Rng rng(8);
    SUBCASE("permuting phenotype blocks leaves the loss unchanged") {
        const Matrix z = testing::random_unit_rows(10, 6, rng);
        const auto pairing = interleaved_pairing(5);
        std::vector<int> blocks{3, 0, 4, 1, 2};
        Matrix permuted(10, 6);
        for (int k = 0; k < 5; ++k) {
            permuted.row(2 * k) = z.row(2 * blocks[static_cast<std::size_t>(k)]);
            permuted.row(2 * k + 1) = z.row(2 * blocks[static_cast<std::size_t>(k)] + 1);
        }
        CHECK(knowledge_infonce_loss(permuted, pairing, 0.1) ==
              doctest::Approx(knowledge_infonce_loss(z, pairing, 0.1)).epsilon(1e-12));
    }
    SUBCASE("loss decreases with temperature on a separable batch") {
        // Positives identical, negatives orthogonal.
        Matrix z = Matrix::Zero(6, 3);
        for (int k = 0; k < 3; ++k) z(2 * k, k) = z(2 * k + 1, k) = 1.0;
        const auto pairing = interleaved_pairing(3);
        const double l1 = knowledge_infonce_loss(z, pairing, 1.0);
        const double l5 = knowledge_infonce_loss(z, pairing, 0.5);
        const double l07 = knowledge_infonce_loss(z, pairing, 0.07);
        CHECK(l1 > l5);
        CHECK(l5 > l07);
    }
    SUBCASE("finite on extreme inputs") {
        const Matrix z = testing::random_unit_rows(8, 4, rng);
        CHECK(std::isfinite(knowledge_infonce_loss(z, interleaved_pairing(4), 1e-4)));
    }
}

TEST_CASE("infonce errors") {
    const Matrix z = rows_of({{1, 0}, {0, 1}, {1, 0}, {0, 1}});
    CHECK_THROWS_AS(knowledge_infonce_loss(z, interleaved_pairing(2), 0.0), ParameterError);
    CHECK_THROWS_AS(knowledge_infonce_loss(z, interleaved_pairing(2), -1.0), ParameterError);
    CHECK_THROWS_AS(knowledge_infonce_loss(2.0 * z, interleaved_pairing(2), 0.07), PreconditionError);
    CHECK_THROWS_AS(knowledge_infonce_loss(z, std::vector<int>{0, 1, 2, 3}, 0.07), ParameterError);
    CHECK_THROWS_AS(knowledge_infonce_loss(z, std::vector<int>{1, 2, 3, 0}, 0.07), ParameterError);
    CHECK_THROWS_AS(knowledge_infonce_loss(z, std::vector<int>{1, 0}, 0.07), ParameterError);
}

TEST_CASE("knowledge batches") {
    const auto g = ontology::parse_ontology_file(testing::fixture("toy_ontology.obo"));

    SUBCASE("B=1 rejected") {
        Rng rng(1);
        CHECK_THROWS_AS(build_knowledge_batch(g, 1, rng), ParameterError);
        KnowledgeTrainConfig c;
        c.batch_phenotypes = 1;
        CHECK_THROWS_AS(c.validate(), ParameterError);
    }
    SUBCASE("too few eligible terms") {
        Rng rng(1);
        CHECK_THROWS_AS(build_knowledge_batch(g, 8, rng), ParameterError);
    }
    SUBCASE("seed replay and layout") {
        Rng r1(5), r2(5);
        const auto a = build_knowledge_batch(g, 2, r1);
        const auto b = build_knowledge_batch(g, 2, r2);
        CHECK(a.texts == b.texts);
        CHECK(a.terms == b.terms);
        REQUIRE(a.texts.size() == 4);
        CHECK(a.pairing == std::vector<int>{1, 0, 3, 2});
        CHECK(a.terms[0] != a.terms[1]);
        for (std::size_t i = 0; i < 4; ++i) CHECK(a.attributes[i].term_id == a.terms[i / 2]);
    }
    SUBCASE("selection frequency is uniform") {
        Rng rng(17);
        std::map<ontology::TermId, int> counts;
        const int batches = 6000;
        for (int i = 0; i < batches; ++i)
            for (const auto& t : build_knowledge_batch(g, 3, rng).terms) counts[t]++;
        REQUIRE(counts.size() == 7);
        const double expected = batches * 3.0 / 7.0;
        for (const auto& [id, c] : counts) {
            CAPTURE(id);
            CHECK(std::abs(c - expected) / expected < 0.03);
        }
    }
    SUBCASE("terminal-only eligibility") {
        CHECK(eligible_terms(g, true).size() == 5);
        CHECK(eligible_terms(g, false).size() == 7);
    }
}

TEST_CASE("text encoder inference") {
    TextEncoder enc(tiny_config(), 3);
    SUBCASE("one text gives a unit row") {
        const std::vector<std::string> t{"Cataract"};
        const auto e = enc.encode(t);
        REQUIRE(e.rows() == 1);
        CHECK(e.cols() == 32);
        CHECK(std::abs(e.row(0).norm() - 1.0) < 1e-5);
    }
    SUBCASE("same text twice gives identical rows") {
        const std::vector<std::string> t{"lens opacity", "lens opacity"};
        const auto e = enc.encode(t);
        CHECK(e.row(0) == e.row(1));
    }
    SUBCASE("empty list gives an empty matrix") {
        const auto e = enc.encode(std::vector<std::string>{});
        CHECK(e.rows() == 0);
        CHECK(e.cols() == 32);
    }
    SUBCASE("shuffled input gives row-permuted output") {
        std::vector<std::string> texts;
        for (int i = 0; i < 23; ++i) texts.push_back("phrase number " + std::to_string(i) + " of the set");
        texts.push_back("");
        const auto base = enc.encode(texts, 5);
        std::vector<int> perm(texts.size());
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(4);
        rng.shuffle(perm);
        std::vector<std::string> shuffled;
        for (int p : perm) shuffled.push_back(texts[static_cast<std::size_t>(p)]);
        const auto out = enc.encode(shuffled, 7);
        for (std::size_t i = 0; i < perm.size(); ++i)
            CHECK((out.row(static_cast<Eigen::Index>(i)) - base.row(perm[i])).norm() < 1e-12);
    }
    SUBCASE("truncation to max tokens") {
        std::string longer;
        for (int i = 0; i < 40; ++i) longer += "tok" + std::to_string(i) + " ";
        CHECK(enc.tokenizer().encode(longer).size() == 32);
        CHECK(enc.tokenizer().encode("").size() == 1);
    }
    SUBCASE("save and load round trip") {
        const auto dir = testing::temp_dir("encoder");
        enc.save(dir);
        const auto back = TextEncoder::load(dir);
        CHECK(back.config() == enc.config());
        const std::vector<std::string> t{"a b c", "retinal hemorrhage"};
        CHECK(back.encode(t) == enc.encode(t));
    }
    SUBCASE("clone is independent") {
        auto copy = enc.clone();
        CHECK(nn::checksum(copy.parameters()) == nn::checksum(enc.parameters()));
        copy.parameters()[0].second.mutable_value()(0, 0) += 1.0;
        CHECK(nn::checksum(copy.parameters()) != nn::checksum(enc.parameters()));
    }
}

TEST_CASE("text encoder gradient through the loss") {
    TextEncoderConfig c = tiny_config();
    c.model_dim = 8;
    c.hidden_dim = 8;
    c.embed_dim = 4;
    c.layers = 1;
    TextEncoder enc(c, 11);
    const std::vector<std::string> texts{"red spot", "spot red large", "blue lens", "lens cloud"};
    const auto pairing = interleaved_pairing(2);
    auto params = enc.parameters();
    knowledge_infonce_loss(enc.forward(texts), pairing, 0.5).backward();
    for (auto& [name, p] : params) {
        if (name != "text.projection.weight" && name != "text.block0.fc1.weight") continue;
        CAPTURE(name);
        auto f = [&](const Matrix& value) {
            const Matrix saved = p.value();
            p.mutable_value() = value;
            nn::NoGradGuard guard;
            const double r = knowledge_infonce_loss(enc.forward(texts).value(), pairing, 0.5);
            p.mutable_value() = saved;
            return r;
        };
        CHECK(testing::fd_relative_error(f, p.value(), p.grad(), 1e-5) < 1e-4);
    }
}

TEST_CASE("knowledge training") {
    const auto g = disjoint_vocab_graph();

    SUBCASE("step-0 loss is near the uniform-similarity value") {
        KnowledgeTrainConfig c;
        c.batch_phenotypes = 8;
        c.epochs = 1;
        c.max_steps = 1;
        c.seed = 3;
        const auto r = train_knowledge_encoder(c, g, TextEncoder(tiny_config(), 1));
        REQUIRE(r.loss_history.size() == 1);
        const double uniform = std::log(2.0 * 8 - 1);
        MESSAGE("step-0 loss " << r.loss_history[0] << " vs " << uniform);
        CHECK(std::abs(r.loss_history[0] - uniform) / uniform <= 0.10);
    }

    SUBCASE("zero steps leave the encoder untouched") {
        KnowledgeTrainConfig c;
        c.batch_phenotypes = 4;
        c.epochs = 0;
        TextEncoder enc(tiny_config(), 2);
        const double before = nn::checksum(enc.parameters());
        const auto r = train_knowledge_encoder(c, g, std::move(enc));
        CHECK(r.loss_history.empty());
        CHECK(nn::checksum(r.encoder.parameters()) == before);
    }

    SUBCASE("step count and determinism") {
        KnowledgeTrainConfig c;
        c.batch_phenotypes = 8;
        c.epochs = 2;
        c.learning_rate = 1e-3;
        c.seed = 9;
        CHECK(knowledge_total_steps(c, 20) == 6);
        const auto a = train_knowledge_encoder(c, g, TextEncoder(tiny_config(), 4));
        const auto b = train_knowledge_encoder(c, g, TextEncoder(tiny_config(), 4));
        CHECK(a.loss_history.size() == 6);
        CHECK(a.loss_history == b.loss_history);
        CHECK(nn::checksum(a.encoder.parameters()) == nn::checksum(b.encoder.parameters()));
    }

    SUBCASE("200 steps separate phenotypes by at least 0.3") {
        KnowledgeTrainConfig c;
        c.batch_phenotypes = 8;
        c.learning_rate = 1e-3;
        c.epochs = 100;
        c.max_steps = 200;
        c.seed = 1;
        const auto r = train_knowledge_encoder(c, g, TextEncoder(tiny_config(), 5));
        REQUIRE(r.loss_history.size() == 200);

        double intra = 0, inter = 0;
        int n_intra = 0, n_inter = 0;
        std::vector<Matrix> per_term;
        for (const auto& [id, t] : g.terms()) {
            std::vector<std::string> texts;
            for (const auto& a : ontology::attributes_of(g, id)) texts.push_back(a.text);
            per_term.push_back(r.encoder.encode(texts));
        }
        for (std::size_t p = 0; p < per_term.size(); ++p) {
            intra += mean_offdiag_cos(per_term[p]);
            ++n_intra;
            for (std::size_t q = 0; q < per_term.size(); ++q) {
                if (p == q) continue;
                inter += (per_term[p] * per_term[q].transpose()).mean();
                ++n_inter;
            }
        }
        const double margin = intra / n_intra - inter / n_inter;
        MESSAGE("separation margin " << margin);
        CHECK(margin >= 0.3);
    }

    SUBCASE("checkpoint files") {
        KnowledgeTrainConfig c;
        c.batch_phenotypes = 4;
        c.epochs = 1;
        c.max_steps = 2;
        const auto r = train_knowledge_encoder(c, g, TextEncoder(tiny_config(), 6));
        const auto dir = testing::temp_dir("kckpt");
        save_knowledge_checkpoint(dir, r.encoder, c, r.loss_history, "abc123");
        const auto meta = read_json(dir / "meta.json");
        CHECK(meta["graph_hash"] == "abc123");
        CHECK(meta["steps"] == 2);
        CHECK(meta["config"]["temperature"] == 0.07);
        CHECK(meta["final_loss"].get<double>() == r.loss_history.back());
        CHECK(std::filesystem::exists(dir / "loss_history.csv"));
        const auto back = TextEncoder::load(dir);
        CHECK(nn::checksum(back.parameters()) == nn::checksum(r.encoder.parameters()));
    }

    SUBCASE("default config values") {
        KnowledgeTrainConfig c;
        CHECK(c.temperature == 0.07);
        CHECK(c.learning_rate == 1e-5);
        CHECK(c.batch_phenotypes == 256);
        CHECK(c.epochs == 10);
    }
}
